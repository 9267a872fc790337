"""Shared exception types."""


class DistillabError(Exception):
    """Base class for package errors."""


class ConfigurationError(DistillabError):
    """A model, optimizer, or strategy was wired up inconsistently."""


class DataError(DistillabError):
    """Malformed input data (corpus files, tags, vocabularies)."""


class DependencyError(DistillabError):
    """A required upstream artifact is missing."""


class GradCheckError(DistillabError):
    """Finite-difference validation could not be evaluated."""


class TrainingError(DistillabError):
    """Optimization diverged or could not proceed."""
