"""Experiment configuration: flat sections of key=value lines.

The file format is deliberately plain so configs diff cleanly:

    [data]
    num_langs = 5
    ...

Unknown sections or keys are rejected, values are typed against the
schema below, and the canonical re-emission (schema order, normalized
values) is what gets hashed for artifact provenance.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .errors import ConfigurationError

__all__ = ["ExperimentConfig", "config_hash"]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    if not text.strip():
        return ()
    return tuple(int(part) for part in text.replace(",", " ").split())


def _parse_str_list(text: str) -> tuple[str, ...]:
    if not text.strip():
        return ()
    return tuple(part for part in text.replace(",", " ").split())


# (type, default); section -> key -> spec
_SCHEMA: dict[str, dict[str, tuple]] = {
    "data": {
        "dir": (str, "data"),
        "num_langs": (int, 5),
        "labeled_per_lang": (int, 100),
        "dev_per_lang": (int, 40),
        "test_per_lang": (int, 80),
        "unlabeled_total": (int, 20000),
        "seed": (int, 0),
        "subsample_per_lang": (int, 0),  # 0 disables low-resource subsampling
        "subsample_seed": (int, 0),
    },
    "vocab": {
        "size": (int, 2000),
    },
    "tokenizer": {
        "max_len": (int, 16),
    },
    "teacher": {
        "layers": (int, 4),
        "width": (int, 64),
        "heads": (int, 4),
        "epochs": (int, 30),
        "batch_size": (int, 32),
        "lr_high": (float, 3e-3),
        "dropout": (float, 0.2),
        "trace_layer": (int, 0),  # 0 selects the middle layer
        "seed": (int, 0),
    },
    "student": {
        "emb_dim": (int, 16),
        "hidden": (int, 24),
        "arch": (str, "bilstm"),
        "depth": (int, 2),
        "heads": (int, 4),
        "head_input": (str, "projected"),
        "dropout": (float, 0.2),
        "embedding_init": (str, "random"),
        "embedding_file": (str, ""),
    },
    "strategy": {
        "id": (str, "D42"),
        "alpha": (float, 1.0),
        "beta": (float, 1.0),
        "gamma": (float, 1.0),
        "kld_direction": (str, "forward"),
    },
    "schedule": {
        "lr_high": (float, 3e-3),
        "lr_low": (float, 1e-8),
        "epochs_per_layer": (int, 10),
        "patience": (int, 3),
        "min_delta": (float, 0.0),
        "batch_size": (int, 256),
        "labeled_batch_size": (int, 16),
    },
    "run": {
        "seed": (int, 0),
        "out_dir": (str, "artifacts"),
    },
    "sweep": {
        "strategies": (_parse_str_list, ("D0S", "D1", "D42")),
        "seeds": (_parse_int_list, (0, 1, 2, 3, 4)),
        "transfer_sizes": (_parse_int_list, ()),
    },
    "bench": {
        "batch_size": (int, 32),
        "queries": (int, 1000),
        "runs": (int, 100),
        "seq_len": (int, 32),
        "hidden_sweep": (_parse_int_list, (32, 64, 128)),
        "online": (_parse_bool, False),
    },
}


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, object]] = field(default_factory=dict)

    def __post_init__(self):
        merged = {}
        for section, keys in _SCHEMA.items():
            merged[section] = {key: spec[1] for key, spec in keys.items()}
        for section, kv in self.values.items():
            if section not in _SCHEMA:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, value in kv.items():
                if key not in _SCHEMA[section]:
                    raise ConfigurationError(f"unknown config key {section}.{key}")
                merged[section][key] = value
        self.values = merged

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigurationError(f"unknown config key {section}.{key}")
        parser = _SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from None

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values: dict[str, dict[str, str]] = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _SCHEMA:
                    raise ConfigurationError(f"line {lineno}: unknown section [{section}]")
                values.setdefault(section, {})
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected key = value, got {line!r}")
            if section is None:
                raise ConfigurationError(f"line {lineno}: key outside any [section]")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"line {lineno}: unknown key {section}.{key}")
            parser = _SCHEMA[section][key][0]
            try:
                values[section][key] = parser(value)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(
                    f"line {lineno}: bad value for {section}.{key}: {exc}"
                ) from None
        return cls(values=values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def emit(self) -> str:
        """Canonical normalized form (schema order, plain values)."""
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                value = self.values[section][key]
                if isinstance(value, tuple):
                    text = ",".join(str(v) for v in value)
                elif isinstance(value, bool):
                    text = "true" if value else "false"
                else:
                    text = repr(value) if isinstance(value, float) else str(value)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.emit())

    def hash(self) -> str:
        return config_hash(self)


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(config.emit().encode("utf-8")).hexdigest()[:16]
