"""Config parsing, validation, normalization, and hashing."""
import pytest

from distillab.config import ExperimentConfig
from distillab.errors import ConfigurationError


def test_defaults_available():
    config = ExperimentConfig()
    assert config.get("data", "num_langs") == 5
    assert config.get("schedule", "batch_size") == 256
    assert config.get("strategy", "id") == "D42"
    assert config.get("teacher", "dropout") == 0.2


def test_parse_and_types():
    config = ExperimentConfig.parse(
        """
        # comment
        [data]
        num_langs = 3
        unlabeled_total = 500

        [schedule]
        lr_high = 0.01
        [sweep]
        seeds = 0, 1, 2
        strategies = D0S,D42
        """
    )
    assert config.get("data", "num_langs") == 3
    assert config.get("schedule", "lr_high") == 0.01
    assert config.get("sweep", "seeds") == (0, 1, 2)
    assert config.get("sweep", "strategies") == ("D0S", "D42")


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError, match="unknown section"):
        ExperimentConfig.parse("[nope]\nx = 1\n")


def test_unknown_key_rejected_with_field():
    with pytest.raises(ConfigurationError, match="data.sizzle"):
        ExperimentConfig.parse("[data]\nsizzle = 1\n")


def test_bad_value_reports_field():
    with pytest.raises(ConfigurationError, match="data.num_langs"):
        ExperimentConfig.parse("[data]\nnum_langs = many\n")


def test_round_trip_normalized():
    config = ExperimentConfig.parse("[data]\nnum_langs = 7\n[run]\nseed = 3\n")
    text = config.emit()
    again = ExperimentConfig.parse(text)
    assert again.values == config.values
    assert again.emit() == text


def test_hash_stable_and_sensitive():
    a = ExperimentConfig.parse("[data]\nnum_langs = 7\n")
    b = ExperimentConfig.parse("\n# other layout\n[data]\nnum_langs =   7\n")
    c = ExperimentConfig.parse("[data]\nnum_langs = 8\n")
    assert a.hash() == b.hash()
    assert a.hash() != c.hash()


def test_set_override():
    config = ExperimentConfig()
    config.set("strategy", "id", "D1")
    assert config.get("strategy", "id") == "D1"
    with pytest.raises(ConfigurationError):
        config.set("strategy", "bogus", "1")


def test_save_load(tmp_path):
    config = ExperimentConfig()
    config.set("data", "num_langs", "2")
    path = tmp_path / "exp.cfg"
    config.save(path)
    assert ExperimentConfig.load(path).values == config.values
