"""
Tests for run configs and environment settings.
"""

import json

import pytest

from radd.config import (
    RaddSettings,
    apply_overrides,
    load_run_config,
    parse_override,
    save_resolved_config,
    validate_run_config,
)
from radd.contracts import LossKind, ModelBackend, ScheduleKind
from radd.errors import ConfigError


def test_defaults():
    config = validate_run_config({})

    assert config.schedule.kind is ScheduleKind.LOGLINEAR
    assert config.model.backend is ModelBackend.TABULAR
    assert config.train.loss is LossKind.LDCE
    assert config.data is None


def test_schedule_section_builds_a_schedule():
    config = validate_run_config({"schedule": {"kind": "geometric", "sigma_max": 4.0}})

    schedule = config.schedule.build()
    assert schedule.kind is ScheduleKind.GEOMETRIC
    assert schedule.sigma_bar(1.0) == pytest.approx(4.0 - 1e-4)


def test_unknown_key_reports_its_path():
    with pytest.raises(ConfigError) as info:
        validate_run_config({"train": {"learning_rate": 0.1}})

    assert info.value.key_path == "train.learning_rate"


def test_invalid_value_reports_its_path():
    with pytest.raises(ConfigError) as info:
        validate_run_config({"train": {"loss": "mse"}})

    assert info.value.key_path == "train.loss"


def test_data_needs_exactly_one_source():
    with pytest.raises(ConfigError):
        validate_run_config({"data": {}})
    with pytest.raises(ConfigError):
        validate_run_config({"data": {"table": "a.json", "corpus": "b.txt", "d": 4}})
    with pytest.raises(ConfigError):
        validate_run_config({"data": {"corpus": "b.txt"}})


def test_enfe_values_must_be_positive():
    with pytest.raises(ConfigError):
        validate_run_config({"enfe": {"steps": [4, 0]}})


def test_parse_override():
    assert parse_override("train.lr=0.05") == ("train.lr", 0.05)
    assert parse_override("sampling.cache=false") == ("sampling.cache", False)
    assert parse_override("out=runs/x") == ("out", "runs/x")
    assert parse_override("enfe.steps=[2,4]") == ("enfe.steps", [2, 4])
    with pytest.raises(ConfigError):
        parse_override("train.lr")


def test_apply_overrides_creates_sections():
    document = apply_overrides({"train": {"lr": 0.1}}, {"train.steps": 5, "eval.seed": 2})

    assert document == {"train": {"lr": 0.1, "steps": 5}, "eval": {"seed": 2}}
    with pytest.raises(ConfigError):
        apply_overrides({"out": "x"}, {"out.sub": 1})


def test_load_and_save(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"steps": 10}, "out": str(tmp_path / "run")}))

    config = load_run_config(path, overrides={"train.steps": 20})
    saved = save_resolved_config(config, config.out)

    assert config.train.steps == 20
    assert json.loads(saved.read_text())["train"]["steps"] == 20


def test_load_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")

    with pytest.raises(ConfigError):
        load_run_config(broken)
    with pytest.raises(ConfigError):
        load_run_config(listed)
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "missing.json")


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("RADD_THREADS", "3")
    monkeypatch.setenv("RADD_LOG_FORMAT", "json")

    settings = RaddSettings()

    assert settings.threads == 3
    assert settings.log_format == "json"
    assert settings.metrics_port is None
