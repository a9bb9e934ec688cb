import json

import pytest

from mixcontext.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    default_synth,
    load_run_config,
    parse_override,
    save_run_config,
)
from mixcontext.encoder import EncoderConfigError
from mixcontext.train import TrainConfigError


def test_defaults():
    config = load_run_config()
    assert config.name == "run"
    assert config.train.architecture == "dual"
    assert config.synth.n_threads == 140
    assert "idiot" in config.synth.profane_lexicon
    assert str(config.output_dir) == "run/run"


def test_dict_roundtrip():
    config = load_run_config(overrides=["name=exp", "train.max_epochs=3", "encoder.share_layers=true"])
    assert RunConfig.from_dict(config.to_dict()) == config


def test_file_roundtrip(tmp_path):
    config = load_run_config(overrides=["split.val_fraction=0.2"])
    path = save_run_config(config, tmp_path / "resolved.json")
    assert json.loads(path.read_text(encoding="utf-8"))["split"]["val_fraction"] == 0.2
    assert load_run_config(path) == config


def test_partial_file_merges_with_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"name": "small", "encoder": {"hidden": 32, "ffn": 64, "embed_dim": 32}}), encoding="utf-8")
    config = load_run_config(path)
    assert config.name == "small"
    assert (config.encoder.hidden, config.encoder.ffn) == (32, 64)
    assert config.encoder.num_heads == 4


@pytest.mark.parametrize(
    "raw, keys, value",
    [
        ("train.learning_rate=0.002", ["train", "learning_rate"], 0.002),
        ("name=exp", ["name"], "exp"),
        ("paths.lexicon=null", ["paths", "lexicon"], None),
        ("train.architecture=single", ["train", "architecture"], "single"),
        ("synth.seed=5", ["synth", "seed"], 5),
    ],
)
def test_parse_override(raw, keys, value):
    assert parse_override(raw) == (keys, value)


def test_override_applies():
    config = load_run_config(overrides=["train.learning_rate=0.002"])
    assert config.train.learning_rate == 0.002


@pytest.mark.parametrize("raw", ["train.nonexistent=1", "nosuchsection.key=1", "name.inner=1", "novalue", "=3"])
def test_bad_overrides(raw):
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig().to_dict(), [raw])


def test_seed_sets_every_seed():
    config = load_run_config(seed=11)
    assert config.split.seed == config.encoder.seed == config.train.seed == config.synth.seed == 11


def test_unknown_top_level_key(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"epochs": 3}), encoding="utf-8")
    with pytest.raises(ConfigError, match="epochs"):
        load_run_config(path)


def test_unknown_section_key():
    data = RunConfig().to_dict()
    data["encoder"]["depth"] = 3
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_dict(data)
    assert excinfo.value.key == "encoder"


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="не найден"):
        load_run_config(tmp_path / "none.json")
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON"):
        load_run_config(path)


def test_missing_paths_are_reported(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(overrides=[f"paths.data={tmp_path / 'absent.jsonl'}"])
    assert excinfo.value.key == "paths.data"
    config = load_run_config(overrides=[f"paths.data={tmp_path / 'absent.jsonl'}"], check_paths=False)
    assert config.paths.data.endswith("absent.jsonl")


def test_section_validation_propagates():
    with pytest.raises(EncoderConfigError):
        load_run_config(overrides=["encoder.num_heads=5"])
    with pytest.raises(TrainConfigError):
        load_run_config(overrides=["train.batch_size=0"])


def test_default_synth_is_consistent():
    synth = default_synth()
    assert not set(synth.profane_lexicon) & set(synth.vocab_pool)
    assert synth.agreement_cues
