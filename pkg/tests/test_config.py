"""Flat key=value config files and override precedence."""

import pytest

from kanseg.config import (apply_values, build_train_config,
                           load_config_file, parse_config_text)
from kanseg.errors import ConfigurationError
from kanseg.train import TrainConfig


def test_parse_scalars_and_comments():
    text = """
    # a comment
    epochs = 10
    lr = 0.001            # trailing comment
    data_root = "data/x"  # quoted string keeps spaces rule simple
    model.decoder_channels = 32,16,16
    augment.blur_kernels = 3
    seed = 7
    """
    values = parse_config_text(text)
    assert values["epochs"] == 10
    assert values["lr"] == 0.001
    assert values["data_root"] == "data/x"
    assert values["model.decoder_channels"] == (32, 16, 16)
    assert values["augment.blur_kernels"] == 3
    assert values["seed"] == 7


def test_parse_bool_and_none():
    values = parse_config_text("a = true\nb = none\n")
    assert values["a"] is True
    assert values["b"] is None


def test_parse_rejects_garbage_line():
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config_text("just some words\n")
    with pytest.raises(ConfigurationError, match="empty"):
        parse_config_text("epochs =\n")


def test_apply_nested_sections():
    cfg = apply_values(TrainConfig(), {
        "epochs": 5,
        "model.image_size": 32,
        "model.width_multiplier": 0.25,
        "augment.hue_limit": 0.0,
    })
    assert cfg.epochs == 5
    assert cfg.model.image_size == 32
    assert cfg.model.width_multiplier == 0.25
    assert cfg.augment.hue_limit == 0.0


def test_apply_does_not_mutate_original():
    base = TrainConfig()
    apply_values(base, {"epochs": 99, "model.image_size": 32})
    assert base.epochs == 200
    assert base.model.image_size == 64


def test_apply_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown config key 'epoch'"):
        apply_values(TrainConfig(), {"epoch": 5})
    with pytest.raises(ConfigurationError, match="model.imag_size"):
        apply_values(TrainConfig(), {"model.imag_size": 32})
    with pytest.raises(ConfigurationError, match="weird.key"):
        apply_values(TrainConfig(), {"weird.key": 1})
    with pytest.raises(ConfigurationError, match="needs a field"):
        apply_values(TrainConfig(), {"model": 3})


def test_apply_type_coercion_errors():
    with pytest.raises(ConfigurationError, match="integer"):
        apply_values(TrainConfig(), {"epochs": 2.5})
    with pytest.raises(ConfigurationError, match="number"):
        apply_values(TrainConfig(), {"lr": "fast"})


def test_int_promotes_to_float():
    cfg = apply_values(TrainConfig(), {"lr": 1})
    assert cfg.lr == 1.0 and isinstance(cfg.lr, float)


def test_decoder_channels_single_value():
    cfg = apply_values(TrainConfig(), {"model.decoder_channels": 16})
    assert cfg.model.decoder_channels == (16,)


def test_overrides_beat_file_values():
    cfg = build_train_config(file_values={"epochs": 10, "lr": 0.01},
                             overrides={"epochs": 3})
    assert cfg.epochs == 3
    assert cfg.lr == 0.01


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 4\nmodel.seed = 2\n")
    cfg = build_train_config(file_values=load_config_file(path))
    assert cfg.epochs == 4
    assert cfg.model.seed == 2


def test_load_missing_config_file():
    with pytest.raises(ConfigurationError, match="not found"):
        load_config_file("/no/such/file.cfg")
