import json
import os

from yynet.model.model_config import PRESETS, ModelConfig, preset
from yynet.optim.train_config import TrainConfig
from yynet.util.errors import ConfigError, DataIOError


def split_config_values(values):
    """Splits a flat dictionary into ModelConfig and TrainConfig values by field name."""
    model_fields = set(ModelConfig.field_names())
    train_fields = set(TrainConfig.field_names())
    unknown = sorted(set(values) - model_fields - train_fields)
    if unknown:
        raise ConfigError(f"Unknown config keys {unknown}")
    model_values = {k: v for k, v in values.items() if k in model_fields}
    train_values = {k: v for k, v in values.items() if k in train_fields}
    return model_values, train_values


def configs_from_dict(values):
    """
    (ModelConfig, TrainConfig) from a flat dictionary of field values.
    An optional "preset" entry names the model configuration the other entries override.
    """
    values = dict(values)
    base = preset(values.pop("preset")) if "preset" in values else None
    model_values, train_values = split_config_values(values)
    model_config = ModelConfig.from_dict(model_values, base=base).validate()
    train_config = TrainConfig.from_dict(train_values).validate()
    return model_config, train_config


def load_configs(path_or_preset):
    """(ModelConfig, TrainConfig) from a JSON config file, or from a preset name with the default training recipe."""
    if path_or_preset in PRESETS and not os.path.exists(path_or_preset):
        return preset(path_or_preset), TrainConfig()
    try:
        with open(path_or_preset) as file:
            values = json.load(file)
    except OSError as e:
        raise ConfigError(
            f"{path_or_preset} is neither a readable config file nor one of the presets {sorted(PRESETS)}"
        ) from e
    except ValueError as e:
        raise ConfigError(f"{path_or_preset} is not valid JSON: {e}") from e
    if not isinstance(values, dict):
        raise ConfigError(f"{path_or_preset} must hold a JSON object")
    return configs_from_dict(values)


def save_configs(path, model_config, train_config):
    """Writes both configurations as one flat JSON object that `load_configs` reads back."""
    values = {**model_config.to_dict(), **train_config.to_dict()}
    try:
        with open(path, "w") as file:
            json.dump(values, file, indent=2, sort_keys=True)
            file.write("\n")
    except OSError as e:
        raise DataIOError(f"Cannot write config {path}: {e.strerror}") from e
