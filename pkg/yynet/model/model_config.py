import dataclasses
from dataclasses import dataclass
from typing import Optional

from yynet.autograd.functional import ACTIVATIONS
from yynet.model.blocks import SE_BASES, YIN_MODES, BlockOptions
from yynet.model.fusion import CONCAT, FUSION_MODES, GATE, FusionFormula
from yynet.util.errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of a YYNet. Defaults are the 16-channel CIFAR-10 network.

    The sub-block internals (expansion_factor, se_ratio, se_basis, conv_bias, head_bias)
    are the ones `reconcile_internals` found closest to the published parameter counts.
    """

    yy_start_channels: int = 16
    sp_start_channels: int = 16
    channels_per_mbconv: int = 0
    yy_layers: int = 1
    sp_layers: int = 1
    yy_mbconv_per_layer: int = 3
    sp_mbconv_per_layer: int = 2
    extra_sp_stride2: bool = True
    pre_classifier_neurons: int = 40
    num_classes: int = 10
    input_resolution: int = 32
    fusion: FusionFormula = FusionFormula.A_PLUS_I
    fusion_mode: str = GATE
    yin_mode: str = "first_channel"
    expansion_factor: int = 4
    se_ratio: Optional[int] = 4
    se_basis: str = "expanded"
    dropout_rate: float = 0.2
    conv_bias: bool = True
    head_bias: bool = True
    se_inner_activation: str = "gelu"
    se_gate_activation: str = "sigmoid"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    @property
    def fusion_label(self):
        """The formula text, or "concat" for the concatenation baseline."""
        return CONCAT if self.fusion_mode == CONCAT else self.fusion.value

    @property
    def stride_count(self):
        """Number of stride-2 sub-blocks on the path from input to head."""
        sp_strides_per_layer = 2 if self.extra_sp_stride2 else 1
        return self.yy_layers + self.sp_layers * sp_strides_per_layer

    def validate(self):
        positive = [
            "yy_start_channels",
            "sp_start_channels",
            "yy_layers",
            "sp_layers",
            "yy_mbconv_per_layer",
            "sp_mbconv_per_layer",
            "pre_classifier_neurons",
            "num_classes",
            "input_resolution",
            "expansion_factor",
        ]
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer but was {value!r}")
        if self.channels_per_mbconv < 0:
            raise ConfigError(f"channels_per_mbconv must be non-negative but was {self.channels_per_mbconv}")
        if self.se_ratio is not None and self.se_ratio < 1:
            raise ConfigError(f"se_ratio must be positive or null but was {self.se_ratio}")
        if not isinstance(self.fusion, FusionFormula):
            raise ConfigError(f"fusion must be a FusionFormula but was {self.fusion!r}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES} but was '{self.fusion_mode}'")
        if self.yin_mode not in YIN_MODES:
            raise ConfigError(f"yin_mode must be one of {YIN_MODES} but was '{self.yin_mode}'")
        if self.se_basis not in SE_BASES:
            raise ConfigError(f"se_basis must be one of {SE_BASES} but was '{self.se_basis}'")
        for name in ("se_inner_activation", "se_gate_activation"):
            if getattr(self, name) not in ACTIVATIONS:
                raise ConfigError(f"{name} must be one of {sorted(ACTIVATIONS)} but was '{getattr(self, name)}'")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1) but was {self.dropout_rate}")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise ConfigError(f"bn_momentum must be in (0, 1] but was {self.bn_momentum}")
        if self.bn_eps <= 0:
            raise ConfigError(f"bn_eps must be positive but was {self.bn_eps}")
        downsampling = 2 ** self.stride_count
        if self.input_resolution % downsampling != 0:
            raise ConfigError(
                f"input_resolution {self.input_resolution} is not divisible by {downsampling}, "
                f"the total downsampling of {self.stride_count} stride-2 sub-blocks"
            )
        return self

    def block_options(self, dtype=None):
        return BlockOptions(
            expansion_factor=self.expansion_factor,
            se_ratio=self.se_ratio,
            se_basis=self.se_basis,
            conv_bias=self.conv_bias,
            se_inner_activation=self.se_inner_activation,
            se_gate_activation=self.se_gate_activation,
            bn_momentum=self.bn_momentum,
            bn_eps=self.bn_eps,
            dtype=dtype,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        result = dataclasses.asdict(self)
        result["fusion"] = self.fusion.value
        return result

    @staticmethod
    def field_names():
        return [f.name for f in dataclasses.fields(ModelConfig)]

    @staticmethod
    def from_dict(values, base=None):
        """
        A config overriding `base` (default: the class defaults) with `values`,
        whose keys must be ModelConfig field names.
        """
        base = ModelConfig() if base is None else base
        unknown = sorted(set(values) - set(ModelConfig.field_names()))
        if unknown:
            raise ConfigError(f"Unknown model config keys {unknown}")
        values = dict(values)
        if "fusion" in values and not isinstance(values["fusion"], FusionFormula):
            values["fusion"] = FusionFormula.parse(values["fusion"])
        return dataclasses.replace(base, **values)


def cifar10_config(channels=16):
    return ModelConfig(yy_start_channels=channels, sp_start_channels=channels)


def imagenet_config():
    return ModelConfig(
        yy_start_channels=16,
        sp_start_channels=64,
        channels_per_mbconv=2,
        yy_layers=1,
        sp_layers=4,
        yy_mbconv_per_layer=3,
        sp_mbconv_per_layer=2,
        extra_sp_stride2=False,
        pre_classifier_neurons=500,
        num_classes=1000,
        input_resolution=224,
    )


PRESETS = {
    "cifar10-16": lambda: cifar10_config(16),
    "cifar10-32": lambda: cifar10_config(32),
    "cifar10-64": lambda: cifar10_config(64),
    "imagenet": imagenet_config,
}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"Unknown preset '{name}'; expected one of {sorted(PRESETS)}")
