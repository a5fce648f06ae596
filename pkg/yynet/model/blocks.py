"""
The composite sub-blocks of YYNet and the layers built from them.

A layer is one ResNet sub-block followed by MBConv sub-blocks. Layers differ only in where they
apply their stride 2, which is what distinguishes the Yin, Yang and single-path layers.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import torch

from yynet.autograd import functional as F
from yynet.nn.layers import Activation, BatchNorm2d, Conv2d, SqueezeExcite
from yynet.nn.module import Module, ModuleList
from yynet.util.errors import ConfigError, ShapeError

SE_BASES = ("expanded", "input", "projected")

YIN_MODES = ("first_channel", "mean")


@dataclass(frozen=True)
class BlockOptions:
    """Sub-block internals shared by every layer of a network."""

    expansion_factor: int = 4
    se_ratio: Optional[int] = 4
    se_basis: str = "expanded"
    conv_bias: bool = False
    activation: str = "gelu"
    se_inner_activation: str = "gelu"
    se_gate_activation: str = "sigmoid"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dtype: Optional[torch.dtype] = None

    def conv(self, in_channels, out_channels, kernel_size, stride=1, groups=1):
        return Conv2d(
            in_channels,
            out_channels,
            kernel_size,
            stride=stride,
            padding=kernel_size // 2,
            groups=groups,
            bias=self.conv_bias,
            dtype=self.dtype,
        )

    def batch_norm(self, channels):
        return BatchNorm2d(channels, momentum=self.bn_momentum, eps=self.bn_eps, dtype=self.dtype)

    def squeeze_excite(self, channels, basis_channels):
        if basis_channels < self.se_ratio:
            raise ConfigError(
                f"Squeeze-and-excitation ratio {self.se_ratio} exceeds the {basis_channels} channels it reduces"
            )
        hidden = basis_channels // self.se_ratio
        return SqueezeExcite(
            channels,
            hidden,
            inner_activation=self.se_inner_activation,
            gate_activation=self.se_gate_activation,
            dtype=self.dtype,
        )


class ResNetSubBlock(Module):
    """
    Basic residual sub-block:
    act(bn2(conv2(act(bn1(conv1(x)))))) + shortcut(x),
    where shortcut is the identity when stride is 1 and the width is kept,
    and a strided 1x1 convolution with batch norm otherwise.
    """

    def __init__(self, in_channels, out_channels, stride=1, options=BlockOptions()):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.conv1 = options.conv(in_channels, out_channels, 3, stride=stride)
        self.bn1 = options.batch_norm(out_channels)
        self.conv2 = options.conv(out_channels, out_channels, 3)
        self.bn2 = options.batch_norm(out_channels)
        self.activation = Activation(options.activation)
        if stride != 1 or in_channels != out_channels:
            self.projection = options.conv(in_channels, out_channels, 1, stride=stride)
            self.projection_bn = options.batch_norm(out_channels)
        else:
            self.projection = None

    @property
    def has_identity_shortcut(self):
        return self.projection is None

    def shortcut(self, x):
        if self.projection is None:
            return x
        return self.projection_bn(self.projection(x))

    def forward(self, x):
        y = self.activation(self.bn1(self.conv1(x)))
        y = self.activation(self.bn2(self.conv2(y)))
        return F.add(y, self.shortcut(x))

    def output_size(self, size):
        return self.conv1.output_size(size)

    def __repr__(self):
        return f"ResNetSubBlock({self.in_channels}->{self.out_channels}, stride={self.stride})"


class MBConvSubBlock(Module):
    """
    Inverted-residual sub-block: 1x1 expansion by `expansion_factor`, 3x3 depthwise convolution
    carrying the stride, squeeze-and-excitation, 1x1 projection, each convolution followed by batch norm
    (and GELU, except after the projection).
    The residual connection is used iff stride is 1 and the width is kept.

    Squeeze-and-excitation placement follows `options.se_basis`:
    - expanded: after the depthwise conv, bottleneck of expanded/r
    - input: after the depthwise conv, bottleneck of in_channels/r
    - projected: after the projection, bottleneck of out_channels/r
    """

    def __init__(self, in_channels, out_channels, stride=1, options=BlockOptions()):
        super().__init__()
        if options.expansion_factor < 1:
            raise ConfigError(f"MBConv expansion factor must be positive but was {options.expansion_factor}")
        if options.se_basis not in SE_BASES:
            raise ConfigError(f"Unknown squeeze-and-excitation basis '{options.se_basis}'; expected one of {SE_BASES}")
        expanded = options.expansion_factor * in_channels
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.expanded_channels = expanded
        self.stride = stride
        self.se_basis = options.se_basis

        self.expand = options.conv(in_channels, expanded, 1)
        self.expand_bn = options.batch_norm(expanded)
        self.depthwise = options.conv(expanded, expanded, 3, stride=stride, groups=expanded)
        self.depthwise_bn = options.batch_norm(expanded)
        self.activation = Activation(options.activation)

        self.se = None
        if options.se_ratio is not None and options.se_basis != "projected":
            basis = expanded if options.se_basis == "expanded" else in_channels
            self.se = options.squeeze_excite(expanded, basis)

        self.project = options.conv(expanded, out_channels, 1)
        self.project_bn = options.batch_norm(out_channels)

        if options.se_ratio is not None and options.se_basis == "projected":
            self.se = options.squeeze_excite(out_channels, out_channels)

    @property
    def has_residual(self):
        return self.stride == 1 and self.in_channels == self.out_channels

    def expanded_features(self, x):
        """Output of the depthwise stage, before squeeze-and-excitation."""
        y = self.activation(self.expand_bn(self.expand(x)))
        return self.activation(self.depthwise_bn(self.depthwise(y)))

    def forward(self, x):
        y = self.expanded_features(x)
        if self.se is not None and self.se_basis != "projected":
            y = self.se(y)
        y = self.project_bn(self.project(y))
        if self.se is not None and self.se_basis == "projected":
            y = self.se(y)
        if self.has_residual:
            y = F.add(y, x)
        return y

    def output_size(self, size):
        return self.depthwise.output_size(size)

    def __repr__(self):
        return (
            f"MBConvSubBlock({self.in_channels}->{self.expanded_channels}->{self.out_channels}, "
            f"stride={self.stride})"
        )


class BranchKind(Enum):
    YIN = "yin"
    YANG = "yang"
    SINGLE_PATH = "single_path"


def stride_policy(kind, mbconv_count, extra_stride=False):
    """
    Strides of (resnet, [mbconv...]) for a layer of the given kind:
    Yin strides its last MBConv, Yang its first MBConv,
    single-path its ResNet sub-block (and also its first MBConv when `extra_stride` is set).
    """
    mbconv_strides = [1] * mbconv_count
    if kind is BranchKind.SINGLE_PATH:
        if extra_stride:
            if mbconv_count == 0:
                raise ConfigError("The extra single-path stride requires at least one MBConv")
            mbconv_strides[0] = 2
        return 2, mbconv_strides
    if mbconv_count == 0:
        raise ConfigError(f"A {kind.value} layer needs at least one MBConv to carry its stride")
    if kind is BranchKind.YIN:
        mbconv_strides[-1] = 2
    else:
        mbconv_strides[0] = 2
    return 1, mbconv_strides


class BranchLayer(Module):
    """
    One ResNet sub-block mapping `in_channels` to `resnet_channels`,
    then `mbconv_count` MBConv sub-blocks, each adding `channels_per_mbconv` channels.
    """

    def __init__(
        self,
        kind,
        in_channels,
        resnet_channels,
        mbconv_count,
        channels_per_mbconv=0,
        extra_stride=False,
        options=BlockOptions(),
    ):
        super().__init__()
        self.kind = kind
        resnet_stride, mbconv_strides = stride_policy(kind, mbconv_count, extra_stride)
        self.resnet = ResNetSubBlock(in_channels, resnet_channels, resnet_stride, options)
        self.mbconvs = ModuleList()
        width = resnet_channels
        for stride in mbconv_strides:
            self.mbconvs.append(MBConvSubBlock(width, width + channels_per_mbconv, stride, options))
            width += channels_per_mbconv
        self.in_channels = in_channels
        self.out_channels = width

    @property
    def sub_blocks(self):
        return [self.resnet, *self.mbconvs]

    @property
    def stride_count(self):
        return sum(1 for block in self.sub_blocks if block.stride == 2)

    def forward(self, x):
        for block in self.sub_blocks:
            x = block(x)
        return x

    def output_size(self, size):
        for block in self.sub_blocks:
            size = block.output_size(size)
        return size

    def trace(self, size, prefix=""):
        """(name, channels, spatial size) after each sub-block, for an input of spatial `size`."""
        names = ["resnet"] + [f"mbconvs.{i}" for i in range(len(self.mbconvs))]
        rows = []
        for name, block in zip(names, self.sub_blocks):
            size = block.output_size(size)
            rows.append((prefix + name, block.out_channels, size))
        return rows

    def __repr__(self):
        return f"BranchLayer({self.kind.value}, {self.in_channels}->{self.out_channels})"


def yin_input(x, mode="first_channel"):
    """
    The single-channel input of the Yin branch:
    the red plane (`first_channel`) or the per-pixel channel average (`mean`).
    """
    if x.dim() != 4 or x.shape[1] != 3:
        raise ShapeError(f"Yin input requires an (N, 3, H, W) image batch but got shape {x.shape}")
    if mode == "first_channel":
        return F.select_channel(x, 0)
    if mode == "mean":
        return F.channel_mean(x)
    raise ConfigError(f"Unknown Yin input mode '{mode}'; expected one of {YIN_MODES}")
