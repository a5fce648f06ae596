import torch

from yynet.autograd import functional as F
from yynet.nn.module import Module, kaiming_normal, parameter, resolve_dtype
from yynet.autograd.tensor import Tensor
from yynet.util.errors import ConfigError, ShapeMismatch


class Conv2d(Module):
    """
    2-D cross-correlation with weight (C_out, C_in/groups, k, k).
    groups=1 is a standard convolution, groups=C_in a depthwise one.
    """

    def __init__(
        self,
        in_channels,
        out_channels,
        kernel_size,
        stride=1,
        padding=0,
        groups=1,
        bias=False,
        dtype=None,
    ):
        super().__init__()
        if in_channels % groups != 0 or out_channels % groups != 0:
            raise ConfigError(
                f"Conv2d channels {in_channels}->{out_channels} are not divisible by groups={groups}"
            )
        if stride not in (1, 2):
            raise ConfigError(f"Conv2d stride must be 1 or 2 but was {stride}")
        dtype = resolve_dtype(dtype)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.weight = parameter(
            torch.zeros(out_channels, in_channels // groups, kernel_size, kernel_size, dtype=dtype)
        )
        self.bias = parameter(torch.zeros(out_channels, dtype=dtype)) if bias else None

    @property
    def fan_in(self):
        return (self.in_channels // self.groups) * self.kernel_size * self.kernel_size

    def reset_parameters(self, generator=None):
        self.weight.data.copy_(
            kaiming_normal(self.weight.shape, self.fan_in, generator, self.weight.dtype)
        )
        if self.bias is not None:
            self.bias.data.zero_()

    def output_size(self, size):
        return F.conv_output_size(size, self.kernel_size, self.stride, self.padding)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch("Conv2d input", x.shape, self.weight.shape)
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def __repr__(self):
        kind = "depthwise " if self.groups > 1 else ""
        return (
            f"Conv2d({kind}{self.in_channels}->{self.out_channels}, k={self.kernel_size}, "
            f"stride={self.stride})"
        )


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(torch.ones(channels, dtype=dtype))
        self.beta = parameter(torch.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", Tensor(torch.zeros(channels, dtype=dtype)))
        self.register_buffer("running_var", Tensor(torch.ones(channels, dtype=dtype)))

    def reset_parameters(self, generator=None):
        self.gamma.data.fill_(1.0)
        self.beta.data.zero_()
        self.running_mean.data.zero_()
        self.running_var.data.fill_(1.0)

    def forward(self, x):
        return F.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean.data,
            self.running_var.data,
            self.training,
            self.momentum,
            self.eps,
        )


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(torch.zeros(out_features, in_features, dtype=dtype))
        self.bias = parameter(torch.zeros(out_features, dtype=dtype)) if bias else None

    def reset_parameters(self, generator=None):
        self.weight.data.copy_(
            kaiming_normal(self.weight.shape, self.in_features, generator, self.weight.dtype)
        )
        if self.bias is not None:
            self.bias.data.zero_()

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)

    def __repr__(self):
        return f"Linear({self.in_features}->{self.out_features})"


class Activation(Module):
    def __init__(self, name="gelu"):
        super().__init__()
        self.name = name
        self.function = F.activation(name)

    def forward(self, x):
        return self.function(x)


class Dropout(Module):
    """
    Zeroes each element with probability `rate` in training mode and scales survivors by 1/(1 - rate).
    Identity in evaluation mode. Masks come from the module's own generator so they can be checkpointed.
    """

    def __init__(self, rate=0.2, seed=0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"Dropout rate must be in [0, 1) but was {rate}")
        self.rate = rate
        self.generator = torch.Generator().manual_seed(seed)

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            return x
        keep = torch.rand(x.shape, generator=self.generator, dtype=x.dtype) >= self.rate
        mask = keep.to(x.dtype) / (1.0 - self.rate)
        return F.mul(x, Tensor(mask))


class SqueezeExcite(Module):
    """
    Per-channel gating: x * gate(expand(act(reduce(global_avg_pool(x))))),
    with reduce C -> hidden and expand hidden -> C linear maps (biased).
    """

    def __init__(
        self,
        channels,
        hidden_channels,
        inner_activation="gelu",
        gate_activation="sigmoid",
        dtype=None,
    ):
        super().__init__()
        if hidden_channels < 1:
            raise ConfigError(
                f"SqueezeExcite on {channels} channels has a reduced width of {hidden_channels}"
            )
        self.channels = channels
        self.hidden_channels = hidden_channels
        self.reduce = Linear(channels, hidden_channels, bias=True, dtype=dtype)
        self.inner_activation = Activation(inner_activation)
        self.expand = Linear(hidden_channels, channels, bias=True, dtype=dtype)
        self.gate_activation = Activation(gate_activation)

    @staticmethod
    def with_ratio(channels, reduction_ratio, **kwargs):
        if channels < reduction_ratio:
            raise ConfigError(
                f"SqueezeExcite reduction ratio {reduction_ratio} exceeds its {channels} channels"
            )
        return SqueezeExcite(channels, channels // reduction_ratio, **kwargs)

    def gate(self, x):
        pooled = F.global_avg_pool(x)
        return self.gate_activation(self.expand(self.inner_activation(self.reduce(pooled))))

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ShapeMismatch("SqueezeExcite input", x.shape, (x.shape[0], self.channels))
        return F.scale_channels(x, self.gate(x))
