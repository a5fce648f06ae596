"""
Differentiable operations over yynet Tensors.

Each operation computes its value with torch kernels and, when any input requires gradients
and a GradTape is active, records a backward rule mapping the output gradient to input gradients.
Broadcasting is not supported: binary operations require equal shapes, and the only per-channel
broadcast the network needs has its own operation, `scale_channels`.
"""
import math

import torch
import torch.nn.functional as torch_functional
from torch.nn.grad import conv2d_input, conv2d_weight

from yynet.autograd.grad_tape import TapeNode, active_tape
from yynet.autograd.tensor import Tensor
from yynet.util.errors import (
    LabelOutOfRange,
    NonFiniteError,
    ShapeError,
    ShapeMismatch,
)


ELEMENTWISE_OPS = ("add", "sub", "mul", "one_minus")

INV_SQRT_2 = 1.0 / math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _result(op_name, data, inputs, backward_rule):
    if not bool(torch.isfinite(data).all()):
        if all(bool(torch.isfinite(i.data).all()) for i in inputs):
            raise NonFiniteError(op_name)
    output = Tensor(data)
    tape = active_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        output.requires_grad = True
        node = TapeNode(op_name, inputs, output, backward_rule, tape)
        tape.record(node)
        output.tape_node = node
    return output


def _check_same_shape(op_name, a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(op_name, a.shape, b.shape)


def elementwise(op, a, b=None):
    """
    add, sub and mul of two same-shape tensors (mul being the Hadamard product),
    and the unary one_minus, 1 - a.
    """
    if op == "one_minus":
        return _result("one_minus", 1.0 - a.data, [a], lambda g: (-g,))
    if op not in ELEMENTWISE_OPS:
        raise ValueError(f"Unknown elementwise op '{op}'; expected one of {ELEMENTWISE_OPS}")
    if b is None:
        raise ShapeError(f"elementwise {op} requires two operands")
    _check_same_shape(f"elementwise {op}", a, b)
    if op == "add":
        return _result("add", a.data + b.data, [a, b], lambda g: (g, g))
    if op == "sub":
        return _result("sub", a.data - b.data, [a, b], lambda g: (g, -g))
    return _result("mul", a.data * b.data, [a, b], lambda g: (g * b.data, g * a.data))


def add(a, b):
    return elementwise("add", a, b)


def sub(a, b):
    return elementwise("sub", a, b)


def mul(a, b):
    return elementwise("mul", a, b)


def one_minus(a):
    return elementwise("one_minus", a)


def matmul(a, b):
    if a.dim() != 2 or b.dim() != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)

    def backward_rule(g):
        return g @ b.data.t(), a.data.t() @ g

    return _result("matmul", a.data @ b.data, [a, b], backward_rule)


def linear(x, weight, bias=None):
    """x (N, F_in) times weight (F_out, F_in) transposed, plus bias (F_out)."""
    if x.dim() != 2 or weight.dim() != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatch("linear bias", weight.shape, bias.shape)
    data = x.data @ weight.data.t()
    if bias is not None:
        data = data + bias.data

    def backward_rule(g):
        grads = [g @ weight.data, g.t() @ x.data]
        if bias is not None:
            grads.append(g.sum(dim=0))
        return grads

    inputs = [x, weight] if bias is None else [x, weight, bias]
    return _result("linear", data, inputs, backward_rule)


def sum(x):
    return _result("sum", x.data.sum(), [x], lambda g: (g.expand(x.data.shape).clone(),))


def mean(x):
    n = x.numel()
    return _result("mean", x.data.mean(), [x], lambda g: ((g / n).expand(x.data.shape).clone(),))


def reshape(x, shape):
    shape = tuple(shape)
    original_shape = x.data.shape
    try:
        data = x.data.reshape(shape)
    except RuntimeError:
        raise ShapeMismatch("reshape", x.shape, shape)
    return _result("reshape", data, [x], lambda g: (g.reshape(original_shape),))


def flatten(x):
    """(N, ...) -> (N, F)."""
    return reshape(x, (x.shape[0], -1))


def conv_output_size(size, kernel_size, stride, padding):
    return (size + 2 * padding - kernel_size) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """
    Cross-correlation of x (N, C_in, H, W) with weight (C_out, C_in/groups, kH, kW).
    groups == C_in gives a depthwise convolution.
    """
    if x.dim() != 4 or weight.dim() != 4:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    if x.shape[1] % groups != 0 or x.shape[1] // groups != weight.shape[1]:
        raise ShapeMismatch("conv2d", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatch("conv2d bias", weight.shape, bias.shape)
    data = torch_functional.conv2d(
        x.data,
        weight.data,
        None if bias is None else bias.data,
        stride=stride,
        padding=padding,
        groups=groups,
    )

    def backward_rule(g):
        grads = [
            conv2d_input(x.data.shape, weight.data, g, stride=stride, padding=padding, groups=groups)
            if x.requires_grad
            else None,
            conv2d_weight(x.data, weight.data.shape, g, stride=stride, padding=padding, groups=groups)
            if weight.requires_grad
            else None,
        ]
        if bias is not None:
            grads.append(g.sum(dim=(0, 2, 3)))
        return grads

    inputs = [x, weight] if bias is None else [x, weight, bias]
    return _result("conv2d", data, inputs, backward_rule)


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """
    Per-channel normalization of x (N, C, H, W).
    In training mode normalizes by batch statistics and updates the running statistics in place:
    running = (1 - momentum) * running + momentum * batch_statistic,
    with the unbiased batch variance feeding running_var.
    In evaluation mode uses running statistics only.
    running_mean and running_var are torch tensors (module buffers), not recorded on the tape.
    """
    if x.dim() != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeMismatch("batch_norm", x.shape, gamma.shape)
    shape = (1, -1, 1, 1)
    reduce_dims = (0, 2, 3)
    if training:
        n = x.data.numel() // x.shape[1]
        batch_mean = x.data.mean(dim=reduce_dims)
        batch_var = x.data.var(dim=reduce_dims, unbiased=False)
        unbiased_var = batch_var * (n / (n - 1)) if n > 1 else batch_var
        running_mean.mul_(1.0 - momentum).add_(momentum * batch_mean)
        running_var.mul_(1.0 - momentum).add_(momentum * unbiased_var)
        mean_used, var_used = batch_mean, batch_var
    else:
        n = None
        mean_used, var_used = running_mean, running_var
    inv_std = torch.rsqrt(var_used + eps)
    x_hat = (x.data - mean_used.reshape(shape)) * inv_std.reshape(shape)
    data = x_hat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward_rule(g):
        grad_gamma = (g * x_hat).sum(dim=reduce_dims)
        grad_beta = g.sum(dim=reduce_dims)
        grad_x_hat = g * gamma.data.reshape(shape)
        if training:
            grad_x = (
                inv_std.reshape(shape)
                / n
                * (
                    n * grad_x_hat
                    - grad_x_hat.sum(dim=reduce_dims, keepdim=True)
                    - x_hat * (grad_x_hat * x_hat).sum(dim=reduce_dims, keepdim=True)
                )
            )
        else:
            grad_x = grad_x_hat * inv_std.reshape(shape)
        return grad_x, grad_gamma, grad_beta

    return _result("batch_norm", data, [x, gamma, beta], backward_rule)


def gelu(x):
    """Exact GELU, x * Phi(x) with Phi the standard normal CDF."""
    cdf = 0.5 * (1.0 + torch.erf(x.data * INV_SQRT_2))

    def backward_rule(g):
        pdf = INV_SQRT_2PI * torch.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _result("gelu", x.data * cdf, [x], backward_rule)


def sigmoid(x):
    y = torch.sigmoid(x.data)
    return _result("sigmoid", y, [x], lambda g: (g * y * (1.0 - y),))


def relu(x):
    positive = (x.data > 0).to(x.data.dtype)
    return _result("relu", x.data * positive, [x], lambda g: (g * positive,))


ACTIVATIONS = {"gelu": gelu, "relu": relu, "sigmoid": sigmoid}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"Unknown activation '{name}'; expected one of {sorted(ACTIVATIONS)}")


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C), mean over H x W."""
    if x.dim() != 4:
        raise ShapeError(f"global_avg_pool requires a 4-D tensor but got shape {x.shape}")
    n, c, h, w = x.shape

    def backward_rule(g):
        return ((g / (h * w)).reshape(n, c, 1, 1).expand(n, c, h, w).clone(),)

    return _result("global_avg_pool", x.data.mean(dim=(2, 3)), [x], backward_rule)


def scale_channels(x, gate):
    """x (N, C, H, W) multiplied by gate (N, C) broadcast over H x W."""
    if x.dim() != 4 or gate.shape != x.shape[:2]:
        raise ShapeMismatch("scale_channels", x.shape, gate.shape)
    n, c = gate.shape
    gate_4d = gate.data.reshape(n, c, 1, 1)

    def backward_rule(g):
        return g * gate_4d, (g * x.data).sum(dim=(2, 3))

    return _result("scale_channels", x.data * gate_4d, [x, gate], backward_rule)


def select_channel(x, index):
    """(N, C, H, W) -> (N, 1, H, W), the channel at `index`."""
    if x.dim() != 4 or not 0 <= index < x.shape[1]:
        raise ShapeError(f"select_channel cannot take channel {index} of shape {x.shape}")

    def backward_rule(g):
        grad = torch.zeros_like(x.data)
        grad[:, index : index + 1] = g
        return (grad,)

    return _result("select_channel", x.data[:, index : index + 1].clone(), [x], backward_rule)


def concat_channels(a, b):
    """Two (N, C, H, W) tensors of the same shape -> (N, 2C, H, W), a's channels first."""
    if a.dim() != 4:
        raise ShapeError(f"concat_channels requires 4-D tensors but got shape {a.shape}")
    _check_same_shape("concat_channels", a, b)
    c = a.shape[1]
    return _result(
        "concat_channels",
        torch.cat([a.data, b.data], dim=1),
        [a, b],
        lambda g: (g[:, :c].clone(), g[:, c:].clone()),
    )


def channel_mean(x):
    """(N, C, H, W) -> (N, 1, H, W), the per-pixel average over channels."""
    if x.dim() != 4:
        raise ShapeError(f"channel_mean requires a 4-D tensor but got shape {x.shape}")
    c = x.shape[1]
    return _result(
        "channel_mean",
        x.data.mean(dim=1, keepdim=True),
        [x],
        lambda g: ((g / c).expand(x.data.shape).clone(),),
    )


def _labels_tensor(labels, number_of_classes):
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() > 0:
        low, high = int(labels.min()), int(labels.max())
        if low < 0:
            raise LabelOutOfRange(low, number_of_classes)
        if high >= number_of_classes:
            raise LabelOutOfRange(high, number_of_classes)
    return labels


def softmax(logits):
    """Row-wise softmax of (N, K) logits, max-subtracted."""
    if logits.dim() != 2:
        raise ShapeError(f"softmax requires (N, K) logits but got shape {logits.shape}")
    y = torch.softmax(logits.data, dim=1)

    def backward_rule(g):
        return (y * (g - (g * y).sum(dim=1, keepdim=True)),)

    return _result("softmax", y, [logits], backward_rule)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label], stabilized by max subtraction."""
    if logits.dim() != 2:
        raise ShapeError(f"softmax_cross_entropy requires (N, K) logits but got shape {logits.shape}")
    n, k = logits.shape
    labels = _labels_tensor(labels, k)
    if labels.shape != (n,):
        raise ShapeMismatch("softmax_cross_entropy", logits.shape, tuple(labels.shape))
    shifted = logits.data - logits.data.max(dim=1, keepdim=True).values
    log_probabilities = shifted - torch.logsumexp(shifted, dim=1, keepdim=True)
    rows = torch.arange(n)
    loss = -log_probabilities[rows, labels].mean()

    def backward_rule(g):
        grad = torch.exp(log_probabilities)
        grad[rows, labels] -= 1.0
        return (grad * (g / n),)

    return _result("softmax_cross_entropy", loss, [logits], backward_rule)
