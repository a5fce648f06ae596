import torch

from yynet.autograd import functional as F
from yynet.autograd.grad_tape import GradTape
from yynet.autograd.tensor import Tensor


def relative_error(analytic, numerical):
    """Max absolute difference relative to the largest magnitude of either gradient."""
    difference = (analytic - numerical).abs().max().item()
    scale = max(analytic.abs().max().item(), numerical.abs().max().item(), 1e-12)
    return difference / scale


def analytic_gradients(function, inputs, projection):
    for input in inputs:
        input.zero_grad()
    with GradTape():
        output = function(*inputs)
        loss = F.sum(F.mul(output, projection))
        loss.backward()
    return [
        input.grad.clone() if input.grad is not None else torch.zeros_like(input.data)
        for input in inputs
    ]


def numerical_gradient(function, inputs, index, projection, h=1e-5):
    """Central differences of sum(projection * function(inputs)) with respect to inputs[index]."""

    def value():
        return (function(*inputs).data * projection.data).sum().item()

    target = inputs[index].data.view(-1)
    gradient = torch.zeros_like(target)
    for i in range(target.numel()):
        original = target[i].item()
        target[i] = original + h
        right = value()
        target[i] = original - h
        left = value()
        target[i] = original
        gradient[i] = (right - left) / (2 * h)
    return gradient.reshape(inputs[index].data.shape)


def gradient_errors(function, inputs, h=1e-5, seed=0):
    """
    Compares analytic and central-difference gradients of a random projection of function(*inputs)
    for every input requiring gradients. Returns one relative error per input (None where not checked).
    Inputs should be double precision.
    """
    output_shape = function(*inputs).shape
    generator = torch.Generator().manual_seed(seed)
    projection = Tensor(torch.randn(tuple(output_shape), generator=generator, dtype=inputs[0].dtype))
    analytic = analytic_gradients(function, inputs, projection)
    errors = []
    for index, input in enumerate(inputs):
        if not input.requires_grad:
            errors.append(None)
            continue
        numerical = numerical_gradient(function, inputs, index, projection, h)
        errors.append(relative_error(analytic[index], numerical))
    return errors


def assert_gradients_match(function, inputs, tolerance=1e-4, h=1e-5, seed=0):
    errors = gradient_errors(function, inputs, h, seed)
    for index, error in enumerate(errors):
        if error is not None:
            assert error < tolerance, (
                f"Gradient of input {index} {inputs[index]} has relative error {error:.3g} "
                f"(tolerance is {tolerance})"
            )
    return errors
