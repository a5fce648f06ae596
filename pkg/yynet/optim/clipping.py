import math

import torch


def global_norm(grads):
    return math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads))


def clip_global_norm(grads, max_norm=1.0):
    """
    Scales every gradient by max_norm / norm when the L2 norm of all of them together exceeds max_norm.
    Returns the (possibly) scaled gradients and the norm before clipping.
    """
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


def clip_value(grads, max_value=1.0):
    return [torch.clamp(g, -max_value, max_value) for g in grads]


def clip_gradients(parameters, max_norm=1.0, mode="norm"):
    """Clips the `grad` of each parameter in place and returns the gradient norm before clipping."""
    parameters = [p for p in parameters if p.grad is not None]
    grads = [p.grad for p in parameters]
    norm = global_norm(grads)
    if mode == "value":
        clipped = clip_value(grads, max_norm)
    else:
        clipped, _ = clip_global_norm(grads, max_norm)
    for parameter, grad in zip(parameters, clipped):
        parameter.grad = grad
    return norm
