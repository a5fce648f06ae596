import math
from contextlib import contextmanager


def ema_start_step(total_steps, start_fraction=0.25):
    return math.floor(start_fraction * total_steps)


def ema_update(state, named_parameters, step, total_steps, avg_coeff=0.1, cur_coeff=0.9, start_fraction=0.25):
    """
    Maintains the shadow parameters of `state` after 0-based optimizer step `step`.
    Nothing happens before floor(start_fraction * total_steps); at the first call from then on
    the shadow becomes a copy of the current parameters, and afterwards
    shadow <- avg_coeff * shadow + cur_coeff * current.
    """
    if step < ema_start_step(total_steps, start_fraction):
        return state
    if state.ema_shadow is None:
        state.ema_shadow = {name: p.data.clone() for name, p in named_parameters}
        return state
    for name, parameter in named_parameters:
        shadow = state.ema_shadow[name]
        shadow.copy_(avg_coeff * shadow + cur_coeff * parameter.data)
    return state


@contextmanager
def shadow_parameters(model, state):
    """Temporarily loads the shadow parameters into `model` (no-op while averaging is inactive)."""
    if state.ema_shadow is None:
        yield model
        return
    backup = {}
    for name, parameter in model.named_parameters():
        backup[name] = parameter.data.clone()
        parameter.data.copy_(state.ema_shadow[name])
    try:
        yield model
    finally:
        for name, parameter in model.named_parameters():
            parameter.data.copy_(backup[name])
