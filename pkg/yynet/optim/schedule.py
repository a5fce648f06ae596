import math

from yynet.util.errors import StateError


def warmup_steps(total_steps, pct_start):
    return math.floor(pct_start * total_steps)


def cosine_interpolation(start, end, fraction):
    if fraction <= 0.0:
        return start
    if fraction >= 1.0:
        return end
    return end + (start - end) / 2.0 * (1.0 + math.cos(math.pi * fraction))


def onecycle_lr(step, total_steps, config):
    """
    One-cycle learning rate for 0-based `step` of a run of `total_steps` optimizer steps.

    Rises along a cosine from max_lr/div_factor at step 0 to max_lr at step floor(pct_start * total_steps),
    then falls along a cosine to max_lr/final_div_factor at the last step.
    """
    if not 0 <= step < total_steps:
        raise StateError(f"Learning rate requested for step {step} of a {total_steps}-step schedule")
    peak = warmup_steps(total_steps, config.pct_start)
    if step < peak:
        return cosine_interpolation(config.initial_lr, config.max_lr, step / peak)
    annealing_steps = total_steps - 1 - peak
    if annealing_steps == 0:
        return config.max_lr
    final_lr = config.max_lr / config.final_div_factor
    return cosine_interpolation(config.max_lr, final_lr, (step - peak) / annealing_steps)


def coupled_weight_decay(lr, config):
    return config.wd_lr_multiplier * lr
