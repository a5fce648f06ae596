import torch

from yynet.util.errors import StateError, TrainingDivergedError


class OptimizerState:
    """
    Everything the optimizer carries between steps:
    per-parameter first and second moments, the number of steps taken,
    the learning rate of the last step, the weight decay in force,
    and the EMA shadow parameters once averaging is active.
    """

    def __init__(self, named_parameters):
        named_parameters = list(named_parameters)
        self.first_moments = {name: torch.zeros_like(p.data) for name, p in named_parameters}
        self.second_moments = {name: torch.zeros_like(p.data) for name, p in named_parameters}
        self.step = 0
        self.current_lr = 0.0
        self.current_wd = 0.0
        self.ema_shadow = None

    @property
    def ema_active(self):
        return self.ema_shadow is not None

    def check_matches(self, named_parameters):
        for name, parameter in named_parameters:
            moment = self.first_moments.get(name)
            if moment is None or tuple(moment.shape) != parameter.shape:
                raise StateError(f"Optimizer state has no moments matching parameter {name} {parameter.shape}")

    def __repr__(self):
        return (
            f"OptimizerState(step={self.step}, lr={self.current_lr:.3g}, wd={self.current_wd:.3g}, "
            f"ema_active={self.ema_active})"
        )


def check_finite_gradients(named_parameters, step):
    for name, parameter in named_parameters:
        if parameter.grad is not None and not bool(torch.isfinite(parameter.grad).all()):
            raise TrainingDivergedError(step, what=f"gradients of {name}")


def adamw_step(named_parameters, state, lr, wd, betas=(0.9, 0.999), eps=1e-8):
    """
    One AdamW update with bias-corrected moments and decoupled weight decay:
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta.
    Parameters without a gradient are left untouched.
    """
    named_parameters = list(named_parameters)
    check_finite_gradients(named_parameters, state.step + 1)
    state.check_matches(named_parameters)

    beta1, beta2 = betas
    state.step += 1
    bias_correction1 = 1.0 - beta1 ** state.step
    bias_correction2 = 1.0 - beta2 ** state.step
    for name, parameter in named_parameters:
        grad = parameter.grad
        if grad is None:
            continue
        m = state.first_moments[name]
        v = state.second_moments[name]
        m.mul_(beta1).add_((1.0 - beta1) * grad)
        v.mul_(beta2).add_((1.0 - beta2) * (grad * grad))
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        theta = parameter.data
        parameter.data.copy_(theta - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * theta)
    state.current_lr = lr
    return state


def couple_weight_decay(state, epoch_end_lr, multiplier=1.56):
    """Sets the weight decay for the next epoch to `multiplier` times the last learning rate of this one."""
    state.current_wd = multiplier * epoch_end_lr
    return state
