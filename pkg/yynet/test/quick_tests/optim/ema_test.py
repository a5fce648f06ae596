import torch

from yynet.autograd.tensor import Tensor
from yynet.nn.layers import Linear
from yynet.optim.adamw import OptimizerState
from yynet.optim.ema import ema_start_step, ema_update, shadow_parameters

def named_scalar(value):
    return [("theta", Tensor(torch.tensor([value], dtype=torch.float64), requires_grad=True))]


def test_ema_activation_and_update():
    total = 100
    named = named_scalar(2.0)
    state = OptimizerState(named)
    start = ema_start_step(total)
    assert start == 25

    updates = 0
    for step in range(total):
        before = None if state.ema_shadow is None else state.ema_shadow["theta"].clone()
        ema_update(state, named, step, total)
        if step < start:
            assert not state.ema_active
        else:
            assert state.ema_active
            updates += 1
            if step == start:
                assert state.ema_shadow["theta"].item() == 2.0
            else:
                assert torch.equal(state.ema_shadow["theta"], 0.1 * before + 0.9 * named[0][1].data)
        named[0][1].data.fill_(1.0 if step >= start else 2.0)
    assert updates == total - start


def test_ema_example_and_fixed_point():
    named = named_scalar(2.0)
    state = OptimizerState(named)
    ema_update(state, named, 0, 4, start_fraction=0.0)
    named[0][1].data.fill_(1.0)
    ema_update(state, named, 1, 4, start_fraction=0.0)
    assert abs(state.ema_shadow["theta"].item() - 1.1) < 1e-15

    # constant current value: distance to it shrinks by 0.1 per update
    for k in range(2, 6):
        ema_update(state, named, 1, 4, start_fraction=0.0)
        assert abs(state.ema_shadow["theta"].item() - 1.0 - 0.1 ** k) < 1e-14


def test_shadow_parameters_swap_and_restore():
    layer = Linear(2, 2, dtype=torch.float64)
    layer.randomize(torch.Generator().manual_seed(0))
    state = OptimizerState(layer.named_parameters())
    live = {name: p.data.clone() for name, p in layer.named_parameters()}

    with shadow_parameters(layer, state):
        assert all(torch.equal(p.data, live[name]) for name, p in layer.named_parameters())

    ema_update(state, list(layer.named_parameters()), 0, 1, start_fraction=0.0)
    for _, shadow in state.ema_shadow.items():
        shadow.fill_(7.0)
    with shadow_parameters(layer, state):
        assert all(bool((p.data == 7.0).all()) for p in layer.parameters())
    assert all(torch.equal(p.data, live[name]) for name, p in layer.named_parameters())

