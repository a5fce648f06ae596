import math

import torch

from yynet.autograd.tensor import DEFAULT_DTYPE, Tensor
from yynet.util.errors import FormatError


class Module:
    """
    Base class of parameterized layers.
    Parameters (trainable leaf tensors), buffers (non-trainable state such as BatchNorm running statistics)
    and sub-modules are registered by attribute assignment and enumerated in registration order,
    with dotted names such as `mbconvs.0.expand.weight`.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, tensor):
        self._buffers[name] = tensor
        object.__setattr__(self, name, tensor)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"forward not implemented for {type(self)}")

    def named_modules(self, prefix=""):
        yield prefix, self
        for name, module in self._modules.items():
            yield from module.named_modules(prefix + name + ".")

    def named_parameters(self):
        for prefix, module in self.named_modules():
            for name, parameter in module._parameters.items():
                yield prefix + name, parameter

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        for prefix, module in self.named_modules():
            for name, buffer in module._buffers.items():
                yield prefix + name, buffer

    def train(self, mode=True):
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for parameter in self.parameters():
            parameter.zero_grad()

    def state_dict(self):
        """Parameters then buffers, name to torch tensor (shared, not copied)."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b.data for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        own.update(self.named_buffers())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise FormatError(
                f"State does not match module: missing {missing}, unexpected {unexpected}"
            )
        for name, tensor in own.items():
            value = state[name]
            if tuple(value.shape) != tensor.shape:
                raise FormatError(
                    f"State entry {name} has shape {tuple(value.shape)} but module expects {tensor.shape}"
                )
            tensor.data.copy_(value)

    def randomize(self, generator=None):
        """Re-initializes every parameter in place, visiting modules in registration order."""
        for _, module in self.named_modules():
            module.reset_parameters(generator)

    def reset_parameters(self, generator=None):
        pass


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for module in modules:
            self.append(module)

    def append(self, module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]


def kaiming_normal(shape, fan_in, generator, dtype):
    """Fan-in scaled normal initialization, std = sqrt(2 / fan_in)."""
    std = math.sqrt(2.0 / fan_in)
    return torch.randn(*shape, generator=generator, dtype=dtype) * std


def parameter(data):
    return Tensor(data, requires_grad=True)


def resolve_dtype(dtype):
    return DEFAULT_DTYPE if dtype is None else dtype
