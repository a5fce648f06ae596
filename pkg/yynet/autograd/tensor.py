import torch

from yynet.util.errors import ShapeError


DEFAULT_DTYPE = torch.float32

ALLOWED_RANKS = {0, 1, 2, 4}


class Tensor:
    """
    A dense real-valued tensor in row-major (NCHW for images) layout, backed by a torch tensor.
    Gradients are computed by yynet's own GradTape, never by torch autograd.

    Attributes:
    data: the torch tensor holding the values (rank 0, 1, 2 or 4)
    requires_grad: whether operations on this tensor are recorded on the active tape
    grad: torch tensor of the same shape, or None until a backward pass reaches it
    tape_node: the TapeNode that produced this tensor, None for leaves
    """

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, torch.Tensor):
            data = data.detach()
            if dtype is not None:
                data = data.to(dtype)
            elif not torch.is_floating_point(data):
                data = data.to(DEFAULT_DTYPE)
        else:
            data = torch.tensor(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        if data.dim() not in ALLOWED_RANKS:
            raise ShapeError(
                f"Tensor rank must be one of {sorted(ALLOWED_RANKS)} but got shape {tuple(data.shape)}"
            )
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self.tape_node = None

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self.tape_node is None

    def dim(self):
        return self.data.dim()

    def numel(self):
        return self.data.numel()

    def item(self):
        return self.data.item()

    def tolist(self):
        return self.data.tolist()

    def numpy(self):
        return self.data.numpy()

    def detach(self):
        return Tensor(self.data.clone())

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad):
        if tuple(grad.shape) != self.shape:
            raise ShapeError(
                f"Gradient of shape {tuple(grad.shape)} cannot accumulate into tensor of shape {self.shape}"
            )
        if self.grad is None:
            self.grad = grad.clone()
        else:
            self.grad = self.grad + grad

    def backward(self):
        from yynet.autograd.grad_tape import backward

        backward(self)

    def __add__(self, other):
        from yynet.autograd import functional as F

        return F.elementwise("add", self, other)

    def __sub__(self, other):
        from yynet.autograd import functional as F

        return F.elementwise("sub", self, other)

    def __mul__(self, other):
        from yynet.autograd import functional as F

        return F.elementwise("mul", self, other)

    def __matmul__(self, other):
        from yynet.autograd import functional as F

        return F.matmul(self, other)

    def one_minus(self):
        from yynet.autograd import functional as F

        return F.elementwise("one_minus", self)

    def sum(self):
        from yynet.autograd import functional as F

        return F.sum(self)

    def mean(self):
        from yynet.autograd import functional as F

        return F.mean(self)

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        grad_str = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad_str})"


def zeros(*shape, dtype=None, requires_grad=False):
    return Tensor(torch.zeros(*shape, dtype=dtype or DEFAULT_DTYPE), requires_grad=requires_grad)


def ones(*shape, dtype=None, requires_grad=False):
    return Tensor(torch.ones(*shape, dtype=dtype or DEFAULT_DTYPE), requires_grad=requires_grad)


def randn(*shape, generator=None, dtype=None, requires_grad=False):
    data = torch.randn(*shape, generator=generator, dtype=dtype or DEFAULT_DTYPE)
    return Tensor(data, requires_grad=requires_grad)


def uniform(*shape, low=-2.0, high=2.0, generator=None, dtype=None, requires_grad=False):
    data = torch.rand(*shape, generator=generator, dtype=dtype or DEFAULT_DTYPE)
    return Tensor(low + (high - low) * data, requires_grad=requires_grad)
