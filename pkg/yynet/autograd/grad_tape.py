import threading

import torch

from yynet.util.errors import NoActiveTape, ShapeError, StateError


_local = threading.local()


def _tape_stack():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape():
    """The innermost GradTape entered on the current thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class TapeNode:
    """
    One recorded operation: its inputs, the tensor it produced,
    and a rule mapping the output gradient to one gradient per input (None where not needed).
    """

    __slots__ = ("op_name", "inputs", "output", "backward_rule", "tape")

    def __init__(self, op_name, inputs, output, backward_rule, tape):
        self.op_name = op_name
        self.inputs = inputs
        self.output = output
        self.backward_rule = backward_rule
        self.tape = tape

    def __repr__(self):
        return f"TapeNode({self.op_name})"


class GradTape:
    """
    Records operations on tensors requiring gradients while entered as a context manager.
    Nodes are appended in execution order, which is a topological order of the graph,
    so the backward pass is a single reverse sweep.

        with GradTape() as tape:
            loss = softmax_cross_entropy(model(x), labels)
            loss.backward()

    A tape and the tensors it records belong to the thread that entered it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise StateError("GradTape contexts must be exited in reverse order of entry")
        stack.pop()

    def record(self, node):
        self.nodes.append(node)

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss):
        if loss.numel() != 1:
            raise ShapeError(f"backward requires a scalar loss but got shape {loss.shape}")
        if loss.tape_node is None or loss.tape_node.tape is not self:
            raise NoActiveTape()

        pending = {id(loss): torch.ones_like(loss.data)}
        for node in reversed(self.nodes):
            output_grad = pending.pop(id(node.output), None)
            if output_grad is None:
                continue
            input_grads = node.backward_rule(output_grad)
            for input, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not input.requires_grad:
                    continue
                if input.tape_node is None:
                    input.accumulate_grad(input_grad)
                else:
                    key = id(input)
                    if key in pending:
                        pending[key] = pending[key] + input_grad
                    else:
                        pending[key] = input_grad


def backward(loss):
    """
    Populates `grad` on every leaf reachable from `loss` that requires gradients,
    accumulating into existing gradients.
    """
    tape = active_tape()
    if tape is None:
        raise NoActiveTape()
    tape.backward(loss)
