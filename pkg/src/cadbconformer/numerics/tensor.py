"""Dense tensor carrier and the computation tape used for reverse-mode gradients."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

PRECISIONS = {"single": np.float32, "double": np.float64}


class TapeError(RuntimeError):
    """Raised for invalid use of the computation tape."""


class Tensor:
    """Dense real array with optional gradient tracking.

    Arithmetic operators and the methods below record onto the active
    :class:`ComputationTape` when any operand requires a gradient.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and not isinstance(data, np.ndarray):
            dtype = np.float32
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32 if dtype is None else dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "double" if self.data.dtype == np.float64 else "single"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)


@dataclass
class Node:
    """One recorded primitive application."""

    name: str
    inputs: tuple
    output: Tensor
    backward_fn: Callable


class ComputationTape:
    """Ordered record of primitive applications.

    Nodes are appended in execution order, which is already a topological
    order; :meth:`backward` replays them in reverse, visiting each once.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._produced: set[int] = set()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, name: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: Callable) -> None:
        self.nodes.append(Node(name, tuple(inputs), output, backward_fn))
        self._produced.add(id(output))
        output._tape = self

    def backward(self, output: Tensor) -> None:
        if output.size != 1:
            raise TapeError(f"backward() needs a scalar output, got shape {output.shape}")
        if id(output) not in self._produced:
            raise TapeError("output was not recorded on this tape")
        grads = {id(output): np.ones_like(output.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise TapeError(
                        f"{node.name}: gradient shape {gi.shape} does not match input shape {inp.shape}")
                key = id(inp)
                if key in self._produced:
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
                elif inp.grad is None:
                    inp.grad = np.array(gi, dtype=inp.dtype, copy=True)
                else:
                    inp.grad += gi

    def clear(self) -> None:
        """Drop recorded nodes so intermediate buffers can be freed."""
        for node in self.nodes:
            node.output._tape = None
        self.nodes.clear()
        self._produced.clear()


_state = threading.local()


def active_tape() -> Optional[ComputationTape]:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


@contextmanager
def tape():
    """Record differentiable operations issued inside the block.

    >>> with tape() as t:
    ...     loss = (x * x).sum()
    >>> loss.backward()
    """
    t = ComputationTape()
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    stack.append(t)
    try:
        yield t
    finally:
        stack.pop()


def backward(output: Tensor) -> None:
    """Populate ``.grad`` on every tracked leaf reachable from ``output``.

    Gradients accumulate additively; zero them between steps.
    """
    t = output._tape
    if t is None:
        raise TapeError("backward() called on a tensor that was not produced under an active tape")
    t.backward(output)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def make_result(name: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn: Callable) -> Tensor:
    """Wrap ``out_data`` and record ``backward_fn`` when gradients are needed.

    ``backward_fn(g)`` receives the output gradient and returns one gradient
    array (or ``None``) per input.
    """
    out = Tensor(np.asarray(out_data))
    t = active_tape()
    if t is not None and any(inp.requires_grad for inp in inputs):
        out.requires_grad = True
        t.record(name, inputs, out, backward_fn)
    return out
