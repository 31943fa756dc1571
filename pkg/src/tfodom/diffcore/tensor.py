"""Reverse-mode autodiff tensor on top of numpy arrays.

A ``Tensor`` wraps an ndarray. Operations executed while a ``Tape`` is
active record one node per primitive, in creation order; ``backward``
walks the tape strictly in reverse creation order, so no topological
sort is needed (tensors are immutable once created, every parent
predates its children on the tape).

Leaves are tensors with ``requires_grad=True`` and no parents (model
parameters, checked inputs). Their ``.grad`` accumulates across
``backward`` calls until ``zero_grad`` is called. Intermediate
gradients live only for the duration of one backward pass.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = ["Tensor", "Tape", "backward", "as_tensor", "active_tape"]

_state = threading.local()


def _tape_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape():
    """The innermost active Tape, or None outside any recording context."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive applications for one model invocation.

    Usage::

        with Tape() as tape:
            loss = model(...)
        grads = backward(loss)

    The tape holds the non-leaf tensors created inside the context in
    creation order. It is meant to be discarded after backward.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a tape that is not innermost")
        stack.pop()
        return False

    def record(self, tensor: "Tensor") -> None:
        tensor._tape = self
        tensor._index = len(self.nodes)
        self.nodes.append(tensor)


class Tensor:
    """N-dimensional value, optionally participating in gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_tape", "_index")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._tape: Tape | None = None
        self._index = -1

    # -- construction of op results -------------------------------------

    @staticmethod
    def from_op(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn, name: str | None = None) -> "Tensor":
        """Create the result of a primitive, recording it if a tape is active.

        ``backward_fn(out_grad) -> tuple of parent grads (or None)`` in the
        order of ``parents``. Recording only happens when a tape is active
        and at least one parent requires grad; otherwise the result is a
        plain constant (inference mode).
        """
        tape = active_tape()
        track = tape is not None and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, name=name)
        if track:
            out._parents = parents
            out._backward = backward_fn
            tape.record(out)
        return out

    # -- bookkeeping------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
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

    def is_leaf(self) -> bool:
        return self.requires_grad and not self._parents

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad}{tag})"

    # -- operator sugar (implementations live in ops.py) -----------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(as_tensor(other, like=self), self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, axes):
        from . import ops
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap a scalar/array as a constant Tensor (passes Tensors through)."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse-mode sweep from a scalar loss over the active tape.

    Returns a map ``id(leaf) -> gradient array`` and also accumulates into
    each leaf's ``.grad`` (repeated calls without ``zero_grad`` add up).
    Intermediate gradients are kept in a local table and discarded.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None:
        tape = active_tape()
    if tape is None or loss._tape is None:
        raise RuntimeError("backward: loss is not recorded on an active tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    leaf_grads: dict[int, np.ndarray] = {}

    for node in reversed(tape.nodes[: loss._index + 1]):
        g = grads.pop(id(node), None)
        if g is None or node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent.is_leaf():
                if key in leaf_grads:
                    leaf_grads[key] = leaf_grads[key] + pg
                else:
                    leaf_grads[key] = np.array(pg, dtype=parent.data.dtype, copy=True)
                    leaves[key] = parent
            else:
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    for key, leaf in leaves.items():
        g = leaf_grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    return leaf_grads
