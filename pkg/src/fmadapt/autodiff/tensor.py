"""Dense float64 tensors with reverse-mode autodiff.

Every op returns a new :class:`Tensor` holding its parents and a closure
that maps the output gradient to one gradient per parent.  Tensors are
never mutated after creation.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field

import numpy as np

GROUPS = ("encoder", "adapter", "decoder", "quantizer", "frontend-stats")

_scope: contextvars.ContextVar[tuple[str, ...]] = contextvars.ContextVar("scope", default=())
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


class ShapeError(ValueError):
    """Shape mismatch raised by an op, naming the op and the module scope."""

    def __init__(self, op: str, scope: str, shapes, detail: str = ""):
        self.op = op
        self.scope = scope
        self.shapes = tuple(tuple(s) for s in shapes)
        where = scope or "<root>"
        msg = f"{op} at {where}: incompatible shapes {list(self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@contextlib.contextmanager
def name_scope(name: str):
    token = _scope.set(_scope.get() + (name,))
    try:
        yield
    finally:
        _scope.reset(token)


def current_scope() -> str:
    return ".".join(_scope.get())


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op", "scope", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn = None
        self.op = "leaf"
        self.scope = current_scope()
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op}{label}, shape={self.shape})"

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents, backward_fn, op: str) -> Tensor:
    """Create an op output; ``backward_fn(g)`` returns one gradient (or None) per parent."""
    out = Tensor.__new__(Tensor)
    out.data = data if isinstance(data, np.ndarray) and data.dtype == np.float64 else np.asarray(data, dtype=np.float64)
    out.name = None
    out.op = op
    out.scope = current_scope()
    needs = _grad_enabled.get() and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.parents = ()
        out.backward_fn = None
    if not np.all(np.isfinite(out.data)) and op not in _NONFINITE_OK:
        # NaN/Inf in training math is a bug upstream; keep it visible
        _nonfinite_hook(out)
    return out


# ops whose contract allows +inf (e.g. an impossible CTC alignment)
_NONFINITE_OK = {"ctc_loss", "leaf"}


def _nonfinite_hook(t: Tensor) -> None:
    if np.any(np.isnan(t.data)):
        raise FloatingPointError(f"NaN produced by {t.op} at {t.scope or '<root>'}")


def topo_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every node after its parents."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(root: Tensor, wrt: list[Tensor] | None = None, seed=None) -> dict[int, np.ndarray]:
    """Reverse pass from ``root``; returns ``{id(tensor): gradient}`` for every node reached."""
    if seed is None:
        if root.data.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
        seed = np.ones_like(root.data)
    grads: dict[int, np.ndarray] = {id(root): np.asarray(seed, dtype=np.float64)}
    for node in reversed(topo_order(root)):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if wrt is not None:
        return {id(t): grads.get(id(t), np.zeros_like(t.data)) for t in wrt}
    return grads


@dataclass
class Parameter:
    """A named model weight.  ``value`` is replaced, never edited in place."""

    name: str
    value: np.ndarray
    group: str
    trainable: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown parameter group {self.group!r} for {self.name}")
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.group in ("quantizer", "frontend-stats"):
            self.trainable = False

    @property
    def size(self) -> int:
        return int(self.value.size)

    def tensor(self, requires_grad: bool | None = None) -> Tensor:
        rg = self.trainable if requires_grad is None else requires_grad
        return Tensor(self.value, requires_grad=rg, name=self.name)
