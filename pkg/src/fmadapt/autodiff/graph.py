"""Compute graphs over named leaves, gradient maps and finite-difference checks."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping

import numpy as np

from .tensor import Parameter, Tensor, grad, no_grad, topo_order

log = logging.getLogger(__name__)


class ComputeGraph:
    """A define-by-run graph: ``fn`` maps named leaf tensors to a root tensor.

    ``leaves`` maps names to :class:`Parameter` objects or plain arrays
    (arrays are treated as trainable).  ``forward`` binds fresh leaf tensors
    and records the resulting node list in topological order.
    """

    def __init__(self, fn: Callable[[dict[str, Tensor]], Tensor], leaves: Mapping[str, Parameter | np.ndarray]):
        self.fn = fn
        self.values: dict[str, np.ndarray] = {}
        self.trainable: dict[str, bool] = {}
        for name, leaf in leaves.items():
            if isinstance(leaf, Parameter):
                self.values[name] = leaf.value
                self.trainable[name] = leaf.trainable
            else:
                self.values[name] = np.asarray(leaf, dtype=np.float64)
                self.trainable[name] = True
        self.bound: dict[str, Tensor] = {}
        self.root: Tensor | None = None
        self.nodes: list[Tensor] = []

    def bind(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise ValueError(f"leaf {name}: expected shape {self.values[name].shape}, got {value.shape}")
        self.values[name] = value

    def evaluate(self, track: bool = True) -> Tensor:
        self.bound = {
            n: Tensor(v, requires_grad=track and self.trainable[n], name=n) for n, v in self.values.items()
        }
        if track:
            root = self.fn(self.bound)
        else:
            with no_grad():
                root = self.fn(self.bound)
        return root

    def forward(self) -> Tensor:
        self.root = self.evaluate(track=True)
        self.nodes = topo_order(self.root)
        return self.root


def forward(graph: ComputeGraph) -> Tensor:
    return graph.forward()


def backward(graph: ComputeGraph, root: Tensor | None = None) -> dict[str, np.ndarray]:
    """Gradients of a scalar root for every trainable leaf (zeros when unreached)."""
    root = graph.root if root is None else root
    if root is None:
        raise RuntimeError("forward has not been run")
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    leaves = [t for n, t in graph.bound.items() if graph.trainable[n]]
    g = grad(root, wrt=leaves)
    return {t.name: g[id(t)] for t in leaves}


def numeric_gradient(graph: ComputeGraph, leaf: str, step: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of the root w.r.t. ``leaf`` (every element, or only flat ``indices``)."""
    base = graph.values[leaf].copy()
    out = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        for sign in (1.0, -1.0):
            pert = flat.copy()
            pert[i] += sign * step
            graph.values[leaf] = pert.reshape(base.shape)
            f = float(graph.evaluate(track=False).data)
            out.reshape(-1)[i] += sign * f
    graph.values[leaf] = base
    return out / (2.0 * step)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


def grad_check(graph: ComputeGraph, leaf: str, step: float = 1e-5, tolerance: float | None = None,
               indices=None) -> float:
    """Max relative error between backprop and central differences for one leaf.

    ``indices`` restricts the comparison to those flat positions of the leaf.

    Never raises on a mismatch; when ``tolerance`` is given and exceeded the
    error is logged.
    """
    root = graph.forward()
    analytic = backward(graph, root)[leaf]
    numeric = numeric_gradient(graph, leaf, step, indices)
    if indices is not None:
        analytic = np.asarray(analytic).reshape(-1)[list(indices)]
        numeric = numeric.reshape(-1)[list(indices)]
    err = relative_error(analytic, numeric)
    if tolerance is not None and err >= tolerance:
        log.warning("grad_check %s: max relative error %.3e >= %.1e", leaf, err, tolerance)
    return err
