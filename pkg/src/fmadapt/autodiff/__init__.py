"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from . import ops
from .checkpoint import CheckpointError
from .graph import ComputeGraph, backward, forward, grad_check, numeric_gradient, relative_error
from .tensor import GROUPS, Parameter, ShapeError, Tensor, as_tensor, grad, make, name_scope, no_grad

__all__ = [
    "GROUPS",
    "CheckpointError",
    "ComputeGraph",
    "Parameter",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "forward",
    "grad",
    "grad_check",
    "make",
    "name_scope",
    "no_grad",
    "numeric_gradient",
    "ops",
    "relative_error",
]
