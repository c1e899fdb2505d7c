"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import ops
from .fused import gru_step, lstm_gates, lstm_step, tree_gates, tree_step
from .gradcheck import grad_check, numeric_gradient, relative_error
from .ops import ShapeError
from .params import ZEROS, Init, ParamSet
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    current_precision,
    default_dtype,
    no_tape,
    precision,
    set_precision,
)

__all__ = [
    "Init", "ParamSet", "ShapeError", "Tape", "Tensor", "ZEROS", "as_tensor", "backward",
    "current_precision", "default_dtype", "grad_check", "gru_step", "lstm_gates", "lstm_step", "no_tape",
    "numeric_gradient", "ops", "precision", "relative_error", "set_precision", "tree_gates", "tree_step",
]
