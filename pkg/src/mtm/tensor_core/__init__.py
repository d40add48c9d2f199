"""Minimal reverse-mode autodiff over numpy arrays."""
from . import ops
from .gradcheck import GradCheckResult, NonDeterministicError, grad_check, relative_error
from .ops import (COSINE_EPS, NonFiniteError, ShapeError, add, concat, cosine, div, dropout, embedding,
                  getitem, lstm, matmul, mean, mul, neg, pairwise_cosine, reshape, sigmoid, softmax,
                  softmax_cross_entropy, sub, tanh, where, window_mean)
from .ops import sum as reduce_sum
from .tensor import Tape, Tensor, active_tape, as_tensor, default_dtype, get_default_dtype

__all__ = [
    "COSINE_EPS", "GradCheckResult", "NonDeterministicError", "NonFiniteError", "ShapeError", "Tape", "Tensor",
    "active_tape", "add", "as_tensor", "concat", "cosine", "default_dtype", "div", "dropout",
    "embedding", "get_default_dtype", "getitem", "grad_check", "lstm", "matmul", "mean", "mul",
    "neg", "ops", "pairwise_cosine", "reduce_sum", "relative_error", "reshape", "sigmoid",
    "softmax", "softmax_cross_entropy", "sub", "tanh", "where", "window_mean",
]
