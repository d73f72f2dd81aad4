"""Small reverse-mode autodiff over numpy arrays."""

from . import ops
from .layers import Dense, GruCell, gru_step, xavier_uniform
from .ops import cross_entropy, matmul, reparameterize, softmax
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .tensor import (
    DimensionError,
    DomainError,
    NumericError,
    Tape,
    Tensor,
    no_grad,
    precision,
)

__all__ = [
    "Adam",
    "AdamState",
    "Dense",
    "DimensionError",
    "DomainError",
    "GruCell",
    "NumericError",
    "Tape",
    "Tensor",
    "adam_step",
    "clip_grad_norm",
    "cross_entropy",
    "gru_step",
    "matmul",
    "no_grad",
    "ops",
    "precision",
    "reparameterize",
    "softmax",
    "xavier_uniform",
]
