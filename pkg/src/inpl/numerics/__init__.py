"""Dense arrays, reverse-mode gradients, optimizers and EMA for a small MLP."""

from .autograd import Tensor, concat_rows
from .mlp import MlpParams, init_mlp, mlp_forward, mlp_forward_tensor
from .ops import (
    NonFiniteError,
    OptimizerState,
    ema_update,
    grad,
    init_optimizer,
    logsumexp,
    optimizer_step,
    value_and_grad,
)

__all__ = [
    "MlpParams",
    "NonFiniteError",
    "OptimizerState",
    "Tensor",
    "concat_rows",
    "ema_update",
    "grad",
    "init_mlp",
    "init_optimizer",
    "logsumexp",
    "mlp_forward",
    "mlp_forward_tensor",
    "optimizer_step",
    "value_and_grad",
]
