from .ops import (
    ElasticNetCoeffs,
    attention_pool,
    bce_loss,
    conv2d_forward,
    elastic_net_penalty,
    lstm_forward,
    matmul,
    max_pool,
    sigmoid,
)
from .optim import OptimizerState, optimizer_step

__all__ = [
    "ElasticNetCoeffs",
    "OptimizerState",
    "attention_pool",
    "bce_loss",
    "conv2d_forward",
    "elastic_net_penalty",
    "lstm_forward",
    "matmul",
    "max_pool",
    "optimizer_step",
    "sigmoid",
]
