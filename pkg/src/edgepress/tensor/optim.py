"""Adam and Adamax with explicit, threaded optimizer state."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import ParameterError, ShapeError

OPTIMIZERS = ("adam", "adamax")


@dataclass(frozen=True)
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ParameterError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")

    def reset(self, learning_rate=None):
        """Fresh state of the same kind (moments cleared, step 0)."""
        lr = self.learning_rate if learning_rate is None else learning_rate
        return OptimizerState(self.kind, lr, self.beta1, self.beta2, self.epsilon)


def optimizer_step(state, params, grads):
    """Apply one update to every parameter that has a gradient.

    Returns ``(new_params, new_state)``; neither input is modified.
    """
    t = state.step_count + 1
    lr, b1, b2, eps = state.learning_rate, state.beta1, state.beta2, state.epsilon
    new_params = dict(params)
    m_all = dict(state.first_moment)
    v_all = dict(state.second_moment)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        dtype = p.dtype.type
        m = m_all.get(name)
        v = v_all.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = dtype(b1) * m + dtype(1 - b1) * g
        if state.kind == "adam":
            v = dtype(b2) * v + dtype(1 - b2) * g * g
            m_hat = m / dtype(1 - b1**t)
            v_hat = v / dtype(1 - b2**t)
            update = dtype(lr) * m_hat / (np.sqrt(v_hat) + dtype(eps))
        else:
            v = np.maximum(dtype(b2) * v, np.abs(g))
            update = dtype(lr / (1 - b1**t)) * m / (v + dtype(eps))
        new_params[name] = p - update
        m_all[name] = m
        v_all[name] = v
    return new_params, replace(state, step_count=t, first_moment=m_all, second_moment=v_all)
