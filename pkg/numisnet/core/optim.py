"""
Adam optimizer state and update
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..errors import ConfigError, ContractViolation


@dataclass
class AdamState:
    """Per-parameter moment estimates plus hyperparameters"""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"Adam learning rate must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"Adam {name} must lie in [0, 1), got {value}")
        if self.epsilon <= 0:
            raise ConfigError(f"Adam epsilon must be positive, got {self.epsilon}")
        if self.t < 0:
            raise ConfigError(f"Adam step counter must be >= 0, got {self.t}")


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Apply one bias-corrected Adam update in place and return params and state"""
    missing = set(params) - set(grads)
    if missing:
        raise ContractViolation(f"no gradient for {', '.join(sorted(missing))}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t

    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ContractViolation(
                f"gradient for {name} has shape {g.shape}, parameter has {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        param -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

    return params, state
