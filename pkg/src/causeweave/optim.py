"""AdamW with decoupled weight decay over dicts of named numpy arrays.

All state is float64 and updates are fully deterministic: parameters are
visited in sorted name order and no in-place aliasing tricks are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamW:
    """Decoupled-weight-decay Adam.

    Update per parameter tensor::

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*g^2
        p = p*(1 - lr*wd) - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    _m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _t: int = 0

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError(f"invalid learning rate {self.lr}")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"invalid betas {self.betas}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("eps must be positive and weight_decay non-negative")

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update params in place from grads (missing names are skipped)."""
        self._t += 1
        b1, b2 = self.betas
        correction1 = 1.0 - b1 ** self._t
        correction2 = 1.0 - b2 ** self._t
        for name in sorted(params):
            if name not in grads:
                continue
            p, g = params[name], grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m, v = self._m[name], self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
