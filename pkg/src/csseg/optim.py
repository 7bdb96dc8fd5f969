"""SGD with Nesterov momentum and coupled weight decay.

Update rule, per parameter (g includes the decay term wd * p):

    v <- mu * v + g
    p <- p - lr * (g + mu * v)

Velocity starts at zero. `lr` is a plain attribute so a schedule can
rescale it between epochs. Weight decay keeps feature magnitudes
bounded, which matters here because the network has no normalization
layers and the squared-feature distillation term is quartic in them.
"""

from __future__ import annotations

import numpy as np

from .tensor import GradTape, Tensor

__all__ = ["SGD", "clip_global_norm"]


class SGD:
    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self._velocity = [np.zeros(p.shape) for p in self.params]

    def step(self, tape: GradTape) -> None:
        self.apply([tape.grad(p) for p in self.params])

    def apply(self, grads: list[np.ndarray]) -> None:
        """Update from explicit per-parameter gradients (e.g. batch means)."""
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        mu = self.momentum
        wd = self.weight_decay
        for p, v, g in zip(self.params, self._velocity, grads):
            if wd:
                g = g + wd * p.data
            v *= mu
            v += g
            p.data -= self.lr * (g + mu * v)


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Scale the whole gradient list so its joint L2 norm is <= max_norm."""
    if max_norm <= 0:
        return grads
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return [g * scale for g in grads]
