"""Adam over flat parameter vectors, with optional global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from deskrl.errors import TrainingFault


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    """Rescale to ``max_norm`` if the L2 norm exceeds it."""
    norm = float(np.linalg.norm(grad))
    if norm > max_norm and norm > 0.0:
        return grad * (max_norm / norm)
    return grad


class Adam:
    def __init__(self, size: int, lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.m = np.zeros(size, dtype=np.float64)
        self.v = np.zeros(size, dtype=np.float64)
        self.t = 0
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps

    def step(self, params: np.ndarray, grad: np.ndarray, max_grad_norm: float | None = None) -> np.ndarray:
        """One Adam update; clipping (if any) is applied before the moment update."""
        if params.shape != grad.shape:
            raise TrainingFault(
                f"param/grad shape mismatch {params.shape} vs {grad.shape}", step=self.t
            )
        if not np.all(np.isfinite(grad)):
            raise TrainingFault("non-finite gradient entries", step=self.t)
        if max_grad_norm is not None:
            grad = clip_grad_norm(grad, max_grad_norm)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)
