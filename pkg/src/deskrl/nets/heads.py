"""Output heads: shared (SH) or one per task (MH), plus the Gaussian actor head."""

from __future__ import annotations

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tensor
from deskrl.autodiff.nn import Linear, Params
from deskrl.errors import ConfigError


class SharedHead:
    def __init__(self, params: Params, name: str, in_dim: int, out_dim: int, rng,
                 gain: float = 0.01):
        self.lin = Linear(params, name, in_dim, out_dim, rng, gain=gain)

    def __call__(self, features: Tensor, task_ids: np.ndarray) -> Tensor:
        return self.lin(features)


class MultiHead:
    """K output heads; only head[task_id] contributes (and receives gradient)."""

    def __init__(self, params: Params, name: str, in_dim: int, out_dim: int,
                 num_tasks: int, rng, gain: float = 0.01):
        self.heads = [
            Linear(params, f"{name}.task{k}", in_dim, out_dim, rng, gain=gain)
            for k in range(num_tasks)
        ]
        self.num_tasks = num_tasks

    def __call__(self, features: Tensor, task_ids: np.ndarray) -> Tensor:
        task_ids = np.asarray(task_ids)
        if task_ids.max(initial=0) >= self.num_tasks or task_ids.min(initial=0) < 0:
            raise ConfigError(f"task id outside [0, {self.num_tasks})")
        out = None
        for k in np.unique(task_ids):
            mask = (task_ids == k).astype(np.float64)[:, None]
            piece = engine.mul(self.heads[k](features), Tensor(mask))
            out = piece if out is None else engine.add(out, piece)
        return out
