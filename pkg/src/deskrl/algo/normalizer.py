"""Per-task running mean/variance normalization for observations and values."""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation

_MIN_STD = 1e-6


class PerTaskNormalizer:
    """Welford-style running statistics kept separately per task id.

    ``target`` is either "observation" (normalizes the first ``raw_width``
    columns, leaving the one-hot block untouched) or "value" (scalar targets,
    with an exact inverse for de-normalization).
    """

    def __init__(self, num_tasks: int, dim: int, target: str = "observation"):
        if target not in ("observation", "value"):
            raise ContractViolation(f"unknown normalizer target: {target}")
        self.target = target
        self.num_tasks = num_tasks
        self.dim = dim
        self.count = np.zeros(num_tasks, dtype=np.float64)
        self.mean = np.zeros((num_tasks, dim), dtype=np.float64)
        self.m2 = np.zeros((num_tasks, dim), dtype=np.float64)

    def _check_ids(self, task_ids: np.ndarray) -> None:
        if task_ids.size and (task_ids.min() < 0 or task_ids.max() >= self.num_tasks):
            raise ContractViolation(f"task id out of range [0, {self.num_tasks})")

    def update(self, batch: np.ndarray, task_ids: np.ndarray) -> None:
        """Merge one batch into the running stats (Chan's parallel update).

        Only the first ``dim`` columns are tracked; a trailing one-hot block,
        if present, is ignored here and passed through by ``normalize``.
        """
        batch = np.asarray(batch, dtype=np.float64).reshape(len(batch), -1)[:, : self.dim]
        task_ids = np.asarray(task_ids)
        self._check_ids(task_ids)
        for k in np.unique(task_ids):
            rows = batch[task_ids == k]
            n_b = len(rows)
            mean_b = rows.mean(axis=0)
            m2_b = ((rows - mean_b) ** 2).sum(axis=0)
            n_a = self.count[k]
            delta = mean_b - self.mean[k]
            total = n_a + n_b
            self.mean[k] += delta * (n_b / total)
            self.m2[k] += m2_b + delta * delta * (n_a * n_b / total)
            self.count[k] = total

    def std(self) -> np.ndarray:
        # Tasks with fewer than 2 samples have no usable variance yet; treat
        # them as unit scale instead of collapsing to the epsilon floor.
        counts = self.count[:, None]
        var = np.where(counts > 1, self.m2 / np.maximum(counts, 1), 1.0)
        return np.maximum(np.sqrt(var), _MIN_STD)

    def normalize(self, batch: np.ndarray, task_ids: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        task_ids = np.asarray(task_ids)
        self._check_ids(task_ids)
        flat = batch.reshape(len(batch), -1)
        core = flat[:, : self.dim]
        out = flat.copy()
        out[:, : self.dim] = (core - self.mean[task_ids]) / self.std()[task_ids]
        return out.reshape(batch.shape)

    def denormalize(self, batch: np.ndarray, task_ids: np.ndarray) -> np.ndarray:
        """Exact inverse of ``normalize`` (value targets only)."""
        if self.target != "value":
            raise ContractViolation("denormalize is defined for value normalizers")
        batch = np.asarray(batch, dtype=np.float64)
        task_ids = np.asarray(task_ids)
        self._check_ids(task_ids)
        flat = batch.reshape(len(batch), self.dim)
        out = flat * self.std()[task_ids] + self.mean[task_ids]
        return out.reshape(batch.shape)
