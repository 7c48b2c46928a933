"""Per-task gradient matrices and pairwise conflict diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deskrl.errors import ContractViolation


@dataclass
class TaskGradientSet:
    """K per-task gradient rows over one flat parameter layout.

    Rows correspond to tasks actually present in the batch; absent tasks are
    excluded rather than zero-filled. ``g0`` is the mean row.
    """

    rows: np.ndarray  # (K, P)
    task_ids: np.ndarray  # (K,)
    g0: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ContractViolation(f"gradient matrix must be 2-D, got {self.rows.shape}")
        self.task_ids = np.asarray(self.task_ids, dtype=np.int64)
        if len(self.task_ids) != len(self.rows):
            raise ContractViolation("one task id per gradient row required")
        self.g0 = self.rows.mean(axis=0)

    @property
    def k(self) -> int:
        return len(self.rows)


def cosine_stats(grads: TaskGradientSet):
    """(mean, min, max) cosine similarity over all unordered task pairs.

    Zero rows are excluded; the number of excluded rows is reported. With
    fewer than two nonzero rows the sample is absent (stats are None).
    """
    if grads.k < 2:
        raise ContractViolation("cosine stats need at least 2 task gradients")
    norms = np.linalg.norm(grads.rows, axis=1)
    keep = norms > 0.0
    excluded = int(np.sum(~keep))
    rows = grads.rows[keep]
    norms = norms[keep]
    if len(rows) < 2:
        return {"mean": None, "min": None, "max": None, "excluded": excluded}
    unit = rows / norms[:, None]
    cos = unit @ unit.T
    iu = np.triu_indices(len(rows), k=1)
    pair = cos[iu]
    return {
        "mean": float(pair.mean()),
        "min": float(pair.min()),
        "max": float(pair.max()),
        "excluded": excluded,
    }
