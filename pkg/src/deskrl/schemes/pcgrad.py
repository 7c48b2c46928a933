"""Gradient surgery: project each task gradient off the ones it conflicts with."""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation
from deskrl.schemes.conflict import TaskGradientSet


def pcgrad(grads: TaskGradientSet, rng: np.random.Generator) -> np.ndarray:
    """Combine task gradients after iterative conflict removal.

    Each row g_i is projected, over a random permutation of the other rows
    g_j, off any g_j it conflicts with (negative dot product):

        g_i' <- g_i' - (<g_i', g_j> / ||g_j||^2) g_j    if <g_i', g_j> < 0

    The output is the mean of the projected rows. A zero-norm g_j in a
    conflicting pair is skipped (nothing to project onto).
    """
    if grads.k < 2:
        raise ContractViolation("pcgrad needs at least 2 task gradients")
    rows = grads.rows
    k = grads.k
    sq_norms = np.einsum("ij,ij->i", rows, rows)
    projected = rows.copy()
    for i in range(k):
        order = rng.permutation(k)
        gi = projected[i]
        for j in order:
            if j == i:
                continue
            dot = float(gi @ rows[j])
            if dot < 0.0 and sq_norms[j] > 0.0:
                gi = gi - (dot / sq_norms[j]) * rows[j]
        projected[i] = gi
    return projected.mean(axis=0)
