"""Conflict-averse update direction: best worst-case task alignment in a ball.

The primal problem is

    max_d min_i <g_i, d>   s.t.  ||d - g0|| <= c ||g0||

solved through its dual over simplex weights w:

    min_w  F(w) = <g_w, g0> + c ||g0|| ||g_w||,   g_w = sum_i w_i g_i

after which d = g0 + c ||g0|| g_w / ||g_w||.
"""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation
from deskrl.schemes.conflict import TaskGradientSet

_ITERATIONS = 100


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorting method)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def cagrad_dual_objective(w: np.ndarray, rows: np.ndarray, g0: np.ndarray, c: float) -> float:
    gw = rows.T @ w
    return float(gw @ g0 + c * np.linalg.norm(g0) * np.linalg.norm(gw))


def cagrad_dual_solve(grads: TaskGradientSet, c: float):
    """Minimize F over the simplex; returns (weights, dual objective value).

    Deterministic bounded budget: projected gradient descent with Armijo
    backtracking, 100 iterations per start, warm-started from uniform plus
    each vertex (a fixed raw step stalls or diverges on badly-scaled
    instances).
    """
    rows = grads.rows
    g0 = grads.g0
    g0_norm = float(np.linalg.norm(g0))
    starts = [np.full(grads.k, 1.0 / grads.k)]
    starts.extend(np.eye(grads.k))
    best_w, best_f = None, np.inf
    for w in starts:
        f = cagrad_dual_objective(w, rows, g0, c)
        step = 1.0
        for _ in range(_ITERATIONS):
            gw = rows.T @ w
            gw_norm = float(np.linalg.norm(gw))
            if gw_norm < 1e-12:
                grad = rows @ g0
            else:
                grad = rows @ (g0 + c * g0_norm * gw / gw_norm)
            gnorm = float(np.linalg.norm(grad))
            if gnorm < 1e-15:
                break
            # backtracking from a step normalized to unit motion in w-space
            trial_step = max(step * 2.0, 1e-3 / gnorm)
            accepted = False
            for _bt in range(30):
                w_new = project_simplex(w - trial_step * grad)
                f_new = cagrad_dual_objective(w_new, rows, g0, c)
                if f_new < f - 1e-14:
                    accepted = True
                    break
                trial_step *= 0.5
            if not accepted:
                break
            w, f, step = w_new, f_new, trial_step
        if f < best_f:
            best_f, best_w = f, w
    return best_w, best_f


def cagrad(grads: TaskGradientSet, c: float) -> np.ndarray:
    """Conflict-averse update direction d = g0 + c ||g0|| g_w / ||g_w||."""
    if not (0.0 <= c < 1.0):
        raise ContractViolation(f"cagrad radius c must be in [0, 1), got {c}")
    if grads.k < 2:
        raise ContractViolation("cagrad needs at least 2 task gradients")
    g0 = grads.g0
    g0_norm = float(np.linalg.norm(g0))
    if c == 0.0 or g0_norm == 0.0:
        return g0.copy()
    best_w, _ = cagrad_dual_solve(grads, c)
    gw = grads.rows.T @ best_w
    gw_norm = float(np.linalg.norm(gw))
    if gw_norm < 1e-12:
        return g0.copy()
    return g0 + c * g0_norm * gw / gw_norm
