"""Adaptive task weighting from scalar loss history; one backward per update.

The weighted loss sum_i w_i * l_i with w = softmax(xi) is what gets
differentiated, so the per-update cost stays O(1) in the number of tasks.
After the model step, the observed per-task log-loss decrease drives one
gradient step on the logits xi (through the softmax Jacobian), pulling weight
away from tasks that improved and toward tasks that stagnated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FamoState:
    num_tasks: int
    w_lr: float = 1e-3
    gamma: float = 1e-3  # logit decay coefficient
    epsilon: float = 1e-2  # losses are clipped below by this before the log
    norm_w_grad: bool = True
    xi: np.ndarray = field(init=False)
    prev_losses: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        self.xi = np.zeros(self.num_tasks, dtype=np.float64)


def famo_weights(state: FamoState) -> np.ndarray:
    """Current task weights w = softmax(xi); uniform at initialization."""
    z = state.xi - state.xi.max()
    e = np.exp(z)
    return e / e.sum()


def famo_update(state: FamoState, losses_prev: np.ndarray, losses_next: np.ndarray) -> None:
    """One logit step from the log-loss improvement between two observations."""
    prev = np.maximum(np.asarray(losses_prev, dtype=np.float64), state.epsilon)
    nxt = np.maximum(np.asarray(losses_next, dtype=np.float64), state.epsilon)
    delta = np.log(prev) - np.log(nxt)  # positive where the task improved
    w = famo_weights(state)
    # softmax Jacobian-transpose product: d_i = w_i (delta_i - <w, delta>)
    grad = w * (delta - float(w @ delta))
    if state.norm_w_grad:
        norm = float(np.linalg.norm(grad))
        if norm > 0.0:
            grad = grad / norm
    state.xi = state.xi - state.w_lr * (grad + state.gamma * state.xi)
