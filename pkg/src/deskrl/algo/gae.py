"""Generalized advantage estimation over (horizon, envs) arrays."""

from __future__ import annotations

import numpy as np

from deskrl.errors import TrainingFault


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                bootstrap_value: np.ndarray, gamma: float, lam: float):
    """Backward recursion of the exponentially-weighted advantage estimator.

    ``rewards``, ``values``, ``dones`` have shape (T, E); ``bootstrap_value``
    is the value estimate for the state after step T-1, shape (E,). Returns
    ``(advantages, return_targets)``, both (T, E), targets = advantages + values.
    """
    for name, arr in (("rewards", rewards), ("values", values), ("bootstrap", bootstrap_value)):
        if not np.all(np.isfinite(arr)):
            raise TrainingFault(f"non-finite {name} in advantage computation")
    T, E = rewards.shape
    adv = np.zeros((T, E), dtype=np.float64)
    last = np.zeros(E, dtype=np.float64)
    next_value = bootstrap_value.astype(np.float64)
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        last = delta + gamma * lam * not_done * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values
