"""Critic-free advantages from group-standardized Monte Carlo returns."""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation


def grpo_advantage(returns: np.ndarray, task_ids: np.ndarray, mode: str = "per_task") -> np.ndarray:
    """Standardize episodic MC returns within task groups.

    One value per completed episode; every timestep of that episode receives
    the episode's advantage downstream. A group of size 1 gets advantage 0
    (its std is undefined), and zero-variance groups collapse to 0 through
    the epsilon guard.
    """
    returns = np.asarray(returns, dtype=np.float64)
    task_ids = np.asarray(task_ids)
    if returns.shape != task_ids.shape:
        raise ContractViolation("one task id per episodic return required")
    if mode not in ("per_task", "global"):
        raise ContractViolation(f"unknown standardization mode: {mode}")
    adv = np.zeros_like(returns)
    if returns.size == 0:
        return adv
    if mode == "global":
        if returns.size == 1:
            return adv
        return (returns - returns.mean()) / (returns.std() + 1e-8)
    for k in np.unique(task_ids):
        mask = task_ids == k
        group = returns[mask]
        if len(group) < 2:
            continue  # degenerate group: zero advantage
        adv[mask] = (group - group.mean()) / (group.std() + 1e-8)
    return adv


def episode_segments(rewards: np.ndarray, dones: np.ndarray, gamma: float):
    """Split a (T, E) rollout into completed episode segments.

    Returns a list of (env, start, end_inclusive, mc_return) for segments that
    terminate inside the rollout; trailing incomplete segments are skipped.
    The MC return is discounted from the segment start.
    """
    T, E = rewards.shape
    # reverse scan of within-segment discounted returns
    ret = np.zeros((T, E), dtype=np.float64)
    running = np.zeros(E, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        running = rewards[t] + gamma * running * (1.0 - dones[t])
        ret[t] = running
    segments = []
    for e in range(E):
        start = 0
        for t in range(T):
            if dones[t, e]:
                segments.append((e, start, t, float(ret[start, e])))
                start = t + 1
    return segments
