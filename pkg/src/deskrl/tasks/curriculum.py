"""Per-env difficulty progression: advance one level on >= threshold progress."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deskrl.errors import ContractViolation

DEFAULT_THRESHOLD = 0.8


@dataclass
class CurriculumState:
    num_envs: int
    max_levels: np.ndarray  # L per env (task dependent)
    threshold: float = DEFAULT_THRESHOLD
    levels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.max_levels = np.asarray(self.max_levels, dtype=np.int64)
        if self.max_levels.shape != (self.num_envs,):
            raise ContractViolation("one max level per env required")
        self.levels = np.zeros(self.num_envs, dtype=np.int64)  # always begin easiest


def curriculum_update(state: CurriculumState, env_idx: np.ndarray, progress: np.ndarray) -> None:
    """Envs finishing with progress >= threshold move up exactly one level.

    Saturates at L-1; never skips and never decreases.
    """
    env_idx = np.asarray(env_idx, dtype=np.int64)
    progress = np.asarray(progress, dtype=np.float64)
    if np.any(progress < 0) or np.any(progress > 1 + 1e-12):
        raise ContractViolation("progress values must lie in [0, 1]")
    advance = progress >= state.threshold
    idx = env_idx[advance]
    state.levels[idx] = np.minimum(state.levels[idx] + 1, state.max_levels[idx] - 1)
