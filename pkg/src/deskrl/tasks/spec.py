"""Task definitions: families, parametric ranges, and difficulty mappings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deskrl.errors import ConfigError

FAMILIES = ("reach", "push", "gated_reach", "runner")

RAW_OBS_WIDTH = 16
ACT_DIM = 2


@dataclass
class TaskSpec:
    task_id: int
    name: str
    family: str
    reward_mode: str  # dense | sparse
    episode_length: int
    param_ranges: dict  # name -> (lo, hi), sampled per reset in rand mode
    success_epsilon: float = 0.05
    levels: int = 1
    total_waypoints: int = 1
    knobs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown task family: {self.family}")
        if self.reward_mode not in ("dense", "sparse"):
            raise ConfigError(f"unknown reward mode: {self.reward_mode}")
        if not self.param_ranges:
            raise ConfigError(f"task {self.name}: param_ranges must be nonempty")
        for key, (lo, hi) in self.param_ranges.items():
            if lo > hi:
                raise ConfigError(f"task {self.name}: range {key} has lo > hi")
        if self.levels < 1:
            raise ConfigError(f"task {self.name}: needs at least one difficulty level")


def difficulty_to_params(spec: TaskSpec, level: int) -> dict:
    """Concrete terrain/task parameters for one difficulty level.

    Runner hardness is monotone: the obstacle gap widens and the alignment
    tolerance shrinks as the level rises; level 0 has no obstacles at all.
    """
    if not (0 <= level < spec.levels):
        raise ConfigError(f"level {level} outside [0, {spec.levels}) for task {spec.name}")
    if spec.family != "runner":
        return {"level": level}
    frac = level / max(spec.levels - 1, 1)
    return {
        "level": level,
        "gap_width": 0.0 if level == 0 else 0.15 + 0.35 * frac,
        "tolerance": 0.5 - 0.25 * frac,
        "drift": spec.knobs.get("drift", 0.0) * frac,
    }
