"""The two desk-scale suites: dense manipulation (MT10) and sparse runners (PK5)."""

from __future__ import annotations

import numpy as np

from deskrl.errors import ConfigError
from deskrl.tasks.spec import TaskSpec

MANIP_EPISODE = 150
RUNNER_EPISODE = 800
RUNNER_LEVELS = 10
RUNNER_WAYPOINTS = 10

SUITES = ("DeskMT10", "DeskMT10-rand", "DeskPK5-easy", "DeskPK5-hard", "DeskPK5-hard-cl")

_REACH_RANGES = {
    "hand_x": (-0.5, 0.5), "hand_y": (-0.5, 0.5),
    "goal_x": (-0.8, 0.8), "goal_y": (-0.8, 0.8),
}
_PUSH_RANGES = {
    "hand_x": (-0.4, 0.4), "hand_y": (-0.4, 0.4),
    "obj_x": (-0.4, 0.4), "obj_y": (-0.4, 0.4),
    "goal_x": (-0.7, 0.7), "goal_y": (-0.7, 0.7),
}
_GATED_RANGES = {
    "hand_x": (-0.6, 0.6), "hand_y": (-0.7, -0.2),
    "goal_x": (-0.6, 0.6), "goal_y": (0.2, 0.7),
    "slot_x": (-0.5, 0.5),
}
_RUNNER_RANGES = {"start_x": (0.0, 0.1), "start_y": (-0.1, 0.1)}


def _manip(task_id, name, family, ranges, **knobs):
    return TaskSpec(
        task_id=task_id, name=name, family=family, reward_mode="dense",
        episode_length=MANIP_EPISODE, param_ranges=dict(ranges), knobs=knobs,
    )


def _runner(task_id, name, pattern, **knobs):
    return TaskSpec(
        task_id=task_id, name=name, family="runner", reward_mode="sparse",
        episode_length=RUNNER_EPISODE, param_ranges=dict(_RUNNER_RANGES),
        levels=RUNNER_LEVELS, total_waypoints=RUNNER_WAYPOINTS,
        knobs={"pattern": np.asarray(pattern, dtype=np.float64), **knobs},
    )


def desk_mt10_specs() -> list[TaskSpec]:
    """10 dense-reward 2-D manipulation analogs with heterogeneous rewards."""
    return [
        _manip(0, "reach", "reach", _REACH_RANGES),
        _manip(1, "reach_drag", "reach", _REACH_RANGES, drag=0.5),
        _manip(2, "reach_inverted", "reach", _REACH_RANGES, action_gain=-1.0),
        _manip(3, "reach_scaled", "reach", _REACH_RANGES, reward_scale=3.0),
        _manip(4, "push", "push", _PUSH_RANGES),
        _manip(5, "push_heavy", "push", _PUSH_RANGES, contact_radius=0.15),
        _manip(6, "gated_reach", "gated_reach", _GATED_RANGES, slot_width=0.5),
        _manip(7, "gated_narrow", "gated_reach", _GATED_RANGES, slot_width=0.35),
        _manip(8, "reach_region", "reach", _REACH_RANGES, region_bonus=1.0, region_radius=0.15),
        _manip(9, "push_scaled", "push", _PUSH_RANGES, reward_scale=0.3),
    ]


def desk_pk5_specs() -> list[TaskSpec]:
    """5 sparse-reward runner tasks with 10 difficulty levels each."""
    alternating = [0.6 if i % 2 == 0 else -0.6 for i in range(RUNNER_WAYPOINTS)]
    slalom = [0.9 if i % 2 == 0 else -0.9 for i in range(RUNNER_WAYPOINTS)]
    poles = np.random.default_rng(20240617).uniform(-0.9, 0.9, RUNNER_WAYPOINTS)
    return [
        _runner(0, "runner_gaps", [0.8] * RUNNER_WAYPOINTS),
        _runner(1, "runner_steps", alternating),
        _runner(2, "runner_slalom", slalom),
        _runner(3, "runner_poles", poles),
        _runner(4, "runner_balance", [0.0] * RUNNER_WAYPOINTS, drift=0.08),
    ]


def build_suite(name: str):
    """Suite name -> (task specs, reset mode, level policy)."""
    if name == "DeskMT10":
        return desk_mt10_specs(), "fixed", "zero"
    if name == "DeskMT10-rand":
        return desk_mt10_specs(), "rand", "zero"
    if name == "DeskPK5-easy":
        return desk_pk5_specs(), "rand", "zero"
    if name == "DeskPK5-hard":
        return desk_pk5_specs(), "rand", "uniform"
    if name == "DeskPK5-hard-cl":
        return desk_pk5_specs(), "rand", "curriculum"
    raise ConfigError(f"unknown suite: {name} (expected one of {SUITES})")


def even_blocks(specs: list[TaskSpec], num_envs: int) -> list[tuple[int, int]]:
    """Split num_envs across tasks as evenly as possible (first blocks get the rest)."""
    k = len(specs)
    if num_envs < k:
        raise ConfigError(f"need at least {k} envs for {k} tasks, got {num_envs}")
    base, extra = divmod(num_envs, k)
    return [(s.task_id, base + (1 if i < extra else 0)) for i, s in enumerate(specs)]
