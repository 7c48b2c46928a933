"""Vectorized dynamics, rewards, and observations for the desk task families.

Everything operates on whole env blocks: ``state`` is (n, 4) float64
(manipulation: hand xy + object xy; runner: x, y, last waypoint count,
unused), ``params`` is (n, 4) (manipulation: goal xy, slot x, spare;
runner: goal x, spare). Per-env difficulty enters through ``level_params``
arrays precomputed from the difficulty map.
"""

from __future__ import annotations

import numpy as np

from deskrl.tasks.spec import RAW_OBS_WIDTH, TaskSpec, difficulty_to_params

STATE_DIM = 4
PARAM_DIM = 4

_HAND = slice(0, 2)
_OBJ = slice(2, 4)
_GOAL = slice(0, 2)
_SLOT_X = 2

_WORLD_LIMIT = 1.2
_RUNNER_SPEED = 0.05
_RUNNER_SIDE_SPEED = 0.1
_RUNNER_Y_LIMIT = 1.5


def _midpoint(lo, hi):
    return 0.5 * (lo + hi)


def reset_block(spec: TaskSpec, rngs, mode: str):
    """Initial (state, params) for a block; one rng stream per env.

    ``rand`` mode draws every ranged parameter uniformly from the env's own
    stream; ``fixed`` mode uses range midpoints and consumes no randomness.
    """
    n = len(rngs)
    state = np.zeros((n, STATE_DIM), dtype=np.float64)
    params = np.zeros((n, PARAM_DIM), dtype=np.float64)
    ranges = spec.param_ranges

    def draw(key, i):
        lo, hi = ranges[key]
        if mode == "fixed":
            return _midpoint(lo, hi)
        return rngs[i].uniform(lo, hi)

    if spec.family == "runner":
        for i in range(n):
            state[i, 0] = draw("start_x", i)
            state[i, 1] = draw("start_y", i)
        state[:, 2] = np.floor(np.maximum(state[:, 0], 0.0))
        params[:, 0] = float(spec.total_waypoints)  # goal line
        return state, params

    for i in range(n):
        state[i, 0] = draw("hand_x", i)
        state[i, 1] = draw("hand_y", i)
        params[i, 0] = draw("goal_x", i)
        params[i, 1] = draw("goal_y", i)
        if spec.family == "push":
            state[i, 2] = draw("obj_x", i)
            state[i, 3] = draw("obj_y", i)
        if spec.family == "gated_reach":
            params[i, _SLOT_X] = draw("slot_x", i)
    if spec.family != "push":
        state[:, _OBJ] = state[:, _HAND]
    return state, params


def _target_object(spec: TaskSpec, state):
    """The thing whose distance to the goal defines success."""
    if spec.family == "push":
        return state[:, _OBJ]
    return state[:, _HAND]


def goal_distance(spec: TaskSpec, state, params) -> np.ndarray:
    if spec.family == "runner":
        return np.abs(params[:, 0] - state[:, 0])
    return np.linalg.norm(_target_object(spec, state) - params[:, _GOAL], axis=1)


def step_block(spec: TaskSpec, state, params, level_params, actions):
    """Advance one block a single step.

    Returns ``(new_state, reward, distance, waypoint_index, terminate_early)``.
    Actions arrive already clipped to [-1, 1].
    """
    if spec.family == "runner":
        return _step_runner(spec, state, params, level_params, actions)
    return _step_manipulation(spec, state, params, actions)


def _step_manipulation(spec: TaskSpec, state, params, actions):
    k = spec.knobs
    scale = k.get("action_scale", 0.05)
    gain = k.get("action_gain", 1.0)
    drag = k.get("drag", 0.0)
    delta = actions * (scale * gain * (1.0 - drag))

    new = state.copy()
    hand_old = state[:, _HAND]
    hand_new = np.clip(hand_old + delta, -_WORLD_LIMIT, _WORLD_LIMIT)

    if spec.family == "gated_reach":
        # the wall sits on y = 0 with a slot of width slot_w centered at slot_x
        slot_w = k.get("slot_width", 0.3)
        crossing = np.sign(hand_new[:, 1]) != np.sign(hand_old[:, 1])
        blocked = crossing & (np.abs(hand_old[:, 0] - params[:, _SLOT_X]) > slot_w / 2.0)
        hand_new[blocked, 1] = hand_old[blocked, 1]
    new[:, _HAND] = hand_new

    if spec.family == "push":
        contact = np.linalg.norm(hand_old - state[:, _OBJ], axis=1) < k.get("contact_radius", 0.2)
        obj_new = state[:, _OBJ] + (hand_new - hand_old) * contact[:, None]
        new[:, _OBJ] = np.clip(obj_new, -_WORLD_LIMIT, _WORLD_LIMIT)
    else:
        new[:, _OBJ] = new[:, _HAND]

    dist = goal_distance(spec, new, params)
    rscale = k.get("reward_scale", 1.0)
    if spec.family == "push":
        shaping = np.linalg.norm(new[:, _HAND] - new[:, _OBJ], axis=1)
        reward = -(dist + 0.5 * shaping) * rscale
    elif spec.family == "gated_reach":
        # shaped through the slot: approach it from below, then the goal, with
        # a constant bonus for being on the goal side of the wall
        slot_point = np.stack([params[:, _SLOT_X], np.zeros(len(state))], axis=1)
        before = np.sign(new[:, 1]) != np.sign(params[:, 1])
        detour = np.linalg.norm(new[:, _HAND] - slot_point, axis=1) + np.linalg.norm(
            slot_point - params[:, _GOAL], axis=1
        )
        reward = (-np.where(before, detour, dist) + np.where(before, 0.0, 1.0)) * rscale
    else:
        reward = -dist * rscale
    if k.get("region_bonus", 0.0) > 0.0:
        reward = reward + k["region_bonus"] * (dist < k.get("region_radius", 0.15))

    waypoint = (dist < spec.success_epsilon).astype(np.int64)
    terminate = np.zeros(len(state), dtype=bool)
    return new, reward, dist, waypoint, terminate


def _runner_zone(spec: TaskSpec, x, level_params):
    """Zone geometry ahead of each env: (next waypoint, in_zone, target y, tol)."""
    pattern = spec.knobs["pattern"]  # (total_waypoints,) lateral targets
    total = spec.total_waypoints
    next_wp = np.clip(np.floor(x), 0, total - 1).astype(np.int64) + 1
    gap = level_params["gap_width"]
    in_zone = (x >= next_wp - gap) & (x < next_wp)
    target = pattern[next_wp - 1]
    return next_wp, in_zone, target, level_params["tolerance"]


def _step_runner(spec: TaskSpec, state, params, level_params, actions):
    k = spec.knobs
    x, y = state[:, 0], state[:, 1]
    crossed_before = state[:, 2]
    total = spec.total_waypoints

    next_wp, in_zone, target, tol = _runner_zone(spec, x, level_params)
    aligned = np.abs(y - target) <= tol
    dx = actions[:, 0] * _RUNNER_SPEED
    dx = np.where(in_zone & ~aligned, np.minimum(dx, 0.0), dx)
    drift = level_params.get("drift")
    dy = actions[:, 1] * _RUNNER_SIDE_SPEED
    if drift is not None:
        dy = dy + drift * in_zone

    new = state.copy()
    new[:, 0] = np.clip(x + dx, -0.5, total + 0.5)
    new[:, 1] = np.clip(y + dy, -_RUNNER_Y_LIMIT, _RUNNER_Y_LIMIT)
    crossed_now = np.clip(np.floor(np.maximum(new[:, 0], 0.0)), 0, total)
    new[:, 2] = np.maximum(crossed_before, crossed_now)

    newly = np.maximum(new[:, 2] - crossed_before, 0.0)
    energy = k.get("energy_coef", 0.005)
    reward = newly - energy * np.sum(actions * actions, axis=1)

    dist = np.abs(params[:, 0] - new[:, 0])
    waypoint = new[:, 2].astype(np.int64)
    terminate = waypoint >= total
    return new, reward, dist, waypoint, terminate


def observe_block(spec: TaskSpec, state, params, level_params) -> np.ndarray:
    """Universal-width raw observation (zero-padded to RAW_OBS_WIDTH)."""
    n = len(state)
    obs = np.zeros((n, RAW_OBS_WIDTH), dtype=np.float64)
    if spec.family == "runner":
        total = spec.total_waypoints
        x, y = state[:, 0], state[:, 1]
        next_wp, in_zone, target, tol = _runner_zone(spec, x, level_params)
        obs[:, 0] = x / total
        obs[:, 1] = y
        obs[:, 2] = next_wp - x
        obs[:, 3] = in_zone.astype(np.float64)
        obs[:, 4] = target
        obs[:, 5] = tol
        obs[:, 6] = target - y
        obs[:, 7] = level_params["gap_width"]
        nxt = np.minimum(next_wp, total - 1)  # following zone's target
        obs[:, 8] = spec.knobs["pattern"][nxt]
        obs[:, 9] = level_params["level_frac"]
        obs[:, 10] = state[:, 2] / total
        drift = level_params.get("drift")
        obs[:, 11] = 0.0 if drift is None else drift
        return obs
    hand = state[:, _HAND]
    goal = params[:, _GOAL]
    obj = state[:, _OBJ]
    obs[:, 0:2] = hand
    obs[:, 2:4] = obj
    obs[:, 4:6] = goal
    obs[:, 6:8] = obj - hand
    obs[:, 8:10] = goal - obj
    if spec.family == "gated_reach":
        obs[:, 10] = params[:, _SLOT_X]
        obs[:, 11] = spec.knobs.get("slot_width", 0.3)
        obs[:, 12] = np.sign(hand[:, 1])
    return obs
