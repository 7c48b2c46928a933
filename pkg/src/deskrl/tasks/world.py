"""Batched multi-task environment engine with per-task env blocks."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from deskrl.errors import ConfigError, ContractViolation
from deskrl.tasks import families
from deskrl.tasks.curriculum import CurriculumState, curriculum_update
from deskrl.tasks.metrics import progress_metric
from deskrl.tasks.spec import ACT_DIM, RAW_OBS_WIDTH, TaskSpec, difficulty_to_params

LEVEL_POLICIES = ("zero", "uniform", "curriculum")


class VecWorld:
    """E parallel envs partitioned into contiguous per-task blocks.

    Each env owns its rng stream (spawned from the world seed), so resets are
    reproducible regardless of how step computations are partitioned across
    workers. Done envs are auto-reset inside ``step`` after their episode
    metrics are harvested.
    """

    def __init__(self, specs: list[TaskSpec], blocks: list[tuple[int, int]], seed: int,
                 mode: str = "rand", level_policy: str = "zero",
                 curriculum_threshold: float = 0.8, workers: int = 1):
        if mode not in ("fixed", "rand"):
            raise ConfigError(f"unknown reset mode: {mode}")
        if level_policy not in LEVEL_POLICIES:
            raise ConfigError(f"unknown level policy: {level_policy}")
        by_id = {s.task_id: s for s in specs}
        if not blocks:
            raise ConfigError("zero total environments")
        self.specs = specs
        self.mode = mode
        self.level_policy = level_policy
        self.workers = max(int(workers), 1)
        self.num_tasks = len(specs)

        self.block_ranges: list[tuple[TaskSpec, int, int]] = []  # (spec, start, stop)
        total = 0
        for task_id, count in blocks:
            if count <= 0:
                raise ConfigError(f"block for task {task_id} has non-positive count")
            if task_id not in by_id:
                raise ConfigError(f"unknown task id in block list: {task_id}")
            self.block_ranges.append((by_id[task_id], total, total + count))
            total += count
        self.num_envs = total

        self.task_ids = np.empty(total, dtype=np.int64)
        self.episode_lengths = np.empty(total, dtype=np.int64)
        self.total_waypoints = np.empty(total, dtype=np.int64)
        self.epsilons = np.empty(total, dtype=np.float64)
        max_levels = np.empty(total, dtype=np.int64)
        for spec, lo, hi in self.block_ranges:
            self.task_ids[lo:hi] = spec.task_id
            self.episode_lengths[lo:hi] = spec.episode_length
            self.total_waypoints[lo:hi] = spec.total_waypoints
            self.epsilons[lo:hi] = spec.success_epsilon
            max_levels[lo:hi] = spec.levels

        ss = np.random.SeedSequence(seed)
        self.rngs = [np.random.default_rng(child) for child in ss.spawn(total)]

        self.state = np.zeros((total, families.STATE_DIM), dtype=np.float64)
        self.params = np.zeros((total, families.PARAM_DIM), dtype=np.float64)
        self.steps = np.zeros(total, dtype=np.int64)
        self.succeeded = np.zeros(total, dtype=bool)
        self.waypoints = np.zeros(total, dtype=np.int64)
        self.episode_return = np.zeros(total, dtype=np.float64)
        self.needs_reset = np.ones(total, dtype=bool)
        self.global_step = 0
        self.fault_count = 0

        self.curriculum = CurriculumState(total, max_levels, curriculum_threshold)
        self.levels = np.zeros(total, dtype=np.int64)
        if level_policy == "uniform":
            for spec, lo, hi in self.block_ranges:
                self.levels[lo:hi] = np.arange(hi - lo) % spec.levels
        # per-task lookup tables over levels for the vectorized step
        self._level_tables = {}
        for spec in specs:
            rows = [difficulty_to_params(spec, l) for l in range(spec.levels)]
            self._level_tables[spec.task_id] = {
                "gap_width": np.array([r.get("gap_width", 0.0) for r in rows]),
                "tolerance": np.array([r.get("tolerance", 0.0) for r in rows]),
                "drift": np.array([r.get("drift", 0.0) for r in rows]),
                "level_frac": np.array(
                    [l / max(spec.levels - 1, 1) for l in range(spec.levels)]
                ),
            }

    # -- helpers ------------------------------------------------------------

    def _level_params(self, spec: TaskSpec, lo: int, hi: int) -> dict:
        table = self._level_tables[spec.task_id]
        lv = self.levels[lo:hi]
        return {key: tab[lv] for key, tab in table.items()}

    def observe(self) -> np.ndarray:
        """(E, RAW_OBS_WIDTH + K) observations: raw block plus one-hot task id."""
        obs = np.zeros((self.num_envs, RAW_OBS_WIDTH + self.num_tasks), dtype=np.float64)
        for spec, lo, hi in self.block_ranges:
            obs[lo:hi, :RAW_OBS_WIDTH] = families.observe_block(
                spec, self.state[lo:hi], self.params[lo:hi], self._level_params(spec, lo, hi)
            )
            obs[lo:hi, RAW_OBS_WIDTH + spec.task_id] = 1.0
        return obs

    @property
    def obs_dim(self) -> int:
        return RAW_OBS_WIDTH + self.num_tasks

    @property
    def act_dim(self) -> int:
        return ACT_DIM

    # -- reset ----------------------------------------------------------------

    def reset(self, env_mask=None, force: bool = False) -> np.ndarray:
        """Reset the masked envs (all by default) and return observations."""
        if env_mask is None:
            mask = np.ones(self.num_envs, dtype=bool)
        else:
            mask = np.asarray(env_mask, dtype=bool)
        if not force and np.any(mask & ~self.needs_reset & (self.steps > 0)):
            raise ContractViolation("reset of a running env without force")
        for spec, lo, hi in self.block_ranges:
            local = mask[lo:hi]
            if not local.any():
                continue
            idx = np.nonzero(local)[0] + lo
            if self.level_policy == "curriculum":
                self.levels[idx] = self.curriculum.levels[idx]
            state, params = families.reset_block(spec, [self.rngs[i] for i in idx], self.mode)
            self.state[idx] = state
            self.params[idx] = params
        self.steps[mask] = 0
        self.succeeded[mask] = False
        self.waypoints[mask] = 0
        self.episode_return[mask] = 0.0
        self.needs_reset[mask] = False
        return self.observe()

    # -- step -----------------------------------------------------------------

    def _step_block(self, spec, lo, hi, actions, rewards, dists, terminates):
        new_state, reward, dist, waypoint, term = families.step_block(
            spec, self.state[lo:hi], self.params[lo:hi],
            self._level_params(spec, lo, hi), actions[lo:hi],
        )
        self.state[lo:hi] = new_state
        rewards[lo:hi] = reward
        dists[lo:hi] = dist
        self.waypoints[lo:hi] = np.maximum(self.waypoints[lo:hi], waypoint)
        terminates[lo:hi] = term

    def step(self, actions: np.ndarray):
        """Advance all envs one step; returns (obs, rewards, dones, info).

        Non-finite actions fault the offending envs: they are reset without
        emitting an episode event and counted in ``info["faults"]``.
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.num_envs, ACT_DIM):
            raise ContractViolation(f"actions shape {actions.shape} != ({self.num_envs}, {ACT_DIM})")
        faulted = ~np.all(np.isfinite(actions), axis=1)
        actions = np.clip(np.nan_to_num(actions, nan=0.0, posinf=0.0, neginf=0.0), -1.0, 1.0)

        rewards = np.zeros(self.num_envs, dtype=np.float64)
        dists = np.zeros(self.num_envs, dtype=np.float64)
        terminates = np.zeros(self.num_envs, dtype=bool)

        if self.workers == 1 or len(self.block_ranges) == 1:
            for spec, lo, hi in self.block_ranges:
                self._step_block(spec, lo, hi, actions, rewards, dists, terminates)
        else:
            # env state is touched block-wise and outputs are written to
            # disjoint slices, so blocks can run on a thread pool
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futs = [
                    pool.submit(self._step_block, spec, lo, hi, actions, rewards, dists, terminates)
                    for spec, lo, hi in self.block_ranges
                ]
                for f in futs:
                    f.result()

        self.global_step += 1
        self.steps += 1
        self.succeeded |= dists < self.epsilons
        dones = terminates | (self.steps >= self.episode_lengths)
        dones = dones & ~faulted

        # harvest finished episodes in env-index order before auto-reset
        events = []
        done_idx = np.nonzero(dones)[0]
        for i in done_idx:
            events.append(
                {
                    "step": self.global_step,
                    "env": int(i),
                    "task_id": int(self.task_ids[i]),
                    "success": bool(self.succeeded[i]),
                    "return": float(self.episode_return[i] + rewards[i]),
                    "progress": progress_metric(int(self.waypoints[i]), int(self.total_waypoints[i])),
                    "level": int(self.levels[i]),
                }
            )
        if self.level_policy == "curriculum" and len(done_idx):
            curriculum_update(
                self.curriculum, done_idx, np.array([ev["progress"] for ev in events])
            )

        self.episode_return += rewards
        to_reset = dones | faulted
        self.fault_count += int(faulted.sum())
        if to_reset.any():
            self.needs_reset |= to_reset
            self.reset(to_reset)
        obs = self.observe()
        info = {"episodes": events, "faults": int(faulted.sum()), "distances": dists}
        return obs, rewards, dones.astype(np.float64), info


def allocate(specs: list[TaskSpec], blocks: list[tuple[int, int]], seed: int = 0,
             **kwargs) -> VecWorld:
    """Build a VecWorld with contiguous per-task index ranges, all pending reset."""
    return VecWorld(specs, blocks, seed, **kwargs)
