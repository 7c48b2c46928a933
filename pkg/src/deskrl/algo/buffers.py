"""On-policy rollout storage and the off-policy ring buffer with n-step assembly."""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation


class RolloutBuffer:
    """(horizon, envs) transition storage filled exactly once per update."""

    def __init__(self, horizon: int, num_envs: int, obs_dim: int, act_dim: int):
        self.horizon = horizon
        self.num_envs = num_envs
        self.obs = np.zeros((horizon, num_envs, obs_dim), dtype=np.float64)
        self.actions = np.zeros((horizon, num_envs, act_dim), dtype=np.float64)
        self.log_probs = np.zeros((horizon, num_envs), dtype=np.float64)
        self.rewards = np.zeros((horizon, num_envs), dtype=np.float64)
        self.dones = np.zeros((horizon, num_envs), dtype=np.float64)
        self.values = np.zeros((horizon, num_envs), dtype=np.float64)
        self.task_ids = np.zeros((horizon, num_envs), dtype=np.int64)
        self.advantages = None
        self.returns = None
        self._t = 0

    def add(self, obs, actions, log_probs, rewards, dones, values, task_ids) -> None:
        if self._t >= self.horizon:
            raise ContractViolation("rollout buffer already full")
        t = self._t
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.values[t] = values
        self.task_ids[t] = task_ids
        self._t += 1

    @property
    def full(self) -> bool:
        return self._t == self.horizon

    def reset(self) -> None:
        self._t = 0
        self.advantages = None
        self.returns = None

    def flatten(self):
        """Time-major flatten to (horizon * envs, ...) sample arrays."""
        if not self.full:
            raise ContractViolation("rollout consumed before the horizon was filled")
        if self.advantages is None:
            raise ContractViolation("advantages must be computed before consumption")
        n = self.horizon * self.num_envs
        return {
            "obs": self.obs.reshape(n, -1),
            "actions": self.actions.reshape(n, -1),
            "log_probs": self.log_probs.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
            "task_ids": self.task_ids.reshape(n),
        }


class _PendingWindow:
    """One in-flight n-step window per collection step, vectorized over envs."""

    __slots__ = ("obs", "actions", "task_ids", "ret", "disc", "next_obs", "done", "alive", "age")

    def __init__(self, obs, actions, task_ids, rewards, next_obs, dones, gamma):
        self.obs = obs.copy()
        self.actions = actions.copy()
        self.task_ids = task_ids.copy()
        self.ret = rewards.astype(np.float64).copy()
        self.disc = np.full(len(obs), gamma, dtype=np.float64)
        self.next_obs = next_obs.copy()
        self.done = dones.astype(np.float64).copy()
        self.alive = 1.0 - self.done
        self.age = 1

    def absorb(self, rewards, next_obs, dones, gamma):
        """Fold one later step into every env whose episode is still running."""
        alive = self.alive
        self.ret += alive * self.disc * rewards
        mask = alive > 0
        self.next_obs[mask] = next_obs[mask]
        self.done[mask] = dones[mask]
        self.alive = alive * (1.0 - dones)
        self.disc[mask] *= gamma
        self.age += 1


class ReplayBuffer:
    """Uniform-sampling ring buffer storing n-step-assembled transitions.

    Steps are pushed one (envs,)-wide slice at a time; each slice opens an
    n-step window that absorbs the following steps of the same episode. A
    window closes after n steps and is stored with its partial return, the
    bootstrap observation, the accumulated discount, and a done flag that
    suppresses the bootstrap when the episode ended inside the window.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, nstep: int, gamma: float):
        if nstep < 1:
            raise ContractViolation("nstep must be >= 1")
        self.capacity = capacity
        self.nstep = nstep
        self.gamma = gamma
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.actions = np.zeros((capacity, act_dim), dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.float64)
        self.discounts = np.zeros(capacity, dtype=np.float64)
        self.task_ids = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self._head = 0
        self._pending: list[_PendingWindow] = []

    def __len__(self) -> int:
        return self.size

    def push(self, obs, actions, rewards, next_obs, dones, task_ids) -> None:
        """Add one step for every env; emits windows that reached n steps."""
        rewards = np.asarray(rewards, dtype=np.float64)
        dones = np.asarray(dones, dtype=np.float64)
        for w in self._pending:
            w.absorb(rewards, next_obs, dones, self.gamma)
        self._pending.append(
            _PendingWindow(np.asarray(obs), np.asarray(actions), np.asarray(task_ids),
                           rewards, np.asarray(next_obs), dones, self.gamma)
        )
        while self._pending and self._pending[0].age >= self.nstep:
            w = self._pending.pop(0)
            self._append(w.obs, w.actions, w.ret, w.next_obs, w.done, w.disc, w.task_ids)

    def flush(self) -> None:
        """Emit all in-flight windows with however many steps they absorbed."""
        for w in self._pending:
            self._append(w.obs, w.actions, w.ret, w.next_obs, w.done, w.disc, w.task_ids)
        self._pending.clear()

    def _append(self, obs, actions, rewards, next_obs, dones, discounts, task_ids) -> None:
        n = len(obs)
        idx = (self._head + np.arange(n)) % self.capacity
        self.obs[idx] = obs
        self.actions[idx] = actions
        self.rewards[idx] = rewards
        self.next_obs[idx] = next_obs
        self.dones[idx] = dones
        self.discounts[idx] = discounts
        self.task_ids[idx] = task_ids
        self._head = int((self._head + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ContractViolation("sampling from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "dones": self.dones[idx],
            "discounts": self.discounts[idx],
            "task_ids": self.task_ids[idx],
        }
