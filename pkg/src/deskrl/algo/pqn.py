"""MT-PQN: parallel Q-learning with bang-off-bang control and Peng's Q(lambda).

Continuous actions are discretized per actuator into {-1, 0, +1} * scale, so
the joint action value factorizes into the average of per-actuator values
and the greedy joint action is the per-actuator argmax.
"""

from __future__ import annotations

import numpy as np

from deskrl.algo.common import EpsilonSchedule, make_arch
from deskrl.algo.normalizer import PerTaskNormalizer
from deskrl.autodiff import Adam, Tape, engine
from deskrl.autodiff.engine import Tensor
from deskrl.errors import ContractViolation, TrainingFault
from deskrl.nets.qnet import FactorizedQNet
from deskrl.tasks.spec import RAW_OBS_WIDTH
from deskrl.tasks.world import VecWorld


def pqn_factorized_value(q: np.ndarray):
    """Greedy value and per-actuator greedy bins from (batch, M, n_b) values.

    Value = mean over actuators of the per-actuator max; ties break to the
    lowest bin index (numpy argmax convention).
    """
    q = np.asarray(q)
    greedy_bins = q.argmax(axis=2)
    value = q.max(axis=2).mean(axis=1)
    return value, greedy_bins


def pqn_targets(rewards: np.ndarray, dones: np.ndarray, next_values: np.ndarray,
                q_lambda: float, gamma: float) -> np.ndarray:
    """Peng's Q(lambda) backward recursion over a (T, E) segment.

    ``next_values[t]`` is the greedy value of the state after step t; the
    recursion bootstraps from it and blends in the running multi-step target:

        y_t = r_t + gamma (1 - done_t) [(1 - lambda) V(s_{t+1}) + lambda y_{t+1}]

    with y at the segment end taken as V of the final state.
    """
    T, E = rewards.shape
    y = np.zeros((T, E), dtype=np.float64)
    next_y = next_values[-1]
    for t in range(T - 1, -1, -1):
        blend = (1.0 - q_lambda) * next_values[t] + q_lambda * next_y
        y[t] = rewards[t] + gamma * (1.0 - dones[t]) * blend
        next_y = y[t]
    return y


def bang_off_bang_decode(bins: np.ndarray, action_scale: float) -> np.ndarray:
    """Bin indices {0, 1, 2} -> actions {-1, 0, +1} * scale per actuator."""
    bins = np.asarray(bins)
    if bins.min(initial=0) < 0 or bins.max(initial=0) > 2:
        raise ContractViolation("bang-off-bang bins must be in {0, 1, 2}")
    return (bins - 1).astype(np.float64) * action_scale


def bang_off_bang_encode(actions: np.ndarray, action_scale: float) -> np.ndarray:
    """Inverse of decode on the grid (exact round trip)."""
    if action_scale == 0.0:
        return np.ones_like(np.asarray(actions), dtype=np.int64)
    return (np.rint(np.asarray(actions) / action_scale) + 1).astype(np.int64)


def epsilon_greedy(greedy_bins: np.ndarray, epsilon: float, rng: np.random.Generator,
                   n_bins: int = 3) -> np.ndarray:
    """Each actuator independently re-drawn uniformly with probability epsilon."""
    explore = rng.random(greedy_bins.shape) < epsilon
    random_bins = rng.integers(0, n_bins, size=greedy_bins.shape)
    return np.where(explore, random_bins, greedy_bins)


class PQNTrainer:
    def __init__(self, cfg, world: VecWorld, seed_seq: np.random.SeedSequence):
        self.cfg = cfg
        self.world = world
        kids = seed_seq.spawn(3)
        self.explore_rng = np.random.default_rng(kids[0])
        self.shuffle_rng = np.random.default_rng(kids[1])
        init_rng = np.random.default_rng(kids[2])
        self.qnet = FactorizedQNet(
            world.obs_dim, world.act_dim, cfg.bins_per_dim, cfg.q_d, cfg.q_num_blocks,
            init_rng, residual=cfg.q_residual_network,
        )
        self.opt = Adam(self.qnet.params.size, lr=cfg.critic_lr)
        self.obs_norm = (
            PerTaskNormalizer(world.num_tasks, RAW_OBS_WIDTH) if cfg.normalize_input else None
        )
        total_steps = cfg.max_epochs * cfg.horizon * world.num_envs
        self.schedule = EpsilonSchedule(
            cfg.start_e, cfg.end_e, cfg.exploration_fraction, total_steps, cfg.decay_epsilon
        )
        self.env_steps = 0
        self.grad_updates = 0
        self.epoch_index = 0
        self.obs = world.reset()

    def _normalized(self, obs, update: bool):
        if self.obs_norm is None:
            return obs
        if update:
            self.obs_norm.update(obs, self.world.task_ids)
        return self.obs_norm.normalize(obs, self.world.task_ids)

    def collect(self):
        T, E = self.cfg.horizon, self.world.num_envs
        obs_seq = np.zeros((T, E, self.world.obs_dim))
        bins_seq = np.zeros((T, E, self.world.act_dim), dtype=np.int64)
        rew_seq = np.zeros((T, E))
        done_seq = np.zeros((T, E))
        next_val = np.zeros((T, E))
        events = []
        faults = 0
        for t in range(T):
            obs_in = self._normalized(self.obs, update=True)
            q = self.qnet.forward(obs_in).data
            value, greedy = pqn_factorized_value(q)
            if t > 0:
                # value of the state reached by step t-1 (dones zero it out
                # in the recursion, so post-reset observations are harmless)
                next_val[t - 1] = value
            eps = self.schedule.value(self.env_steps)
            bins = epsilon_greedy(greedy, eps, self.explore_rng, self.cfg.bins_per_dim)
            actions = bang_off_bang_decode(bins, self.cfg.action_scale)
            next_obs, rewards, dones, info = self.world.step(actions)
            obs_seq[t] = obs_in
            bins_seq[t] = bins
            rew_seq[t] = rewards
            done_seq[t] = dones
            events.extend(info["episodes"])
            faults += info["faults"]
            self.obs = next_obs
            self.env_steps += E
        final_in = self._normalized(self.obs, update=False)
        qf = self.qnet.forward(final_in).data
        next_val[T - 1], _ = pqn_factorized_value(qf)
        targets = pqn_targets(rew_seq, done_seq, next_val, self.cfg.q_lambda, self.cfg.gamma)
        return obs_seq, bins_seq, targets, events, faults, eps

    def update(self, obs_seq, bins_seq, targets):
        T, E = targets.shape
        n = T * E
        obs = obs_seq.reshape(n, -1)
        bins = bins_seq.reshape(n, -1)
        y = targets.reshape(n)
        order = np.arange(n)
        mb_size = max(n // self.cfg.num_minibatches, 1)
        losses = []
        for _ in range(self.cfg.mini_epochs):
            self.shuffle_rng.shuffle(order)
            for lo in range(0, n, mb_size):
                mb = order[lo : lo + mb_size]
                with Tape() as tape:
                    q = self.qnet.forward(obs[mb])
                    taken = engine.gather_last(q, bins[mb])  # (mb, M)
                    pred = engine.mean(taken, axis=1)
                    loss = engine.mean(engine.square(engine.sub(pred, Tensor(y[mb]))))
                    engine.backward(tape, loss)
                grad = self.qnet.params.grad_flat()
                new = self.opt.step(self.qnet.params.flat(), grad, self.cfg.max_grad_norm)
                if not np.all(np.isfinite(new)):
                    raise TrainingFault("non-finite parameters after update", step=self.grad_updates)
                self.qnet.params.set_flat(new)
                losses.append(float(loss.data))
                self.grad_updates += 1
        return {"q_loss": float(np.mean(losses)), "lr": self.opt.lr}

    def train_epoch(self):
        if self.cfg.anneal_lr:
            frac = 1.0 - self.epoch_index / max(self.cfg.max_epochs, 1)
            self.opt.lr = self.cfg.critic_lr * max(frac, 0.05)
        obs_seq, bins_seq, targets, events, faults, eps = self.collect()
        losses = self.update(obs_seq, bins_seq, targets)
        losses["epsilon"] = eps
        self.epoch_index += 1
        updates = self.cfg.mini_epochs * self.cfg.num_minibatches
        return {
            "events": events,
            "faults": faults,
            "losses": losses,
            "cosine": None,
            "utd": updates / (self.cfg.horizon * self.world.num_envs),
            "env_steps": self.env_steps,
            "grad_updates": self.grad_updates,
        }
