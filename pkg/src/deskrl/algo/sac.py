"""MT-SAC: twin-critic soft actor-critic with per-task entropy temperatures."""

from __future__ import annotations

import numpy as np

from deskrl.algo.buffers import ReplayBuffer
from deskrl.algo.common import gaussian_logpdf, make_arch
from deskrl.algo.normalizer import PerTaskNormalizer
from deskrl.autodiff import Adam, Tape, engine
from deskrl.autodiff.engine import Tensor
from deskrl.autodiff.nn import MLP, Params
from deskrl.errors import TrainingFault
from deskrl.nets import ActorNet
from deskrl.tasks.spec import RAW_OBS_WIDTH
from deskrl.tasks.world import VecWorld

_SQUASH_EPS = 1e-6


class DisentangledAlpha:
    """Per-task log-temperatures with a shared target entropy."""

    def __init__(self, num_tasks: int, init_alpha: float, target_entropy: float,
                 lr: float, disentangled: bool = True):
        n = num_tasks if disentangled else 1
        self.log_alpha = np.full(n, np.log(init_alpha), dtype=np.float64)
        self.target_entropy = target_entropy
        self.opt = Adam(n, lr=lr)
        self.disentangled = disentangled

    def alpha(self, task_ids: np.ndarray) -> np.ndarray:
        idx = task_ids if self.disentangled else np.zeros_like(task_ids)
        return np.exp(self.log_alpha[idx])

    def update(self, log_probs: np.ndarray, task_ids: np.ndarray) -> None:
        """One temperature step from d/dlog_alpha E[-alpha (log pi + H_target)]."""
        idx = task_ids if self.disentangled else np.zeros_like(task_ids)
        grad = np.zeros_like(self.log_alpha)
        err = log_probs + self.target_entropy
        for k in np.unique(idx):
            mask = idx == k
            grad[k] = -np.exp(self.log_alpha[k]) * err[mask].mean()
        self.log_alpha = self.opt.step(self.log_alpha, grad)


def squashed_sample(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator):
    """(action, log_prob) from the tanh-squashed Gaussian (numpy side)."""
    std = np.exp(log_std)
    u = mean + std * rng.standard_normal(mean.shape)
    a = np.tanh(u)
    lp = gaussian_logpdf(u, mean, log_std) - np.log(1.0 - a * a + _SQUASH_EPS).sum(axis=-1)
    return a, lp


class QNet:
    """Plain MLP state-action value head used for both twins."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, activation, rng):
        self.params = Params()
        self.net = MLP(self.params, "q", obs_dim + act_dim, hidden, 1, activation, rng)

    def forward(self, obs: np.ndarray, actions) -> engine.Tensor:
        act_t = actions if isinstance(actions, Tensor) else Tensor(np.asarray(actions))
        x = engine.concat_last([Tensor(obs), act_t])
        return engine.reshape(self.net(x), (len(obs),))


class SACTrainer:
    def __init__(self, cfg, world: VecWorld, seed_seq: np.random.SeedSequence):
        self.cfg = cfg
        self.world = world
        kids = seed_seq.spawn(4)
        self.sample_rng = np.random.default_rng(kids[0])
        self.batch_rng = np.random.default_rng(kids[1])
        init_rng = np.random.default_rng(kids[2])
        self.update_rng = np.random.default_rng(kids[3])

        arch = make_arch(cfg, world.num_tasks)
        self.actor = ActorNet(arch, init_rng)
        self.opt_actor = Adam(self.actor.params.size, lr=cfg.learning_rate)
        self.q1 = QNet(world.obs_dim, world.act_dim, cfg.hidden_units, cfg.activation, init_rng)
        self.q2 = QNet(world.obs_dim, world.act_dim, cfg.hidden_units, cfg.activation, init_rng)
        self.opt_q1 = Adam(self.q1.params.size, lr=cfg.critic_lr)
        self.opt_q2 = Adam(self.q2.params.size, lr=cfg.critic_lr)
        self.q1_target = self.q1.params.flat()
        self.q2_target = self.q2.params.flat()

        self.alphas = DisentangledAlpha(
            world.num_tasks, cfg.init_alpha,
            target_entropy=-world.act_dim * cfg.target_entropy_coef,
            lr=cfg.alpha_lr, disentangled=cfg.use_disentangled_alpha,
        )
        self.replay = ReplayBuffer(
            cfg.replay_buffer_size, world.obs_dim, world.act_dim, cfg.nstep, cfg.gamma
        )
        self.obs_norm = (
            PerTaskNormalizer(world.num_tasks, RAW_OBS_WIDTH) if cfg.normalize_input else None
        )
        self.val_norm = (
            PerTaskNormalizer(world.num_tasks, 1, target="value") if cfg.normalize_value else None
        )
        self.env_steps = 0
        self.grad_updates = 0
        self.epoch_index = 0
        self.obs = world.reset()

    def _norm_obs(self, obs, update: bool):
        if self.obs_norm is None:
            return obs
        if update:
            self.obs_norm.update(obs, self.world.task_ids)
        return self.obs_norm.normalize(obs, self.world.task_ids)

    def _norm_obs_batch(self, obs, task_ids):
        if self.obs_norm is None:
            return obs
        return self.obs_norm.normalize(obs, task_ids)

    def collect(self):
        events = []
        faults = 0
        for _ in range(self.cfg.horizon):
            obs_raw = self.obs
            obs_in = self._norm_obs(obs_raw, update=True)
            mean, _ = self.actor.forward(obs_in, self.world.task_ids)
            actions, _ = squashed_sample(mean.data, self.actor.log_std.data, self.sample_rng)
            next_obs, rewards, dones, info = self.world.step(actions)
            self.replay.push(obs_raw, actions, rewards, next_obs, dones, self.world.task_ids)
            events.extend(info["episodes"])
            faults += info["faults"]
            self.obs = next_obs
            self.env_steps += self.world.num_envs
        return events, faults

    # -- one gradient step --------------------------------------------------------

    def _target_q_raw(self, next_obs_in, next_actions, task_ids):
        with Tape():
            q1t_params = self.q1.params.flat()
            q2t_params = self.q2.params.flat()
            self.q1.params.set_flat(self.q1_target)
            self.q2.params.set_flat(self.q2_target)
            q1 = self.q1.forward(next_obs_in, next_actions).data
            q2 = self.q2.forward(next_obs_in, next_actions).data
            self.q1.params.set_flat(q1t_params)
            self.q2.params.set_flat(q2t_params)
        q = np.minimum(q1, q2)
        if self.val_norm is not None:
            q = self.val_norm.denormalize(q[:, None], task_ids)[:, 0]
        return q

    def update_once(self):
        cfg = self.cfg
        batch = self.replay.sample(cfg.batch_size, self.batch_rng)
        ids = batch["task_ids"]
        obs_in = self._norm_obs_batch(batch["obs"], ids)
        next_in = self._norm_obs_batch(batch["next_obs"], ids)

        # critic targets from the twin target nets plus entropy bonus
        mean, _ = self.actor.forward(next_in, ids)
        next_a, next_lp = squashed_sample(mean.data, self.actor.log_std.data, self.update_rng)
        alpha = self.alphas.alpha(ids)
        q_next = self._target_q_raw(next_in, next_a, ids)
        y_raw = batch["rewards"] + batch["discounts"] * (1.0 - batch["dones"]) * (
            q_next - alpha * next_lp
        )
        if self.val_norm is not None:
            self.val_norm.update(y_raw[:, None], ids)
            y = self.val_norm.normalize(y_raw[:, None], ids)[:, 0]
        else:
            y = y_raw

        q_losses = []
        for qnet, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            with Tape() as tape:
                pred = qnet.forward(obs_in, batch["actions"])
                loss = engine.mean(engine.square(engine.sub(pred, Tensor(y))))
                engine.backward(tape, loss)
            new = opt.step(qnet.params.flat(), qnet.params.grad_flat(), cfg.grad_norm)
            qnet.params.set_flat(new)
            q_losses.append(float(loss.data))

        # actor: maximize min-Q of a reparametrized sample minus entropy cost
        noise = self.update_rng.standard_normal((len(obs_in), self.world.act_dim))
        with Tape() as tape:
            mean_t, log_std_t = self.actor.forward(obs_in, ids)
            std_t = engine.exp(log_std_t)
            u = engine.add(mean_t, engine.mul(std_t, Tensor(noise)))
            a = engine.tanh(u)
            # log pi(a) with the tanh change-of-variables correction
            z = engine.div(engine.sub(u, mean_t), std_t)
            base = engine.sum_(
                engine.add(engine.mul(engine.square(z), Tensor(0.5)), log_std_t), axis=1
            )
            base = engine.mul(
                engine.add(base, Tensor(0.5 * np.log(2 * np.pi) * self.world.act_dim)),
                Tensor(-1.0),
            )
            squash = engine.sum_(
                engine.log(
                    engine.add(engine.sub(Tensor(1.0), engine.square(a)), Tensor(_SQUASH_EPS))
                ),
                axis=1,
            )
            lp = engine.sub(base, squash)
            q1 = self.q1.forward(obs_in, a)
            q2 = self.q2.forward(obs_in, a)
            q = engine.minimum(q1, q2)
            if self.val_norm is not None:
                std_task = self.val_norm.std()[ids, 0]
                mean_task = self.val_norm.mean[ids, 0]
                q = engine.add(engine.mul(q, Tensor(std_task)), Tensor(mean_task))
            actor_loss = engine.mean(engine.sub(engine.mul(lp, Tensor(alpha)), q))
            engine.backward(tape, actor_loss)
        new = self.opt_actor.step(
            self.actor.params.flat(), self.actor.params.grad_flat(), cfg.grad_norm
        )
        if not np.all(np.isfinite(new)):
            raise TrainingFault("non-finite actor parameters", step=self.grad_updates)
        self.actor.params.set_flat(new)

        if cfg.learnable_temperature:
            self.alphas.update(lp.data, ids)

        # Polyak averaging of the target twins
        tau = cfg.critic_tau
        self.q1_target = (1.0 - tau) * self.q1_target + tau * self.q1.params.flat()
        self.q2_target = (1.0 - tau) * self.q2_target + tau * self.q2.params.flat()
        self.grad_updates += 1
        return {"q_loss": float(np.mean(q_losses)), "actor_loss": float(actor_loss.data)}

    def train_epoch(self):
        events, faults = self.collect()
        losses = []
        for _ in range(self.cfg.gradient_steps_per_itr):
            losses.append(self.update_once())
        self.epoch_index += 1
        out = {k: float(np.mean([l[k] for l in losses])) for k in losses[0]} if losses else {}
        return {
            "events": events,
            "faults": faults,
            "losses": out,
            "cosine": None,
            "utd": self.cfg.gradient_steps_per_itr / (self.cfg.horizon * self.world.num_envs),
            "env_steps": self.env_steps,
            "grad_updates": self.grad_updates,
        }
