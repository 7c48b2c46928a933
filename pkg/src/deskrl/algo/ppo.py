"""MT-PPO / MT-GRPO: clipped-surrogate policy optimization over the VecWorld.

One trainer covers both: GRPO stretches the horizon to the episode length,
drops the critic, and replaces GAE with group-standardized Monte Carlo
returns. Gradient-manipulation schemes are routed per network through
``deskrl.schemes.routing``.
"""

from __future__ import annotations

import numpy as np

from deskrl.algo.buffers import RolloutBuffer
from deskrl.algo.common import gaussian_logpdf, make_arch, standardize
from deskrl.algo.gae import compute_gae
from deskrl.algo.grpo import episode_segments, grpo_advantage
from deskrl.algo.normalizer import PerTaskNormalizer
from deskrl.autodiff import Adam, Tape, engine
from deskrl.autodiff.engine import Tensor
from deskrl.errors import TrainingFault
from deskrl.nets import ActorNet, CriticNet, gaussian_entropy, gaussian_log_prob
from deskrl.schemes import FamoState, SchemeRouting, combined_gradient, cosine_stats, famo_update
from deskrl.schemes.routing import per_task_mean_losses, task_gradient_set
from deskrl.tasks.spec import RAW_OBS_WIDTH
from deskrl.tasks.world import VecWorld


class OnPolicyTrainer:
    def __init__(self, cfg, world: VecWorld, seed_seq: np.random.SeedSequence):
        self.cfg = cfg
        self.world = world
        self.critic_free = cfg.algorithm == "grpo"
        kids = seed_seq.spawn(4)
        self.sample_rng = np.random.default_rng(kids[0])
        self.shuffle_rng = np.random.default_rng(kids[1])
        self.scheme_rng = np.random.default_rng(kids[2])
        init_rng = np.random.default_rng(kids[3])

        arch = make_arch(cfg, world.num_tasks)
        self.actor = ActorNet(arch, init_rng)
        self.opt_actor = Adam(self.actor.params.size, lr=cfg.learning_rate)
        if self.critic_free:
            self.critic = None
            self.opt_critic = None
        else:
            self.critic = CriticNet(arch, init_rng)
            self.opt_critic = Adam(self.critic.params.size, lr=cfg.learning_rate)

        self.horizon = world.episode_lengths.max() if self.critic_free else cfg.horizon
        self.buffer = RolloutBuffer(int(self.horizon), world.num_envs, world.obs_dim, world.act_dim)
        self.obs_norm = (
            PerTaskNormalizer(world.num_tasks, RAW_OBS_WIDTH) if cfg.normalize_input else None
        )
        self.val_norm = (
            PerTaskNormalizer(world.num_tasks, 1, target="value")
            if (cfg.normalize_value and not self.critic_free)
            else None
        )
        self.routing = SchemeRouting(cfg.project_actor_gradient, cfg.project_critic_gradient)
        self.routing.validate(cfg.scheme)
        self.famo_actor = FamoState(world.num_tasks, cfg.famo_w_lr, cfg.famo_gamma,
                                    cfg.famo_epsilon, cfg.famo_norm_w_grad)
        self.famo_critic = FamoState(world.num_tasks, cfg.famo_w_lr, cfg.famo_gamma,
                                     cfg.famo_epsilon, cfg.famo_norm_w_grad)
        self.lr = cfg.learning_rate
        self.env_steps = 0
        self.grad_updates = 0
        self.epoch_index = 0
        self.obs = world.reset()

    # -- collection ---------------------------------------------------------

    def _normalized(self, obs, update: bool) -> np.ndarray:
        if self.obs_norm is None:
            return obs
        if update:
            self.obs_norm.update(obs, self.world.task_ids)
        return self.obs_norm.normalize(obs, self.world.task_ids)

    def _values(self, obs_in) -> np.ndarray:
        if self.critic is None:
            return np.zeros(len(obs_in))
        v = self.critic.forward(obs_in, self.world.task_ids).data
        if self.val_norm is not None:
            v = self.val_norm.denormalize(v[:, None], self.world.task_ids)[:, 0]
        return v

    def collect(self):
        """Roll the policy for one horizon; returns finished-episode events."""
        events = []
        faults = 0
        self.buffer.reset()
        task_ids = self.world.task_ids
        log_std = self.actor.log_std.data
        for _ in range(int(self.horizon)):
            obs_in = self._normalized(self.obs, update=True)
            mean, _ = self.actor.forward(obs_in, task_ids)
            actions = mean.data + np.exp(log_std) * self.sample_rng.standard_normal(mean.data.shape)
            log_probs = gaussian_logpdf(actions, mean.data, log_std)
            values = self._values(obs_in)
            next_obs, rewards, dones, info = self.world.step(actions)
            self.buffer.add(obs_in, actions, log_probs, rewards, dones, values, task_ids)
            events.extend(info["episodes"])
            faults += info["faults"]
            self.obs = next_obs
        self.env_steps += int(self.horizon) * self.world.num_envs
        return events, faults

    # -- advantages -----------------------------------------------------------

    def _compute_advantages(self):
        buf = self.buffer
        if self.critic_free:
            segs = episode_segments(buf.rewards, buf.dones, self.cfg.gamma)
            ep_returns = np.array([s[3] for s in segs])
            ep_tasks = np.array([buf.task_ids[0, s[0]] for s in segs], dtype=np.int64)
            ep_adv = grpo_advantage(ep_returns, ep_tasks)
            adv = np.zeros_like(buf.rewards)
            for (e, start, end, _), a in zip(segs, ep_adv):
                adv[start : end + 1, e] = a
            buf.advantages = adv
            buf.returns = np.zeros_like(adv)
            return
        bootstrap = self._values(self._normalized(self.obs, update=False))
        adv, rets = compute_gae(
            buf.rewards, buf.values, buf.dones, bootstrap, self.cfg.gamma, self.cfg.tau
        )
        buf.advantages = adv
        buf.returns = rets

    # -- losses ----------------------------------------------------------------

    def _actor_loss_vec(self, obs, ids, actions, old_lp, adv):
        mean, log_std = self.actor.forward(obs, ids)
        lp = gaussian_log_prob(mean, log_std, actions)
        ratio = engine.exp(engine.sub(lp, Tensor(old_lp)))
        adv_t = Tensor(adv)
        surr = engine.minimum(
            engine.mul(ratio, adv_t),
            engine.mul(engine.clip(ratio, 1.0 - self.cfg.e_clip, 1.0 + self.cfg.e_clip), adv_t),
        )
        ent = gaussian_entropy(log_std, actions.shape[1])
        loss_vec = engine.sub(
            engine.mul(surr, Tensor(-1.0)), engine.mul(ent, Tensor(self.cfg.entropy_coef))
        )
        approx_kl = float(np.mean(old_lp - lp.data))
        return loss_vec, approx_kl

    def _critic_loss_vec(self, obs, ids, target):
        v = self.critic.forward(obs, ids)
        return engine.square(engine.sub(v, Tensor(target)))

    def _apply_scheme_step(self, network, params, opt, loss_builder, ids, famo_state, routed):
        """One optimizer step on one network, through the routed scheme."""
        scheme = self.cfg.scheme if routed else "none"
        with Tape() as tape:
            loss_vec = loss_builder()
            grad, famo_report = combined_gradient(
                scheme, tape, params, loss_vec, ids, self.scheme_rng,
                famo_state=famo_state, cagrad_c=self.cfg.cagrad_c,
            )
            mean_loss = float(loss_vec.data.mean())
        new_flat = opt.step(params.flat(), grad, max_grad_norm=self.cfg.max_grad_norm)
        if not np.all(np.isfinite(new_flat)):
            raise TrainingFault("non-finite parameters after update", step=self.grad_updates)
        params.set_flat(new_flat)
        if famo_report is not None:
            present, prev = famo_report
            post_vec = loss_builder().data
            post = np.array([post_vec[ids == k].mean() for k in present])
            prev_full = np.ones(self.world.num_tasks)
            next_full = np.ones(self.world.num_tasks)
            prev_full[present] = prev
            next_full[present] = post
            famo_update(famo_state, prev_full, next_full)
        return mean_loss

    # -- update -------------------------------------------------------------------

    def update(self):
        if self.buffer.advantages is None:
            self._compute_advantages()
        flat = self.buffer.flatten()
        n = len(flat["obs"])
        if self.val_norm is not None:
            self.val_norm.update(flat["returns"][:, None], flat["task_ids"])
            norm_returns = self.val_norm.normalize(flat["returns"][:, None], flat["task_ids"])[:, 0]
        else:
            norm_returns = flat["returns"]
        mb_size = min(self.cfg.minibatch_size, n)
        order = np.arange(n)
        actor_losses, critic_losses, kls = [], [], []
        for _ in range(self.cfg.mini_epochs):
            self.shuffle_rng.shuffle(order)
            for lo in range(0, n, mb_size):
                mb = order[lo : lo + mb_size]
                obs = flat["obs"][mb]
                ids = flat["task_ids"][mb]
                adv = flat["advantages"][mb]
                if not self.critic_free:
                    adv = standardize(adv)
                acts = flat["actions"][mb]
                old_lp = flat["log_probs"][mb]

                kl_box = {}

                def actor_builder():
                    vec, kl = self._actor_loss_vec(obs, ids, acts, old_lp, adv)
                    kl_box["kl"] = kl
                    return vec

                a_loss = self._apply_scheme_step(
                    self.actor, self.actor.params, self.opt_actor, actor_builder,
                    ids, self.famo_actor, routed=self.routing.project_actor,
                )
                actor_losses.append(a_loss)
                kls.append(kl_box["kl"])

                if not self.critic_free:
                    target = norm_returns[mb]
                    c_loss = self._apply_scheme_step(
                        self.critic, self.critic.params, self.opt_critic,
                        lambda: self._critic_loss_vec(obs, ids, target),
                        ids, self.famo_critic, routed=self.routing.project_critic,
                    )
                    critic_losses.append(c_loss)
                self.grad_updates += 1
        if self.cfg.lr_schedule == "adaptive":
            self._adapt_lr(float(np.mean(kls)))
        return {
            "actor_loss": float(np.mean(actor_losses)),
            "critic_loss": float(np.mean(critic_losses)) if critic_losses else 0.0,
            "approx_kl": float(np.mean(kls)),
            "lr": self.lr,
        }

    def _adapt_lr(self, kl: float):
        if kl > 2.0 * self.cfg.kl_threshold:
            self.lr = max(self.lr / 1.5, 1e-6)
        elif kl < 0.5 * self.cfg.kl_threshold:
            self.lr = min(self.lr * 1.5, 1e-2)
        self.opt_actor.lr = self.lr
        if self.opt_critic is not None:
            self.opt_critic.lr = self.lr

    # -- diagnostics -----------------------------------------------------------------

    def cosine_diagnostics(self):
        """Per-task gradient cosine stats for actor (and critic) on one minibatch."""
        flat = self.buffer.flatten()
        mb = np.arange(min(self.cfg.minibatch_size, len(flat["obs"])))
        obs = flat["obs"][mb]
        ids = flat["task_ids"][mb]
        adv = flat["advantages"][mb]
        if not self.critic_free:
            adv = standardize(adv)
        out = {}
        with Tape() as tape:
            vec, _ = self._actor_loss_vec(obs, ids, flat["actions"][mb], flat["log_probs"][mb], adv)
            present, losses = per_task_mean_losses(vec, ids)
            if len(present) >= 2:
                out["actor"] = cosine_stats(task_gradient_set(tape, self.actor.params, present, losses))
        if not self.critic_free:
            if self.val_norm is not None:
                target = self.val_norm.normalize(flat["returns"][mb][:, None], ids)[:, 0]
            else:
                target = flat["returns"][mb]
            with Tape() as tape:
                vec = self._critic_loss_vec(obs, ids, target)
                present, losses = per_task_mean_losses(vec, ids)
                if len(present) >= 2:
                    out["critic"] = cosine_stats(
                        task_gradient_set(tape, self.critic.params, present, losses)
                    )
        return out

    # -- epoch ------------------------------------------------------------------------

    def train_epoch(self):
        events, faults = self.collect()
        self._compute_advantages()
        cosine = self.cosine_diagnostics() if self.cfg.log_cosine else None
        losses = self.update()
        self.epoch_index += 1
        updates_this_epoch = self.cfg.mini_epochs * int(
            np.ceil(self.horizon * self.world.num_envs / min(self.cfg.minibatch_size,
                                                             self.horizon * self.world.num_envs))
        )
        utd = updates_this_epoch / (self.horizon * self.world.num_envs)
        return {
            "events": events,
            "faults": faults,
            "losses": losses,
            "cosine": cosine,
            "utd": float(utd),
            "env_steps": self.env_steps,
            "grad_updates": self.grad_updates,
        }
