"""Actor/critic networks assembled from a trunk kind and head mode."""

from __future__ import annotations

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tensor
from deskrl.autodiff.nn import Params
from deskrl.nets.config import ArchConfig
from deskrl.nets.heads import MultiHead, SharedHead
from deskrl.nets.trunks import TRUNKS, PacoNet


def _build_head(params, arch, in_dim, out_dim, rng, name):
    if arch.multi_head:
        return MultiHead(params, name, in_dim, out_dim, arch.num_tasks, rng)
    return SharedHead(params, name, in_dim, out_dim, rng)


class ActorNet:
    """Maps observations to a diagonal Gaussian: state-dependent mean plus a
    state-independent learned log-std per action dim (initialized to 0)."""

    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.params = Params()
        if arch.kind == "paco":
            self.net = PacoNet(self.params, arch, arch.act_dim, rng)
            self.head = None
        else:
            self.trunk = TRUNKS[arch.kind](self.params, arch, rng)
            self.head = _build_head(
                self.params, arch, self.trunk.feature_dim, arch.act_dim, rng, "pi"
            )
        self.log_std = self.params.add("log_std", np.zeros(arch.act_dim))

    def forward(self, obs: np.ndarray, task_ids: np.ndarray):
        if obs.shape[1] != self.arch.obs_width:
            from deskrl.errors import ConfigError

            raise ConfigError(
                f"observation width {obs.shape[1]} != expected {self.arch.obs_width}"
            )
        if self.head is None:
            mean = self.net(obs, task_ids)
        else:
            mean = self.head(self.trunk(obs, task_ids), task_ids)
        return mean, self.log_std


class CriticNet:
    def __init__(self, arch: ArchConfig, rng: np.random.Generator):
        self.arch = arch
        self.params = Params()
        if arch.kind == "paco":
            self.net = PacoNet(self.params, arch, 1, rng)
            self.head = None
        else:
            self.trunk = TRUNKS[arch.kind](self.params, arch, rng)
            self.head = _build_head(
                self.params, arch, self.trunk.feature_dim, 1, rng, "v"
            )

    def forward(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        if self.head is None:
            out = self.net(obs, task_ids)
        else:
            out = self.head(self.trunk(obs, task_ids), task_ids)
        return engine.reshape(out, (len(obs),))


def gaussian_log_prob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    """Log-density of actions under the diagonal Gaussian, summed over dims."""
    a = Tensor(actions)
    inv_var = engine.exp(engine.mul(log_std, Tensor(-2.0)))
    diff = engine.sub(a, mean)
    quad = engine.mul(engine.mul(engine.square(diff), inv_var), Tensor(0.5))
    per_dim = engine.add(quad, log_std)
    total = engine.sum_(per_dim, axis=1)
    const = 0.5 * np.log(2.0 * np.pi) * actions.shape[1]
    return engine.mul(engine.add(total, Tensor(const)), Tensor(-1.0))


def gaussian_entropy(log_std: Tensor, act_dim: int) -> Tensor:
    """Entropy of the diagonal Gaussian (state-independent std)."""
    const = 0.5 * act_dim * (1.0 + np.log(2.0 * np.pi))
    return engine.add(engine.sum_(log_std), Tensor(const))


def sample_actions(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator):
    std = np.exp(log_std)
    return mean + std * rng.standard_normal(mean.shape)
