"""Layer-normalized residual Q network with per-actuator factorized outputs."""

from __future__ import annotations

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tensor
from deskrl.autodiff.nn import LayerNormBlock, Linear, Params


class FactorizedQNet:
    """Q values of shape (batch, actuators, bins).

    Normalization inside the approximator (LayerNorm blocks, optionally
    residual) replaces target networks and replay tricks for parallel
    Q-learning.
    """

    def __init__(self, obs_width: int, act_dim: int, bins: int, hidden_dim: int,
                 num_blocks: int, rng: np.random.Generator, residual: bool = True):
        self.act_dim = act_dim
        self.bins = bins
        self.params = Params()
        self.inp = Linear(self.params, "inp", obs_width, hidden_dim, rng)
        self.blocks = [
            LayerNormBlock(self.params, f"block{i}", hidden_dim, rng, residual=residual)
            for i in range(num_blocks)
        ]
        self.head = Linear(self.params, "head", hidden_dim, act_dim * bins, rng, gain=0.01)

    def forward(self, obs: np.ndarray) -> Tensor:
        x = engine.relu(self.inp(Tensor(obs)))
        for block in self.blocks:
            x = block(x)
        out = self.head(x)
        return engine.reshape(out, (len(obs), self.act_dim, self.bins))
