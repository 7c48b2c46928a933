"""Feature trunks: vanilla MLP, soft-modularized experts, PaCo, MOORE, CARE.

Each trunk maps (obs array, task ids) to a feature Tensor. Observations
arrive as constants (no gradient), so raw/one-hot splitting happens in numpy
before entering the tape.
"""

from __future__ import annotations

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tensor
from deskrl.autodiff.nn import Linear, Params
from deskrl.errors import ConfigError
from deskrl.nets.config import ArchConfig

_GS_EPS = 1e-10


def _act(name: str):
    if name not in engine.ACTIVATIONS:
        raise ConfigError(f"unknown activation: {name}")
    return engine.ACTIVATIONS[name]


def _hidden_stack(params: Params, name: str, in_dim: int, hidden, activation, rng):
    """Hidden layers only (no output layer); returns (layers, out_dim)."""
    layers = []
    last = in_dim
    for i, h in enumerate(hidden):
        layers.append(Linear(params, f"{name}.h{i}", last, int(h), rng))
        last = int(h)
    return layers, last


class FeedForward:
    """Activation-on-every-layer stack used as encoder inside the trunks."""

    def __init__(self, params, name, in_dim, hidden, out_dim, activation, rng,
                 final_activation=True):
        self.layers, last = _hidden_stack(params, name, in_dim, hidden, activation, rng)
        self.out = Linear(params, f"{name}.out", last, out_dim, rng)
        self.activation = _act(activation)
        self.final_activation = final_activation
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = self.activation(layer(x))
        x = self.out(x)
        return self.activation(x) if self.final_activation else x


class VanillaTrunk:
    """Plain MLP over the concatenated observation (raw + one-hot)."""

    def __init__(self, params: Params, arch: ArchConfig, rng):
        self.activation = _act(arch.activation)
        self.layers, self.feature_dim = _hidden_stack(
            params, "trunk", arch.obs_width, arch.hidden, arch.activation, rng
        )

    def __call__(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        x = Tensor(obs)
        for layer in self.layers:
            x = self.activation(layer(x))
        return x


class SoftModTrunk:
    """Expert layers softly combined by task/state-conditioned routing."""

    def __init__(self, params: Params, arch: ArchConfig, rng):
        self.arch = arch
        d = arch.softmod_d
        self.activation = _act(arch.activation)
        route_in = arch.raw_width if arch.softmod_route_raw else d
        self.state_enc = FeedForward(
            params, "state_enc", arch.raw_width, arch.state_encoder_hidden, d,
            arch.activation, rng,
        )
        self.task_enc = FeedForward(
            params, "task_enc", arch.num_tasks, arch.task_encoder_hidden,
            route_in, arch.activation, rng, final_activation=False,
        )
        self.base_proj = Linear(params, "base_proj", arch.raw_width, d, rng)
        self.routers = []
        self.experts = []
        for l in range(arch.softmod_layers):
            self.routers.append(Linear(params, f"route{l}", route_in, arch.softmod_experts, rng))
            self.experts.append(
                [Linear(params, f"exp{l}_{e}", d, d, rng) for e in range(arch.softmod_experts)]
            )
        self.feature_dim = d
        self._forced_routing = None

    def force_routing(self, probs) -> None:
        """Override routing with fixed probabilities (diagnostics/tests)."""
        self._forced_routing = None if probs is None else np.asarray(probs, dtype=np.float64)

    def __call__(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        raw = obs[:, : self.arch.raw_width]
        onehot = obs[:, self.arch.raw_width :]
        state_emb = self.state_enc(Tensor(raw))
        task_emb = self.task_enc(Tensor(onehot))
        route_state = Tensor(raw) if self.arch.softmod_route_raw else state_emb
        route_base = engine.mul(route_state, task_emb)

        h = self.activation(self.base_proj(Tensor(raw)))
        self.last_routing = []
        for router, experts in zip(self.routers, self.experts):
            if self._forced_routing is not None:
                probs = Tensor(np.broadcast_to(self._forced_routing, (len(obs), len(experts))).copy())
            else:
                probs = engine.softmax(router(route_base))
            self.last_routing.append(probs)
            mixed = None
            for e, expert in enumerate(experts):
                weighted = engine.mul(
                    self.activation(expert(h)),
                    engine.reshape(engine.gather_rows_col(probs, e), (len(obs), 1)),
                )
                mixed = weighted if mixed is None else engine.add(mixed, weighted)
            h = mixed
        return h


class MooreTrunk:
    """Mixture of experts whose representations are orthonormalized per input."""

    def __init__(self, params: Params, arch: ArchConfig, rng):
        self.arch = arch
        d = arch.moore_d
        hidden = tuple([d] * (arch.moore_layers - 1))
        self.experts = [
            FeedForward(params, f"expert{e}", arch.raw_width, hidden, d,
                        arch.activation, rng, final_activation=False)
            for e in range(arch.moore_experts)
        ]
        self.task_enc = FeedForward(
            params, "task_enc", arch.num_tasks, arch.task_encoder_hidden,
            arch.moore_experts, arch.activation, rng, final_activation=False,
        )
        self.agg_before = _act(arch.moore_agg[0])
        self.agg_after = _act(arch.moore_agg[1])
        self.feature_dim = d

    def orthonormalized(self, obs: np.ndarray):
        """Per-input Gram-Schmidt over the expert representations (list of (N, D))."""
        raw = Tensor(obs[:, : self.arch.raw_width])
        reps = [expert(raw) for expert in self.experts]
        basis = []
        for r in reps:
            v = r
            for u in basis:
                coef = engine.sum_(engine.mul(v, u), axis=1, keepdims=True)
                v = engine.sub(v, engine.mul(coef, u))
            sq = engine.sum_(engine.mul(v, v), axis=1, keepdims=True)
            keep = (sq.data >= _GS_EPS * _GS_EPS).astype(np.float64)
            # degenerate residuals are zeroed and drop out of the sum
            safe = engine.add(engine.mul(sq, Tensor(keep)), Tensor(1.0 - keep))
            u = engine.mul(engine.div(v, engine.sqrt(safe)), Tensor(keep))
            basis.append(u)
        return basis

    def __call__(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        basis = self.orthonormalized(obs)
        onehot = obs[:, self.arch.raw_width :]
        w = self.task_enc(Tensor(onehot))  # (N, experts)
        out = None
        for e, u in enumerate(basis):
            ue = self.agg_before(u)
            weighted = engine.mul(ue, engine.reshape(engine.gather_rows_col(w, e), (len(obs), 1)))
            out = weighted if out is None else engine.add(out, weighted)
        return self.agg_after(out)


class CareTrunk:
    """Mixture of encoders attended by a task-context query."""

    def __init__(self, params: Params, arch: ArchConfig, rng):
        self.arch = arch
        d = arch.care_d
        hidden = tuple([d] * (arch.care_encoder_layers - 1))
        self.encoders = [
            FeedForward(params, f"enc{e}", arch.raw_width, hidden, d,
                        arch.activation, rng, final_activation=False)
            for e in range(arch.care_encoders)
        ]
        self.context = FeedForward(
            params, "context", arch.num_tasks, arch.context_hidden, d,
            arch.activation, rng, final_activation=False,
        )
        if not arch.context_bias:
            raise ConfigError("context encoder without bias is not supported")
        self.post = FeedForward(
            params, "post_attn", d, arch.attention_hidden, arch.attention_hidden[-1],
            arch.activation, rng,
        )
        self.feature_dim = arch.attention_hidden[-1]

    def attention_weights(self, obs: np.ndarray):
        raw = Tensor(obs[:, : self.arch.raw_width])
        onehot = obs[:, self.arch.raw_width :]
        reps = [enc(raw) for enc in self.encoders]
        query = self.context(Tensor(onehot))
        scores = [
            engine.sum_(engine.mul(query, rep), axis=1, keepdims=True) for rep in reps
        ]
        stacked = engine.concat_last(scores)  # (N, m)
        probs = engine.softmax(engine.mul(stacked, Tensor(1.0 / self.arch.care_temperature)))
        return probs, reps

    def __call__(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        probs, reps = self.attention_weights(obs)
        self.last_attention = probs
        mixed = None
        for e, rep in enumerate(reps):
            weighted = engine.mul(rep, engine.reshape(engine.gather_rows_col(probs, e), (len(obs), 1)))
            mixed = weighted if mixed is None else engine.add(mixed, weighted)
        return self.post(mixed)


class PacoNet:
    """Full per-task networks composed from a shared parameter matrix.

    A base matrix phi (P, K_comp) and a task-encoded simplex weight w_k give
    task parameters theta_k = phi @ w_k, reshaped into an MLP of width
    ``paco_d`` and depth ``paco_layers``. Unlike the other trunks this net
    produces final outputs directly.
    """

    def __init__(self, params: Params, arch: ArchConfig, out_dim: int, rng):
        self.arch = arch
        self.out_dim = out_dim
        self.activation = _act(arch.activation)
        dims = [arch.obs_width] + [arch.paco_d] * arch.paco_layers + [out_dim]
        self.slices = []  # (w_slice, b_slice, in_dim, out_dim) offsets into theta
        off = 0
        for i in range(len(dims) - 1):
            n_in, n_out = dims[i], dims[i + 1]
            self.slices.append((off, off + n_in * n_out, n_in, n_out))
            off += n_in * n_out + n_out
        self.theta_size = off
        base = np.stack(
            [self._init_theta(dims, rng) for _ in range(arch.paco_k)], axis=1
        )
        self.phi = params.add("phi", base)  # (P, K_comp)
        self.encoder = Linear(
            params, "task_enc", arch.num_tasks, arch.paco_k, rng,
            bias=arch.task_encoder_bias,
        )

    def _init_theta(self, dims, rng):
        from deskrl.autodiff.nn import orthogonal_init

        chunks = []
        for i in range(len(dims) - 1):
            chunks.append(orthogonal_init(rng, (dims[i], dims[i + 1])).ravel())
            chunks.append(np.zeros(dims[i + 1]))
        return np.concatenate(chunks)

    def compositional_weights(self, onehot: np.ndarray) -> Tensor:
        return engine.softmax(self.encoder(Tensor(onehot)))

    def __call__(self, obs: np.ndarray, task_ids: np.ndarray) -> Tensor:
        task_ids = np.asarray(task_ids)
        present = np.unique(task_ids)
        eye = np.eye(self.arch.num_tasks)[present]
        w = self.compositional_weights(eye)  # (n_present, K_comp)
        outputs = []
        order = []
        for row, k in enumerate(present):
            mask = np.nonzero(task_ids == k)[0]
            order.append(mask)
            w_k = engine.reshape(engine.gather_rows(w, np.array([row])), (self.arch.paco_k, 1))
            theta = engine.reshape(engine.matmul(self.phi, w_k), (self.theta_size,))
            x = Tensor(obs[mask])
            for li, (w_lo, w_hi, n_in, n_out) in enumerate(self.slices):
                wt = engine.reshape(engine.slice1d(theta, w_lo, w_hi), (n_in, n_out))
                bt = engine.slice1d(theta, w_hi, w_hi + n_out)
                x = engine.add(engine.matmul(x, wt), bt)
                if li < len(self.slices) - 1:
                    x = self.activation(x)
            outputs.append(x)
        stacked = engine.concat_rows(outputs)
        inverse = np.empty(len(task_ids), dtype=np.int64)
        inverse[np.concatenate(order)] = np.arange(len(task_ids))
        return engine.gather_rows(stacked, inverse)


TRUNKS = {
    "vanilla": VanillaTrunk,
    "multihead": VanillaTrunk,
    "softmod": SoftModTrunk,
    "moore": MooreTrunk,
    "care": CareTrunk,
}
