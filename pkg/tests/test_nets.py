import numpy as np
import pytest

from deskrl.autodiff import Params, Tape, Tensor, backward, engine
from deskrl.errors import ConfigError
from deskrl.nets import ActorNet, ArchConfig, CriticNet, FactorizedQNet, gaussian_log_prob
from deskrl.nets.trunks import CareTrunk, MooreTrunk, PacoNet, SoftModTrunk


def arch(kind="vanilla", num_tasks=3, raw_width=5, **kw):
    return ArchConfig(kind=kind, num_tasks=num_tasks, raw_width=raw_width, act_dim=2,
                      hidden=(8, 8), **kw)


def make_obs(rng, n, a: ArchConfig, task_ids=None):
    raw = rng.standard_normal((n, a.raw_width))
    if task_ids is None:
        task_ids = rng.integers(0, a.num_tasks, n)
    onehot = np.eye(a.num_tasks)[task_ids]
    return np.concatenate([raw, onehot], axis=1), task_ids


def fd_gradient(f, params, h=1e-6):
    base = params.flat()
    grad = np.zeros_like(base)
    for i in range(base.size):
        v = base.copy()
        v[i] = base[i] + h
        params.set_flat(v)
        up = f()
        v[i] = base[i] - h
        params.set_flat(v)
        down = f()
        grad[i] = (up - down) / (2.0 * h)
    params.set_flat(base)
    return grad


def check_gradients(net, obs, task_ids, atol=1e-4):
    def loss_value():
        with Tape():
            out = net.forward(obs, task_ids)
            out = out[0] if isinstance(out, tuple) else out
            return engine.mean(engine.square(out)).item()

    with Tape() as tape:
        out = net.forward(obs, task_ids)
        out = out[0] if isinstance(out, tuple) else out
        backward(tape, engine.mean(engine.square(out)))
    got = net.params.grad_flat()
    want = fd_gradient(loss_value, net.params)
    denom = np.maximum(np.abs(want), 1e-5)
    assert np.max(np.abs(got - want) / denom) < atol


# --- vanilla -----------------------------------------------------------------


def test_vanilla_single_task_matches_plain_mlp():
    rng = np.random.default_rng(0)
    a = arch(num_tasks=1, activation="tanh")
    actor = ActorNet(a, np.random.default_rng(1))
    obs, ids = make_obs(rng, 6, a, task_ids=np.zeros(6, dtype=int))
    with Tape():
        mean, _ = actor.forward(obs, ids)
    p = actor.params
    h0 = np.tanh(obs @ p["trunk.h0.w"].data + p["trunk.h0.b"].data)
    h1 = np.tanh(h0 @ p["trunk.h1.w"].data + p["trunk.h1.b"].data)
    want = h1 @ p["pi.w"].data + p["pi.b"].data
    np.testing.assert_allclose(mean.data, want, atol=1e-12)


def test_vanilla_onehot_permutation_invariance():
    # permuting one-hot channels together with first-layer columns is a no-op
    rng = np.random.default_rng(2)
    a = arch(activation="tanh")
    actor = ActorNet(a, np.random.default_rng(3))
    obs, ids = make_obs(rng, 5, a)
    with Tape():
        base, _ = actor.forward(obs, ids)
    perm = np.array([2, 0, 1])
    w0 = actor.params["trunk.h0.w"]
    original = w0.data.copy()
    w0.data = original.copy()
    w0.data[a.raw_width :, :] = original[a.raw_width :, :][perm]
    obs_perm = obs.copy()
    obs_perm[:, a.raw_width :] = obs[:, a.raw_width :][:, perm]
    with Tape():
        permuted, _ = actor.forward(obs_perm, ids)
    np.testing.assert_allclose(permuted.data, base.data, atol=1e-12)
    w0.data = original


def test_vanilla_rejects_wrong_width():
    a = arch()
    actor = ActorNet(a, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        actor.forward(np.zeros((2, a.obs_width + 1)), np.zeros(2, dtype=int))


def test_vanilla_gradient_check():
    rng = np.random.default_rng(4)
    a = arch(activation="tanh")
    actor = ActorNet(a, np.random.default_rng(5))
    obs, ids = make_obs(rng, 4, a)
    check_gradients(actor, obs, ids)


# --- multihead ---------------------------------------------------------------


def test_multihead_only_selected_head_gets_gradient():
    rng = np.random.default_rng(6)
    a = arch(kind="multihead")
    critic = CriticNet(a, np.random.default_rng(7))
    obs, _ = make_obs(rng, 4, a, task_ids=np.full(4, 1))
    ids = np.full(4, 1)
    with Tape() as tape:
        v = critic.forward(obs, ids)
        backward(tape, engine.mean(engine.square(v)))
    for k in range(a.num_tasks):
        g = critic.params[f"v.task{k}.w"].grad
        if k == 1:
            assert g is not None and np.any(g != 0)
        else:
            assert g is None or not np.any(g != 0)


def test_multihead_equals_shared_when_heads_identical():
    rng = np.random.default_rng(8)
    a_mh = arch(kind="multihead")
    a_sh = arch(kind="vanilla")
    mh = CriticNet(a_mh, np.random.default_rng(9))
    sh = CriticNet(a_sh, np.random.default_rng(9))
    # copy trunk and make every MH head equal to the SH head
    for name in ("trunk.h0", "trunk.h1"):
        mh.params[f"{name}.w"].data = sh.params[f"{name}.w"].data.copy()
        mh.params[f"{name}.b"].data = sh.params[f"{name}.b"].data.copy()
    for k in range(a_mh.num_tasks):
        mh.params[f"v.task{k}.w"].data = sh.params["v.w"].data.copy()
        mh.params[f"v.task{k}.b"].data = sh.params["v.b"].data.copy()
    obs, ids = make_obs(rng, 6, a_mh)
    with Tape():
        np.testing.assert_allclose(
            mh.forward(obs, ids).data, sh.forward(obs, ids).data, atol=1e-12
        )


def test_multihead_heads_differ_for_same_features():
    rng = np.random.default_rng(10)
    a = arch(kind="multihead")
    critic = CriticNet(a, np.random.default_rng(11))
    raw = rng.standard_normal((1, a.raw_width))
    obs0 = np.concatenate([raw, np.eye(a.num_tasks)[[0]]], axis=1)
    obs1 = np.concatenate([raw, np.eye(a.num_tasks)[[1]]], axis=1)
    # same trunk features requires identical full obs; evaluate both heads on obs0
    with Tape():
        v0 = critic.forward(obs0, np.array([0])).data
        # reuse the same observation, switching only the head
        v1 = critic.forward(obs0, np.array([1])).data
    assert abs(v0 - v1) > 1e-8
    del obs1


# --- soft modularization --------------------------------------------------------


def test_softmod_uniform_routing_is_expert_average():
    # per-layer identity, so use a single mixing layer
    rng = np.random.default_rng(12)
    a = arch(kind="softmod", softmod_layers=1)
    trunk_params = Params()
    trunk = SoftModTrunk(trunk_params, a, np.random.default_rng(13))
    obs, ids = make_obs(rng, 5, a)
    trunk.force_routing(np.full(a.softmod_experts, 1.0 / a.softmod_experts))
    with Tape():
        mixed = trunk(obs, ids).data
    # average of experts computed by forcing one-hot routing to each expert
    outs = []
    for e in range(a.softmod_experts):
        probs = np.zeros(a.softmod_experts)
        probs[e] = 1.0
        trunk.force_routing(probs)
        with Tape():
            outs.append(trunk(obs, ids).data)
    trunk.force_routing(None)
    np.testing.assert_allclose(mixed, np.mean(outs, axis=0), atol=1e-10)


def test_softmod_hard_routing_selects_single_expert_path():
    rng = np.random.default_rng(14)
    a = arch(kind="softmod")
    params = Params()
    trunk = SoftModTrunk(params, a, np.random.default_rng(15))
    obs, ids = make_obs(rng, 3, a)
    probs = np.zeros(a.softmod_experts)
    probs[1] = 1.0
    trunk.force_routing(probs)
    with Tape():
        out = trunk(obs, ids)
    # manual single-expert forward
    raw = obs[:, : a.raw_width]
    h = trunk.activation(trunk.base_proj(Tensor(raw))).data
    for layer_experts in trunk.experts:
        with Tape():
            h = trunk.activation(layer_experts[1](Tensor(h))).data
    np.testing.assert_allclose(out.data, h, atol=1e-10)
    trunk.force_routing(None)


def test_softmod_routing_rows_on_simplex():
    rng = np.random.default_rng(16)
    a = arch(kind="softmod")
    actor = ActorNet(a, np.random.default_rng(17))
    obs, ids = make_obs(rng, 50, a)
    with Tape():
        actor.forward(obs, ids)
    for probs in actor.trunk.last_routing:
        assert np.all(probs.data >= 0)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)


def test_softmod_gradient_check():
    rng = np.random.default_rng(18)
    a = arch(kind="softmod", activation="tanh")
    actor = ActorNet(a, np.random.default_rng(19))
    obs, ids = make_obs(rng, 3, a)
    check_gradients(actor, obs, ids)


# --- paco ------------------------------------------------------------------------


def test_paco_single_vector_shares_network_across_tasks():
    rng = np.random.default_rng(20)
    a = arch(kind="paco", paco_k=1)
    critic = CriticNet(a, np.random.default_rng(21))
    # K_comp = 1: softmax over one logit is exactly 1, so theta_k == phi for
    # every task regardless of the encoder weights
    with Tape():
        w = critic.net.compositional_weights(np.eye(a.num_tasks)).data
    np.testing.assert_array_equal(w, np.ones((a.num_tasks, 1)))
    # and first-layer one-hot rows zeroed makes outputs task-independent
    critic.net.phi.data = critic.net.phi.data.copy()
    w_lo, w_hi, n_in, n_out = critic.net.slices[0]
    block = critic.net.phi.data[w_lo:w_hi, 0].reshape(n_in, n_out)
    block[a.raw_width:, :] = 0.0
    critic.net.phi.data[w_lo:w_hi, 0] = block.ravel()
    raw = rng.standard_normal((4, a.raw_width))
    obs0 = np.concatenate([raw, np.eye(a.num_tasks)[np.zeros(4, int)]], axis=1)
    obs2 = np.concatenate([raw, np.eye(a.num_tasks)[np.full(4, 2)]], axis=1)
    with Tape():
        v0 = critic.forward(obs0, np.zeros(4, int)).data
        v2 = critic.forward(obs2, np.full(4, 2)).data
    np.testing.assert_allclose(v0, v2, atol=1e-12)


def test_paco_basis_vector_selects_phi_column():
    rng = np.random.default_rng(22)
    a = arch(kind="paco", paco_k=4, num_tasks=4)
    net_params = Params()
    net = PacoNet(net_params, a, 1, np.random.default_rng(23))
    # make the encoder pick a hard basis vector for task 0
    enc_w = net.encoder.w
    enc_w.data = np.zeros_like(enc_w.data)
    enc_w.data[0, 2] = 60.0  # softmax saturates onto component 2
    obs, ids = make_obs(rng, 3, a, task_ids=np.zeros(3, int))
    with Tape():
        out = net(obs, ids).data
    theta = net.phi.data[:, 2]
    x = obs
    for li, (w_lo, w_hi, n_in, n_out) in enumerate(net.slices):
        w = theta[w_lo:w_hi].reshape(n_in, n_out)
        b = theta[w_hi : w_hi + n_out]
        x = x @ w + b
        if li < len(net.slices) - 1:
            x = np.where(x > 0, x, np.exp(np.minimum(x, 0)) - 1)  # elu
    np.testing.assert_allclose(out, x, atol=1e-8)


def test_paco_compositional_weights_on_simplex():
    a = arch(kind="paco")
    actor = ActorNet(a, np.random.default_rng(24))
    eye = np.eye(a.num_tasks)
    with Tape():
        w = actor.net.compositional_weights(eye).data
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_paco_gradient_check():
    rng = np.random.default_rng(25)
    a = arch(kind="paco", activation="tanh", paco_k=3, paco_d=6, paco_layers=1)
    actor = ActorNet(a, np.random.default_rng(26))
    obs, ids = make_obs(rng, 4, a)
    check_gradients(actor, obs, ids)


def test_paco_rejects_multihead():
    with pytest.raises(ConfigError):
        arch(kind="paco", multi_head=True)


# --- moore -------------------------------------------------------------------------


def test_moore_textbook_gram_schmidt():
    # expert outputs (1,0) and (1,1) orthonormalize to (1,0), (0,1)
    rng = np.random.default_rng(27)
    a = arch(kind="moore", moore_experts=2, moore_d=2, num_tasks=2, raw_width=2)
    params = Params()
    trunk = MooreTrunk(params, a, np.random.default_rng(28))

    class FixedExpert:
        def __init__(self, vec):
            self.vec = np.asarray(vec, dtype=np.float64)

        def __call__(self, x):
            return Tensor(np.tile(self.vec, (len(x.data), 1)))

    trunk.experts = [FixedExpert([1.0, 0.0]), FixedExpert([1.0, 1.0])]
    with Tape():
        basis = trunk.orthonormalized(np.zeros((3, a.obs_width)))
    np.testing.assert_allclose(basis[0].data, np.tile([1.0, 0.0], (3, 1)), atol=1e-12)
    np.testing.assert_allclose(basis[1].data, np.tile([0.0, 1.0], (3, 1)), atol=1e-12)


def test_moore_single_expert_normalizes():
    rng = np.random.default_rng(29)
    a = arch(kind="moore", moore_experts=1)
    params = Params()
    trunk = MooreTrunk(params, a, np.random.default_rng(30))
    obs, ids = make_obs(rng, 4, a)
    with Tape():
        basis = trunk.orthonormalized(obs)
    norms = np.linalg.norm(basis[0].data, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-10)


def test_moore_pairwise_orthogonality_1000_inputs():
    rng = np.random.default_rng(31)
    a = arch(kind="moore", moore_experts=4, moore_d=16)
    params = Params()
    trunk = MooreTrunk(params, a, np.random.default_rng(32))
    obs, ids = make_obs(rng, 1000, a)
    with Tape():
        basis = trunk.orthonormalized(obs)
    worst = 0.0
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            dots = np.abs(np.sum(basis[i].data * basis[j].data, axis=1))
            worst = max(worst, dots.max())
    assert worst < 1e-8


def test_moore_degenerate_expert_dropped_to_zero():
    a = arch(kind="moore", moore_experts=2, moore_d=3, raw_width=2, num_tasks=2)
    params = Params()
    trunk = MooreTrunk(params, a, np.random.default_rng(33))

    class FixedExpert:
        def __init__(self, vec):
            self.vec = np.asarray(vec, dtype=np.float64)

        def __call__(self, x):
            return Tensor(np.tile(self.vec, (len(x.data), 1)))

    trunk.experts = [FixedExpert([1.0, 0.0, 0.0]), FixedExpert([1.0, 0.0, 0.0])]
    with Tape():
        basis = trunk.orthonormalized(np.zeros((2, a.obs_width)))
    np.testing.assert_allclose(basis[1].data, 0.0, atol=1e-12)


def test_moore_gradient_check():
    rng = np.random.default_rng(34)
    a = arch(kind="moore", activation="tanh", moore_experts=2, moore_d=5)
    actor = ActorNet(a, np.random.default_rng(35))
    obs, ids = make_obs(rng, 3, a)
    check_gradients(actor, obs, ids, atol=2e-4)


# --- care -------------------------------------------------------------------------


def test_care_huge_temperature_gives_uniform_average():
    rng = np.random.default_rng(36)
    a = arch(kind="care", care_temperature=1e6, care_encoders=3)
    params = Params()
    trunk = CareTrunk(params, a, np.random.default_rng(37))
    obs, ids = make_obs(rng, 6, a)
    with Tape():
        probs, reps = trunk.attention_weights(obs)
    np.testing.assert_allclose(probs.data, 1.0 / 3.0, atol=1e-6)


def test_care_single_encoder_weight_is_one():
    rng = np.random.default_rng(38)
    a = arch(kind="care", care_encoders=1)
    params = Params()
    trunk = CareTrunk(params, a, np.random.default_rng(39))
    obs, ids = make_obs(rng, 4, a)
    with Tape():
        probs, _ = trunk.attention_weights(obs)
    np.testing.assert_allclose(probs.data, 1.0, atol=1e-15)


def test_care_weights_on_simplex():
    rng = np.random.default_rng(40)
    a = arch(kind="care")
    actor = ActorNet(a, np.random.default_rng(41))
    obs, ids = make_obs(rng, 30, a)
    with Tape():
        actor.forward(obs, ids)
    att = actor.trunk.last_attention.data
    assert np.all(att >= 0)
    np.testing.assert_allclose(att.sum(axis=1), 1.0, atol=1e-9)


def test_care_rejects_non_positive_temperature():
    with pytest.raises(ConfigError):
        arch(kind="care", care_temperature=0.0)


def test_care_gradient_check():
    rng = np.random.default_rng(42)
    a = arch(kind="care", activation="tanh", care_encoders=2, care_d=6,
             attention_hidden=(6,), context_hidden=(6,))
    actor = ActorNet(a, np.random.default_rng(43))
    obs, ids = make_obs(rng, 3, a)
    check_gradients(actor, obs, ids)


# --- factorized Q net ---------------------------------------------------------------


def test_qnet_output_shape_and_gradient():
    rng = np.random.default_rng(44)
    net = FactorizedQNet(7, act_dim=2, bins=3, hidden_dim=8, num_blocks=2,
                         rng=np.random.default_rng(45))
    obs = rng.standard_normal((5, 7))
    with Tape() as tape:
        q = net.forward(obs)
        assert q.data.shape == (5, 2, 3)
        backward(tape, engine.mean(engine.square(q)))
    assert np.all(np.isfinite(net.params.grad_flat()))


def test_gaussian_log_prob_matches_closed_form():
    rng = np.random.default_rng(46)
    mean = rng.standard_normal((6, 2))
    log_std = np.array([0.3, -0.2])
    acts = rng.standard_normal((6, 2))
    with Tape():
        lp = gaussian_log_prob(Tensor(mean), Tensor(log_std), acts)
    std = np.exp(log_std)
    want = (-0.5 * ((acts - mean) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
    np.testing.assert_allclose(lp.data, want, atol=1e-12)
