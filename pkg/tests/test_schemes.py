import numpy as np
import pytest

from deskrl.autodiff import Params, Tape, Tensor, engine, reset_backward_calls, backward_calls
from deskrl.errors import ContractViolation
from deskrl.schemes import (
    FamoState,
    TaskGradientSet,
    cagrad,
    cagrad_dual_objective,
    cagrad_dual_solve,
    combined_gradient,
    cosine_stats,
    famo_update,
    famo_weights,
    pcgrad,
    project_simplex,
)


# --- PCGrad ---------------------------------------------------------------


def test_pcgrad_projection_example():
    # g1=(1,0) projected against g2=(-1,1) -> (0.5, 0.5), orthogonal to g2
    g = TaskGradientSet(np.array([[1.0, 0.0], [-1.0, 1.0]]), [0, 1])
    rng = np.random.default_rng(0)
    out = pcgrad(g, rng)
    # verify the single projection directly
    g1, g2 = g.rows
    proj = g1 - (g1 @ g2) / (g2 @ g2) * g2
    np.testing.assert_allclose(proj, [0.5, 0.5], atol=1e-12)
    assert abs(proj @ g2) < 1e-12
    # the other row projects off g1 symmetrically; output is the mean of both
    proj2 = g2 - (g2 @ g1) / (g1 @ g1) * g1
    np.testing.assert_allclose(out, (proj + proj2) / 2.0, atol=1e-12)


def test_pcgrad_no_conflict_identity():
    rng = np.random.default_rng(1)
    rows = np.abs(rng.standard_normal((4, 6)))  # all dots >= 0
    g = TaskGradientSet(rows, np.arange(4))
    out = pcgrad(g, rng)
    np.testing.assert_array_equal(out, g.g0)


def test_pcgrad_two_tasks_orthogonal_after_projection():
    rng = np.random.default_rng(2)
    for _ in range(20):
        rows = rng.standard_normal((2, 5))
        g = TaskGradientSet(rows, [0, 1])
        g1, g2 = rows
        p1 = g1.copy()
        if p1 @ g2 < 0:
            p1 = p1 - (p1 @ g2) / (g2 @ g2) * g2
        assert p1 @ g2 >= -1e-10


def test_pcgrad_zero_row_skipped():
    g = TaskGradientSet(np.array([[1.0, 0.0], [0.0, 0.0]]), [0, 1])
    out = pcgrad(g, np.random.default_rng(0))
    np.testing.assert_allclose(out, [0.5, 0.0])


def test_pcgrad_requires_two_tasks():
    with pytest.raises(ContractViolation):
        pcgrad(TaskGradientSet(np.ones((1, 3)), [0]), np.random.default_rng(0))


# --- CAGrad ---------------------------------------------------------------


def test_cagrad_c_zero_returns_mean_gradient():
    rng = np.random.default_rng(3)
    g = TaskGradientSet(rng.standard_normal((3, 4)), np.arange(3))
    np.testing.assert_array_equal(cagrad(g, 0.0), g.g0)


def test_cagrad_opposite_gradients_zero_mean():
    v = np.array([1.0, -2.0, 0.5])
    g = TaskGradientSet(np.stack([v, -v]), [0, 1])
    np.testing.assert_array_equal(cagrad(g, 0.5), np.zeros(3))


def test_cagrad_k2_example_against_grid_search():
    rng = np.random.default_rng(4)
    rows = rng.standard_normal((2, 3))
    g = TaskGradientSet(rows, [0, 1])
    c = 0.4
    d = cagrad(g, c)
    w1 = np.arange(0.0, 1.0 + 1e-12, 1e-4)
    W = np.stack([w1, 1.0 - w1], axis=1)
    gws = W @ rows
    norms = np.linalg.norm(gws, axis=1)
    ok = norms > 1e-12
    ds = g.g0[None, :] + c * np.linalg.norm(g.g0) * gws[ok] / norms[ok, None]
    best_primal = np.max(np.min(ds @ rows.T, axis=1))
    assert np.min(rows @ d) >= best_primal - 1e-3
    assert np.linalg.norm(d - g.g0) <= c * np.linalg.norm(g.g0) + 1e-9


def test_cagrad_feasibility_and_dual_gap_200_instances():
    # Acceptance: 200 random K in {2,3}, P <= 4 instances.
    rng = np.random.default_rng(2024)
    for _ in range(200):
        k = int(rng.integers(2, 4))
        p = int(rng.integers(1, 5))
        rows = rng.standard_normal((k, p))
        c = float(rng.uniform(0.05, 0.95))
        g = TaskGradientSet(rows, np.arange(k))
        d = cagrad(g, c)
        assert np.linalg.norm(d - g.g0) <= c * np.linalg.norm(g.g0) * (1.0 + 1e-9)
        _, f_solver = cagrad_dual_solve(g, c)
        if k == 2:
            w1 = np.arange(0.0, 1.0 + 1e-12, 1e-4)
            W = np.stack([w1, 1.0 - w1], axis=1)
        else:
            a = np.arange(0.0, 1.0 + 1e-12, 5e-3)
            W = np.array([(x, y, 1.0 - x - y) for x in a for y in a if x + y <= 1.0 + 1e-12])
        f_oracle = min(
            cagrad_dual_objective(w, rows, g.g0, c) for w in W
        )
        assert f_solver <= f_oracle + 1e-3


def test_project_simplex():
    np.testing.assert_allclose(project_simplex(np.array([0.3, 0.3])), [0.5, 0.5])
    out = project_simplex(np.array([10.0, -5.0, 0.0]))
    np.testing.assert_allclose(out, [1.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.standard_normal(5) * 3
        p = project_simplex(v)
        assert abs(p.sum() - 1.0) < 1e-12 and np.all(p >= 0)


def test_cagrad_rejects_bad_radius():
    g = TaskGradientSet(np.ones((2, 2)), [0, 1])
    with pytest.raises(ContractViolation):
        cagrad(g, 1.0)


# --- FAMO -----------------------------------------------------------------


def test_famo_uniform_at_init():
    state = FamoState(num_tasks=4)
    np.testing.assert_allclose(famo_weights(state), 0.25)


def test_famo_symmetry_identical_losses():
    state = FamoState(num_tasks=3, w_lr=0.1)
    for step in range(10):
        losses = np.full(3, 1.0 / (step + 1.0))
        nxt = np.full(3, 1.0 / (step + 2.0))
        famo_update(state, losses, nxt)
        np.testing.assert_allclose(famo_weights(state), 1.0 / 3.0, atol=1e-12)


def test_famo_stagnating_task_weight_strictly_increases():
    state = FamoState(num_tasks=3, w_lr=0.05, gamma=1e-3)
    w_hist = [famo_weights(state)[0]]
    loss_others = 1.0
    for _ in range(10):
        prev = np.array([1.0, loss_others, loss_others])
        loss_others *= 0.8  # improving tasks
        nxt = np.array([1.0, loss_others, loss_others])
        famo_update(state, prev, nxt)
        w_hist.append(famo_weights(state)[0])
    diffs = np.diff(w_hist)
    assert np.all(diffs > 0)


def test_famo_weights_stay_on_simplex():
    rng = np.random.default_rng(7)
    state = FamoState(num_tasks=5, w_lr=0.5)
    for _ in range(100):
        prev = np.abs(rng.standard_normal(5)) + 0.01
        nxt = np.abs(rng.standard_normal(5)) + 0.01
        famo_update(state, prev, nxt)
        w = famo_weights(state)
        assert abs(w.sum() - 1.0) < 1e-9 and np.all(w >= 0)


def test_famo_loss_clip_guards_log():
    state = FamoState(num_tasks=2, epsilon=1e-2)
    famo_update(state, np.array([-5.0, 1.0]), np.array([-9.0, 0.5]))
    assert np.all(np.isfinite(state.xi))


# --- cosine stats ----------------------------------------------------------


def test_cosine_orthogonal_and_aligned():
    g = TaskGradientSet(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
    s = cosine_stats(g)
    assert s["mean"] == pytest.approx(0.0, abs=1e-12)
    g2 = TaskGradientSet(np.array([[1.0, 0.0], [2.0, 0.0]]), [0, 1])
    assert cosine_stats(g2)["mean"] == pytest.approx(1.0)
    g3 = TaskGradientSet(np.array([[1.0, 0.0], [-3.0, 0.0]]), [0, 1])
    assert cosine_stats(g3)["min"] == pytest.approx(-1.0)


def test_cosine_k3_matches_pairwise_loop_oracle():
    rng = np.random.default_rng(9)
    rows = rng.standard_normal((3, 5))
    g = TaskGradientSet(rows, np.arange(3))
    s = cosine_stats(g)
    pairs = []
    for i in range(3):
        for j in range(i + 1, 3):
            pairs.append(rows[i] @ rows[j] / (np.linalg.norm(rows[i]) * np.linalg.norm(rows[j])))
    assert s["mean"] == pytest.approx(np.mean(pairs), abs=1e-12)
    assert s["min"] == pytest.approx(np.min(pairs), abs=1e-12)
    assert s["max"] == pytest.approx(np.max(pairs), abs=1e-12)


def test_cosine_invariances():
    rng = np.random.default_rng(10)
    rows = rng.standard_normal((4, 6))
    base = cosine_stats(TaskGradientSet(rows, np.arange(4)))
    perm = rng.permutation(4)
    shuffled = cosine_stats(TaskGradientSet(rows[perm], np.arange(4)))
    assert base["mean"] == pytest.approx(shuffled["mean"], abs=1e-12)
    scaled_rows = rows.copy()
    scaled_rows[2] *= 7.3
    scaled = cosine_stats(TaskGradientSet(scaled_rows, np.arange(4)))
    assert base["mean"] == pytest.approx(scaled["mean"], abs=1e-12)
    assert base["min"] == pytest.approx(scaled["min"], abs=1e-12)


def test_cosine_zero_rows_excluded():
    rows = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    s = cosine_stats(TaskGradientSet(rows, np.arange(3)))
    assert s["excluded"] == 1
    assert s["mean"] == pytest.approx(0.0, abs=1e-12)
    all_zero = cosine_stats(TaskGradientSet(np.zeros((2, 3)), [0, 1]))
    assert all_zero["mean"] is None and all_zero["excluded"] == 2


# --- routing / backward-pass accounting -------------------------------------


def _quadratic_setup(k_tasks=3, n_per=4, dim=5, seed=0):
    """Per-sample losses ||W x_s - t_s||^2 sharing one weight matrix."""
    rng = np.random.default_rng(seed)
    params = Params()
    w = params.add("w", rng.standard_normal((dim, 2)))
    xs = rng.standard_normal((k_tasks * n_per, dim))
    ts = rng.standard_normal((k_tasks * n_per, 2))
    task_ids = np.repeat(np.arange(k_tasks), n_per)
    return params, w, xs, ts, task_ids, rng


def _loss_vec(w, xs, ts):
    y = engine.matmul(Tensor(xs), w)
    return engine.sum_(engine.square(engine.sub(y, Tensor(ts))), axis=1)


def test_backward_counts_famo_one_vs_pcgrad_k():
    params, w, xs, ts, task_ids, rng = _quadratic_setup()
    famo = FamoState(num_tasks=3)

    reset_backward_calls()
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        combined_gradient("famo", tape, params, lv, task_ids, rng, famo_state=famo)
    assert backward_calls() == 1

    reset_backward_calls()
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        combined_gradient("pcgrad", tape, params, lv, task_ids, rng)
    assert backward_calls() == 3

    reset_backward_calls()
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        combined_gradient("cagrad", tape, params, lv, task_ids, rng)
    assert backward_calls() == 3


def test_scheme_none_matches_plain_mean_gradient():
    params, w, xs, ts, task_ids, rng = _quadratic_setup(seed=3)
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        g_none, _ = combined_gradient("none", tape, params, lv, task_ids, rng)
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        engine.backward(tape, engine.mean(lv))
        g_plain = params.grad_flat()
    np.testing.assert_array_equal(g_none, g_plain)


def test_task_gradient_rows_match_separate_backwards():
    from deskrl.schemes import per_task_mean_losses, task_gradient_set

    params, w, xs, ts, task_ids, rng = _quadratic_setup(seed=4)
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        present, losses = per_task_mean_losses(lv, task_ids)
        grads = task_gradient_set(tape, params, present, losses)
    np.testing.assert_allclose(grads.g0, grads.rows.mean(axis=0), atol=1e-15)
    for i, k in enumerate(present):
        mask = task_ids == k
        with Tape() as tape2:
            y = engine.matmul(Tensor(xs[mask]), w)
            loss = engine.mean(engine.sum_(engine.square(engine.sub(y, Tensor(ts[mask]))), axis=1))
            engine.backward(tape2, loss)
        np.testing.assert_allclose(grads.rows[i], params.grad_flat(), atol=1e-12)


def test_single_task_batch_degenerates_to_vanilla():
    params, w, xs, ts, _, rng = _quadratic_setup(seed=5)
    ids = np.zeros(len(xs), dtype=int)
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        g, _ = combined_gradient("pcgrad", tape, params, lv, ids, rng)
    with Tape() as tape:
        lv = _loss_vec(w, xs, ts)
        engine.backward(tape, engine.mean(lv))
    np.testing.assert_array_equal(g, params.grad_flat())
