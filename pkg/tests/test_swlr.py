import warnings

import numpy as np
import pytest

from wlra import closedform, matcore, swlr
from wlra.closedform import PartitionedMatrix


def instance(rng, m=8, n=10, k=2, r=4, lo=5.0, hi=10.0):
    a = rng.standard_normal((m, n))
    return PartitionedMatrix(a, k, r), swlr.WeightMask.uniform(m, k, lo, hi, rng)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_weight_mask_validation():
    with pytest.raises(ValueError):
        swlr.WeightMask(np.array([[1.0, 0.0]]))
    w = swlr.WeightMask(np.full((2, 1), 3.0))
    np.testing.assert_array_equal(w.full(3), [[3.0, 1.0, 1.0], [3.0, 1.0, 1.0]])


def test_config_validation():
    with pytest.raises(ValueError):
        swlr.SwlrConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        swlr.SwlrConfig(max_iters=0)
    assert swlr.SwlrConfig().epsilon == 1e-7
    assert swlr.SwlrConfig(init="a1").init is swlr.Init.FROM_A1


def test_objective_zero_at_exact_fit(rng):
    pm, w = instance(rng)
    c = rng.standard_normal((2, 8))
    d = pm.a2 - pm.a1 @ c
    assert swlr.objective(pm, w, swlr.SwlrState(pm.a1.copy(), c, d)) < 1e-26


def test_objective_unweighted_reduces(rng):
    pm, _ = instance(rng)
    w = swlr.WeightMask.ones(8, 2)
    s = swlr.SwlrState(rng.standard_normal((8, 2)), rng.standard_normal((2, 8)),
                       rng.standard_normal((8, 8)))
    assert swlr.objective(pm, w, s) == pytest.approx(
        np.linalg.norm(pm.a - s.assembled()) ** 2, rel=1e-13)


def test_objective_termwise(rng):
    pm, w = instance(rng)
    s = swlr.SwlrState(rng.standard_normal((8, 2)), rng.standard_normal((2, 8)),
                       rng.standard_normal((8, 8)))
    t1 = matcore.frobenius_norm(matcore.hadamard(pm.a1 - s.x1, w.w1.copy())) ** 2
    t2 = matcore.frobenius_norm(pm.a2 - s.x1 @ s.c - s.d) ** 2
    assert abs(swlr.objective(pm, w, s) - (t1 + t2)) <= 1e-12 * (t1 + t2)


def test_objective_dimension_mismatch(rng):
    pm, w = instance(rng)
    bad = swlr.SwlrState(np.zeros((8, 3)), np.zeros((3, 8)), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        swlr.objective(pm, w, bad)


def test_cd_in_colspace(rng, backend):
    x1 = rng.standard_normal((7, 2))
    coords = rng.standard_normal((2, 5))
    pm = PartitionedMatrix(np.hstack([x1, x1 @ coords]), 2, 3)
    c, d = swlr.solve_cd_given_x1(pm, x1, backend)
    np.testing.assert_allclose(c, coords, atol=1e-12)
    np.testing.assert_allclose(d, 0.0, atol=1e-12)


def test_cd_orthonormal_x1(rng, backend):
    q, _ = np.linalg.qr(rng.standard_normal((7, 2)))
    pm = PartitionedMatrix(rng.standard_normal((7, 9)), 2, 4)
    c, _ = swlr.solve_cd_given_x1(pm, q, backend)
    np.testing.assert_allclose(c, q.T @ pm.a2, atol=1e-12)


def test_cd_beats_random_candidates(rng):
    pm, w = instance(rng)
    x1 = rng.standard_normal((8, 2))
    c, d = swlr.solve_cd_given_x1(pm, x1)
    best = swlr.objective(pm, w, swlr.SwlrState(x1, c, d))
    for _ in range(500):
        c2 = c + rng.standard_normal(c.shape) * rng.uniform(0.01, 1.0)
        d2 = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 8))
        assert best <= swlr.objective(pm, w, swlr.SwlrState(x1, c2, d2))


def test_cd_rank_deficient_raises(rng):
    pm, _ = instance(rng)
    x1 = np.hstack([np.ones((8, 1)), np.ones((8, 1))])
    with pytest.raises(matcore.RankDeficiencyError):
        swlr.solve_cd_given_x1(pm, x1)


def test_cd_r_equals_k_gives_zero_d(rng):
    pm = PartitionedMatrix(rng.standard_normal((6, 7)), 2, 2)
    _, d = swlr.solve_cd_given_x1(pm, rng.standard_normal((6, 2)))
    np.testing.assert_array_equal(d, 0.0)


def test_update_x1_c_zero_returns_a1(rng, backend):
    pm, w = instance(rng)
    x1 = swlr.update_x1(pm, w, np.zeros((2, 8)), rng.standard_normal((8, 8)), backend)
    np.testing.assert_allclose(x1, pm.a1, rtol=1e-12)


def test_update_x1_scalar_case(backend):
    a1, a2, wt, c, d = 1.5, -0.7, 2.0, 0.8, 0.3
    pm = PartitionedMatrix(np.array([[a1, a2]]), 1, 1)
    w = swlr.WeightMask(np.array([[wt]]))
    x1 = swlr.update_x1(pm, w, np.array([[c]]), np.array([[d]]), backend)
    expected = (a1 * wt**2 + (a2 - d) * c) / (wt**2 + c**2)
    assert x1[0, 0] == pytest.approx(expected, rel=1e-14)


def test_update_x1_is_stationary(rng, backend):
    pm, w = instance(rng, m=6, n=7)
    c = rng.standard_normal((2, 5))
    d = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    x1 = swlr.update_x1(pm, w, c, d, backend)
    g = fd_gradient(lambda x: swlr.objective(pm, w, swlr.SwlrState(x, c, d)), x1)
    assert np.linalg.norm(g) < 1e-8 * max(1.0, swlr.objective(pm, w, swlr.SwlrState(x1, c, d)))


def test_analytic_gradient_matches_fd(rng):
    pm, w = instance(rng, m=5, n=6)
    s = swlr.SwlrState(rng.standard_normal((5, 2)), rng.standard_normal((2, 4)),
                       rng.standard_normal((5, 4)))
    fd = fd_gradient(lambda x: swlr.objective(pm, w, swlr.SwlrState(x, s.c, s.d)), s.x1)
    np.testing.assert_allclose(swlr.x1_gradient(pm, w, s), fd, rtol=1e-6, atol=1e-5)


def test_solve_exact_low_rank(rng):
    a = rng.standard_normal((9, 4)) @ rng.standard_normal((4, 11))
    pm = PartitionedMatrix(a, 2, 4)
    state, trace = swlr.solve(pm, swlr.WeightMask.uniform(9, 2, 5, 10, rng))
    assert trace.converged
    assert trace.final_objective < 1e-10


def test_solve_unweighted_matches_eckart_young(rng):
    u, _ = np.linalg.qr(rng.standard_normal((10, 10)))
    v, _ = np.linalg.qr(rng.standard_normal((12, 10)))
    s = np.array([10, 8, 6, 5, 1.0, 0.8, 0.6, 0.4, 0.2, 0.1])
    a = (u * s) @ v.T
    pm = PartitionedMatrix(a, 2, 4)
    _, trace = swlr.solve(pm, swlr.WeightMask.ones(10, 2),
                          swlr.SwlrConfig(max_iters=5000, epsilon=1e-12))
    assert trace.final_objective == pytest.approx(np.sum(s[4:] ** 2), rel=1e-6)


def test_solve_monotone_and_rank_budget(rng, backend):
    pm, w = instance(rng)
    state, trace = swlr.solve(pm, w, swlr.SwlrConfig(seed=3), backend=backend)
    f = trace.objectives
    assert np.all(np.diff(f) <= 1e-12 * (1 + f[0]))
    assert np.linalg.matrix_rank(state.d, tol=1e-9) <= pm.r - pm.k
    assert np.linalg.matrix_rank(state.assembled(), tol=1e-9) <= pm.r
    assert swlr.fixed_point_residual(pm, state) <= 1e-8 * (1 + np.linalg.norm(pm.a2))


def test_fixed_point_matches_ghs(rng):
    pm, w = instance(rng)
    state, _ = swlr.solve(pm, w)
    ghs = closedform.ghs_solve(PartitionedMatrix(np.hstack([state.x1, pm.a2]), pm.k, pm.r))
    np.testing.assert_allclose(state.x2, ghs, atol=1e-8)


def test_solve_deterministic(rng):
    pm, w = instance(rng)
    _, t1 = swlr.solve(pm, w, swlr.SwlrConfig(seed=11))
    _, t2 = swlr.solve(pm, w, swlr.SwlrConfig(seed=11))
    assert len(t1.records) == len(t2.records)
    np.testing.assert_allclose(t1.objectives, t2.objectives, rtol=1e-14)


def test_backends_give_same_solution(rng):
    pm, w = instance(rng)
    s1, t1 = swlr.solve(pm, w, backend="python")
    s2, t2 = swlr.solve(pm, w, backend="cython" if swlr.kernels.BACKEND == "cython" else "python")
    assert t1.iterations == t2.iterations
    np.testing.assert_allclose(s1.assembled(), s2.assembled(), atol=1e-9)


def test_stopping_rule_and_trace_fields(rng):
    pm, w = instance(rng)
    _, trace = swlr.solve(pm, w, swlr.SwlrConfig(epsilon=1e-7))
    last = trace.records[-1]
    assert trace.converged
    assert last.step_norm < 1e-7 or last.rel_error < 1e-7
    assert all(r.step_norm >= 1e-7 and r.rel_error >= 1e-7 for r in trace.records[1:-1])
    assert np.isnan(trace.records[0].step_norm)


def test_max_iters_exhausted(rng):
    pm, _ = instance(rng)
    _, trace = swlr.solve(pm, swlr.WeightMask.ones(8, 2), swlr.SwlrConfig(max_iters=2))
    assert not trace.converged and trace.iterations == 2


def test_heavier_weights_pin_x1(rng):
    a = rng.standard_normal((10, 12))
    pm = PartitionedMatrix(a, 2, 4)
    base = rng.uniform(5, 10, size=(10, 2))
    dev = []
    for scale in (1, 100):
        state, _ = swlr.solve(pm, swlr.WeightMask(base * scale))
        dev.append(np.linalg.norm(state.x1 - pm.a1))
    assert dev[1] < dev[0]


def test_from_a1_init(rng):
    pm, w = instance(rng)
    _, trace = swlr.solve(pm, w, swlr.SwlrConfig(init=swlr.Init.FROM_A1))
    assert trace.converged


def test_rank_deficient_iterate_recovers(rng):
    # A1 has a repeated column, so the FromA1 start is exactly rank deficient
    col = rng.standard_normal((8, 1))
    a = np.hstack([col, col, rng.standard_normal((8, 8))])
    pm = PartitionedMatrix(a, 2, 4)
    state, trace = swlr.solve(pm, swlr.WeightMask.uniform(8, 2, 5, 10, rng),
                              swlr.SwlrConfig(init="a1"))
    assert trace.rank_recoveries >= 1
    assert np.all(np.isfinite(state.assembled()))


def test_r_equals_k_warns(rng):
    pm = PartitionedMatrix(rng.standard_normal((6, 7)), 2, 2)
    with pytest.warns(RuntimeWarning):
        state, _ = swlr.solve(pm, swlr.WeightMask.uniform(6, 2, 5, 10, rng))
    np.testing.assert_array_equal(state.d, 0.0)


def test_preconditions(rng):
    a = rng.standard_normal((6, 7))
    with pytest.raises(ValueError):
        swlr.solve(PartitionedMatrix(a, 0, 2), swlr.WeightMask(np.ones((6, 1))))
    with pytest.raises(ValueError):
        swlr.solve(PartitionedMatrix(a, 3, 2), swlr.WeightMask.ones(6, 3))
    with pytest.raises(ValueError):
        swlr.solve(PartitionedMatrix(a, 2, 4), swlr.WeightMask.ones(6, 3))
