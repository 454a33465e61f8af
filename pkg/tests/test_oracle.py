import numpy as np
import pytest

from wlra import matcore, oracle, swlr
from wlra.closedform import PartitionedMatrix


def gapped(rng, m, n, r, ratio=3.0):
    u, _ = np.linalg.qr(rng.standard_normal((m, m)))
    v, _ = np.linalg.qr(rng.standard_normal((n, m)))
    s = np.sort(rng.uniform(1, 2, size=min(m, n)))[::-1]
    s[:r] *= ratio * s[r] / s[r - 1] * 1.01
    s = np.sort(s)[::-1]
    return (u[:, : s.size] * s) @ v[:, : s.size].T


def test_unit_weights_match_eckart_young(rng):
    a = gapped(rng, 8, 9, 3)
    res = oracle.general_wlra(a, np.ones_like(a), 3, oracle.OracleConfig(restarts=3))
    ref = np.linalg.norm(a - matcore.hard_threshold(a, 3)) ** 2
    assert res.objective == pytest.approx(ref, rel=1e-8)


def test_full_rank_is_exact(rng):
    a = rng.standard_normal((5, 6))
    res = oracle.general_wlra(a, rng.uniform(1, 2, a.shape), 5, oracle.OracleConfig(restarts=2))
    assert res.objective < 1e-12


def test_history_nonincreasing(rng):
    a = rng.standard_normal((7, 8))
    res = oracle.general_wlra(a, rng.uniform(0.5, 3, a.shape), 2, oracle.OracleConfig(restarts=2))
    h = res.history
    assert np.all(np.diff(h) <= 1e-12 * (1 + h[0]))


def test_zero_weight_row_is_regularized(rng):
    a = rng.standard_normal((5, 6))
    w = np.ones_like(a)
    w[2] = 0.0
    res = oracle.general_wlra(a, w, 2, oracle.OracleConfig(restarts=2, inner_iters=200))
    assert res.regularized and np.isfinite(res.objective)


def test_bracketing_special_weight(rng):
    hits = 0
    for t in range(5):
        a = rng.standard_normal((10, 12))
        w = swlr.WeightMask.uniform(10, 2, 5, 10, rng)
        _, trace = swlr.solve(PartitionedMatrix(a, 2, 4), w, swlr.SwlrConfig(seed=t))
        res = oracle.general_wlra(a, w.full(12), 4, oracle.OracleConfig(seed=t))
        obj = trace.final_objective
        hits += abs(obj - res.objective) <= 1e-6 * (1 + obj)
    assert hits >= 4


def test_candidate_bound_zero_candidate(rng):
    a = rng.standard_normal((4, 5))
    w = rng.uniform(1, 2, a.shape)
    assert oracle.random_candidate_bound(a, w, 2, 1) == pytest.approx(np.sum((a * w) ** 2))


def test_candidate_bound_planted(rng):
    a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 7))
    assert oracle.random_candidate_bound(a, np.ones_like(a), 2, 5) < 1e-20


def test_candidate_bound_dominates_solver(rng):
    a = rng.standard_normal((8, 10))
    w = swlr.WeightMask.uniform(8, 2, 5, 10, rng)
    _, trace = swlr.solve(PartitionedMatrix(a, 2, 4), w)
    assert trace.final_objective <= oracle.random_candidate_bound(a, w.full(10), 4, 1000)


def test_bad_inputs(rng):
    a = rng.standard_normal((4, 4))
    with pytest.raises(ValueError):
        oracle.general_wlra(a, -np.ones_like(a), 2)
    with pytest.raises(ValueError):
        oracle.random_candidate_bound(a, np.ones_like(a), 2, 0)
    with pytest.raises(ValueError):
        oracle.OracleConfig(restarts=0)
