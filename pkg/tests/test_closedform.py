import numpy as np
import pytest

from wlra import closedform, matcore, oracle
from wlra.closedform import PartitionedMatrix


def test_pca_truncate_low_rank_identity(rng):
    a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    np.testing.assert_allclose(closedform.pca_truncate(a, 3), a, atol=1e-12)


def test_pca_truncate_diagonal():
    np.testing.assert_allclose(closedform.pca_truncate(np.diag([5.0, 1.0]), 1),
                               np.diag([5.0, 0.0]), atol=1e-15)


def test_pca_truncate_tail_energy(rng):
    a = rng.standard_normal((8, 6))
    s = np.linalg.svd(a, compute_uv=False)
    obj = np.linalg.norm(a - closedform.pca_truncate(a, 3)) ** 2
    assert obj == pytest.approx(np.sum(s[3:] ** 2), rel=1e-12)


def test_partition_validation(rng):
    a = rng.standard_normal((4, 5))
    with pytest.raises(ValueError):
        PartitionedMatrix(a, 5, 4)
    with pytest.raises(ValueError):
        PartitionedMatrix(a, 1, 5)
    pm = PartitionedMatrix(a, 2, 3)
    assert pm.a1.shape == (4, 2) and pm.a2.shape == (4, 3)


def test_ghs_in_colspace_returns_a2(rng):
    a1 = rng.standard_normal((6, 2))
    a2 = a1 @ rng.standard_normal((2, 4))
    pm = PartitionedMatrix(np.hstack([a1, a2]), 2, 2)
    np.testing.assert_allclose(closedform.ghs_solve(pm), a2, atol=1e-12)


def test_ghs_k0_is_pca(rng):
    a = rng.standard_normal((5, 6))
    pm = PartitionedMatrix(a, 0, 2)
    np.testing.assert_allclose(closedform.ghs_solve(pm), closedform.pca_truncate(a, 2))


def test_ghs_rank_and_a1_preserved(rng):
    a = rng.standard_normal((6, 8))
    pm = PartitionedMatrix(a, 2, 4)
    x2 = closedform.ghs_solve(pm)
    full = np.hstack([pm.a1, x2])
    assert np.linalg.matrix_rank(full, tol=1e-9) <= 4
    assert np.array_equal(full[:, :2], a[:, :2])


def test_ghs_residual_decomposition(rng):
    a = rng.standard_normal((6, 8))
    pm = PartitionedMatrix(a, 2, 4)
    q, _ = np.linalg.qr(pm.a1)
    perp = pm.a2 - q @ (q.T @ pm.a2)
    expected = perp - matcore.hard_threshold(perp, 2)
    np.testing.assert_allclose(pm.a2 - closedform.ghs_solve(pm), expected, atol=1e-12)


def test_ghs_dominates_random_feasible(rng):
    a = rng.standard_normal((6, 8))
    pm = PartitionedMatrix(a, 2, 4)
    best = np.linalg.norm(pm.a2 - closedform.ghs_solve(pm))
    for _ in range(500):
        x2 = pm.a1 @ rng.standard_normal((2, 6)) + rng.standard_normal((6, 2)) @ rng.standard_normal((2, 6))
        assert best <= np.linalg.norm(pm.a2 - x2)


def test_ghs_matches_als_oracle(rng):
    a = rng.standard_normal((6, 8))
    pm = PartitionedMatrix(a, 2, 4)
    _, obj = oracle.constrained_als(pm.a1, pm.a2, 4)
    assert closedform.ghs_objective(pm) == pytest.approx(obj, rel=1e-6)


def test_ghs_uses_numerical_rank_of_a1(rng):
    # three columns but rank 1: budget r - 1 = 2 goes to the complement
    v = rng.standard_normal((7, 1))
    a1 = v @ np.array([[1.0, -2.0, 0.5]])
    a2 = rng.standard_normal((7, 5))
    pm = PartitionedMatrix(np.hstack([a1, a2]), 3, 3)
    x2 = closedform.ghs_solve(pm)
    assert np.linalg.matrix_rank(np.hstack([a1, x2]), tol=1e-9) == 3
    _, obj = oracle.constrained_als(a1, a2, 3)
    assert closedform.ghs_objective(pm) == pytest.approx(obj, rel=1e-6)


def test_ghs_rank_below_a1_rank(rng):
    pm = PartitionedMatrix(rng.standard_normal((6, 7)), 3, 2)
    with pytest.raises(closedform.PreconditionError):
        closedform.ghs_solve(pm)
