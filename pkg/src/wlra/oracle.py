"""Slow, independent solvers used to cross-check the fast ones.

``general_wlra`` handles an arbitrary nonnegative weight matrix with
alternating weighted least squares on a rank-``r`` factorization
``X = G H^T``. It shares no code path with the sWLR solver (different
parameterization, no QR/SVD), so agreement between the two is evidence.
"""
from dataclasses import dataclass

import numpy as np

from . import matcore

RIDGE = 1e-12


@dataclass(frozen=True)
class OracleConfig:
    restarts: int = 10
    inner_iters: int = 5000
    tol: float = 1e-14
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.inner_iters < 1 or not self.tol > 0:
            raise ValueError("restarts, inner_iters and tol must be positive")


@dataclass
class OracleResult:
    x: np.ndarray
    objective: float
    # objective after every alternation of the winning start
    history: np.ndarray
    regularized: bool = False


def weighted_objective(a, w, x):
    res = (a - x) * w
    return float(np.sum(res * res))


def _row_lstsq(a, w2, basis, ridge_rows):
    """Row-wise weighted least squares: rows of ``a ~ coef @ basis.T``."""
    r = basis.shape[1]
    systems = np.einsum("ij,jk,jl->ikl", w2, basis, basis)
    rhs = (w2 * a) @ basis
    if ridge_rows.any():
        systems[ridge_rows] += RIDGE * np.eye(r)
    return np.linalg.solve(systems, rhs[:, :, None])[:, :, 0]


def _one_start(a, w2, r, rng, cfg):
    m, n = a.shape
    h = rng.standard_normal((n, r))
    g = np.zeros((m, r))
    zero_rows = ~np.any(w2 > 0, axis=1)
    zero_cols = ~np.any(w2 > 0, axis=0)
    history = []
    prev = np.inf
    for _ in range(cfg.inner_iters):
        g = _row_lstsq(a, w2, h, zero_rows)
        h = _row_lstsq(a.T, w2.T, g, zero_cols)
        res = a - g @ h.T
        obj = float(np.sum(w2 * res * res))
        history.append(obj)
        if prev - obj <= cfg.tol * max(prev, 1.0) and np.isfinite(prev):
            break
        prev = obj
    return g @ h.T, np.array(history)


def general_wlra(a, w, r, cfg=OracleConfig()):
    """Multi-start alternating minimization of ``||(a - x) * w||_F^2``, rank(x) <= r.

    Returns the best :class:`OracleResult` across ``cfg.restarts`` starts.
    Rows or columns whose weights are all zero get a ``1e-12`` ridge and the
    result is flagged ``regularized``.
    """
    a = matcore.as_matrix(a, "a")
    w = matcore.as_matrix(w, "w")
    if w.shape != a.shape:
        raise ValueError(f"weight shape {w.shape} != {a.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    m, n = a.shape
    if not 0 <= r <= min(m, n):
        raise ValueError(f"r={r} outside [0, {min(m, n)}]")
    if r == 0:
        return OracleResult(np.zeros_like(a), weighted_objective(a, w, 0.0), np.array([]))
    w2 = w * w
    regularized = bool((~np.any(w2 > 0, axis=1)).any() or (~np.any(w2 > 0, axis=0)).any())
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.restarts):
        x, history = _one_start(a, w2, r, rng, cfg)
        obj = weighted_objective(a, w, x)
        if best is None or obj < best.objective:
            best = OracleResult(x, obj, history, regularized)
    return best


def random_candidate_bound(a, w, r, samples, seed=0):
    """Smallest weighted objective over ``samples`` rank-``r`` candidates.

    Candidate 0 is the zero matrix. The others project ``a`` onto the
    column space of ``a @ omega`` for a Gaussian ``n x r`` sketch
    ``omega``, so a planted rank-``r`` matrix is recovered exactly.
    """
    a = matcore.as_matrix(a, "a")
    w = np.asarray(w, dtype=np.float64)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    best = weighted_objective(a, w, 0.0)
    for _ in range(samples - 1):
        omega = rng.standard_normal((a.shape[1], r))
        q, _ = np.linalg.qr(a @ omega)
        best = min(best, weighted_objective(a, w, q @ (q.T @ a)))
    return best


def constrained_als(a1, a2, r, cfg=OracleConfig()):
    """Alternating least squares for ``min ||a2 - a1 C - G H^T||_F^2``.

    ``G H^T`` has rank ``r - rank(a1)``; the feasible set is exactly the
    ``x2`` with rank(a1 x2) <= r. Uses only least-squares solves, no SVD of
    the residual, so it checks the closed-form GHS solution independently.
    Returns ``(x2, objective)`` for the best of ``cfg.restarts`` starts.
    """
    a1 = matcore.as_matrix(a1, "a1")
    a2 = matcore.as_matrix(a2, "a2")
    k_eff = matcore.numerical_rank(a1)
    s = r - k_eff
    if s < 0:
        raise ValueError(f"r={r} is below rank(a1)={k_eff}")
    rng = np.random.default_rng(cfg.seed)
    m, p = a2.shape
    best_x, best_obj = None, np.inf
    for _ in range(max(cfg.restarts, 1) if s > 0 else 1):
        h = rng.standard_normal((p, s))
        g = np.zeros((m, s))
        prev = np.inf
        for _ in range(cfg.inner_iters):
            c = np.linalg.lstsq(a1, a2 - g @ h.T, rcond=None)[0]
            if s == 0:
                break
            resid = a2 - a1 @ c
            g = np.linalg.solve(h.T @ h, h.T @ resid.T).T
            h = np.linalg.solve(g.T @ g, g.T @ resid).T
            obj = float(np.sum((resid - g @ h.T) ** 2))
            if prev - obj <= cfg.tol * max(prev, 1.0) and np.isfinite(prev):
                break
            prev = obj
        x2 = a1 @ c + g @ h.T
        obj = float(np.sum((a2 - x2) ** 2))
        if obj < best_obj:
            best_x, best_obj = x2, obj
    return best_x, best_obj
