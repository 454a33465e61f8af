"""Alternating solver for the specially weighted low-rank problem.

Minimizes ``||(A1 - X1) * W1||_F^2 + ||A2 - X2||_F^2`` over rank(X1 X2) <= r,
with positive weights on the leading ``k`` columns and unit weights on the
rest. ``X2`` is parameterized as ``X1 C + D`` with rank(D) <= r - k. Each
sweep does two exact block minimizations:

* given ``X1 = QR``: ``C = R^-1 Q^T A2`` and ``D = H_{r-k}((I - QQ^T) A2)``;
* given ``(C, D)``: every row of ``X1`` solves
  ``x_i (diag(W1[i]^2) + C C^T) = E[i]`` with
  ``E = A1 * W1^2 + (A2 - D) C^T``.

so the objective never increases.
"""
import enum
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from . import kernels, matcore
from .closedform import PartitionedMatrix

log = logging.getLogger(__name__)


class Init(enum.Enum):
    RANDOM_GAUSSIAN = "random"
    FROM_A1 = "a1"


@dataclass(frozen=True)
class WeightMask:
    """Weights ``W1`` on the leading block; the trailing block is implicitly 1."""

    w1: np.ndarray

    def __post_init__(self):
        w1 = matcore.as_matrix(self.w1, "w1")
        if not np.all(w1 > 0):
            raise ValueError("w1 must be strictly positive")
        object.__setattr__(self, "w1", w1)

    @classmethod
    def ones(cls, m, k):
        return cls(np.ones((m, k)))

    @classmethod
    def uniform(cls, m, k, lo, hi, rng):
        """i.i.d. uniform weights on ``[lo, hi]``."""
        if not 0 < lo <= hi:
            raise ValueError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
        return cls(rng.uniform(lo, hi, size=(m, k)))

    def full(self, n):
        """The complete ``m x n`` weight matrix ``(W1 1)``."""
        m, k = self.w1.shape
        return np.hstack([self.w1, np.ones((m, n - k))])


@dataclass(frozen=True)
class SwlrConfig:
    epsilon: float = 1e-7
    max_iters: int = 100
    seed: int = 0
    init: Init = Init.RANDOM_GAUSSIAN

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        object.__setattr__(self, "init", Init(self.init))


@dataclass
class SwlrState:
    x1: np.ndarray
    c: np.ndarray
    d: np.ndarray
    iteration: int = 0

    @property
    def x2(self):
        return self.x1 @ self.c + self.d

    def assembled(self):
        return np.hstack([self.x1, self.x2])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    step_norm: float
    rel_error: float
    wall_time: float


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    rank_recoveries: int = 0

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def iterations(self):
        return self.records[-1].iteration if self.records else 0

    @property
    def final_objective(self):
        return self.records[-1].objective


def _check_dims(pm, w):
    m = pm.a1.shape[0]
    if w.w1.shape != (m, pm.k):
        raise ValueError(f"w1 shape {w.w1.shape} does not match A1 {(m, pm.k)}")


def objective(pm, w, s):
    """``F(X1, C, D) = ||(A1 - X1) * W1||_F^2 + ||A2 - X1 C - D||_F^2``."""
    _check_dims(pm, w)
    if s.x1.shape != pm.a1.shape or s.d.shape != pm.a2.shape:
        raise ValueError("state dimensions do not match the partitioned matrix")
    return _objective(pm.a1, pm.a2, w.w1, s.x1, s.x2)


def _objective(a1, a2, w1, x1, x2):
    return _sq((a1 - x1) * w1) + _sq(a2 - x2)


def _sq(a):
    if a.flags.c_contiguous:
        return float(np.vdot(a, a))
    # einsum reads any memory layout without a copy
    return float(np.einsum("ij,ij->", a, a))


class _Blocks(NamedTuple):
    """Contiguous copies of the two column blocks, used inside :func:`solve`."""
    a1: np.ndarray
    a2: np.ndarray
    k: int
    r: int


def solve_cd_given_x1(pm, x1, backend=None, a2_gram=None):
    """Exact minimizer ``(C, D)`` of ``F(x1, ., .)``.

    Raises :class:`matcore.RankDeficiencyError` when ``x1`` is numerically
    rank deficient. With ``r == k`` the rank budget for ``D`` is zero and
    ``D`` is returned as zeros.
    """
    impl = kernels if backend is None else kernels.get_backend(backend)
    c, d, bad = impl.cd_step(x1, pm.a2, pm.r - pm.k, matcore.QR_RTOL, a2_gram)
    if bad:
        raise matcore.RankDeficiencyError(bad[0], bad)
    return c, d


def update_x1(pm, w, c, d, backend=None):
    """Exact minimizer of ``F(., C, D)``, solved one row at a time."""
    _check_dims(pm, w)
    impl = kernels if backend is None else kernels.get_backend(backend)
    return _update_x1(pm, w, w.w1 * w.w1, c, d, impl)


def _update_x1(pm, w, w2, c, d, impl):
    e = pm.a1 * w2 + (pm.a2 - d) @ c.T
    gram = c @ c.T
    try:
        return impl.row_spd_solve(e, w2, gram)
    except np.linalg.LinAlgError:
        # positive definite in exact arithmetic, but C can be huge right after
        # a rank recovery; solve each row as least squares to avoid squaring
        log.warning("row Cholesky failed; falling back to least squares")
        rhs2 = pm.a2 - d
        out = np.empty_like(pm.a1)
        for i in range(out.shape[0]):
            m = np.vstack([np.diag(w.w1[i]), c.T])
            b = np.concatenate([w.w1[i] * pm.a1[i], rhs2[i]])
            out[i] = np.linalg.lstsq(m, b, rcond=None)[0]
        return out


TALL_RATIO = 4


def initial_x1(pm, cfg):
    if cfg.init is Init.FROM_A1:
        return pm.a1.copy()
    rng = np.random.default_rng(cfg.seed)
    return rng.standard_normal(pm.a1.shape)


def _cd_step(pm, x1, rng, trace, backend, a2_gram=None):
    """(C, D) step with one perturb-and-retry on rank deficiency."""
    try:
        return x1, solve_cd_given_x1(pm, x1, backend, a2_gram)
    except matcore.RankDeficiencyError as exc:
        scale = 1e-10 * max(matcore.frobenius_norm(x1), 1.0)
        log.warning("X1 rank deficient at columns %s; perturbing by %.1e", exc.indices, scale)
        x1 = x1.copy()
        for j in exc.indices:
            noise = rng.standard_normal(x1.shape[0])
            x1[:, j] += scale * noise / np.linalg.norm(noise)
        trace.rank_recoveries += 1
        try:
            return x1, solve_cd_given_x1(pm, x1, backend, a2_gram)
        except matcore.RankDeficiencyError as exc2:
            raise matcore.RankDeficiencyError(
                exc2.index, exc2.indices,
                f"X1 still rank deficient at columns {exc2.indices} after perturbation",
            ) from exc
    

def solve(pm, w, cfg=SwlrConfig(), backend=None):
    """Run the alternating sWLR iteration.

    Stops when ``||X_{p+1} - X_p||_F < eps`` or
    ``||X_{p+1} - X_p||_F / ||X_p||_F < eps``, or after ``cfg.max_iters``
    X1 updates. The returned state always carries the exact (C, D) for its
    X1, so ``X2`` is the GHS solution with ``A1`` replaced by ``X1``.

    Returns ``(state, trace)``.
    """
    _check_dims(pm, w)
    a1, a2 = pm.a1, pm.a2
    if pm.k < 1:
        raise ValueError("solve needs k >= 1 weighted columns")
    if pm.r < pm.k:
        raise ValueError(f"r={pm.r} must be >= k={pm.k}")
    if pm.r == pm.k:
        warnings.warn("r == k: D is identically zero", RuntimeWarning, stacklevel=2)
    if pm.shape[0] < pm.k:
        raise ValueError("X1 cannot have full column rank when m < k")

    rng = np.random.default_rng([cfg.seed, 1])
    trace = ConvergenceTrace()
    x1 = initial_x1(pm, cfg)
    a1, a2 = np.ascontiguousarray(a1), np.ascontiguousarray(a2)
    blocks = _Blocks(a1, a2, pm.k, pm.r)
    w2 = w.w1 * w.w1
    impl = kernels if backend is None else kernels.get_backend(backend)
    # a tall A2 (video frames) makes the residual Gram the dominant cost;
    # A2^T A2 never changes, so form it once
    m, p2 = a2.shape
    a2_gram = a2.T @ a2 if 0 < pm.r - pm.k < p2 and m >= TALL_RATIO * p2 else None
    prev = None
    t0 = time.perf_counter()
    for p in range(cfg.max_iters + 1):
        x1, (c, d) = _cd_step(blocks, x1, rng, trace, backend, a2_gram)
        state = SwlrState(x1, c, d, iteration=p)
        x2 = x1 @ c + d
        f = _objective(a1, a2, w.w1, x1, x2)
        if prev is None:
            step = rel = float("nan")
        else:
            px1, px2 = prev
            step = math.sqrt(_sq(x1 - px1) + _sq(x2 - px2))
            prev_norm = math.sqrt(_sq(px1) + _sq(px2))
            rel = step / prev_norm if prev_norm > 0 else float("inf")
        t1 = time.perf_counter()
        trace.records.append(IterationRecord(p, f, step, rel, t1 - t0))
        t0 = t1
        if prev is not None and (step < cfg.epsilon or rel < cfg.epsilon):
            trace.converged = True
            break
        if p == cfg.max_iters:
            break
        prev = (x1, x2)
        x1 = _update_x1(blocks, w, w2, c, d, impl)
    log.debug("swlr: %d iterations, converged=%s, F=%.6g", p, trace.converged, f)
    return state, trace


def fixed_point_residual(pm, state):
    """``||X2 - P_{X1}(A2) - H_{r-k}(P_perp_{X1}(A2))||_F`` at ``state``."""
    q = matcore.qr(state.x1).q
    inside = matcore.project_onto_colspace(q, pm.a2)
    target = inside + matcore.hard_threshold(pm.a2 - inside, pm.r - pm.k)
    return matcore.frobenius_norm(state.x2 - target)


def x1_gradient(pm, w, s):
    """Analytic gradient of ``F`` with respect to ``X1`` (C, D held fixed)."""
    rest = pm.a2 - s.x1 @ s.c - s.d
    return -2.0 * (pm.a1 - s.x1) * w.w1**2 - 2.0 * rest @ s.c.T
