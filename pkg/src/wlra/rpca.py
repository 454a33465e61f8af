"""Robust PCA baselines: inexact ALM and accelerated proximal gradient.

Both solve ``min ||X||_* + lam * ||S||_1`` subject to ``A = X + S`` (APG
through a continuation on the penalized form).
"""
import time
from dataclasses import dataclass

import numpy as np

from . import matcore
from .swlr import ConvergenceTrace, IterationRecord


class RpcaDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RpcaConfig:
    """Solver settings.

    ``lam`` defaults to ``1/sqrt(max(m, n))``. For iEALM the initial penalty
    is ``mu / ||A||_2`` and grows by ``rho`` per iteration up to
    ``mu_max_ratio`` times its start. APG uses step ``1/lipschitz`` and a
    smoothing weight starting at ``0.99 ||A||_2`` that shrinks by ``eta`` down
    to ``apg_floor_ratio`` times its start.
    """

    lam: float | None = None
    mu: float = 1.5
    rho: float = 1.25
    epsilon: float = 1e-7
    max_iters: int = 1000
    mu_max_ratio: float = 1e7
    lipschitz: float = 2.0
    eta: float = 0.9
    apg_floor_ratio: float = 1e-9
    divergence_window: int = 20

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if not (self.mu > 0 and self.epsilon > 0 and self.max_iters >= 1):
            raise ValueError("mu, epsilon and max_iters must be positive")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")

    def lam_for(self, shape):
        return self.lam if self.lam is not None else 1.0 / np.sqrt(max(shape))


@dataclass
class RpcaResult:
    low_rank: np.ndarray
    sparse: np.ndarray
    trace: ConvergenceTrace


def soft_threshold(a, tau):
    """Entrywise ``sign(x) * max(|x| - tau, 0)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def svt(a, tau):
    """Singular value thresholding ``U shrink(S, tau) V^T``."""
    return _svt(a, tau)[0]


def _svt(a, tau):
    # also returns the nuclear norm of the result
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    u, s, vt = matcore.svd(a)
    s = np.maximum(s - tau, 0.0)
    keep = np.count_nonzero(s)
    return (u[:, :keep] * s[:keep]) @ vt[:keep], float(s.sum())


def rpca_objective(x, s, lam):
    """``||x||_* + lam ||s||_1``."""
    return float(np.linalg.svd(x, compute_uv=False).sum() + lam * np.abs(s).sum())


class _Monitor:
    """Trace bookkeeping plus the non-decreasing-residual divergence guard."""

    def __init__(self, window):
        self.trace = ConvergenceTrace()
        self.window = window
        self.best = np.inf
        self.stalled = 0
        self.t0 = time.perf_counter()

    def record(self, it, x, x_prev, nuclear, s, lam, feas, guard=True):
        t1 = time.perf_counter()
        step = matcore.frobenius_norm(x - x_prev)
        obj = nuclear + lam * float(np.abs(s).sum())
        self.trace.records.append(IterationRecord(it, obj, step, feas, t1 - self.t0))
        self.t0 = t1
        if not guard:
            return
        if feas < self.best:
            self.best = feas
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled >= self.window:
                raise RpcaDivergenceError(
                    f"feasibility residual has not decreased for {self.window} iterations"
                )


def iealm(a, cfg=RpcaConfig()):
    """Inexact augmented Lagrange multiplier method.

    Stops when ``||A - X - S||_F / ||A||_F < epsilon``; ``trace`` records
    that ratio as ``rel_error``.
    """
    a = matcore.as_matrix(a)
    lam = cfg.lam_for(a.shape)
    norm_fro = matcore.frobenius_norm(a)
    if norm_fro == 0:
        return RpcaResult(np.zeros_like(a), np.zeros_like(a), ConvergenceTrace(converged=True))
    norm_two = np.linalg.norm(a, 2)
    y = a / max(norm_two, np.abs(a).max() / lam)
    mu = cfg.mu / norm_two
    mu_max = mu * cfg.mu_max_ratio
    x = np.zeros_like(a)
    s = np.zeros_like(a)
    mon = _Monitor(cfg.divergence_window)
    for it in range(1, cfg.max_iters + 1):
        x_prev = x
        s = soft_threshold(a - x + y / mu, lam / mu)
        x, nuclear = _svt(a - s + y / mu, 1.0 / mu)
        z = a - x - s
        y = y + mu * z
        mu = min(cfg.rho * mu, mu_max)
        feas = matcore.frobenius_norm(z) / norm_fro
        mon.record(it, x, x_prev, nuclear, s, lam, feas)
        if feas < cfg.epsilon:
            mon.trace.converged = True
            break
    return RpcaResult(x, s, mon.trace)


def apg(a, cfg=RpcaConfig()):
    """Accelerated proximal gradient with continuation.

    Minimizes ``mu ||X||_* + mu lam ||S||_1 + 0.5 ||A - X - S||_F^2`` with
    Nesterov momentum on ``(X, S)`` while ``mu`` decreases geometrically.
    Stops when ``||A - X - S||_F / ||A||_F < epsilon``.
    """
    a = matcore.as_matrix(a)
    lam = cfg.lam_for(a.shape)
    norm_fro = matcore.frobenius_norm(a)
    if norm_fro == 0:
        return RpcaResult(np.zeros_like(a), np.zeros_like(a), ConvergenceTrace(converged=True))
    mu = 0.99 * np.linalg.norm(a, 2)
    mu_floor = cfg.apg_floor_ratio * mu
    step = 1.0 / cfg.lipschitz
    x = x_prev = np.zeros_like(a)
    s = s_prev = np.zeros_like(a)
    t = t_prev = 1.0
    mon = _Monitor(cfg.divergence_window)
    for it in range(1, cfg.max_iters + 1):
        beta = (t_prev - 1.0) / t
        yx = x + beta * (x - x_prev)
        ys = s + beta * (s - s_prev)
        grad = yx + ys - a
        x_prev, s_prev = x, s
        at_floor = mu == mu_floor
        x, nuclear = _svt(yx - step * grad, step * mu)
        s = soft_threshold(ys - step * grad, step * lam * mu)
        t_prev, t = t, (1.0 + np.sqrt(4.0 * t * t + 1.0)) / 2.0
        mu = max(cfg.eta * mu, mu_floor)
        feas = matcore.frobenius_norm(a - x - s) / norm_fro
        # the residual is tied to mu, so divergence is only judged at the floor
        mon.record(it, x, x_prev, nuclear, s, lam, feas, guard=at_floor)
        if feas < cfg.epsilon:
            mon.trace.converged = True
            break
    return RpcaResult(x, s, mon.trace)
