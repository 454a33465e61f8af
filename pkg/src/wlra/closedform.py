"""Closed-form low-rank solvers.

``pca_truncate`` is the Eckart-Young truncation; ``ghs_solve`` is the
Golub-Hoffman-Stewart approximation that keeps a leading column block
fixed while approximating the rest.
"""
from dataclasses import dataclass

import numpy as np

from . import matcore


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionedMatrix:
    """``a = (a1 a2)`` split after column ``k``, with target rank ``r``."""

    a: np.ndarray
    k: int
    r: int

    def __post_init__(self):
        a = matcore.as_matrix(self.a, "a")
        object.__setattr__(self, "a", a)
        m, n = a.shape
        if not 0 <= self.k < n:
            raise ValueError(f"split index k={self.k} must satisfy 0 <= k < n={n}")
        # r < k is allowed here: ghs_solve only needs r >= rank(a1)
        if not 0 <= self.r <= min(m, n):
            raise ValueError(f"rank r={self.r} must satisfy 0 <= r <= {min(m, n)}")

    @property
    def a1(self):
        return self.a[:, : self.k]

    @property
    def a2(self):
        return self.a[:, self.k :]

    @property
    def shape(self):
        return self.a.shape


def pca_truncate(a, r):
    """Global minimizer of ``||a - x||_F`` over rank(x) <= r."""
    a = matcore.as_matrix(a)
    if r > min(a.shape):
        raise ValueError(f"r={r} exceeds min(m, n)={min(a.shape)}")
    return matcore.hard_threshold(a, r)


def ghs_solve(pm):
    """Best ``x2`` minimizing ``||a2 - x2||_F`` subject to rank(a1 x2) <= r.

    Returns ``P(a2) + H_{r-k'}(P_perp(a2))`` with the projector onto
    colspace(a1) and ``k'`` the numerical rank of ``a1``. ``k = 0``
    reduces to ``pca_truncate(a2, r)``.
    """
    if pm.k == 0:
        return pca_truncate(pm.a2, pm.r)
    q = matcore.colspace_basis(pm.a1)
    k_eff = q.shape[1]
    if pm.r < k_eff:
        raise PreconditionError(f"r={pm.r} is below rank(A1)={k_eff}")
    a2 = pm.a2
    inside = matcore.project_onto_colspace(q, a2)
    outside = a2 - inside
    return inside + matcore.hard_threshold(outside, pm.r - k_eff)


def ghs_objective(pm):
    return matcore.frobenius_norm(pm.a2 - ghs_solve(pm)) ** 2
