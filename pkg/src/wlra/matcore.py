"""Dense linear-algebra kernels: SVD, QR, hard thresholding, projections.

Matrices are plain 2-D ``float64`` numpy arrays throughout.
"""
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

RANK_RTOL = 1e-12
QR_RTOL = 1e-12


class NumericalError(RuntimeError):
    """A dense factorization failed to converge."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """QR input is numerically rank deficient.

    ``index`` is the first column whose ``|r_ii|`` fell below tolerance.
    """

    def __init__(self, index, indices=None, message=None):
        self.index = index
        self.indices = list(indices) if indices is not None else [index]
        super().__init__(message or f"numerically rank deficient at column {index}")


class SvdFactors(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


class QrFactors(NamedTuple):
    q: np.ndarray
    r: np.ndarray


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def svd(a):
    """Thin SVD with singular values in nonincreasing order."""
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdFactors(u, s, vt)


def numerical_rank(a=None, s=None):
    """Count singular values above ``RANK_RTOL * sigma_max``.

    Pass either the matrix or its singular values.
    """
    if s is None:
        s = svd(a).s
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def qr(a):
    """Reduced Householder QR with a nonnegative diagonal in ``r``.

    Raises :class:`RankDeficiencyError` when some ``|r_ii|`` is below
    ``1e-12 * ||a||_F``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        raise ValueError(f"qr needs rows >= cols, got {a.shape}")
    qr_packed, tau, _, info = lapack.dgeqrf(a)
    if info != 0:
        raise NumericalError(f"dgeqrf failed with info={info}")
    r = qr_packed[:n].copy()
    for i in range(1, n):
        r[i, :i] = 0.0
    q, _, info = lapack.dorgqr(qr_packed[:, :n], tau)
    if info != 0:
        raise NumericalError(f"dorgqr failed with info={info}")
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q = q * signs
    r = signs[:, None] * r
    tol = QR_RTOL * np.linalg.norm(a)
    small = np.flatnonzero(np.abs(np.diag(r)) <= tol)
    if small.size:
        raise RankDeficiencyError(int(small[0]), small.tolist())
    return QrFactors(q, r)


def hard_threshold(a, rank, method="svd"):
    """Best rank-``rank`` approximation: keep the ``rank`` largest singular values.

    ``method="gram"`` computes the same truncation from the top eigenvectors
    of the smaller Gram matrix (``A V V^T`` or ``U U^T A``), which is much
    cheaper when ``rank`` is small next to ``min(m, n)``. Its subspace error
    grows like ``eps * sigma_1^2 / (sigma_rank^2 - sigma_{rank+1}^2)``.
    ``method="auto"`` picks ``gram`` when ``2 * rank <= min(m, n)``.
    """
    a = as_matrix(a)
    if rank < 0:
        raise ValueError("rank must be nonnegative")
    if rank == 0:
        return np.zeros_like(a)
    m, n = a.shape
    if rank >= min(m, n):
        return a.copy()
    if method == "auto":
        method = "gram" if 2 * rank <= min(m, n) else "svd"
    if method == "gram":
        return _gram_threshold(a, rank)
    if method != "svd":
        raise ValueError(f"unknown method {method!r}")
    u, s, vt = svd(a)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def _gram_threshold(a, rank):
    m, n = a.shape
    gram = a.T @ a if n <= m else a @ a.T
    size = gram.shape[0]
    _, vecs, _, _, info = lapack.dsyevr(gram, compute_v=1, range="I", il=size - rank + 1, iu=size)
    if info != 0:
        raise NumericalError(f"dsyevr failed with info={info}")
    if n <= m:
        return (a @ vecs) @ vecs.T
    return vecs @ (vecs.T @ a)


def project_onto_colspace(basis_q, b):
    """Orthogonal projection ``Q Q^T b`` for ``Q`` with orthonormal columns."""
    basis_q = np.asarray(basis_q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if basis_q.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {basis_q.shape} vs {b.shape}")
    return basis_q @ (basis_q.T @ b)


def project_onto_complement(basis_q, b):
    """``b - Q Q^T b``."""
    return np.asarray(b, dtype=np.float64) - project_onto_colspace(basis_q, b)


def frobenius_norm(a):
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a * b


def colspace_basis(a):
    """Orthonormal basis for the numerical column space of ``a``.

    Uses column-pivoted QR truncated at the numerical rank, so a
    rank-deficient ``a`` still yields a basis with ``rank(a)`` columns.
    """
    from scipy.linalg import qr as pivoted_qr

    a = as_matrix(a)
    rank = numerical_rank(a)
    if rank == 0:
        return np.zeros((a.shape[0], 0))
    q, _, _ = pivoted_qr(a, mode="economic", pivoting=True)
    return q[:, :rank]
