# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot loops.

Mirrors ``wlra._kernels_py`` exactly in signature and semantics.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef int _chol_solve(double[:, ::1] a, double[::1] b, Py_ssize_t k) noexcept nogil:
    # In-place Cholesky of a (lower triangle) then two triangular solves on b.
    cdef Py_ssize_t i, j, p
    cdef double s
    for j in range(k):
        s = a[j, j]
        for p in range(j):
            s -= a[j, p] * a[j, p]
        if s <= 0.0:
            return -1
        a[j, j] = sqrt(s)
        for i in range(j + 1, k):
            s = a[i, j]
            for p in range(j):
                s -= a[i, p] * a[j, p]
            a[i, j] = s / a[j, j]
    for i in range(k):
        s = b[i]
        for p in range(i):
            s -= a[i, p] * b[p]
        b[i] = s / a[i, i]
    for i in range(k - 1, -1, -1):
        s = b[i]
        for p in range(i + 1, k):
            s -= a[p, i] * b[p]
        b[i] = s / a[i, i]
    return 0


def row_spd_solve(e, w2, gram):
    """Solve ``x_i (diag(w2_i) + gram) = e_i`` for every row ``i``."""
    cdef double[:, ::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w2, dtype=np.float64)
    cdef double[:, ::1] gv = np.ascontiguousarray(gram, dtype=np.float64)
    cdef Py_ssize_t m = ev.shape[0], k = ev.shape[1]
    if wv.shape[0] != m or wv.shape[1] != k or gv.shape[0] != k or gv.shape[1] != k:
        raise ValueError("row_spd_solve: shape mismatch")
    out = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[:, ::1] work = np.empty((k, k), dtype=np.float64)
    cdef Py_ssize_t i, a, b
    cdef int bad = -1
    with nogil:
        for i in range(m):
            for a in range(k):
                for b in range(a + 1):
                    work[a, b] = gv[a, b]
                work[a, a] += wv[i, a]
                ov[i, a] = ev[i, a]
            if _chol_solve(work, ov[i], k) != 0:
                bad = <int>i
                break
    if bad >= 0:
        raise np.linalg.LinAlgError(f"row system {bad} is not positive definite")
    return out


def box_mean(img, Py_ssize_t win):
    """Mean over every ``win x win`` window fully inside ``img``."""
    cdef double[:, ::1] x = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1]
    if win < 1 or win > h or win > w:
        raise ValueError("box_mean: window does not fit the image")
    cdef Py_ssize_t oh = h - win + 1, ow = w - win + 1
    integ = np.zeros((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] s = integ
    out = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double row, inv = 1.0 / (win * win)
    with nogil:
        for i in range(h):
            row = 0.0
            for j in range(w):
                row += x[i, j]
                s[i + 1, j + 1] = s[i, j + 1] + row
        for i in range(oh):
            for j in range(ow):
                o[i, j] = (s[i + win, j + win] - s[i, j + win]
                           - s[i + win, j] + s[i, j]) * inv
    return out


from scipy.linalg.cython_blas cimport dgemm, dsyrk
from scipy.linalg.cython_lapack cimport dgeqrf, dorgqr, dsyevr, dtrtrs


# below this fraction of trace(a2^T a2) the subtracted Gram is not trusted
GRAM_TRUST = 1e-9


def cd_step(x1, a2, int rank_d, double rtol=1e-12, a2_gram=None):
    """Closed-form ``(C, D)`` for a fixed ``x1``.

    ``C = R^-1 Q^T a2`` from the QR of ``x1`` and ``D`` is the best
    rank-``rank_d`` approximation of ``(I - QQ^T) a2``, computed from the
    top eigenvectors of the smaller Gram matrix. Returns ``(C, D, bad)``
    where ``bad`` lists the columns with ``|r_ii| <= rtol * ||x1||_F``;
    when it is nonempty ``C`` and ``D`` are ``None``.

    ``a2_gram`` (``a2^T a2``, only used when ``a2`` has at least as many
    rows as columns) lets the residual Gram be formed as
    ``a2^T a2 - (Q^T a2)^T (Q^T a2)`` without touching the long side. When
    the kept eigenvalues are too small to trust after that subtraction the
    Gram is rebuilt from the explicit residual.

    ``a2`` is read in place when C-contiguous and ``D`` is C-contiguous.
    """
    cdef double[::1, :] q = np.array(x1, dtype=np.float64, order="F", copy=True)
    a2c = np.ascontiguousarray(a2, dtype=np.float64)
    if a2c.ndim != 2:
        raise ValueError("cd_step: a2 must be 2-D")
    # a C-ordered m x p array is a Fortran-ordered p x m array: work on a2^T
    cdef double[::1, :] at = a2c.T
    cdef int m = q.shape[0], k = q.shape[1], p = at.shape[0]
    if at.shape[1] != m:
        raise ValueError("cd_step: x1 and a2 row counts differ")
    if k < 1 or m < k:
        raise ValueError("cd_step: x1 must have 1 <= cols <= rows")
    if rank_d < 0:
        raise ValueError("cd_step: rank_d must be nonnegative")
    cdef double[::1, :] g0
    cdef bint use_g0 = a2_gram is not None and p <= m
    if use_g0:
        g0 = np.asfortranarray(a2_gram, dtype=np.float64)
        if g0.shape[0] != p or g0.shape[1] != p:
            raise ValueError("cd_step: a2_gram must be p x p")

    cdef int info = 0, lwork = max(1, 64 * k), i, j
    cdef double[::1] tau = np.empty(k)
    cdef double[::1] work = np.empty(lwork)
    cdef double norm2 = 0.0, tol
    for j in range(k):
        for i in range(m):
            norm2 += q[i, j] * q[i, j]
    tol = rtol * sqrt(norm2)

    dgeqrf(&m, &k, &q[0, 0], &m, &tau[0], &work[0], &lwork, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf info={info}")
    bad = [j for j in range(k) if abs(q[j, j]) <= tol]
    if bad:
        return None, None, bad

    cdef double[::1, :] r = np.zeros((k, k), order="F")
    for j in range(k):
        for i in range(j + 1):
            r[i, j] = q[i, j]
    dorgqr(&m, &k, &k, &q[0, 0], &m, &tau[0], &work[0], &lwork, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dorgqr info={info}")

    cdef double one = 1.0, zero = 0.0, minus_one = -1.0
    cdef char tr_t = b"T", tr_n = b"N", up = b"U", nonunit = b"N"
    # qta2 = Q^T a2 = Q^T at^T  (k x p)
    qta2_arr = np.empty((k, p), order="F")
    cdef double[::1, :] qta2 = qta2_arr
    dgemm(&tr_t, &tr_t, &k, &p, &m, &one, &q[0, 0], &m, &at[0, 0], &p, &zero, &qta2[0, 0], &k)

    # residual outside colspace(x1), stored transposed: rt = at - qta2^T Q^T
    rt_arr = np.array(at, order="F", copy=True)
    cdef double[::1, :] rt = rt_arr
    dgemm(&tr_t, &tr_t, &p, &m, &k, &minus_one, &qta2[0, 0], &k, &q[0, 0], &m, &one, &rt[0, 0], &p)

    c_arr = np.array(qta2_arr, order="F", copy=True)
    cdef double[::1, :] c = c_arr
    dtrtrs(&up, &tr_n, &nonunit, &k, &p, &r[0, 0], &k, &c[0, 0], &k, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dtrtrs info={info}")

    cdef int small = min(m, p)
    if rank_d >= small:
        return c_arr, rt_arr.T, []
    if rank_d == 0:
        return c_arr, np.zeros((m, p)), []

    # Gram of the smaller side, top rank_d eigenvectors
    cdef bint cols = p <= m
    cdef int side = p if cols else m
    cdef double[::1, :] gram = np.zeros((side, side), order="F")
    cdef double g0_trace = 0.0
    if use_g0:
        for j in range(p):
            g0_trace += g0[j, j]
            for i in range(j + 1):
                gram[i, j] = g0[i, j]
        dsyrk(&up, &tr_t, &side, &k, &minus_one, &qta2[0, 0], &k, &one, &gram[0, 0], &side)
    else:
        _resid_gram(rt, gram, cols)

    cdef char jobz = b"V", rng = b"I"
    cdef int il = side - rank_d + 1, iu = side, found = 0
    cdef int lw = 26 * side, liw = 10 * side
    cdef double vl = 0.0, vu = 0.0, abstol = 0.0
    cdef double[::1] evals = np.empty(side)
    vecs_arr = np.empty((side, rank_d), order="F")
    cdef double[::1, :] vecs = vecs_arr
    cdef int[::1] isuppz = np.empty(2 * rank_d, dtype=np.intc)
    cdef double[::1] ework = np.empty(lw)
    cdef int[::1] iwork = np.empty(liw, dtype=np.intc)
    dsyevr(&jobz, &rng, &up, &side, &gram[0, 0], &side, &vl, &vu, &il, &iu, &abstol,
           &found, &evals[0], &vecs[0, 0], &side, &isuppz[0], &ework[0], &lw,
           &iwork[0], &liw, &info)
    if info != 0 or found != rank_d:
        raise np.linalg.LinAlgError(f"dsyevr info={info}, found={found}")
    if use_g0 and evals[0] <= GRAM_TRUST * g0_trace:
        gram = np.zeros((side, side), order="F")
        _resid_gram(rt, gram, cols)
        dsyevr(&jobz, &rng, &up, &side, &gram[0, 0], &side, &vl, &vu, &il, &iu, &abstol,
               &found, &evals[0], &vecs[0, 0], &side, &isuppz[0], &ework[0], &lw,
               &iwork[0], &liw, &info)
        if info != 0 or found != rank_d:
            raise np.linalg.LinAlgError(f"dsyevr info={info}, found={found}")

    # D^T (p x m, Fortran) is D (m x p, C order)
    dt_arr = np.empty((p, m), order="F")
    cdef double[::1, :] dt = dt_arr
    cdef double[::1, :] proj
    if cols:
        # D^T = V (V^T rt)
        proj = np.empty((rank_d, m), order="F")
        dgemm(&tr_t, &tr_n, &rank_d, &m, &p, &one, &vecs[0, 0], &p, &rt[0, 0], &p,
              &zero, &proj[0, 0], &rank_d)
        dgemm(&tr_n, &tr_n, &p, &m, &rank_d, &one, &vecs[0, 0], &p, &proj[0, 0], &rank_d,
              &zero, &dt[0, 0], &p)
    else:
        # D^T = (rt U) U^T
        proj = np.empty((p, rank_d), order="F")
        dgemm(&tr_n, &tr_n, &p, &rank_d, &m, &one, &rt[0, 0], &p, &vecs[0, 0], &m,
              &zero, &proj[0, 0], &p)
        dgemm(&tr_n, &tr_t, &p, &m, &rank_d, &one, &proj[0, 0], &p, &vecs[0, 0], &m,
              &zero, &dt[0, 0], &p)
    return c_arr, dt_arr.T, []


cdef void _resid_gram(double[::1, :] rt, double[::1, :] gram, bint cols):
    # upper triangle of resid^T resid (cols) or resid resid^T, from rt = resid^T
    cdef int p = rt.shape[0], m = rt.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char up = b"U", tr_n = b"N", tr_t = b"T"
    if cols:
        dsyrk(&up, &tr_n, &p, &m, &one, &rt[0, 0], &p, &zero, &gram[0, 0], &p)
    else:
        dsyrk(&up, &tr_t, &m, &p, &one, &rt[0, 0], &p, &zero, &gram[0, 0], &m)
