"""NumPy implementations of the hot kernels (fallback for ``_kernels``)."""
import numpy as np


def row_spd_solve(e, w2, gram):
    """Solve ``x_i (diag(w2_i) + gram) = e_i`` for every row ``i``."""
    e = np.asarray(e, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    gram = np.asarray(gram, dtype=np.float64)
    m, k = e.shape
    if w2.shape != (m, k) or gram.shape != (k, k):
        raise ValueError("row_spd_solve: shape mismatch")
    systems = np.broadcast_to(gram, (m, k, k)).copy()
    idx = np.arange(k)
    systems[:, idx, idx] += w2
    # batched Cholesky raises LinAlgError on a non-SPD row
    chol = np.linalg.cholesky(systems)
    y = np.linalg.solve(chol, e[:, :, None])
    return np.linalg.solve(np.swapaxes(chol, 1, 2), y)[:, :, 0]


def box_mean(img, win):
    """Mean over every ``win x win`` window fully inside ``img``."""
    x = np.asarray(img, dtype=np.float64)
    h, w = x.shape
    if win < 1 or win > h or win > w:
        raise ValueError("box_mean: window does not fit the image")
    s = np.zeros((h + 1, w + 1))
    s[1:, 1:] = x.cumsum(0).cumsum(1)
    out = s[win:, win:] - s[:-win, win:] - s[win:, :-win] + s[:-win, :-win]
    return out / (win * win)


# below this fraction of trace(a2^T a2) the subtracted Gram is not trusted
GRAM_TRUST = 1e-9


def cd_step(x1, a2, rank_d, rtol=1e-12, a2_gram=None):
    """Closed-form ``(C, D)`` for a fixed ``x1``; see ``_kernels.cd_step``."""
    from scipy.linalg import lapack, solve_triangular

    from . import matcore

    x1 = np.asarray(x1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    m, k = x1.shape
    if a2.shape[0] != m:
        raise ValueError("cd_step: x1 and a2 row counts differ")
    if k < 1 or m < k:
        raise ValueError("cd_step: x1 must have 1 <= cols <= rows")
    if rank_d < 0:
        raise ValueError("cd_step: rank_d must be nonnegative")
    try:
        q, r = matcore.qr(x1)
    except matcore.RankDeficiencyError as exc:
        return None, None, exc.indices
    qta2 = q.T @ a2
    c = solve_triangular(r, qta2, lower=False, check_finite=False)
    resid = a2 - q @ qta2
    if rank_d >= min(resid.shape):
        return c, resid, []
    if rank_d == 0:
        return c, np.zeros_like(resid), []
    p = a2.shape[1]
    if a2_gram is not None and p <= m:
        gram = np.asarray(a2_gram, dtype=np.float64) - qta2.T @ qta2
        evals, vecs, _, _, info = lapack.dsyevr(gram, compute_v=1, range="I", il=p - rank_d + 1, iu=p)
        if info != 0:
            raise np.linalg.LinAlgError(f"dsyevr info={info}")
        if evals[0] > GRAM_TRUST * np.trace(a2_gram):
            return c, (resid @ vecs) @ vecs.T, []
    return c, matcore.hard_threshold(resid, rank_d, method="gram"), []
