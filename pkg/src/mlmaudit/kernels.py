"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. The module-level names dispatch to one of them
according to :data:`mlmaudit._accel.BACKEND`; both implementations stay
importable through :data:`NUMBA_KERNELS` and :data:`NUMPY_KERNELS` so the
test-suite and the benchmark can compare them directly.
"""

import numpy as np

from mlmaudit._accel import BACKEND, njit

__all__ = [
    "BACKEND",
    "average_ranks",
    "rank_auc",
    "rowwise_spearman",
    "rowwise_sign_mismatch",
    "similar_pairs",
    "weighted_normal_equations",
]


# --------------------------------------------------------------------------
# average (mid) ranks
# --------------------------------------------------------------------------

@njit
def _average_ranks_nb(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


def _average_ranks_np(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(xs)) + 1))
    ends = np.concatenate((starts[1:], [n]))
    mid = 0.5 * (starts + ends - 1) + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(mid, ends - starts)
    return ranks


# --------------------------------------------------------------------------
# Mann-Whitney AUC from rank sums
# --------------------------------------------------------------------------

@njit
def _rank_auc_nb(y, scores):
    ranks = _average_ranks_nb(scores)
    n_pos = 0
    r_pos = 0.0
    for i in range(y.shape[0]):
        if y[i] == 1:
            n_pos += 1
            r_pos += ranks[i]
    n_neg = y.shape[0] - n_pos
    return (r_pos - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)


def _rank_auc_np(y, scores):
    ranks = _average_ranks_np(scores)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    return (ranks[pos].sum() - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)


# --------------------------------------------------------------------------
# Row-wise Spearman correlation (small M, many rows)
# --------------------------------------------------------------------------

@njit
def _rowwise_spearman_nb(a, b):
    n, m = a.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        ra = _average_ranks_nb(a[i])
        rb = _average_ranks_nb(b[i])
        ma = ra.mean()
        mb = rb.mean()
        sab = 0.0
        saa = 0.0
        sbb = 0.0
        for k in range(m):
            da = ra[k] - ma
            db = rb[k] - mb
            sab += da * db
            saa += da * da
            sbb += db * db
        if saa == 0.0 or sbb == 0.0:
            out[i] = np.nan
        else:
            out[i] = sab / np.sqrt(saa * sbb)
    return out


def _row_ranks_np(a):
    # rank = (#strictly smaller) + (#equal incl. self + 1) / 2
    less = (a[:, None, :] < a[:, :, None]).sum(axis=2)
    equal = (a[:, None, :] == a[:, :, None]).sum(axis=2)
    return less + 0.5 * (equal + 1)


def _rowwise_spearman_np(a, b):
    ra = _row_ranks_np(a)
    rb = _row_ranks_np(b)
    ra = ra - ra.mean(axis=1, keepdims=True)
    rb = rb - rb.mean(axis=1, keepdims=True)
    saa = (ra * ra).sum(axis=1)
    sbb = (rb * rb).sum(axis=1)
    sab = (ra * rb).sum(axis=1)
    denom = np.sqrt(saa * sbb)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0.0, sab / np.where(denom > 0.0, denom, 1.0), np.nan)
    return out


# --------------------------------------------------------------------------
# Sign disagreement counts
# --------------------------------------------------------------------------

@njit
def _rowwise_sign_mismatch_nb(a, b, tol):
    n, m = a.shape
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        c = 0
        for k in range(m):
            x = a[i, k]
            y = b[i, k]
            if (x > tol and y < -tol) or (x < -tol and y > tol):
                c += 1
        out[i] = c
    return out


def _rowwise_sign_mismatch_np(a, b, tol):
    flip = ((a > tol) & (b < -tol)) | ((a < -tol) & (b > tol))
    return flip.sum(axis=1).astype(np.int64)


# --------------------------------------------------------------------------
# Similar-pair scan within one group
# --------------------------------------------------------------------------

@njit
def _similar_pairs_nb(xs, p, delta):
    n, m = xs.shape
    count = 0
    dmax = 0.0
    dsum = 0.0
    d2max = delta * delta
    for i in range(n):
        for j in range(i + 1, n):
            d2 = 0.0
            for k in range(m):
                t = xs[i, k] - xs[j, k]
                d2 += t * t
            if d2 <= d2max:
                diff = abs(p[i] - p[j])
                count += 1
                dsum += diff
                if diff > dmax:
                    dmax = diff
    return count, dmax, dsum


def _similar_pairs_np(xs, p, delta):
    n = xs.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    d2 = ((xs[iu] - xs[ju]) ** 2).sum(axis=1)
    hit = d2 <= delta * delta
    diffs = np.abs(p[iu[hit]] - p[ju[hit]])
    count = int(hit.sum())
    if count == 0:
        return 0, 0.0, 0.0
    return count, float(diffs.max()), float(diffs.sum())


# --------------------------------------------------------------------------
# Weighted normal equations Z'WZ, Z'Wy
# --------------------------------------------------------------------------

@njit
def _weighted_normal_equations_nb(z, w, y):
    n, m = z.shape
    gram = np.zeros((m, m), dtype=np.float64)
    rhs = np.zeros(m, dtype=np.float64)
    for i in range(n):
        wi = w[i]
        for a in range(m):
            za = wi * z[i, a]
            rhs[a] += za * y[i]
            for b in range(a, m):
                gram[a, b] += za * z[i, b]
    for a in range(m):
        for b in range(a):
            gram[a, b] = gram[b, a]
    return gram, rhs


def _weighted_normal_equations_np(z, w, y):
    zw = z * w[:, None]
    return zw.T @ z, zw.T @ y


NUMBA_KERNELS = {
    "average_ranks": _average_ranks_nb,
    "rank_auc": _rank_auc_nb,
    "rowwise_spearman": _rowwise_spearman_nb,
    "rowwise_sign_mismatch": _rowwise_sign_mismatch_nb,
    "similar_pairs": _similar_pairs_nb,
    "weighted_normal_equations": _weighted_normal_equations_nb,
}

NUMPY_KERNELS = {
    "average_ranks": _average_ranks_np,
    "rank_auc": _rank_auc_np,
    "rowwise_spearman": _rowwise_spearman_np,
    "rowwise_sign_mismatch": _rowwise_sign_mismatch_np,
    "similar_pairs": _similar_pairs_np,
    "weighted_normal_equations": _weighted_normal_equations_np,
}

_ACTIVE = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS


def average_ranks(x):
    """Mid-ranks (1-based) of a 1-D float array; ties share their mean rank."""
    return _ACTIVE["average_ranks"](np.ascontiguousarray(x, dtype=np.float64))


def rank_auc(y, scores):
    """Mann-Whitney AUC; ``y`` must hold both classes (checked by callers)."""
    return float(
        _ACTIVE["rank_auc"](
            np.ascontiguousarray(y, dtype=np.int64),
            np.ascontiguousarray(scores, dtype=np.float64),
        )
    )


def rowwise_spearman(a, b):
    """Spearman rho between matching rows of ``a`` and ``b``; NaN where a row is all-tied."""
    return _ACTIVE["rowwise_spearman"](
        np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64)
    )


def rowwise_sign_mismatch(a, b, tol=1e-12):
    """Per-row count of entries whose signs disagree; |v| < tol is sign-neutral."""
    return _ACTIVE["rowwise_sign_mismatch"](
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        float(tol),
    )


def similar_pairs(xs, p, delta):
    """Scan all i<j pairs; return (count, max |p_i-p_j|, sum |p_i-p_j|) over pairs with distance <= delta."""
    count, dmax, dsum = _ACTIVE["similar_pairs"](
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
        float(delta),
    )
    return int(count), float(dmax), float(dsum)


def weighted_normal_equations(z, w, y):
    return _ACTIVE["weighted_normal_equations"](
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
    )
