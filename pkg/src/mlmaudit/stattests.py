"""Collinearity, normality and heteroskedasticity diagnostics."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from mlmaudit.errors import (
    ConstantColumnError,
    ConstantSampleError,
    RankDeficientDesignError,
    SampleTooLargeError,
    SampleTooSmallError,
)

PERFECT_R2 = 1.0 - 1e-12


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    sample_size: int
    notes: str = ""

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value, "sample_size": self.sample_size, "notes": self.notes}


@dataclass(frozen=True)
class InsufficientGroups:
    n_groups: int
    required: int = 8

    def to_dict(self):
        return {"insufficient_groups": True, "n_groups": self.n_groups, "required": self.required}


def chi2_sf(x, df):
    """Upper tail of the chi-square distribution via the regularised incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def normal_sf(z):
    return float(special.ndtr(-z))


# --------------------------------------------------------------------------
# VIF
# --------------------------------------------------------------------------

def vif(features, intercept=True):
    """Variance inflation factor of every column.

    ``intercept=True`` regresses each column on the others plus a constant
    and uses the centred R**2. ``intercept=False`` regresses through the
    origin and uses the uncentred R**2; that variant also measures
    collinearity with the implicit constant and is what many statistics
    packages report when the design carries no constant column.

    A column whose R**2 reaches ``1 - 1e-12`` gets ``inf``.
    """
    x = np.asarray(features, dtype=np.float64)
    n, m = x.shape
    if m < 2:
        raise ValueError("VIF needs at least two features")
    if n <= m + 1:
        raise ValueError("VIF needs more than %d rows, got %d" % (m + 1, n))
    span = x.max(axis=0) - x.min(axis=0)
    if np.any(span == 0):
        raise ConstantColumnError("constant column(s) at index %s" % np.flatnonzero(span == 0).tolist())

    out = np.empty(m)
    for k in range(m):
        target = x[:, k]
        others = np.delete(x, k, axis=1)
        if intercept:
            others = np.column_stack([np.ones(n), others])
            tss = np.sum((target - target.mean()) ** 2)
        else:
            tss = np.sum(target**2)
        coef = np.linalg.lstsq(others, target, rcond=None)[0]
        rss = np.sum((target - others @ coef) ** 2)
        r2 = 1.0 - rss / tss
        out[k] = math.inf if r2 >= PERFECT_R2 else 1.0 / (1.0 - r2)
    return out


# --------------------------------------------------------------------------
# Shapiro-Wilk, Royston's AS R94
# --------------------------------------------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    # coef[0] + coef[1]*x + ...
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


def shapiro_wilk_coefficients(n):
    """Antisymmetric weight vector ``a`` (length n, unit norm) for ordered samples."""
    half = n // 2
    if n == 3:
        upper = np.array([math.sqrt(0.5)])
    else:
        i = np.arange(1, half + 1)
        mq = special.ndtri((i - 0.375) / (n + 0.25))  # negative, lower-tail quantiles
        summ2 = 2.0 * np.sum(mq**2)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - mq[0] / ssumm2
        upper = -mq.copy()
        if n > 5:
            a2 = -mq[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * mq[0] ** 2 - 2.0 * mq[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
            upper /= fac
            upper[0], upper[1] = a1, a2
        else:
            fac = math.sqrt((summ2 - 2.0 * mq[0] ** 2) / (1.0 - 2.0 * a1**2))
            upper /= fac
            upper[0] = a1
    a = np.zeros(n)
    a[:half] = -upper
    a[n - half:] = upper[::-1]
    return a


def shapiro_wilk(sample):
    """Shapiro-Wilk W and its p-value (Royston 1995 approximation), 3 <= n <= 5000."""
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n < 3:
        raise SampleTooSmallError("Shapiro-Wilk needs at least 3 observations, got %d" % n)
    if n > 5000:
        raise SampleTooLargeError("Shapiro-Wilk is limited to 5000 observations, got %d; subsample first" % n)
    if x[-1] - x[0] <= 1e-19 * max(1.0, abs(x[-1])):
        raise ConstantSampleError("sample is constant")

    a = shapiro_wilk_coefficients(n)
    centred = x - x.mean()
    w = float((a @ x) ** 2 / (centred @ centred))
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return TestResult(w, float(min(max(p, 0.0), 1.0)), n)

    w1 = 1.0 - w
    if w1 <= 0.0:
        return TestResult(w, 1.0, n)
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return TestResult(w, 1e-99, n)
        y = -math.log(gamma - y)
        mean = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mean = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
    p = normal_sf((y - mean) / sd)
    return TestResult(w, float(min(max(p, 0.0), 1.0)), n)


# --------------------------------------------------------------------------
# Breusch-Pagan
# --------------------------------------------------------------------------

def breusch_pagan(resid, design, studentized=False):
    """Breusch-Pagan test of residual variance against the design columns.

    The classic form (default) regresses ``e**2 / mean(e**2)`` on the design
    plus a constant and takes half the explained sum of squares. With
    ``studentized=True`` the Koenker variant ``n * R**2`` of ``e**2`` on the
    design is used instead. Both are referred to chi-square with one degree
    of freedom per design column.
    """
    e = np.asarray(getattr(resid, "values", resid), dtype=np.float64).ravel()
    z = np.asarray(design, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    n = e.size
    if z.shape[0] != n:
        raise ValueError("residuals (%d) and design rows (%d) differ" % (n, z.shape[0]))
    zc = np.column_stack([np.ones(n), z])
    if np.linalg.matrix_rank(zc) < zc.shape[1]:
        raise RankDeficientDesignError("design with intercept is rank deficient")
    df = z.shape[1]

    e2 = e**2
    if np.ptp(e2) == 0.0:
        return TestResult(0.0, 1.0, n, notes="constant squared residuals")
    target = e2 / e2.mean() if not studentized else e2
    coef = np.linalg.lstsq(zc, target, rcond=None)[0]
    fitted = zc @ coef
    ess = float(np.sum((fitted - target.mean()) ** 2))
    if studentized:
        tss = float(np.sum((target - target.mean()) ** 2))
        lm = n * ess / tss
        note = "Koenker studentized"
    else:
        lm = 0.5 * ess
        note = "classic Breusch-Pagan / Cook-Weisberg"
    return TestResult(lm, chi2_sf(lm, df), n, notes=note)


def random_effect_normality(m, min_groups=8):
    """Shapiro-Wilk on the group intercepts and each varying slope.

    Returns ``{effect_name: TestResult}`` or :class:`InsufficientGroups`
    when the model has fewer than ``min_groups`` groups.
    """
    j = len(m.groups)
    if j < min_groups:
        return InsufficientGroups(j, min_groups)
    out = {}
    if m.varying_intercept:
        out["(intercept)"] = shapiro_wilk(m.alpha)
    for k, f in enumerate(m.feature_names):
        if f in m.varying_features:
            out[f] = shapiro_wilk(m.beta[:, k])
    return out
