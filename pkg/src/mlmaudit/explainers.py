"""Model-agnostic feature attribution in log-odds space.

Both explainers treat the audited model as a black box ``f`` mapping an
``(n, M)`` array of feature vectors to ``n`` log-odds.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from mlmaudit.errors import (
    DegenerateBackgroundError,
    DegenerateWeightsError,
    TooManyFeaturesError,
)
from mlmaudit.kernels import weighted_normal_equations

MAX_EXACT_FEATURES = 15


@dataclass(eq=False)
class Attribution:
    base: float
    contributions: np.ndarray
    method: str
    feature_names: tuple = ()
    instance: np.ndarray = None
    group: str = None
    instance_id: object = None
    extra: dict = field(default_factory=dict)

    @property
    def total(self):
        """Reconstructed log-odds: base plus the sum of contributions."""
        return float(self.base + np.sum(self.contributions))

    def to_dict(self):
        names = self.feature_names or tuple("x%d" % k for k in range(len(self.contributions)))
        out = {
            "method": self.method,
            "group": self.group,
            "instance_id": self.instance_id,
            "instance": None if self.instance is None else dict(zip(names, map(float, self.instance))),
            "base": float(self.base),
            "contributions": dict(zip(names, map(float, self.contributions))),
        }
        for key, value in self.extra.items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


@dataclass(frozen=True, eq=False)
class BackgroundSet:
    rows: np.ndarray
    seed: int = None
    group: str = None

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if rows.shape[0] == 0:
            raise DegenerateBackgroundError("background set is empty")
        object.__setattr__(self, "rows", rows)


def sample_background(x_group, size=100, rng=None, group=None, seed=None):
    """Up to ``size`` rows drawn without replacement from one group's training features."""
    x_group = np.asarray(x_group, dtype=np.float64)
    if x_group.shape[0] == 0:
        raise DegenerateBackgroundError("no training rows for group %r" % (group,))
    rng = rng if rng is not None else np.random.default_rng(seed)
    if x_group.shape[0] > size:
        idx = np.sort(rng.choice(x_group.shape[0], size=size, replace=False))
        x_group = x_group[idx]
    return BackgroundSet(x_group, seed=seed, group=group)


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float = None
    ridge_lambda: float = 1e-3
    perturbation_scale: tuple = None
    seed: int = 0

    def resolved_width(self, m):
        return 0.75 * math.sqrt(m) if self.kernel_width is None else float(self.kernel_width)

    def validate(self, m):
        if self.n_samples < 10 * m:
            raise ValueError("n_samples must be at least 10*M = %d" % (10 * m))
        if self.resolved_width(m) <= 0:
            raise ValueError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        if self.perturbation_scale is None or len(self.perturbation_scale) != m:
            raise ValueError("perturbation_scale must give one std per feature")


# --------------------------------------------------------------------------
# Kernel SHAP, exact coalition enumeration
# --------------------------------------------------------------------------

def coalition_masks(m):
    """All ``2**m`` coalitions as a boolean matrix, ordered by size then lexicographically."""
    masks = np.zeros((2**m, m), dtype=bool)
    r = 0
    for size in range(m + 1):
        for members in combinations(range(m), size):
            masks[r, list(members)] = True
            r += 1
    return masks


def shapley_kernel_weight(m, size):
    return (m - 1) / (math.comb(m, size) * size * (m - size))


def coalition_values(f, x, background, masks):
    """v(S) = mean over background rows of f with features in S fixed to x."""
    bg = background.rows
    n_bg, m = bg.shape
    hybrid = np.where(masks[:, None, :], x[None, None, :], bg[None, :, :])
    out = np.asarray(f(hybrid.reshape(-1, m)), dtype=np.float64).reshape(masks.shape[0], n_bg)
    return out.mean(axis=1)


def kernel_shap(f, x, background, feature_names=(), group=None, instance_id=None):
    """Exact Kernel SHAP.

    Solves the Shapley-kernel weighted least-squares problem over every
    non-trivial coalition, with missing features marginalised over the
    background rows and the efficiency constraint ``base + sum(phi) = f(x)``
    imposed by eliminating the last coefficient. With all ``2**M``
    coalitions present the solution is the classical Shapley value.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if not isinstance(background, BackgroundSet):
        background = BackgroundSet(background)
    m = x.size
    if background.rows.shape[1] != m:
        raise ValueError("background has %d columns, instance has %d" % (background.rows.shape[1], m))
    if m > MAX_EXACT_FEATURES:
        raise TooManyFeaturesError("exact enumeration supports at most %d features, got %d" % (MAX_EXACT_FEATURES, m))

    masks = coalition_masks(m)
    v = coalition_values(f, x, background, masks)
    base, fx = v[0], v[-1]
    if m == 1:
        phi = np.array([fx - base])
    else:
        z = masks[1:-1].astype(np.float64)
        sizes = z.sum(axis=1).astype(int)
        w = np.array([shapley_kernel_weight(m, s) for s in sizes])
        target = v[1:-1] - base
        # phi_last = (fx - base) - sum(others)
        zr = z[:, :-1] - z[:, -1:]
        yr = target - z[:, -1] * (fx - base)
        gram, rhs = weighted_normal_equations(zr, w, yr)
        head = np.linalg.solve(gram, rhs)
        phi = np.append(head, (fx - base) - head.sum())
    return Attribution(
        base=float(base),
        contributions=phi,
        method="kernel_shap",
        feature_names=tuple(feature_names),
        instance=x,
        group=group,
        instance_id=instance_id,
        extra={"background_size": int(background.rows.shape[0])},
    )


# --------------------------------------------------------------------------
# Linear LIME
# --------------------------------------------------------------------------

def linear_lime(f, x, cfg, feature_names=(), group=None, instance_id=None, rng=None):
    """Weighted-ridge local surrogate around ``x``.

    Gaussian perturbations with per-feature std ``cfg.perturbation_scale``
    are weighted by ``exp(-d**2 / width**2)``, where ``d`` is the
    scale-standardised distance to ``x``. Contributions are ``slope * x``
    (uncentred) and the base is the surrogate's intercept; the raw slopes are
    kept under ``extra['slopes']``. Features with zero scale are left out of
    the regression and get a zero contribution.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    m = x.size
    cfg.validate(m)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    scale = np.asarray(cfg.perturbation_scale, dtype=np.float64)
    active = scale > 0
    if not active.any():
        raise DegenerateWeightsError("every feature has zero perturbation scale")

    eps = rng.standard_normal((cfg.n_samples, m))
    eps[:, ~active] = 0.0
    samples = x + eps * scale
    d2 = (eps[:, active] ** 2).sum(axis=1)
    width = cfg.resolved_width(m)
    weights = np.exp(-d2 / width**2)
    if not np.any(weights >= 1e-12):
        raise DegenerateWeightsError("all kernel weights fell below 1e-12; widen kernel_width")

    y = np.asarray(f(samples), dtype=np.float64)
    design = np.column_stack([np.ones(cfg.n_samples), samples[:, active]])
    gram, rhs = weighted_normal_equations(design, weights, y)
    penalty = np.full(design.shape[1], cfg.ridge_lambda)
    penalty[0] = 0.0
    coef = np.linalg.solve(gram + np.diag(penalty), rhs)

    slopes = np.zeros(m)
    slopes[active] = coef[1:]
    return Attribution(
        base=float(coef[0]),
        contributions=slopes * x,
        method="linear_lime",
        feature_names=tuple(feature_names),
        instance=x,
        group=group,
        instance_id=instance_id,
        extra={"slopes": slopes},
    )
