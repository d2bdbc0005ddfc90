"""Varying-intercept / varying-slope logistic multilevel model.

Fitting is a penalised IRLS (Newton) solve for all coefficients given the
variance components, alternated with EM updates of those components.
The random-effect means are profiled out: for a varying block with
precision ``tau`` the penalty is ``tau/2 * sum_j (theta_j - mean(theta))**2``.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from mlmaudit.errors import (
    DegenerateGroupError,
    ModelFormatError,
    NoConvergenceWarning,
    NumericalUnderflowWarning,
    SeparationDetectedError,
    UnknownGroupError,
)
from mlmaudit.explainers import Attribution
from mlmaudit.kernels import weighted_normal_equations

FORMAT_NAME = "mlmaudit.mlm"
FORMAT_VERSION = 1
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class MlmSpec:
    feature_names: tuple
    varying_intercept: bool = True
    varying_slope_features: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "varying_slope_features", tuple(self.varying_slope_features))
        unknown = set(self.varying_slope_features) - set(self.feature_names)
        if unknown:
            raise ValueError("varying slope features not among the features: %s" % sorted(unknown))

    @property
    def fixed_slope_features(self):
        return tuple(f for f in self.feature_names if f not in self.varying_slope_features)

    def is_varying(self, feature):
        return feature in self.varying_slope_features


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 200
    max_newton: int = 50
    separation_bound: float = 1e3
    sigma2_floor: float = 1e-8
    # fixes every variance component (np.inf removes the penalty) and skips EM
    sigma2_fixed: float = None


@dataclass(frozen=True, eq=False)
class MlmModel:
    """Fitted model with coefficients resolved per group.

    ``beta`` is ``(J, M)``: row ``j`` holds the slopes that apply in group
    ``groups[j]``; fixed-slope columns are identical across rows.
    """

    feature_names: tuple
    groups: tuple
    varying_intercept: bool
    varying_features: tuple
    alpha: np.ndarray
    beta: np.ndarray
    mu_alpha: float
    sigma2_alpha: float
    mu_beta: dict
    sigma2_beta: dict
    fit_meta: dict = field(default_factory=dict)

    def group_index(self, g):
        try:
            return self.groups.index(g)
        except ValueError:
            raise UnknownGroupError("unknown group %r (model groups: %s)" % (g, list(self.groups))) from None

    @property
    def n_features(self):
        return len(self.feature_names)

    @property
    def beta_varying(self):
        return {f: self.beta[:, k].copy() for k, f in enumerate(self.feature_names) if f in self.varying_features}

    @property
    def beta_fixed(self):
        return {f: float(self.beta[0, k]) for k, f in enumerate(self.feature_names) if f not in self.varying_features}

    def coefficients(self, g):
        """(intercept, slopes) for one group."""
        j = self.group_index(g)
        return float(self.alpha[j]), self.beta[j].copy()

    def black_box(self, g):
        """Vectorised log-odds function of an ``(n, M)`` feature array within group ``g``."""
        a, b = self.coefficients(g)
        return lambda x: a + np.asarray(x, dtype=np.float64) @ b

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "groups": list(self.groups),
            "varying_intercept": self.varying_intercept,
            "varying_features": list(self.varying_features),
            "alpha": self.alpha.tolist(),
            "beta_varying": {f: v.tolist() for f, v in self.beta_varying.items()},
            "beta_fixed": self.beta_fixed,
            "mu_alpha": self.mu_alpha,
            "sigma2_alpha": self.sigma2_alpha,
            "mu_beta": dict(self.mu_beta),
            "sigma2_beta": dict(self.sigma2_beta),
            "fit_meta": dict(self.fit_meta),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != FORMAT_NAME:
            raise ModelFormatError("not an mlmaudit model document")
        if doc.get("version") != FORMAT_VERSION:
            raise ModelFormatError("unsupported model version %r" % doc.get("version"))
        names = tuple(doc["feature_names"])
        groups = tuple(doc["groups"])
        beta = np.empty((len(groups), len(names)))
        for k, f in enumerate(names):
            if f in doc["beta_varying"]:
                beta[:, k] = doc["beta_varying"][f]
            else:
                beta[:, k] = doc["beta_fixed"][f]
        return cls(
            feature_names=names,
            groups=groups,
            varying_intercept=bool(doc["varying_intercept"]),
            varying_features=tuple(doc["varying_features"]),
            alpha=np.asarray(doc["alpha"], dtype=np.float64),
            beta=beta,
            mu_alpha=float(doc["mu_alpha"]),
            sigma2_alpha=float(doc["sigma2_alpha"]),
            mu_beta={k: float(v) for k, v in doc["mu_beta"].items()},
            sigma2_beta={k: float(v) for k, v in doc["sigma2_beta"].items()},
            fit_meta=dict(doc.get("fit_meta", {})),
        )


def to_json(m):
    return json.dumps(m.to_dict(), indent=2, sort_keys=True)


def from_json(text):
    return MlmModel.from_dict(json.loads(text))


def save_model(m, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(m))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())


# --------------------------------------------------------------------------
# prediction
# --------------------------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _group_rows(m, g, n):
    if np.ndim(g) == 0:
        return np.full(n, m.group_index(g), dtype=np.int64)
    g = np.asarray(g, dtype=object)
    if g.shape[0] != n:
        raise ValueError("need one group label per row")
    lookup = {label: j for j, label in enumerate(m.groups)}
    try:
        return np.array([lookup[label] for label in g], dtype=np.int64)
    except KeyError as exc:
        raise UnknownGroupError("unknown group %r (model groups: %s)" % (exc.args[0], list(m.groups))) from None


def log_odds(m, x, g):
    """Linear predictor; ``x`` is one feature vector or an ``(n, M)`` array, ``g`` a label or labels."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != m.n_features:
        raise ValueError("expected %d features, got %d" % (m.n_features, x2.shape[1]))
    j = _group_rows(m, g, x2.shape[0])
    eta = m.alpha[j] + np.einsum("ij,ij->i", x2, m.beta[j])
    return float(eta[0]) if single else eta


def predict_proba(m, x, g):
    return sigmoid(log_odds(m, x, g))


def predict_class(m, x, g, threshold=0.5):
    """1 where the predicted probability is at least ``threshold`` (inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p = predict_proba(m, x, g)
    if np.ndim(p) == 0:
        return int(p >= threshold)
    return (p >= threshold).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Residuals:
    kind: str
    values: np.ndarray
    n_clamped: int = 0


def residuals(m, data, kind="pearson"):
    """Response, Pearson or deviance residuals of ``m`` on a dataset with a target."""
    if kind not in ("response", "pearson", "deviance"):
        raise ValueError("unknown residual kind %r" % kind)
    y = data.target.astype(np.float64)
    p = predict_proba(m, data.features, data.group)
    clipped = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n_clamped = int(np.count_nonzero(clipped != p))
    if n_clamped:
        warnings.warn(
            "%d fitted probabilities were exactly 0 or 1 and have been clamped" % n_clamped,
            NumericalUnderflowWarning,
            stacklevel=2,
        )
    p = clipped
    if kind == "response":
        r = y - p
    elif kind == "pearson":
        r = (y - p) / np.sqrt(p * (1.0 - p))
    else:
        dev = -2.0 * (y * np.log(p) + (1.0 - y) * np.log1p(-p))
        r = np.sign(y - p) * np.sqrt(dev)
    return Residuals(kind, r, n_clamped)


def intrinsic_attribution(m, x, g, center=None, instance_id=None):
    """Read contributions straight off the coefficients.

    By default contributions are ``beta_k * x_k`` with base ``alpha_g``.
    Passing ``center`` (e.g. a background mean) gives the centred variant
    ``beta_k * (x_k - center_k)`` with base ``alpha_g + beta . center``.
    """
    a, b = m.coefficients(g)
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != m.n_features:
        raise ValueError("expected %d features, got %d" % (m.n_features, x.size))
    if center is None:
        base, contrib = a, b * x
    else:
        center = np.asarray(center, dtype=np.float64)
        base, contrib = a + float(b @ center), b * (x - center)
    return Attribution(
        base=float(base),
        contributions=contrib,
        method="intrinsic",
        feature_names=m.feature_names,
        instance=x,
        group=g,
        instance_id=instance_id,
    )


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

def _loglik(y, eta):
    # sum(y*eta - log(1 + exp(eta))), stable for large |eta|
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


class _Layout:
    """Column layout of the stacked design matrix."""

    def __init__(self, spec, groups):
        self.spec = spec
        self.n_groups = len(groups)
        self.blocks = []  # (name, slice, varying)
        col = 0
        width = self.n_groups if spec.varying_intercept else 1
        self.blocks.append(("(intercept)", slice(col, col + width), spec.varying_intercept))
        col += width
        for f in spec.feature_names:
            v = spec.is_varying(f)
            width = self.n_groups if v else 1
            self.blocks.append((f, slice(col, col + width), v))
            col += width
        self.n_params = col

    def design(self, x, gidx):
        n = x.shape[0]
        out = np.zeros((n, self.n_params))
        rows = np.arange(n)
        for k, (_, sl, varying) in enumerate(self.blocks):
            col = np.ones(n) if k == 0 else x[:, k - 1]
            if varying:
                out[rows, sl.start + gidx] = col
            else:
                out[:, sl.start] = col
        return out

    def penalty(self, tau):
        p = np.zeros((self.n_params, self.n_params))
        j = self.n_groups
        centering = np.eye(j) - np.full((j, j), 1.0 / j)
        for name, sl, varying in self.blocks:
            if varying:
                p[sl, sl] = tau[name] * centering
        return p

    def varying_names(self):
        return [name for name, _, v in self.blocks if v]

    def resolve(self, theta):
        """(alpha[J], beta[J, M]) from the stacked parameter vector."""
        j = self.n_groups
        cols = [theta[sl] if v else np.full(j, theta[sl.start]) for _, sl, v in self.blocks]
        return cols[0].copy(), np.column_stack(cols[1:]) if len(cols) > 1 else np.zeros((j, 0))


def _newton(xd, y, theta, pen, opts):
    """Maximise loglik - theta'P theta/2 by damped Newton; returns (theta, objective, hessian)."""

    def objective(t):
        return _loglik(y, xd @ t) - 0.5 * float(t @ pen @ t)

    obj = objective(theta)
    hess = None
    for _ in range(opts.max_newton):
        eta = xd @ theta
        p = 1.0 / (1.0 + np.exp(-eta))
        w = p * (1.0 - p)
        grad = xd.T @ (y - p) - pen @ theta
        gram, _ = weighted_normal_equations(xd, w, y)
        hess = gram + pen
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            cobj = objective(cand)
            if np.isfinite(cobj) and cobj >= obj:
                break
            t *= 0.5
            if t < 1e-10:
                cand, cobj = theta, obj
                break
        delta = np.max(np.abs(cand - theta))
        theta, obj_prev, obj = cand, obj, cobj
        if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > opts.separation_bound:
            raise SeparationDetectedError(
                "a coefficient exceeded %g in magnitude; the data look (quasi-)separated"
                % opts.separation_bound
            )
        if delta < 1e-10 * (1.0 + np.max(np.abs(theta))) or abs(obj - obj_prev) <= 1e-14 * abs(obj):
            break
    eta = xd @ theta
    p = 1.0 / (1.0 + np.exp(-eta))
    gram, _ = weighted_normal_equations(xd, p * (1.0 - p), y)
    return theta, obj, gram + pen


def logistic_irls(x, y, tol=1e-12, max_iter=100, bound=1e3):
    """Plain (unpenalised) logistic regression with intercept; returns ``[intercept, slopes...]``.

    Raises :class:`SeparationDetectedError` when a coefficient passes ``bound``
    or the information matrix becomes singular, both symptoms of separation.
    """
    xd = np.column_stack([np.ones(x.shape[0]), x])
    beta = np.zeros(xd.shape[1])
    for _ in range(max_iter):
        p = sigmoid(xd @ beta)
        w = p * (1.0 - p)
        gram, _ = weighted_normal_equations(xd, w, y)
        try:
            step = np.linalg.solve(gram, xd.T @ (y - p))
        except np.linalg.LinAlgError:
            raise SeparationDetectedError("information matrix became singular; the data look (quasi-)separated") from None
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > bound:
            raise SeparationDetectedError("a coefficient exceeded %g in magnitude; the data look (quasi-)separated" % bound)
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(beta))):
            break
    return beta


def fit(train, spec, options=None):
    """Fit the multilevel logistic model to a training :class:`~mlmaudit.ingest.Dataset`.

    Raises
    ------
    DegenerateGroupError
        A group has only one target class.
    SeparationDetectedError
        A coefficient diverged beyond ``options.separation_bound``.

    A :class:`NoConvergenceWarning` is emitted (and ``fit_meta['converged']``
    is False) when the iteration cap is hit.
    """
    opts = options or FitOptions()
    if tuple(spec.feature_names) != tuple(train.feature_names):
        raise ValueError("spec features %r do not match dataset features %r" % (spec.feature_names, train.feature_names))
    groups = tuple(train.groups)
    y = train.target.astype(np.float64)
    for g in groups:
        yg = y[train.group == g]
        if yg.min() == yg.max():
            raise DegenerateGroupError("group %r has a single target class (%d) in training data" % (g, int(yg[0])))

    gidx = np.searchsorted(np.array(groups, dtype=object), train.group)
    layout = _Layout(spec, groups)
    xd = layout.design(train.features, gidx)
    names = layout.varying_names()

    pooled = logistic_irls(train.features, y, bound=opts.separation_bound)
    theta = np.empty(layout.n_params)
    for k, (_, sl, _) in enumerate(layout.blocks):
        theta[sl] = pooled[k]

    if opts.sigma2_fixed is not None:
        s2 = float(opts.sigma2_fixed)
        tau = {n: (0.0 if np.isinf(s2) else 1.0 / max(s2, 1e-300)) for n in names}
        sigma2 = {n: s2 for n in names}
    else:
        # start weak: ten times the per-group sampling variance implied by the pooled fit
        p = 1.0 / (1.0 + np.exp(-(xd @ theta)))
        pooled_design = np.column_stack([np.ones(len(y)), train.features])
        info, _ = weighted_normal_equations(pooled_design, p * (1.0 - p), y)
        se2 = np.diag(np.linalg.inv(info))
        sigma2 = {}
        for k, (name, _, varying) in enumerate(layout.blocks):
            if varying:
                sigma2[name] = 10.0 * se2[k] * len(groups)
        tau = {n: 1.0 / sigma2[n] for n in names}

    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        theta, obj, hess = _newton(xd, y, theta, layout.penalty(tau), opts)
        history.append(obj)
        if opts.sigma2_fixed is not None or not names:
            converged = True
            break
        if len(history) > 1 and abs(history[-1] - history[-2]) < opts.tol * abs(history[-2]):
            converged = True
            break
        cov = np.linalg.inv(hess)
        j = len(groups)
        centering = np.eye(j) - np.full((j, j), 1.0 / j)
        for name, sl, varying in layout.blocks:
            if not varying:
                continue
            dev = theta[sl] - theta[sl].mean()
            post = np.trace(centering @ cov[sl, sl] @ centering)
            sigma2[name] = max((dev @ dev + post) / j, opts.sigma2_floor)
            tau[name] = 1.0 / sigma2[name]

    if not converged:
        warnings.warn(
            "fit did not converge within %d iterations" % opts.max_iter, NoConvergenceWarning, stacklevel=2
        )

    alpha, beta = layout.resolve(theta)
    if spec.varying_intercept:
        mu_alpha, s2_alpha = float(alpha.mean()), float(sigma2["(intercept)"])
    else:
        mu_alpha, s2_alpha = float(alpha[0]), 0.0
    mu_beta = {f: float(beta[:, k].mean()) for k, f in enumerate(spec.feature_names) if spec.is_varying(f)}
    s2_beta = {f: float(sigma2[f]) for f in spec.varying_slope_features}
    return MlmModel(
        feature_names=tuple(spec.feature_names),
        groups=groups,
        varying_intercept=spec.varying_intercept,
        varying_features=tuple(f for f in spec.feature_names if spec.is_varying(f)),
        alpha=alpha,
        beta=beta,
        mu_alpha=mu_alpha,
        sigma2_alpha=s2_alpha,
        mu_beta=mu_beta,
        sigma2_beta=s2_beta,
        fit_meta={
            "iterations": it,
            "converged": converged,
            "penalized_loglik": float(history[-1]),
            "n_train": int(len(y)),
        },
    )
