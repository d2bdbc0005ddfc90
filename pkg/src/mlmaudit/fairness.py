"""Group fairness (statistical parity, disparate impact, equalized odds) and
individual fairness within and across MLM-groups."""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from mlmaudit import mlm
from mlmaudit.errors import EmptySideError, UndefinedRateError, ZeroDenominatorError
from mlmaudit.kernels import similar_pairs


@dataclass(frozen=True, eq=False)
class GroupFairnessInput:
    """Aligned vectors; ``s`` is 1 for the privileged side and 0 otherwise."""

    y_true: np.ndarray
    y_pred: np.ndarray
    s: np.ndarray
    group: np.ndarray = None

    def __post_init__(self):
        for name in ("y_true", "y_pred", "s"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)).astype(np.int64))
        n = self.y_pred.shape[0]
        if self.y_true.shape[0] != n or self.s.shape[0] != n:
            raise ValueError("y_true, y_pred and s must have equal lengths")
        if self.group is not None:
            object.__setattr__(self, "group", np.asarray(self.group, dtype=object))

    def slice(self, label):
        rows = self.group == label
        return GroupFairnessInput(self.y_true[rows], self.y_pred[rows], self.s[rows], self.group[rows])

    def swapped(self):
        """Same data with privileged and under-privileged sides exchanged."""
        return GroupFairnessInput(self.y_true, self.y_pred, 1 - self.s, self.group)


def _positive_rates(y_pred, s):
    priv = s == 1
    if not priv.any() or priv.all():
        raise EmptySideError("both privileged and under-privileged rows are required")
    return y_pred[priv].mean(), y_pred[~priv].mean()


def statistical_parity(inp):
    """|P(Yhat=1 | S=1) - P(Yhat=1 | S!=1)|."""
    r_priv, r_under = _positive_rates(inp.y_pred, inp.s)
    return float(abs(r_priv - r_under))


def disparate_impact(inp):
    """P(Yhat=1 | S!=1) / P(Yhat=1 | S=1): below 1 means the under-privileged side is disadvantaged."""
    r_priv, r_under = _positive_rates(inp.y_pred, inp.s)
    if r_priv == 0:
        raise ZeroDenominatorError("privileged positive-prediction rate is zero")
    return float(r_under / r_priv)


@dataclass(frozen=True)
class EqualizedOdds:
    diff_fpr: float
    diff_tpr: float
    equal_odds: float


def equalized_odds(inp):
    """FPR gap, TPR gap and their mean between the two sides."""
    rates = {}
    for side in (1, 0):
        rows = inp.s == side
        neg = rows & (inp.y_true == 0)
        pos = rows & (inp.y_true == 1)
        if not neg.any() or not pos.any():
            raise UndefinedRateError(
                "%s side lacks actual %s" % ("privileged" if side else "under-privileged", "negatives" if not neg.any() else "positives")
            )
        rates[side] = (inp.y_pred[neg].mean(), inp.y_pred[pos].mean())
    d_fpr = float(abs(rates[1][0] - rates[0][0]))
    d_tpr = float(abs(rates[1][1] - rates[0][1]))
    return EqualizedOdds(d_fpr, d_tpr, 0.5 * (d_fpr + d_tpr))


def per_group(fn, inp):
    """Apply a group-fairness KPI inside every MLM-group; undefined cases become ``{'flag': ...}``."""
    out = {}
    for g in sorted(set(inp.group.tolist())):
        try:
            out[g] = fn(inp.slice(g))
        except (EmptySideError, ZeroDenominatorError, UndefinedRateError) as exc:
            out[g] = {"flag": type(exc).__name__, "detail": str(exc)}
    return out


# --------------------------------------------------------------------------
# individual fairness
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimilaritySpec:
    """Scaled Euclidean distance over the non-excluded features."""

    scale: np.ndarray
    delta: float = 0.25
    exclude: tuple = ()  # feature indices left out of the distance

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=np.float64)
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        keep = self.mask(scale.size)
        if np.any(scale[keep] <= 0):
            raise ValueError("scaling stds must be positive")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "exclude", tuple(int(i) for i in self.exclude))

    @classmethod
    def from_training(cls, train, delta=0.25, exclude_features=()):
        names = list(train.feature_names)
        idx = tuple(names.index(f) for f in exclude_features)
        return cls(train.features.std(axis=0), delta, idx)

    def mask(self, m):
        keep = np.ones(m, dtype=bool)
        keep[list(self.exclude)] = False
        return keep

    def scaled(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        keep = self.mask(x.shape[1])
        return x[:, keep] / self.scale[keep]

    def distance(self, a, b):
        d = self.scaled(a) - self.scaled(b)
        return float(np.sqrt(np.sum(d**2)))


@dataclass(frozen=True)
class PairDiff:
    distance: float
    diff: float
    similar: bool


def diff_ind(m, a, b, g, spec):
    """|P(Yhat=1|a) - P(Yhat=1|b)| for two individuals of the same group.

    The similarity gate (distance <= delta) is reported, not enforced.
    """
    pa = mlm.predict_proba(m, np.asarray(a, dtype=np.float64), g)
    pb = mlm.predict_proba(m, np.asarray(b, dtype=np.float64), g)
    dist = spec.distance(a, b)
    return PairDiff(dist, float(abs(pa - pb)), dist <= spec.delta)


def diff_ind_mlm(m, x, g_a, g_b):
    """Probability gap for one feature vector scored under two groups' coefficients."""
    x = np.asarray(x, dtype=np.float64)
    return float(abs(mlm.predict_proba(m, x, g_a) - mlm.predict_proba(m, x, g_b)))


@dataclass(frozen=True)
class SimilarPairScan:
    pair_count: int
    max_diff: float = None
    mean_diff: float = None

    @property
    def no_similar_pairs(self):
        return self.pair_count == 0

    def to_dict(self):
        d = {"pair_count": self.pair_count, "max_diff": self.max_diff, "mean_diff": self.mean_diff}
        if self.no_similar_pairs:
            d["flag"] = "NoSimilarPairs"
        return d


def scan_similar_pairs(m, data, spec):
    """Exhaustive within-group scan of pairs closer than ``spec.delta``; one result per group."""
    out = {}
    for g in sorted(set(data.group.tolist())):
        rows = data.group == g
        x = data.features[rows]
        p = mlm.predict_proba(m, x, g)
        count, dmax, dsum = similar_pairs(spec.scaled(x), p, spec.delta)
        out[g] = SimilarPairScan(count, dmax, dsum / count) if count else SimilarPairScan(0)
    return out


@dataclass
class MlmDiffScan:
    per_instance: np.ndarray  # worst group-pair gap for every probed instance
    per_pair: dict = field(default_factory=dict)  # "a|b" -> max gap over instances

    @property
    def max_diff(self):
        return float(self.per_instance.max())

    @property
    def mean_diff(self):
        return float(self.per_instance.mean())


def scan_mlm_differences(m, x):
    """Evaluate every probe row under every group and collect the inter-group gaps."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    probs = np.column_stack([mlm.predict_proba(m, x, g) for g in m.groups])
    per_pair = {}
    for (ia, ga), (ib, gb) in combinations(enumerate(m.groups), 2):
        per_pair["%s|%s" % (ga, gb)] = float(np.max(np.abs(probs[:, ia] - probs[:, ib])))
    return MlmDiffScan(probs.max(axis=1) - probs.min(axis=1), per_pair)
