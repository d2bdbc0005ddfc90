"""F1 and rank-based AUC-ROC, per group and macro-averaged."""

from dataclasses import dataclass, field

import numpy as np

from mlmaudit import mlm
from mlmaudit.errors import SingleClassError
from mlmaudit.kernels import rank_auc


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_labels(cls, y_true, y_pred):
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        if y_true.shape != y_pred.shape:
            raise ValueError("y_true and y_pred differ in length")
        return cls(
            tp=int(np.sum(y_true & y_pred)),
            fp=int(np.sum(~y_true & y_pred)),
            tn=int(np.sum(~y_true & ~y_pred)),
            fn=int(np.sum(y_true & ~y_pred)),
        )

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class F1Result:
    value: float
    flag: str = None  # "no_positives" when undefined, "zero_division" when tp == 0


def f1_score(y_true, y_pred):
    """F1 with a flag instead of an exception for the degenerate cases.

    ``value`` is ``None`` when there are no positives at all (nothing to
    score) and 0 when ``tp == 0`` but some positives exist.
    """
    c = ConfusionCounts.from_labels(y_true, y_pred)
    if c.total == 0:
        raise ValueError("empty input")
    if c.tp == 0:
        if c.fp == 0 and c.fn == 0:
            return F1Result(None, "no_positives")
        return F1Result(0.0, "zero_division")
    return F1Result(2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn))


def auc_roc(y_true, scores):
    """P(score+ > score-) + P(tie)/2, computed from mid-rank sums."""
    y = np.asarray(y_true).astype(np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("y_true and scores differ in length")
    if np.any(np.isnan(s)):
        raise ValueError("scores contain NaN")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise SingleClassError("AUC needs both classes present")
    return rank_auc(y, s)


@dataclass
class GroupAccuracy:
    per_group: dict = field(default_factory=dict)  # group -> {"f1", "auc", "n", "flags"}
    macro_f1: float = None
    macro_auc: float = None
    weighting: str = "macro"

    def to_dict(self):
        return {
            "per_group": self.per_group,
            "macro_f1": self.macro_f1,
            "macro_auc": self.macro_auc,
            "weighting": self.weighting,
        }


def per_group_accuracy(m, test, threshold=0.5, weighted=False):
    """F1 and AUC within every group of ``test`` plus their (macro) average.

    Groups whose metric is undefined carry a flag and are left out of that
    metric's average.
    """
    proba = mlm.predict_proba(m, test.features, test.group)
    pred = (proba >= threshold).astype(np.int64)
    out = GroupAccuracy(weighting="weighted" if weighted else "macro")
    f1s, aucs, wf, wa = [], [], [], []
    for g in sorted(set(test.group.tolist())):
        rows = test.group == g
        y = test.target[rows]
        entry = {"n": int(rows.sum()), "f1": None, "auc": None, "flags": []}
        f1 = f1_score(y, pred[rows])
        entry["f1"] = f1.value
        if f1.flag:
            entry["flags"].append(f1.flag)
        if f1.value is not None:
            f1s.append(f1.value)
            wf.append(rows.sum())
        try:
            entry["auc"] = auc_roc(y, proba[rows])
            aucs.append(entry["auc"])
            wa.append(rows.sum())
        except SingleClassError:
            entry["flags"].append("single_class")
        out.per_group[g] = entry
    if f1s:
        out.macro_f1 = float(np.average(f1s, weights=wf if weighted else None))
    if aucs:
        out.macro_auc = float(np.average(aucs, weights=wa if weighted else None))
    return out
