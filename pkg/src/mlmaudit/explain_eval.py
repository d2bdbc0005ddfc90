"""Accuracy of explainers measured against the model's intrinsic attributions.

Three per-instance scores compare an explainer with the intrinsic
``beta * x`` attribution:

* rank agreement of contribution magnitudes (Spearman rho),
* the gap between the class-1 probabilities each side reconstructs (PUX),
* the percentage of features whose contribution sign disagrees (POIFS).

:func:`evaluate_explainer` averages them over random training instances
per group and repeats the draw to get a spread.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from mlmaudit import mlm
from mlmaudit.errors import AuditError, ConstantVectorError
from mlmaudit.explainers import LimeConfig, kernel_shap, linear_lime, sample_background
from mlmaudit.kernels import average_ranks, rowwise_sign_mismatch, rowwise_spearman

SIGN_TOL = 1e-12
METHODS = ("intrinsic", "kernel_shap", "linear_lime")

# stream tags for SeedSequence spawn keys
_BACKGROUND, _INSTANCES, _LIME = 1, 2, 3


def stream(seed, *key):
    """Independent generator for ``(seed, key...)``; stable across runs and worker counts."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def spearman_rho(a, b):
    """Spearman correlation of the magnitude rankings of two contribution vectors."""
    a = np.abs(np.asarray(a, dtype=np.float64))
    b = np.abs(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need two vectors of equal length >= 2")
    rho = rowwise_spearman(a[None, :], b[None, :])[0]
    if np.isnan(rho):
        raise ConstantVectorError("all magnitudes are tied in at least one vector")
    return float(rho)


def pux(intrinsic, explained):
    """|P_intrinsic(y=1) - P_explained(y=1)| from each attribution's reconstructed log-odds."""
    return float(abs(mlm.sigmoid(intrinsic.total) - mlm.sigmoid(explained.total)))


def poifs(intrinsic, explained, tol=SIGN_TOL):
    """Percentage of features with opposite contribution signs; |c| < tol matches any sign."""
    a = np.asarray(intrinsic.contributions, dtype=np.float64)
    b = np.asarray(explained.contributions, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("attributions have different feature counts")
    flips = rowwise_sign_mismatch(a[None, :], b[None, :], tol)[0]
    return 100.0 * flips / a.size


@dataclass(frozen=True)
class Protocol:
    n_instances: int = 50
    n_repeats: int = 10
    seed: int = 0


@dataclass
class ExplainEvalResult:
    method: str
    protocol: Protocol
    per_group: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "protocol": {
                "n_instances": self.protocol.n_instances,
                "n_repeats": self.protocol.n_repeats,
                "seed": self.protocol.seed,
            },
            "per_group": self.per_group,
        }


def explain(method, m, x, g, background=None, lime_cfg=None, rng=None, instance_id=None):
    """Attribution of one instance by ``method``."""
    if method == "intrinsic":
        return mlm.intrinsic_attribution(m, x, g, instance_id=instance_id)
    f = m.black_box(g)
    if method == "kernel_shap":
        return kernel_shap(f, x, background, m.feature_names, group=g, instance_id=instance_id)
    if method == "linear_lime":
        return linear_lime(f, x, lime_cfg, m.feature_names, group=g, instance_id=instance_id, rng=rng)
    raise ValueError("unknown explanation method %r (choose from %s)" % (method, METHODS))


def _std(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def evaluate_explainer(m, train, method, protocol=None, background_size=100, lime_cfg=None):
    """Per-group mean and spread of rho_order, PUX and POIFS for one method.

    For each group and repeat, ``n_instances`` training rows are drawn
    without replacement (with replacement, flagged, if the group is
    smaller). Each repeat yields the mean of the per-instance scores; the
    reported mean/std are taken over the repeat means (std with ddof=1).
    Instances whose rho is undefined or whose explainer failed are left
    out and counted; a repeat losing more than 20% of its instances is
    marked invalid.
    """
    protocol = protocol or Protocol()
    if method == "linear_lime":
        lime_cfg = lime_cfg or LimeConfig()
        if lime_cfg.perturbation_scale is None:
            lime_cfg = replace(lime_cfg, perturbation_scale=tuple(train.features.std(axis=0)))
    result = ExplainEvalResult(method, protocol)

    for gi, g in enumerate(m.groups):
        xg = train.features[train.group == g]
        background = None
        if method == "kernel_shap":
            background = sample_background(xg, background_size, stream(protocol.seed, _BACKGROUND, gi), group=g)
        with_replacement = xg.shape[0] < protocol.n_instances
        rho_means, pux_means, poifs_means = [], [], []
        excluded = 0
        invalid = 0
        for r in range(protocol.n_repeats):
            rng = stream(protocol.seed, _INSTANCES, gi, r)
            idx = rng.choice(xg.shape[0], size=protocol.n_instances, replace=with_replacement)
            intr, expl, failed = [], [], 0
            for i, row in enumerate(idx):
                x = xg[row]
                try:
                    e = explain(method, m, x, g, background, lime_cfg, stream(protocol.seed, _LIME, gi, r, i))
                except AuditError:
                    failed += 1
                    continue
                intr.append(mlm.intrinsic_attribution(m, x, g))
                expl.append(e)
            a = np.array([t.contributions for t in intr])
            b = np.array([t.contributions for t in expl])
            rho = rowwise_spearman(np.abs(a), np.abs(b))
            gaps = np.abs(mlm.sigmoid(np.array([t.total for t in intr])) - mlm.sigmoid(np.array([t.total for t in expl])))
            flips = 100.0 * rowwise_sign_mismatch(a, b, SIGN_TOL) / a.shape[1]
            ok = ~np.isnan(rho)
            lost = failed + int((~ok).sum())
            excluded += lost
            if lost > 0.2 * protocol.n_instances:
                invalid += 1
            rho_means.append(float(rho[ok].mean()) if ok.any() else np.nan)
            pux_means.append(float(gaps.mean()))
            poifs_means.append(float(flips.mean()))

        result.per_group[g] = {
            "rho_order_mean": float(np.nanmean(rho_means)),
            "rho_order_std": _std([v for v in rho_means if not np.isnan(v)]),
            "pux_mean": float(np.mean(pux_means)),
            "pux_std": _std(pux_means),
            "poifs_mean": float(np.mean(poifs_means)),
            "poifs_std": _std(poifs_means),
            "excluded": excluded,
            "invalid_repeats": invalid,
            "with_replacement": with_replacement,
        }
    return result


def _describe(attr):
    c = np.asarray(attr.contributions, dtype=np.float64)
    total = attr.total
    return {
        "base": float(attr.base),
        "contributions": dict(zip(attr.feature_names, map(float, c))),
        "log_odds": total,
        "probability": float(mlm.sigmoid(total)),
        "magnitude_rank": dict(zip(attr.feature_names, map(float, average_ranks(-np.abs(c))))),
        "sign": dict(zip(attr.feature_names, (int(v) for v in np.where(np.abs(c) < SIGN_TOL, 0, np.sign(c))))),
    }


def instance_comparison(m, x, g, background, lime_cfg, rng=None, instance_id=None):
    """Side-by-side intrinsic / Kernel SHAP / LIME record for one instance, with disagreement flags."""
    x = np.asarray(x, dtype=np.float64)
    intr = mlm.intrinsic_attribution(m, x, g, instance_id=instance_id)
    record = {
        "group": g,
        "instance": dict(zip(m.feature_names, map(float, x))),
        "intrinsic": _describe(intr),
        "flags": [],
    }
    for method in ("kernel_shap", "linear_lime"):
        att = explain(method, m, x, g, background, lime_cfg, rng, instance_id)
        desc = _describe(att)
        if method == "linear_lime":
            desc["slopes"] = dict(zip(m.feature_names, map(float, att.extra["slopes"])))
        record[method] = desc
        for f in m.feature_names:
            si, se = record["intrinsic"]["sign"][f], desc["sign"][f]
            if si * se < 0:
                record["flags"].append("%s:sign:%s" % (method, f))
        if desc["magnitude_rank"] != record["intrinsic"]["magnitude_rank"]:
            record["flags"].append("%s:order" % method)
        desc["pux"] = pux(intr, att)
        desc["poifs"] = poifs(intr, att)
    return record
