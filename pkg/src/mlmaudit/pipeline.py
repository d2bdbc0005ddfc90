"""End-to-end audit: ingest, split, fit, every KPI module, report."""

import datetime
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from mlmaudit import __version__, accuracy, audit, explain_eval, fairness, ingest, mlm, stattests
from mlmaudit._accel import BACKEND
from mlmaudit.config import AuditConfig
from mlmaudit.errors import AuditError, ConfigError
from mlmaudit.explainers import LimeConfig, sample_background

TOOL = "mlmaudit"

# spawn-key tag for the per-instance comparison LIME streams
_COMPARISON = 4


def _quiet(msg):
    pass


@dataclass
class AuditRun:
    report: audit.AuditReport
    model: mlm.MlmModel
    train: ingest.Dataset
    test: ingest.Dataset
    config: AuditConfig


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def jsonable(obj):
    """Plain-python copy of ``obj``; NaN and infinities become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def instance_vector(feature_names, mapping):
    """Feature vector from ``{name: value}``; every feature must be given exactly once."""
    missing = [f for f in feature_names if f not in mapping]
    if missing:
        raise ConfigError("instance is missing feature(s) %s" % ", ".join(repr(f) for f in missing))
    unknown = sorted(set(mapping) - set(feature_names))
    if unknown:
        raise ConfigError("instance names unknown feature(s) %s" % ", ".join(repr(f) for f in unknown))
    return np.array([float(mapping[f]) for f in feature_names])


def roles_of(cfg):
    d = cfg.dataset
    return ingest.ColumnRoles(tuple(d.features), d.group, d.sensitive, d.privileged_value, d.target, d.target_threshold)


def model_spec(cfg):
    return mlm.MlmSpec(
        tuple(cfg.dataset.features),
        varying_intercept=cfg.model.varying_intercept,
        varying_slope_features=tuple(cfg.model.varying_slopes),
    )


def fit_options(cfg):
    return mlm.FitOptions(**cfg.model.fit.model_dump())


def lime_config(cfg, train):
    lc = cfg.explainers.lime
    return LimeConfig(
        n_samples=lc.n_samples,
        kernel_width=lc.kernel_width,
        ridge_lambda=lc.ridge_lambda,
        perturbation_scale=tuple(train.features.std(axis=0)),
    )


def load_and_split(cfg):
    ds = ingest.load_dataset(cfg.dataset.path, roles_of(cfg))
    spec = ingest.SplitSpec(cfg.split.test_fraction, cfg.split_seed(), cfg.split.stratify_by_group)
    return ds, *ingest.split(ds, spec)


def fit_model(cfg, log=_quiet):
    """Load, split and fit; returns ``(model, train, test)``."""
    _, train, test = load_and_split(cfg)
    log("fitting multilevel model on %d training rows, %d groups" % (len(train), len(train.groups)))
    m = mlm.fit(train, model_spec(cfg), fit_options(cfg))
    return m, train, test


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------

def _statistical(cfg, m, train, bands):
    st = cfg.stat_tests
    names = list(train.feature_names)
    kpis, details = [], {}

    try:
        v = stattests.vif(train.features, intercept=st.vif_intercept)
        other = stattests.vif(train.features, intercept=not st.vif_intercept)
        flags = ["centred" if st.vif_intercept else "uncentred"]
        kpis.append(audit.scored("vif", float(v.max()), bands, dict(zip(names, v.tolist())), flags))
        details["vif"] = {
            "convention": flags[0],
            "per_feature": dict(zip(names, v.tolist())),
            "alternative_convention": dict(zip(names, other.tolist())),
        }
    except (AuditError, ValueError) as exc:
        kpis.append(audit.scored("vif", None, bands, flags=[type(exc).__name__]))
        details["vif"] = {"error": str(exc)}

    res = mlm.residuals(m, train, st.residual_kind)
    details["residuals"] = {"kind": res.kind, "n": int(res.values.size), "n_clamped": res.n_clamped}
    try:
        sw = stattests.shapiro_wilk(res.values)
        per_group = {}
        for g in train.groups:
            try:
                per_group[g] = stattests.shapiro_wilk(res.values[train.group == g]).p_value
            except AuditError as exc:
                per_group[g] = {"flag": type(exc).__name__}
        kpis.append(audit.scored("swt", sw.p_value, bands, per_group))
        details["swt"] = sw.to_dict()
    except AuditError as exc:
        kpis.append(audit.scored("swt", None, bands, flags=[type(exc).__name__]))
        details["swt"] = {"error": str(exc)}

    try:
        bp = stattests.breusch_pagan(res.values, train.features, studentized=st.bp_studentized)
        kpis.append(audit.scored("bpt", bp.p_value, bands))
        details["bpt"] = bp.to_dict()
    except AuditError as exc:
        kpis.append(audit.scored("bpt", None, bands, flags=[type(exc).__name__]))
        details["bpt"] = {"error": str(exc)}

    ren = stattests.random_effect_normality(m, st.min_groups_for_effect_normality)
    if isinstance(ren, stattests.InsufficientGroups):
        details["random_effect_normality"] = ren.to_dict()
    else:
        details["random_effect_normality"] = {k: r.to_dict() for k, r in ren.items()}
    return {"kpis": kpis, "details": details}


def _accuracy(cfg, m, test, bands):
    acc = accuracy.per_group_accuracy(m, test, cfg.threshold)
    f1_pg = {g: e["f1"] for g, e in acc.per_group.items()}
    auc_pg = {g: e["auc"] for g, e in acc.per_group.items()}
    flags = sorted({"%s:%s" % (g, f) for g, e in acc.per_group.items() for f in e["flags"]})
    kpis = [
        audit.scored("auc_roc", acc.macro_auc, bands, auc_pg, [f for f in flags if "single_class" in f]),
        audit.scored("f1", acc.macro_f1, bands, f1_pg, [f for f in flags if "single_class" not in f]),
    ]
    return {"kpis": kpis, "details": {"threshold": cfg.threshold, **acc.to_dict()}}


def _group_fairness_input(cfg, m, data):
    y_pred = mlm.predict_class(m, data.features, data.group, cfg.threshold)
    return fairness.GroupFairnessInput(data.target, y_pred, data.privileged, data.group)


def _group_fairness(cfg, m, data, bands):
    inp = _group_fairness_input(cfg, m, data)
    kpis, details = [], {"slice": cfg.fairness.slice, "n": int(len(data))}

    for name, fn in (("sp", fairness.statistical_parity), ("di", fairness.disparate_impact)):
        pg = fairness.per_group(fn, inp)
        try:
            kpis.append(audit.scored(name, fn(inp), bands, pg))
        except AuditError as exc:
            kpis.append(audit.scored(name, None, bands, pg, [type(exc).__name__]))
        details[name] = pg

    eo = fairness.per_group(fairness.equalized_odds, inp)
    eo_pg, eo_details, flags, rags = {}, {}, [], []
    for g, v in eo.items():
        if isinstance(v, dict):
            eo_pg[g] = v
            eo_details[g] = v
            flags.append("%s:%s" % (g, v["flag"]))
        else:
            eo_pg[g] = v.equal_odds
            eo_details[g] = {"diff_fpr": v.diff_fpr, "diff_tpr": v.diff_tpr, "equal_odds": v.equal_odds}
            rags.append(audit.score_kpi("equal_odds", v.equal_odds, bands))
    defined = [v for v in eo_pg.values() if not isinstance(v, dict)]
    if defined:
        entry = audit.kpi_entry("equal_odds", float(max(defined)), audit.worst(rags), eo_pg, flags)
    else:
        entry = audit.scored("equal_odds", None, bands, eo_pg, flags or ["not_computable"])
    kpis.append(entry)
    details["equal_odds"] = eo_details
    try:
        o = fairness.equalized_odds(inp)
        details["equal_odds_pooled"] = {"diff_fpr": o.diff_fpr, "diff_tpr": o.diff_tpr, "equal_odds": o.equal_odds}
    except AuditError as exc:
        details["equal_odds_pooled"] = {"flag": type(exc).__name__}
    return {"kpis": kpis, "details": details}


def _individual_fairness(cfg, m, train, data, bands):
    fc = cfg.fairness
    spec = fairness.SimilaritySpec.from_training(train, fc.similarity.delta, fc.similarity.exclude_features)
    scans = fairness.scan_similar_pairs(m, data, spec)
    pg = {g: (s.max_diff if not s.no_similar_pairs else {"flag": "NoSimilarPairs"}) for g, s in scans.items()}
    found = [s.max_diff for s in scans.values() if not s.no_similar_pairs]
    flags = ["%s:NoSimilarPairs" % g for g, s in scans.items() if s.no_similar_pairs]
    kpis = [audit.scored("diff_ind", max(found) if found else None, bands, pg, flags)]
    details = {
        "delta": spec.delta,
        "distance": "euclidean on training-std scaled features",
        "excluded_features": list(fc.similarity.exclude_features),
        "similar_pairs": {g: s.to_dict() for g, s in scans.items()},
    }

    names = list(train.feature_names)
    pairs = []
    for p in fc.pairs:
        excl = fairness.SimilaritySpec.from_training(train, fc.similarity.delta, p.exclude_features)
        r = fairness.diff_ind(m, instance_vector(names, p.a), instance_vector(names, p.b), p.group, excl)
        pairs.append({"label": p.label, "group": p.group, "a": p.a, "b": p.b, "distance": r.distance, "diff": r.diff, "similar": r.similar})
    details["pairs"] = pairs

    scan = fairness.scan_mlm_differences(m, data.features)
    kpis.append(
        audit.scored("diff_ind_mlm", scan.max_diff, bands, scan.per_pair, ["max over %d probe rows" % len(data)])
    )
    probes = []
    for p in fc.mlm_probes:
        d = fairness.diff_ind_mlm(m, instance_vector(names, p.instance), p.group_a, p.group_b)
        probes.append({"label": p.label, "instance": p.instance, "group_a": p.group_a, "group_b": p.group_b, "diff": d})
    details["mlm_scan"] = {"n_probes": len(data), "max_diff": scan.max_diff, "mean_diff": scan.mean_diff}
    details["mlm_probes"] = probes
    return {"kpis": kpis, "details": details}


_SUFFIX = {"kernel_shap": "shap", "linear_lime": "lime"}


def _explainability(cfg, m, train, bands, log):
    proto = explain_eval.Protocol(cfg.protocol.n_instances, cfg.protocol.n_repeats, cfg.seed)
    lime_cfg = lime_config(cfg, train)
    kpis, details = [], {"protocol": {"n_instances": proto.n_instances, "n_repeats": proto.n_repeats, "seed": proto.seed}}
    for method, suffix in _SUFFIX.items():
        log("evaluating %s (%d groups x %d repeats x %d instances)" % (method, len(m.groups), proto.n_repeats, proto.n_instances))
        res = explain_eval.evaluate_explainer(m, train, method, proto, cfg.explainers.background_size, lime_cfg)
        flags = []
        for g, r in res.per_group.items():
            if r["excluded"]:
                flags.append("%s:excluded=%d" % (g, r["excluded"]))
            if r["invalid_repeats"]:
                flags.append("%s:invalid_repeats=%d" % (g, r["invalid_repeats"]))
            if r["with_replacement"]:
                flags.append("%s:sampled_with_replacement" % g)
        for kpi, pick in (("rho_order", min), ("pux", max), ("poifs", max)):
            pg = {g: {"mean": r[kpi + "_mean"], "std": r[kpi + "_std"]} for g, r in res.per_group.items()}
            means = [v["mean"] for v in pg.values() if v["mean"] is not None and math.isfinite(v["mean"])]
            kpis.append(audit.scored("%s_%s" % (kpi, suffix), pick(means) if means else None, bands, pg, flags))
        details[method] = res.per_group

    comparisons = []
    for i, c in enumerate(cfg.comparisons):
        x = instance_vector(m.feature_names, c.instance)
        gi = m.group_index(c.group)
        xg = train.features[train.group == c.group]
        bg = sample_background(xg, cfg.explainers.background_size, explain_eval.stream(cfg.seed, 1, gi), group=c.group)
        rec = explain_eval.instance_comparison(
            m, x, c.group, bg, lime_cfg, explain_eval.stream(cfg.seed, _COMPARISON, i), instance_id=c.label or None
        )
        rec["label"] = c.label
        comparisons.append(rec)
    details["instance_comparisons"] = comparisons
    return {"kpis": kpis, "details": details}


def _conventions(cfg):
    return [
        "VIF uses the %s convention (%s); the other convention is listed in the details."
        % (
            "centred" if cfg.stat_tests.vif_intercept else "uncentred",
            "regression on the other features plus a constant" if cfg.stat_tests.vif_intercept else "regression through the origin",
        ),
        "SWT and BPT use %s residuals of the fitted model on the training rows; BPT is the %s form."
        % (cfg.stat_tests.residual_kind, "Koenker studentized" if cfg.stat_tests.bp_studentized else "classic"),
        "Accuracy KPIs are macro averages over the MLM-groups of the test set at threshold %g." % cfg.threshold,
        "Group-fairness KPIs are computed on the %s slice; DI is the under-privileged over the privileged positive rate "
        "(privileged: %s = %r)." % (cfg.fairness.slice, cfg.dataset.sensitive, cfg.dataset.privileged_value),
        "Diff_Ind is the largest probability gap among within-group pairs at scaled distance <= %g; "
        "Diff_Ind_MLM is the largest gap between any two groups' predictions for one probe row." % cfg.fairness.similarity.delta,
        "Explainability KPIs: worst MLM-group mean (lowest rho_order, highest PUX and POIFS) over %d repeats of %d instances."
        % (cfg.protocol.n_repeats, cfg.protocol.n_instances),
    ]


def run_audit(cfg, log=_quiet, timestamp=None):
    """Execute the whole audit described by ``cfg`` and return an :class:`AuditRun`."""
    bands = audit.merge_bands(cfg.band_overrides())
    log("loading %s" % cfg.dataset.path)
    ds, train, test = load_and_split(cfg)
    log("%d rows, %d groups; %d train / %d test" % (len(ds), len(ds.groups), len(train), len(test)))
    log("fitting multilevel model")
    m = mlm.fit(train, model_spec(cfg), fit_options(cfg))
    log("converged=%s after %d iterations" % (m.fit_meta["converged"], m.fit_meta["iterations"]))

    fair_data = test if cfg.fairness.slice == "test" else ds
    log("statistical properties")
    sections = {"statistical_properties": _statistical(cfg, m, train, bands)}
    log("accuracy")
    sections["accuracy"] = _accuracy(cfg, m, test, bands)
    log("group fairness")
    sections["group_fairness"] = _group_fairness(cfg, m, fair_data, bands)
    log("individual fairness")
    sections["individual_fairness"] = _individual_fairness(cfg, m, train, fair_data, bands)
    sections["explainability"] = _explainability(cfg, m, train, bands, log)

    stamp = timestamp or datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0).isoformat()
    metadata = {
        "tool": TOOL,
        "tool_version": __version__,
        "backend": BACKEND,
        "dataset_sha256": file_sha256(cfg.dataset.path),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "split_seed": cfg.split_seed(),
        "n_rows": len(ds),
        "n_train": len(train),
        "n_test": len(test),
        "timestamp": stamp,
        "band_notes": list(audit.BAND_NOTES),
        "conventions": _conventions(cfg),
        "bands": {k: jsonable(vars(b)) for k, b in bands.items()},
    }
    sections = {k: {"kpis": jsonable(v["kpis"]), "details": jsonable(v["details"])} for k, v in sections.items()}
    annotations = {k: v.model_dump() for k, v in cfg.annotations.items()}
    report = audit.assemble_report(jsonable(metadata), jsonable(m.to_dict()), sections, annotations)
    log("done: %d red, %d amber, %d green, %d not scored" % tuple(report.overall[k] for k in ("red", "amber", "green", "not_scored")))
    return AuditRun(report, m, train, test, cfg)
