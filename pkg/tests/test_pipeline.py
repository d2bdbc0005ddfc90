import numpy as np

from conftest import ROOT
from mlmaudit import audit, pipeline
from mlmaudit.config import load_config


def fast_config(csv, **changes):
    cfg = load_config(ROOT / "configs" / "synthetic.yaml")
    cfg = cfg.model_copy(update={"dataset": cfg.dataset.model_copy(update={"path": str(csv)})})
    proto = cfg.protocol.model_copy(update={"n_instances": 10, "n_repeats": 2})
    return cfg.model_copy(update={"protocol": proto, **changes})


def kpis(report):
    return {k["name"]: k for k in report.kpis()}


def test_report_contents(synthetic_csv):
    run = pipeline.run_audit(fast_config(synthetic_csv), timestamp="t")
    r = run.report
    k = kpis(r)
    assert set(k) == {"vif", "swt", "bpt", "auc_roc", "f1", "sp", "di", "equal_odds", "diff_ind", "diff_ind_mlm",
                      "rho_order_shap", "rho_order_lime", "pux_shap", "pux_lime", "poifs_shap", "poifs_lime"}
    assert r.metadata["n_rows"] == 1338 and r.metadata["n_test"] + r.metadata["n_train"] == 1338
    assert r.statistical_properties["details"]["random_effect_normality"]["insufficient_groups"] is True
    assert k["pux_shap"]["value"] < 1e-12
    # headline EqualOdds is the worst defined group
    defined = [v for v in k["equal_odds"]["per_group"].values() if not isinstance(v, dict)]
    assert k["equal_odds"]["value"] == max(defined)
    comp = r.explainability["details"]["instance_comparisons"]
    assert comp and comp[0]["group"] == "northwest"
    pair = r.individual_fairness["details"]["pairs"][0]
    assert pair["group"] == "northwest" and 0.0 <= pair["diff"] <= 1.0
    assert r.individual_fairness["details"]["mlm_probes"][0]["diff"] <= k["diff_ind_mlm"]["value"] + 1.0


def test_vif_convention_switch(synthetic_csv):
    cfg = fast_config(synthetic_csv)
    centred = cfg.model_copy(update={"stat_tests": cfg.stat_tests.model_copy(update={"vif_intercept": True})})
    a = kpis(pipeline.run_audit(cfg).report)["vif"]
    b = kpis(pipeline.run_audit(centred).report)["vif"]
    assert a["flags"] == ["uncentred"] and b["flags"] == ["centred"]
    assert a["value"] > b["value"]


def test_full_slice_option(synthetic_csv):
    cfg = fast_config(synthetic_csv)
    full = cfg.model_copy(update={"fairness": cfg.fairness.model_copy(update={"slice": "full"})})
    r = pipeline.run_audit(full).report
    assert r.group_fairness["details"]["n"] == 1338


def test_jsonable():
    out = pipeline.jsonable({"a": np.float64(np.nan), "b": np.arange(2), 3: (np.int32(4), np.bool_(True))})
    assert out == {"a": None, "b": [0, 1], "3": [4, True]}


def test_report_body_has_no_nan(synthetic_csv):
    r = pipeline.run_audit(fast_config(synthetic_csv)).report
    audit.to_json(r)  # allow_nan=False raises on any NaN or infinity
