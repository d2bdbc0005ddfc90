import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import toy_model
from mlmaudit import explain_eval, ingest, mlm
from mlmaudit.errors import ConstantVectorError
from mlmaudit.explainers import Attribution, LimeConfig, sample_background

SMALL = explain_eval.Protocol(n_instances=20, n_repeats=3, seed=5)


def att(contrib, base=0.0):
    return Attribution(base, np.asarray(contrib, dtype=float), "x")


def test_spearman_examples():
    assert explain_eval.spearman_rho([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert explain_eval.spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert explain_eval.spearman_rho([3, 1, 1], [2, 1, 1]) == pytest.approx(1.0)
    assert explain_eval.spearman_rho([-3, 1, 2], [3, -1, 2]) == pytest.approx(1.0)  # magnitudes only
    with pytest.raises(ConstantVectorError):
        explain_eval.spearman_rho([2, 2, -2], [1, 2, 3])
    with pytest.raises(ValueError):
        explain_eval.spearman_rho([1.0], [1.0])


@given(st.lists(st.integers(-100, 100).map(float), min_size=2, max_size=8), st.integers(0, 2**32 - 1))
def test_spearman_matches_scipy_and_is_transform_invariant(a, seed):
    a = np.asarray(a)
    b = np.random.default_rng(seed).integers(-3, 4, a.size).astype(float)
    if np.ptp(np.abs(a)) == 0 or np.ptp(np.abs(b)) == 0:
        return
    rho = explain_eval.spearman_rho(a, b)
    assert rho == pytest.approx(stats.spearmanr(np.abs(a), np.abs(b)).statistic, abs=1e-12)
    assert explain_eval.spearman_rho(np.abs(a) ** 3, np.sqrt(np.abs(b))) == pytest.approx(rho, abs=1e-12)
    assert explain_eval.spearman_rho(a, a) == pytest.approx(1.0)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_pux_symmetric_and_bounded(s1, s2):
    a, b = att([s1]), att([s2])
    assert explain_eval.pux(a, b) == explain_eval.pux(b, a)
    assert 0.0 <= explain_eval.pux(a, b) <= 1.0
    assert explain_eval.pux(a, a) == 0.0


def test_poifs_examples():
    assert explain_eval.poifs(att([1, -2, 3]), att([2, -1, 5])) == 0.0
    assert explain_eval.poifs(att([1, -2, 3]), att([2, 1, 5])) == pytest.approx(100 / 3)
    assert explain_eval.poifs(att([0.0, -2, 3]), att([-7, -1, 5])) == 0.0  # zero matches any sign


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=7))
def test_poifs_lattice(pairs):
    a, b = map(list, zip(*pairs))
    v = explain_eval.poifs(att(a), att(b))
    k = v * len(a) / 100
    assert 0 <= v <= 100 and k == pytest.approx(round(k))


def test_intrinsic_self_test(fitted, synthetic_split):
    train, _ = synthetic_split
    res = explain_eval.evaluate_explainer(fitted, train, "intrinsic", SMALL)
    for r in res.per_group.values():
        assert (r["rho_order_mean"], r["pux_mean"], r["poifs_mean"]) == (1.0, 0.0, 0.0)
        assert (r["rho_order_std"], r["pux_std"], r["poifs_std"]) == (0.0, 0.0, 0.0)


def test_shap_pux_is_zero_with_exact_enumeration(fitted, synthetic_split):
    train, _ = synthetic_split
    res = explain_eval.evaluate_explainer(fitted, train, "kernel_shap", SMALL)
    for r in res.per_group.values():
        assert r["pux_mean"] < 1e-12
        assert -1.0 <= r["rho_order_mean"] <= 1.0 and 0.0 <= r["poifs_mean"] <= 100.0


def test_evaluation_deterministic(fitted, synthetic_split):
    train, _ = synthetic_split
    a = explain_eval.evaluate_explainer(fitted, train, "linear_lime", SMALL, lime_cfg=LimeConfig(n_samples=500))
    b = explain_eval.evaluate_explainer(fitted, train, "linear_lime", SMALL, lime_cfg=LimeConfig(n_samples=500))
    assert a.to_dict() == b.to_dict()
    c = explain_eval.evaluate_explainer(
        fitted, train, "kernel_shap", explain_eval.Protocol(20, 3, seed=6)
    )
    d = explain_eval.evaluate_explainer(fitted, train, "kernel_shap", SMALL)
    assert c.to_dict()["per_group"] != d.to_dict()["per_group"]


def test_small_group_sampled_with_replacement(fitted, synthetic_split):
    train, _ = synthetic_split
    sub = train.subset(np.flatnonzero(train.group == "northeast")[:15])
    m = toy_model(groups=("northeast",), alpha=(0.1,), beta=((0.02, -0.03, 0.4),), names=("age", "bmi", "children"))
    res = explain_eval.evaluate_explainer(m, sub, "intrinsic", SMALL)
    assert res.per_group["northeast"]["with_replacement"] is True


def test_excluded_instances_counted():
    # half the rows have tied contribution magnitudes, so their rho is undefined
    m = toy_model(groups=("g",), alpha=(0.0,), beta=((1.0, 1.0),))
    x = np.array([[1.0, 1.0]] * 10 + [[1.0, 2.0]] * 10)
    n = len(x)
    ds = ingest.Dataset(
        ingest.ColumnRoles(("x1", "x2"), "g", "s", "1", "t", 0.5), (), x, np.array(["g"] * n, dtype=object),
        np.array(["1"] * n, dtype=object), np.array(["0"] * n, dtype=object), np.arange(n), np.zeros(n, dtype=np.int64),
    )
    res = explain_eval.evaluate_explainer(m, ds, "intrinsic", explain_eval.Protocol(10, 2, 0))
    r = res.per_group["g"]
    assert r["excluded"] > 0 and r["invalid_repeats"] >= 1


def test_unknown_method(fitted):
    with pytest.raises(ValueError, match="unknown explanation method"):
        explain_eval.explain("tree_shap", fitted, np.zeros(3), "northeast")


def test_instance_comparison_flags(fitted, synthetic_split):
    train, _ = synthetic_split
    g = "northwest"
    bg = sample_background(train.features[train.group == g], 100, np.random.default_rng(0), g)
    lime_cfg = LimeConfig(perturbation_scale=tuple(train.features.std(axis=0)))
    rec = explain_eval.instance_comparison(fitted, [35.0, 40.0, 3.0], g, bg, lime_cfg, np.random.default_rng(1))
    assert set(rec) >= {"intrinsic", "kernel_shap", "linear_lime", "flags", "group", "instance"}
    assert rec["kernel_shap"]["pux"] < 1e-12
    for method in ("kernel_shap", "linear_lime"):
        for f in fitted.feature_names:
            flagged = "%s:sign:%s" % (method, f) in rec["flags"]
            assert flagged == (rec["intrinsic"]["sign"][f] * rec[method]["sign"][f] < 0)


def test_instance_comparison_single_nonzero_beta():
    m = toy_model(groups=("g",), alpha=(0.2,), beta=((0.0, 2.0),))
    bg = sample_background(np.random.default_rng(0).normal(size=(50, 2)) - 3.0, 50, np.random.default_rng(0))
    rec = explain_eval.instance_comparison(m, [1.5, 2.5], "g", bg, LimeConfig(perturbation_scale=(1.0, 1.0)), np.random.default_rng(2))
    assert rec["flags"] == []
    for method in ("intrinsic", "kernel_shap", "linear_lime"):
        assert rec[method]["magnitude_rank"]["x2"] == 1.0


def test_zero_instance_base_is_alpha(fitted):
    a = mlm.intrinsic_attribution(fitted, np.zeros(3), "southwest")
    assert a.base == fitted.alpha[fitted.group_index("southwest")] and np.all(a.contributions == 0)
