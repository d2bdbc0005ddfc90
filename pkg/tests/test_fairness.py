import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import toy_model
from mlmaudit import fairness, ingest, mlm
from mlmaudit.errors import EmptySideError, UndefinedRateError, UnknownGroupError, ZeroDenominatorError

G = fairness.GroupFairnessInput


def rate(num, den):
    return num / den


def hand_counts(y, p, s):
    """Loop-and-count reference for every group KPI."""
    c = {}
    for side in (0, 1):
        rows = [i for i in range(len(y)) if s[i] == side]
        c[side] = {
            "n": len(rows),
            "pred_pos": sum(p[i] for i in rows),
            "neg": sum(1 for i in rows if y[i] == 0),
            "pos": sum(1 for i in rows if y[i] == 1),
            "fp": sum(1 for i in rows if y[i] == 0 and p[i] == 1),
            "tp": sum(1 for i in rows if y[i] == 1 and p[i] == 1),
        }
    return c


def test_sp_examples():
    assert fairness.statistical_parity(G([0] * 4, [1, 0, 1, 0], [1, 1, 0, 0])) == 0.0
    inp = G([0] * 8, [1, 1, 1, 0, 1, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0, 0])
    assert fairness.statistical_parity(inp) == 0.5


def test_di_examples():
    assert fairness.disparate_impact(G([0] * 4, [1, 0, 1, 0], [1, 1, 0, 0])) == 1.0
    inp = G([0] * 8, [1, 1, 1, 0, 1, 0, 0, 0], [1, 1, 1, 1, 0, 0, 0, 0])
    assert fairness.disparate_impact(inp) == pytest.approx(1 / 3)
    with pytest.raises(ZeroDenominatorError):
        fairness.disparate_impact(G([0] * 4, [0, 0, 1, 0], [1, 1, 0, 0]))
    with pytest.raises(EmptySideError):
        fairness.statistical_parity(G([0] * 3, [0, 1, 1], [1, 1, 1]))


def test_equalized_odds_hand_example():
    # privileged: 5 negatives (1 false positive), 10 positives (9 caught)
    # under-privileged: 5 negatives (2 false positives), 10 positives (5 caught)
    y = [0] * 5 + [1] * 10 + [0] * 5 + [1] * 10
    p = [1] + [0] * 4 + [1] * 9 + [0] + [1] * 2 + [0] * 3 + [1] * 5 + [0] * 5
    s = [1] * 15 + [0] * 15
    eo = fairness.equalized_odds(G(y, p, s))
    assert eo.diff_fpr == pytest.approx(0.2)
    assert eo.diff_tpr == pytest.approx(0.4)
    assert eo.equal_odds == pytest.approx(0.3)
    assert fairness.equalized_odds(G(y, y, s)).equal_odds == 0.0


def test_equalized_odds_undefined():
    with pytest.raises(UndefinedRateError, match="positives"):
        fairness.equalized_odds(G([0, 0, 0, 1], [0, 1, 0, 1], [1, 1, 0, 0]))


def test_per_group_flags_instead_of_failing():
    inp = G([0, 1, 0, 1, 0, 0], [0, 1, 1, 1, 0, 1], [1, 1, 0, 0, 1, 0], ["a", "a", "a", "a", "b", "b"])
    out = fairness.per_group(fairness.equalized_odds, inp)
    assert isinstance(out["a"], fairness.EqualizedOdds)
    assert out["b"]["flag"] == "UndefinedRateError"


def test_oracle_on_random_inputs():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        n = int(rng.integers(4, 101))
        y, p, s = (rng.integers(0, 2, n).tolist() for _ in range(3))
        c = hand_counts(y, p, s)
        if min(c[0]["n"], c[1]["n"]) == 0 or c[1]["pred_pos"] == 0:
            continue
        if min(c[0]["neg"], c[0]["pos"], c[1]["neg"], c[1]["pos"]) == 0:
            continue
        inp = G(y, p, s)
        r1, r0 = rate(c[1]["pred_pos"], c[1]["n"]), rate(c[0]["pred_pos"], c[0]["n"])
        assert fairness.statistical_parity(inp) == abs(r1 - r0)
        assert fairness.disparate_impact(inp) == r0 / r1
        eo = fairness.equalized_odds(inp)
        dfpr = abs(rate(c[1]["fp"], c[1]["neg"]) - rate(c[0]["fp"], c[0]["neg"]))
        dtpr = abs(rate(c[1]["tp"], c[1]["pos"]) - rate(c[0]["tp"], c[0]["pos"]))
        assert (eo.diff_fpr, eo.diff_tpr, eo.equal_odds) == (dfpr, dtpr, 0.5 * (dfpr + dtpr))
        checked += 1


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=4, max_size=60))
def test_swap_invariants(rows):
    y, p, s = map(list, zip(*rows))
    inp = G(y, p, s)
    try:
        sp = fairness.statistical_parity(inp)
    except EmptySideError:
        return
    sw = inp.swapped()
    assert 0.0 <= sp <= 1.0
    assert fairness.statistical_parity(sw) == sp
    try:
        di, di_sw = fairness.disparate_impact(inp), fairness.disparate_impact(sw)
    except ZeroDenominatorError:
        di = None
    if di:
        assert di_sw == pytest.approx(1.0 / di)
    try:
        eo = fairness.equalized_odds(inp)
    except UndefinedRateError:
        return
    eo_sw = fairness.equalized_odds(sw)
    assert eo_sw.equal_odds == eo.equal_odds and 0.0 <= eo.equal_odds <= 1.0


@given(st.integers(1, 50), st.integers(0, 1), st.integers(0, 2**32 - 1))
def test_constant_predictions(n, const, seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 2, n + 2)
    s[:2] = [0, 1]
    inp = G(rng.integers(0, 2, n + 2), np.full(n + 2, const), s)
    assert fairness.statistical_parity(inp) == 0.0
    if const:
        assert fairness.disparate_impact(inp) == 1.0
    else:
        with pytest.raises(ZeroDenominatorError):
            fairness.disparate_impact(inp)


# ---------------------------------------------------------------- individual

def _spec(names=("x1", "x2"), delta=0.25):
    return fairness.SimilaritySpec(np.ones(len(names)), delta)


def test_diff_ind_identical_and_zero_coefficient():
    m = toy_model(alpha=(0.0, 0.5), beta=((1.0, 0.0), (0.5, 1.0)))
    r = fairness.diff_ind(m, [1.0, 2.0], [1.0, 2.0], "a", _spec())
    assert r.distance == 0.0 and r.diff == 0.0 and r.similar
    r = fairness.diff_ind(m, [1.0, 2.0], [1.0, 9.0], "a", _spec())
    assert r.diff == 0.0 and not r.similar
    with pytest.raises(UnknownGroupError):
        fairness.diff_ind(m, [1.0, 2.0], [1.0, 2.0], "zzz", _spec())


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=2), st.sampled_from(["a", "b"]))
def test_diff_ind_mlm_same_group_is_zero(x, g):
    assert fairness.diff_ind_mlm(toy_model(), x, g, g) == 0.0


def test_diff_ind_mlm_collapsed_model():
    m = toy_model(alpha=(0.3, 0.3), beta=((1.0, -1.0), (1.0, -1.0)))
    rng = np.random.default_rng(0)
    for x in rng.normal(size=(20, 2)) * 5:
        assert fairness.diff_ind_mlm(m, x, "a", "b") == 0.0


def test_diff_ind_mlm_matches_predictions():
    m = toy_model()
    x = np.array([0.4, -1.2])
    expected = abs(mlm.predict_proba(m, x, "a") - mlm.predict_proba(m, x, "b"))
    assert fairness.diff_ind_mlm(m, x, "a", "b") == expected


def _ds(x, g):
    n = len(g)
    roles = ingest.ColumnRoles(("x1", "x2"), "g", "s", "1", "t", 0.5)
    return ingest.Dataset(roles, (), np.asarray(x, float), np.asarray(g, dtype=object), np.array(["1"] * n, dtype=object),
                          np.array(["0"] * n, dtype=object), np.arange(n), np.zeros(n, dtype=np.int64))


def test_scan_delta_zero_no_duplicates():
    x = np.random.default_rng(0).normal(size=(10, 2))
    out = fairness.scan_similar_pairs(toy_model(), _ds(x, ["a"] * 10), fairness.SimilaritySpec(np.ones(2), 0.0))
    assert out["a"].no_similar_pairs and out["a"].to_dict()["flag"] == "NoSimilarPairs"


def test_scan_duplicates():
    x = np.array([[1.0, 2.0]] * 4 + [[5.0, 5.0]] * 2)
    out = fairness.scan_similar_pairs(toy_model(), _ds(x, ["a"] * 6), fairness.SimilaritySpec(np.ones(2), 0.0))
    assert out["a"].pair_count == 6 + 1 and out["a"].max_diff == 0.0


def test_scan_matches_brute_force(fitted, synthetic_split):
    train, test = synthetic_split
    spec = fairness.SimilaritySpec.from_training(train, 0.25)
    out = fairness.scan_similar_pairs(fitted, test, spec)
    for g, res in out.items():
        rows = np.flatnonzero(test.group == g)
        diffs = []
        for i, j in itertools.combinations(rows, 2):
            r = fairness.diff_ind(fitted, test.features[i], test.features[j], g, spec)
            if r.similar:
                diffs.append(r.diff)
        assert res.pair_count == len(diffs)
        if diffs:
            assert res.max_diff == pytest.approx(max(diffs), abs=1e-15)
            assert res.mean_diff == pytest.approx(np.mean(diffs), abs=1e-12)


def test_similarity_spec_validation():
    with pytest.raises(ValueError):
        fairness.SimilaritySpec(np.ones(2), -0.1)
    with pytest.raises(ValueError):
        fairness.SimilaritySpec(np.array([1.0, 0.0]))
    # a zero-scale feature is allowed when it is excluded from the distance
    spec = fairness.SimilaritySpec(np.array([1.0, 0.0]), exclude=(1,))
    assert spec.distance([0.0, 3.0], [0.0, -3.0]) == 0.0


def test_mlm_scan(fitted, synthetic_split):
    _, test = synthetic_split
    scan = fairness.scan_mlm_differences(fitted, test.features)
    brute = max(
        fairness.diff_ind_mlm(fitted, x, a, b) for x in test.features for a, b in itertools.combinations(fitted.groups, 2)
    )
    assert scan.max_diff == pytest.approx(brute, abs=1e-15)
    assert max(scan.per_pair.values()) == pytest.approx(brute, abs=1e-15)
