import json
import shutil
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
import yaml

from conftest import ROOT
from mlmaudit import audit, mlm
from mlmaudit.cli import EXIT_ERROR, EXIT_OK, EXIT_RED, main, parse_instance
from mlmaudit.errors import ConfigError

FAST = {
    "protocol": {"n_instances": 10, "n_repeats": 2},
    "explainers": {"background_size": 50, "lime": {"n_samples": 500}},
}


def make_config(tmp_path, csv, **overrides):
    doc = yaml.safe_load((ROOT / "configs" / "synthetic.yaml").read_text())
    doc["dataset"]["path"] = str(csv)
    doc["output"]["dir"] = str(tmp_path / "out")
    for k, v in {**FAST, **overrides}.items():
        doc[k] = v
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_audit_writes_reports(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    code, out, _ = run(["audit", "--config", cfg], capsys)
    assert code == EXIT_OK
    assert all(line.startswith("[audit]") for line in out.strip().splitlines())
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    jsonschema.validate(doc, audit.json_schema())
    md = (tmp_path / "out" / "report.md").read_text()
    assert "## Discrimination" in md
    names = [k["name"] for s in audit.SECTIONS for k in doc[s]["kpis"]]
    assert len(names) == len(set(names)) == 16


def test_fail_on_red(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    code, out, _ = run(["audit", "--config", cfg, "--fail-on-red", "--format", "json"], capsys)
    assert code == EXIT_RED and "red KPIs present" in out
    relaxed = {k: {"direction": "lower_is_better", "green_edge": 1e9, "red_edge": 2e9} for k in
               ("vif", "sp", "equal_odds", "diff_ind", "diff_ind_mlm", "pux", "poifs")}
    relaxed.update({k: {"direction": "higher_is_better", "green_edge": -1.0, "red_edge": -2.0} for k in
                    ("swt", "bpt", "auc_roc", "f1", "di", "rho_order")})
    cfg = make_config(tmp_path, synthetic_csv, bands=relaxed)
    code, _, _ = run(["audit", "--config", cfg, "--fail-on-red", "--format", "json"], capsys)
    assert code == EXIT_OK


def test_unknown_key_exit_1(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    doc = yaml.safe_load(cfg.read_text())
    doc["featurs"] = ["age"]
    cfg.write_text(yaml.safe_dump(doc))
    code, _, err = run(["audit", "--config", cfg], capsys)
    assert code == EXIT_ERROR and "featurs" in err


def test_missing_dataset_exit_1(tmp_path, capsys):
    cfg = make_config(tmp_path, tmp_path / "absent.csv")
    code, _, err = run(["audit", "--config", cfg], capsys)
    assert code == EXIT_ERROR and "absent.csv" in err


def test_print_defaults(capsys):
    code, out, _ = run(["audit", "--print-defaults"], capsys)
    doc = yaml.safe_load(out)
    assert code == EXIT_OK and doc["protocol"] == {"n_instances": 50, "n_repeats": 10}
    assert doc["stat_tests"]["vif_intercept"] is False and "poifs" in doc["bands"]


def test_audit_without_config(capsys):
    code, _, err = run(["audit"], capsys)
    assert code == EXIT_ERROR and "--config" in err


def test_fit_and_round_trip(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    out = tmp_path / "model.json"
    code, _, _ = run(["fit", "--config", cfg, "--out", out], capsys)
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert len(doc["groups"]) == 4
    assert set(doc["beta_varying"]) == {"age", "bmi"} and set(doc["beta_fixed"]) == {"children"}
    m = mlm.load_model(out)
    x = np.random.default_rng(0).normal([40, 30, 1], [14, 6, 1], size=(100, 3))
    g = np.array(m.groups * 25, dtype=object)
    again = mlm.from_json(mlm.to_json(m))
    assert np.array_equal(mlm.predict_proba(again, x, g), mlm.predict_proba(m, x, g))


def test_fit_degenerate_exit_1(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    doc = yaml.safe_load(cfg.read_text())
    doc["dataset"]["target_threshold"] = 1e9
    cfg.write_text(yaml.safe_dump(doc))
    code, _, err = run(["fit", "--config", cfg, "--out", tmp_path / "m.json"], capsys)
    assert code == EXIT_ERROR and "DegenerateGroupError" in err


def test_explain_record(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    code, out, _ = run(["explain", "--config", cfg, "--instance", "age=35,bmi=40,children=3", "--group", "northwest"], capsys)
    assert code == EXIT_OK
    rec = json.loads(out[out.index("{"):])
    assert rec["group"] == "northwest" and rec["instance"] == {"age": 35.0, "bmi": 40.0, "children": 3.0}
    assert {"intrinsic", "kernel_shap", "linear_lime", "flags"} <= set(rec)


def test_explain_with_exported_model(tmp_path, synthetic_csv, capsys):
    cfg = make_config(tmp_path, synthetic_csv)
    model = tmp_path / "m.json"
    run(["fit", "--config", cfg, "--out", model], capsys)
    out = tmp_path / "rec.json"
    code, _, _ = run(["explain", "--config", cfg, "--model", model, "--instance", "age=0,bmi=0,children=0",
                      "--group", "southeast", "--out", out], capsys)
    assert code == EXIT_OK
    rec = json.loads(out.read_text())
    m = mlm.load_model(model)
    assert all(v == 0.0 for v in rec["intrinsic"]["contributions"].values())
    assert rec["intrinsic"]["base"] == m.alpha[m.group_index("southeast")]


@pytest.mark.parametrize(
    "instance,group,needle",
    [("age=35,bmi=40", "northwest", "children"), ("age=35,bmi=40,children=3", "atlantis", "atlantis"),
     ("age=35,bmi=forty,children=3", "northwest", "bmi"), ("age=35,bmi=40,children=3,height=2", "northwest", "height")],
)
def test_explain_errors(tmp_path, synthetic_csv, capsys, instance, group, needle):
    cfg = make_config(tmp_path, synthetic_csv)
    model = tmp_path / "m.json"
    run(["fit", "--config", cfg, "--out", model], capsys)
    code, _, err = run(["explain", "--config", cfg, "--model", model, "--instance", instance, "--group", group], capsys)
    assert code == EXIT_ERROR and needle in err


def test_parse_instance():
    assert parse_instance("age=35, bmi=40.5") == {"age": 35.0, "bmi": 40.5}
    for bad in ("age", "=3", "age=1,age=2", ""):
        with pytest.raises(ConfigError):
            parse_instance(bad)


def test_synth(tmp_path, capsys):
    code, _, _ = run(["synth", "--out", tmp_path / "s.csv", "--seed", "3"], capsys)
    assert code == EXIT_OK and len((tmp_path / "s.csv").read_text().splitlines()) == 1339


@pytest.mark.skipif(shutil.which("mlmaudit") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["mlmaudit", "audit", "--print-defaults"], capture_output=True, text=True)
    assert r.returncode == 0 and "protocol" in r.stdout
    r = subprocess.run([sys.executable, "-m", "mlmaudit.cli", "fit", "--config", str(tmp_path / "nope.yaml")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "nope.yaml" in r.stderr
