"""Command-line front-end: ``mlmaudit audit|fit|explain|synth``."""

import argparse
import json
import sys
import warnings
from pathlib import Path

import yaml

from mlmaudit import audit, explain_eval, mlm, pipeline
from mlmaudit.config import defaults_document, load_config
from mlmaudit.errors import AuditError, ConfigError
from mlmaudit.explainers import sample_background

EXIT_OK, EXIT_ERROR, EXIT_RED = 0, 1, 3


def _progress(msg):
    print("[audit] %s" % msg, flush=True)


def _fail(exc):
    name = type(exc).__name__
    print("mlmaudit: error: %s: %s" % (name, exc), file=sys.stderr)
    return EXIT_ERROR


def _load(args):
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def parse_instance(text):
    """``"age=35,bmi=40"`` -> ``{"age": 35.0, "bmi": 40.0}``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError("malformed instance item %r (expected name=value)" % part)
        if key in out:
            raise ConfigError("feature %r given twice" % key)
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigError("value of %r is not a number: %r" % (key, value)) from None
    if not out:
        raise ConfigError("empty instance")
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_audit(args):
    if args.print_defaults:
        sys.stdout.write(yaml.safe_dump(defaults_document(), sort_keys=False))
        return EXIT_OK
    cfg = _load(args)
    out_dir = Path(args.out or cfg.output.dir)
    fmt = args.format or cfg.output.format
    run = pipeline.run_audit(cfg, log=_progress)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        p = out_dir / "report.json"
        p.write_text(audit.to_json(run.report) + "\n", encoding="utf-8")
        written.append(p)
    if fmt in ("markdown", "both"):
        p = out_dir / "report.md"
        p.write_text(audit.to_markdown(run.report), encoding="utf-8")
        written.append(p)
    for p in written:
        _progress("wrote %s" % p)
    if args.fail_on_red and run.report.overall[audit.RED] > 0:
        reds = [k["name"] for k in run.report.kpis() if k["rag"] == audit.RED]
        _progress("red KPIs present: %s" % ", ".join(reds))
        return EXIT_RED
    return EXIT_OK


def cmd_fit(args):
    cfg = _load(args)
    m, train, _ = pipeline.fit_model(cfg, log=_progress)
    out = Path(args.out or Path(cfg.output.dir) / "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    mlm.save_model(m, out)
    _progress("wrote %s (%d groups, converged=%s)" % (out, len(m.groups), m.fit_meta["converged"]))
    return EXIT_OK


def cmd_explain(args):
    cfg = _load(args)
    values = parse_instance(args.instance)
    if args.model:
        m = mlm.load_model(args.model)
        _, train, _ = pipeline.load_and_split(cfg)
    else:
        m, train, _ = pipeline.fit_model(cfg, log=_progress)
    x = pipeline.instance_vector(m.feature_names, values)
    gi = m.group_index(args.group)
    xg = train.features[train.group == args.group]
    bg = sample_background(xg, cfg.explainers.background_size, explain_eval.stream(cfg.seed, 1, gi), group=args.group)
    rec = explain_eval.instance_comparison(
        m, x, args.group, bg, pipeline.lime_config(cfg, train), explain_eval.stream(cfg.seed, pipeline._COMPARISON, 0)
    )
    text = json.dumps(pipeline.jsonable(rec), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        _progress("wrote %s" % args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args):
    from mlmaudit import surrogate

    surrogate.write_csv(args.out, seed=args.seed)
    _progress("wrote synthetic insurance-like table to %s" % args.out)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mlmaudit", description="Audit a multilevel logistic-regression classifier.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("audit", help="run the full audit and write the report")
    a.add_argument("--config", help="YAML configuration file")
    a.add_argument("--seed", type=int, help="master seed (overrides the config)")
    a.add_argument("--out", help="output directory (overrides output.dir)")
    a.add_argument("--format", choices=("json", "markdown", "both"), help="report format (overrides output.format)")
    a.add_argument("--fail-on-red", action="store_true", help="exit with status 3 when any KPI scores red")
    a.add_argument("--print-defaults", action="store_true", help="print every configuration default and exit")
    a.set_defaults(func=cmd_audit)

    f = sub.add_parser("fit", help="fit the model and export it as JSON")
    f.add_argument("--config", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--out", help="model JSON path (default <output.dir>/model.json)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("explain", help="compare intrinsic, Kernel SHAP and LIME attributions for one instance")
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--instance", required=True, help="feature values, e.g. age=35,bmi=40,children=3")
    e.add_argument("--group", required=True)
    e.add_argument("--model", help="previously exported model JSON (default: fit inline)")
    e.add_argument("--out", help="write the record here instead of standard output")
    e.set_defaults(func=cmd_explain)

    s = sub.add_parser("synth", help="write the synthetic insurance-like demo table")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (AuditError, OSError, ValueError, KeyError) as exc:
        return _fail(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
