"""Traffic-light (red/amber/green) scoring and the audit report."""

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

from mlmaudit.errors import NonFiniteValueError, UnknownKpiError

RED, AMBER, GREEN = "red", "amber", "green"
_ORDER = {GREEN: 0, AMBER: 1, RED: 2}

SECTIONS = ("statistical_properties", "accuracy", "group_fairness", "individual_fairness", "explainability")
TOP_LEVEL_KEYS = ("metadata", "model") + SECTIONS + ("annotations", "overall")


@dataclass(frozen=True)
class Band:
    """Two edges split a KPI's range into green / amber / red.

    For ``lower_is_better`` a value is green below ``green_edge`` (or at it
    when ``green_inclusive``), red above ``red_edge`` (or at it when
    ``red_inclusive``), amber otherwise. ``higher_is_better`` mirrors this.
    """

    direction: str
    green_edge: float
    red_edge: float
    green_inclusive: bool = False
    red_inclusive: bool = False

    def __post_init__(self):
        if self.direction not in ("lower_is_better", "higher_is_better"):
            raise ValueError("direction must be lower_is_better or higher_is_better")
        lo_first = self.direction == "lower_is_better"
        g, r = self.green_edge, self.red_edge
        if (lo_first and g > r) or (not lo_first and g < r):
            raise ValueError("green edge lies on the red side of the red edge")
        if g == r and self.green_inclusive and self.red_inclusive:
            raise ValueError("coinciding edges cannot both be inclusive")

    def score(self, value):
        if self.direction == "lower_is_better":
            green = value <= self.green_edge if self.green_inclusive else value < self.green_edge
            red = value >= self.red_edge if self.red_inclusive else value > self.red_edge
        else:
            green = value >= self.green_edge if self.green_inclusive else value > self.green_edge
            red = value <= self.red_edge if self.red_inclusive else value < self.red_edge
        if green:
            return GREEN
        if red:
            return RED
        return AMBER


_LOW = "lower_is_better"
_HIGH = "higher_is_better"

DEFAULT_BANDS = {
    "vif": Band(_LOW, 1.0, 5.0),
    "swt": Band(_HIGH, 0.1, 0.05, red_inclusive=True),
    "bpt": Band(_HIGH, 0.1, 0.05, red_inclusive=True),
    "auc_roc": Band(_HIGH, 0.8, 0.5, green_inclusive=True, red_inclusive=True),
    "f1": Band(_HIGH, 0.8, 0.5, green_inclusive=True, red_inclusive=True),
    "sp": Band(_LOW, 0.2, 0.3),
    "di": Band(_HIGH, 0.8, 0.7, green_inclusive=True),
    "equal_odds": Band(_LOW, 0.1, 0.2),
    "diff_ind": Band(_LOW, 0.2, 0.3),
    "diff_ind_mlm": Band(_LOW, 0.2, 0.3),
    "rho_order": Band(_HIGH, 0.8, 0.3, green_inclusive=True, red_inclusive=True),
    "pux": Band(_LOW, 0.1, 0.2),
    "poifs": Band(_LOW, 10.0, 20.0, green_inclusive=True),
}

BAND_NOTES = [
    "VIF is at least 1 by construction, so its green band (< 1.0) cannot be reached; amber is the practical best.",
    "Fuzzy bands were made concrete: SP, Diff_Ind and Diff_Ind_MLM are green below 0.2, amber in [0.2, 0.3], red above 0.3; "
    "DI is green at 0.8 or above, amber in [0.7, 0.8), red below 0.7.",
    "Band edges belong to the worse score except where a closed bracket puts them in the better one "
    "(AUC-ROC, F1 and rho_order at 0.8 are green; POIFS at 10% is green and at 20% amber).",
    "EqualOdds and the explainability KPIs are scored on the worst MLM-group.",
]


def merge_bands(overrides=None):
    """Default bands with per-KPI field overrides applied (``{kpi: {field: value}}``)."""
    bands = dict(DEFAULT_BANDS)
    for name, changes in (overrides or {}).items():
        if name not in bands:
            raise UnknownKpiError("no bands defined for KPI %r" % name)
        bands[name] = Band(**{**asdict(bands[name]), **changes})
    return bands


def kpi_base(name):
    for suffix in ("_shap", "_lime"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def score_kpi(name, value, bands=None):
    """Red/amber/green for one KPI value."""
    bands = DEFAULT_BANDS if bands is None else bands
    base = kpi_base(name)
    if base not in bands:
        raise UnknownKpiError("no bands defined for KPI %r" % name)
    if value is None or not math.isfinite(value):
        if base == "vif" and value == math.inf:
            return RED
        raise NonFiniteValueError("KPI %r has non-finite value %r" % (name, value))
    return bands[base].score(float(value))


def worst(scores):
    scores = [s for s in scores if s is not None]
    return max(scores, key=_ORDER.__getitem__) if scores else None


def kpi_entry(name, value, rag, per_group=None, flags=None):
    return {"name": name, "value": value, "per_group": per_group, "rag": rag, "flags": list(flags or [])}


def scored(name, value, bands, per_group=None, flags=None):
    """KPI entry scored on ``value``; a ``None`` value becomes a flagged non-result."""
    flags = list(flags or [])
    if value is None:
        return kpi_entry(name, None, None, per_group, flags or ["not_computable"])
    if value == math.inf:
        flags.append("perfect_collinearity")
        return kpi_entry(name, None, RED, per_group, flags)
    return kpi_entry(name, float(value), score_kpi(name, value, bands), per_group, flags)


@dataclass
class AuditReport:
    metadata: dict
    model: dict
    statistical_properties: dict
    accuracy: dict
    group_fairness: dict
    individual_fairness: dict
    explainability: dict
    annotations: dict
    overall: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in TOP_LEVEL_KEYS}

    @classmethod
    def from_dict(cls, doc):
        missing = [k for k in TOP_LEVEL_KEYS if k not in doc]
        if missing:
            raise ValueError("report is missing keys %s" % missing)
        return cls(**{k: copy.deepcopy(doc[k]) for k in TOP_LEVEL_KEYS})

    def kpis(self):
        for section in SECTIONS:
            yield from getattr(self, section)["kpis"]


def count_scores(sections):
    counts = {RED: 0, AMBER: 0, GREEN: 0, "not_scored": 0}
    for sec in sections:
        for k in sec["kpis"]:
            counts[k["rag"] if k["rag"] else "not_scored"] += 1
    return counts


def normalize_annotations(annotations):
    """Manual entries; an empty or missing entry is marked as not assessed."""
    out = {}
    defaults = {"model_assumptions_documentation": {}}
    for key, entry in {**defaults, **(annotations or {})}.items():
        text = (entry or {}).get("text") or ""
        rag = (entry or {}).get("rag")
        if rag is not None and rag not in _ORDER:
            raise ValueError("annotation %r has invalid rag %r" % (key, rag))
        status = "assessed" if (text or rag) else "not assessed"
        out[key] = {"text": text, "rag": rag, "status": status}
    return out


def assemble_report(metadata, model, sections, annotations=None):
    """Bundle scored sections into an :class:`AuditReport` and tally the scores.

    ``sections`` maps each name in :data:`SECTIONS` to ``{"kpis": [...], ...}``.
    """
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise ValueError("missing report sections %s" % missing)
    seen = set()
    for s in SECTIONS:
        for k in sections[s]["kpis"]:
            if k["name"] in seen:
                raise ValueError("KPI %r appears twice" % k["name"])
            seen.add(k["name"])
    report = AuditReport(
        metadata=dict(metadata),
        model=model,
        annotations=normalize_annotations(annotations),
        **{s: sections[s] for s in SECTIONS},
    )
    report.overall = count_scores(sections[s] for s in SECTIONS)
    return report


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

VOLATILE_METADATA = ("timestamp", "body_sha256")


def body(report):
    """Canonical JSON of the report without volatile metadata, for determinism checks."""
    doc = report.to_dict()
    for key in VOLATILE_METADATA:
        doc["metadata"].pop(key, None)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def body_sha256(report):
    return hashlib.sha256(body(report).encode()).hexdigest()


def to_json(report):
    doc = report.to_dict()
    doc["metadata"]["body_sha256"] = body_sha256(report)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)


def from_json(text):
    doc = json.loads(text)
    doc["metadata"].pop("body_sha256", None)
    return AuditReport.from_dict(doc)


def json_schema():
    return json.loads(resources.files("mlmaudit").joinpath("data/report.schema.json").read_text())


_GLYPH = {RED: "● RED", AMBER: "● AMBER", GREEN: "● GREEN", None: "○ NOT SCORED"}

_ROWS = {
    "Model": [
        ("Model assumptions", "annotation:model_assumptions_documentation", "Documentation of assumptions"),
        ("Statistical properties", "vif", "VIF"),
        ("Statistical properties", "swt", "SWT"),
        ("Statistical properties", "bpt", "BPT"),
        ("Discriminatory power", "auc_roc", "AUC-ROC"),
        ("Predictive power", "f1", "F1-score"),
    ],
    "Discrimination": [
        ("Predicted outcome", "sp", "SP"),
        ("Predicted outcome", "di", "DI"),
        ("Predicted & actual outcome", "equal_odds", "EqualOdds"),
        ("Intra MLM-group fairness", "diff_ind", "Diff_Ind"),
        ("Inter MLM-group fairness", "diff_ind_mlm", "Diff_Ind_MLM"),
    ],
    "Transparency & explainability": [
        ("Feature contribution order", "rho_order_shap", "ρ_order (SHAP)"),
        ("Feature contribution order", "rho_order_lime", "ρ_order (LIME)"),
        ("Aggregated feature contribution", "pux_shap", "PUX (SHAP)"),
        ("Aggregated feature contribution", "pux_lime", "PUX (LIME)"),
        ("Feature contribution sign", "poifs_shap", "POIFS (SHAP)"),
        ("Feature contribution sign", "poifs_lime", "POIFS (LIME)"),
    ],
}


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return "%.4g" % v
    return str(v)


def _fmt_group(pg):
    if not pg:
        return ""
    parts = []
    for k, v in pg.items():
        if isinstance(v, dict):
            if "mean" in v:
                v = "%s ± %s" % (_fmt(v["mean"]), _fmt(v.get("std")))
            elif "flag" in v:
                v = v["flag"]
            else:
                v = ", ".join("%s=%s" % (a, _fmt(b)) for a, b in v.items())
        else:
            v = _fmt(v)
        parts.append("%s: %s" % (k, v))
    return "; ".join(parts)


def to_markdown(report):
    kpis = {k["name"]: k for k in report.kpis()}
    md = report.metadata
    lines = [
        "# Multilevel model audit report",
        "",
        "- tool: %s %s" % (md.get("tool"), md.get("tool_version")),
        "- dataset sha256: `%s`" % md.get("dataset_sha256"),
        "- config sha256: `%s`" % md.get("config_sha256"),
        "- seed: %s" % md.get("seed"),
        "- generated: %s" % md.get("timestamp"),
        "",
        "Overall: %d red, %d amber, %d green, %d not scored."
        % (report.overall[RED], report.overall[AMBER], report.overall[GREEN], report.overall["not_scored"]),
    ]
    for aspect, rows in _ROWS.items():
        lines += ["", "## %s" % aspect, "", "| Contributor | KPI | Value | RAG | Per group | Flags |", "|---|---|---|---|---|---|"]
        for contributor, key, label in rows:
            if key.startswith("annotation:"):
                ann = report.annotations[key.split(":", 1)[1]]
                value = ann["text"] or ann["status"]
                lines.append("| %s | %s | %s | %s |  |  |" % (contributor, label, value, _GLYPH[ann["rag"]]))
                continue
            k = kpis.get(key)
            if k is None:
                lines.append("| %s | %s | n/a | %s |  | not computed |" % (contributor, label, _GLYPH[None]))
                continue
            lines.append(
                "| %s | %s | %s | %s | %s | %s |"
                % (contributor, label, _fmt(k["value"]), _GLYPH[k["rag"]], _fmt_group(k["per_group"]), ", ".join(k["flags"]))
            )
    extra = [k for k in report.kpis() if k["name"] not in {r[1] for rows in _ROWS.values() for r in rows}]
    if extra:
        lines += ["", "## Supplementary checks", "", "| KPI | Value | RAG | Flags |", "|---|---|---|---|"]
        for k in extra:
            lines.append("| %s | %s | %s | %s |" % (k["name"], _fmt(k["value"]), _GLYPH[k["rag"]], ", ".join(k["flags"])))
    notes = md.get("band_notes", []) + md.get("conventions", [])
    if notes:
        lines += ["", "## Notes", ""] + ["- %s" % n for n in notes]
    return "\n".join(lines) + "\n"


def render(report, fmt="json"):
    if fmt == "json":
        return to_json(report)
    if fmt == "markdown":
        return to_markdown(report)
    raise ValueError("unknown format %r" % fmt)
