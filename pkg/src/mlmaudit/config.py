"""Audit configuration: one YAML document, strictly validated."""

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from mlmaudit.errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetConfig(_Strict):
    path: str
    features: List[str] = Field(min_length=1)
    group: str
    sensitive: str
    privileged_value: str
    target: str
    target_threshold: float


class SplitConfig(_Strict):
    test_fraction: float = Field(0.05, gt=0.0, lt=1.0)
    # None derives the split seed from the master seed
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    stratify_by_group: bool = True


class FitConfig(_Strict):
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(200, ge=1)
    max_newton: int = Field(50, ge=1)
    separation_bound: float = Field(1e3, gt=0)
    sigma2_floor: float = Field(1e-8, gt=0)


class ModelConfig(_Strict):
    varying_intercept: bool = True
    varying_slopes: List[str] = []
    fit: FitConfig = FitConfig()


class StatTestsConfig(_Strict):
    residual_kind: Literal["response", "pearson", "deviance"] = "pearson"
    # False: uncentred VIF (regression through the origin)
    vif_intercept: bool = False
    bp_studentized: bool = False
    min_groups_for_effect_normality: int = Field(8, ge=3)


class SimilarityConfig(_Strict):
    delta: float = Field(0.25, ge=0)
    exclude_features: List[str] = []


class PairConfig(_Strict):
    group: str
    a: Dict[str, float]
    b: Dict[str, float]
    label: str = ""
    exclude_features: List[str] = []


class MlmProbeConfig(_Strict):
    instance: Dict[str, float]
    group_a: str
    group_b: str
    label: str = ""


class FairnessConfig(_Strict):
    slice: Literal["test", "full"] = "test"
    similarity: SimilarityConfig = SimilarityConfig()
    pairs: List[PairConfig] = []
    mlm_probes: List[MlmProbeConfig] = []


class LimeSettings(_Strict):
    n_samples: int = Field(5000, ge=1)
    kernel_width: Optional[float] = Field(None, gt=0)
    ridge_lambda: float = Field(1e-3, ge=0)


class ExplainersConfig(_Strict):
    background_size: int = Field(100, ge=1)
    lime: LimeSettings = LimeSettings()


class ProtocolConfig(_Strict):
    n_instances: int = Field(50, ge=1)
    n_repeats: int = Field(10, ge=1)


class ComparisonConfig(_Strict):
    group: str
    instance: Dict[str, float]
    label: str = ""


class BandOverride(_Strict):
    direction: Optional[Literal["lower_is_better", "higher_is_better"]] = None
    green_edge: Optional[float] = None
    red_edge: Optional[float] = None
    green_inclusive: Optional[bool] = None
    red_inclusive: Optional[bool] = None


class AnnotationConfig(_Strict):
    text: str = ""
    rag: Optional[Literal["red", "amber", "green"]] = None


class OutputConfig(_Strict):
    dir: str = "audit_out"
    format: Literal["json", "markdown", "both"] = "both"


class AuditConfig(_Strict):
    dataset: DatasetConfig
    split: SplitConfig = SplitConfig()
    model: ModelConfig = ModelConfig()
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    stat_tests: StatTestsConfig = StatTestsConfig()
    fairness: FairnessConfig = FairnessConfig()
    explainers: ExplainersConfig = ExplainersConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    comparisons: List[ComparisonConfig] = []
    bands: Dict[str, BandOverride] = {}
    annotations: Dict[str, AnnotationConfig] = {}
    seed: int = Field(0, ge=0, lt=2**64)
    output: OutputConfig = OutputConfig()

    @field_validator("bands")
    @classmethod
    def _known_kpis(cls, v):
        from mlmaudit.audit import DEFAULT_BANDS

        unknown = sorted(set(v) - set(DEFAULT_BANDS))
        if unknown:
            raise ValueError("no bands defined for %s" % unknown)
        return v

    # ------------------------------------------------------------------

    def split_seed(self):
        if self.split.seed is not None:
            return self.split.seed
        return int(np.random.SeedSequence(self.seed, spawn_key=(0,)).generate_state(1, np.uint64)[0])

    def band_overrides(self):
        return {k: {f: x for f, x in v.model_dump().items() if x is not None} for k, v in self.bands.items()}

    def digest(self):
        """sha256 over the settings that influence results (paths and output options excluded)."""
        doc = self.model_dump(mode="json")
        doc["dataset"].pop("path")
        doc.pop("output")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed):
        return self.model_copy(update={"seed": int(seed)})


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        if err["type"] == "extra_forbidden":
            parts.append("unknown configuration key %r" % loc)
        else:
            parts.append("%s: %s" % (loc, err["msg"]))
    return "; ".join(parts)


def parse_config(doc, base_dir=None):
    """Validate a mapping; a relative dataset path is resolved against ``base_dir``."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        cfg = AuditConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    if base_dir is not None and not Path(cfg.dataset.path).is_absolute():
        ds = cfg.dataset.model_copy(update={"path": str(Path(base_dir) / cfg.dataset.path)})
        cfg = cfg.model_copy(update={"dataset": ds})
    feats = set(cfg.dataset.features)
    for name in cfg.model.varying_slopes:
        if name not in feats:
            raise ConfigError("model.varying_slopes: %r is not a feature" % name)
    for name in cfg.fairness.similarity.exclude_features:
        if name not in feats:
            raise ConfigError("fairness.similarity.exclude_features: %r is not a feature" % name)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("cannot read %s: %s" % (path, exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("%s is not valid YAML: %s" % (path, exc)) from None
    return parse_config(doc, base_dir=path.parent)


def defaults_document():
    """Every setting with its default; dataset fields have no defaults and are marked."""
    placeholder = DatasetConfig(
        path="<required>",
        features=["<required>"],
        group="<required>",
        sensitive="<required>",
        privileged_value="<required>",
        target="<required>",
        target_threshold=0.0,
    )
    doc = AuditConfig(dataset=placeholder).model_dump(mode="json")
    doc["dataset"]["target_threshold"] = "<required>"
    from mlmaudit.audit import DEFAULT_BANDS

    from dataclasses import asdict

    doc["bands"] = {k: asdict(v) for k, v in DEFAULT_BANDS.items()}
    return doc
