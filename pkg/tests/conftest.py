import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from mlmaudit import ingest, mlm, surrogate

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
FEATURES = ("age", "bmi", "children")
ROLES = ingest.ColumnRoles(FEATURES, "region", "sex", "male", "charges", 6000.0)


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "insurance_synthetic.csv"
    surrogate.write_csv(path, seed=0)
    return path


@pytest.fixture(scope="session")
def synthetic_ds(synthetic_csv):
    return ingest.load_dataset(synthetic_csv, ROLES)


@pytest.fixture(scope="session")
def synthetic_split(synthetic_ds):
    return ingest.split(synthetic_ds, ingest.SplitSpec(0.05, seed=7))


@pytest.fixture(scope="session")
def fitted(synthetic_split):
    train, _ = synthetic_split
    spec = mlm.MlmSpec(FEATURES, varying_intercept=True, varying_slope_features=("age", "bmi"))
    return mlm.fit(train, spec)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path


def toy_model(groups=("a", "b"), alpha=(0.0, 0.5), beta=((1.0, -2.0), (0.5, 1.0)), names=("x1", "x2")):
    beta = np.asarray(beta, dtype=float)
    return mlm.MlmModel(
        feature_names=tuple(names),
        groups=tuple(groups),
        varying_intercept=True,
        varying_features=tuple(names),
        alpha=np.asarray(alpha, dtype=float),
        beta=beta,
        mu_alpha=float(np.mean(alpha)),
        sigma2_alpha=1.0,
        mu_beta={n: float(beta[:, k].mean()) for k, n in enumerate(names)},
        sigma2_beta={n: 1.0 for n in names},
        fit_meta={},
    )


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Log one acceptance line; shown in the terminal summary even without ``-s``."""
    line = "%s criterion %s: %s" % ("PASS" if ok else "FAIL", number, detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)
