"""CSV ingestion, target derivation and seeded train/test splitting."""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mlmaudit.errors import (
    EmptyDatasetError,
    GroupTooSmallError,
    MissingColumnError,
    MissingValueError,
    ParseError,
    RoleError,
)


@dataclass(frozen=True)
class ColumnRoles:
    feature_columns: tuple
    group_column: str
    sensitive_column: str
    sensitive_privileged_value: str
    target_column: str
    target_threshold: float

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if not self.feature_columns:
            raise RoleError("feature_columns must not be empty")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise RoleError("feature_columns contains duplicates")
        named = list(self.feature_columns) + [self.group_column, self.sensitive_column, self.target_column]
        if len(set(named)) != len(named):
            raise RoleError(
                "feature, group, sensitive and target columns must be pairwise distinct: %r" % (named,)
            )

    def required_columns(self):
        return list(self.feature_columns) + [self.group_column, self.sensitive_column, self.target_column]


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.05
    seed: int = 0
    stratify_by_group: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1), got %r" % self.test_fraction)
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented view of an audited table.

    ``features`` is ``(n, M)`` float64 in ``roles.feature_columns`` order.
    ``target`` is ``None`` until :func:`derive_target` has run. ``row_ids``
    are the 0-based data-row positions in the source file, so partitions
    can be checked against the original table.
    """

    roles: ColumnRoles
    header: tuple
    features: np.ndarray
    group: np.ndarray
    sensitive: np.ndarray
    raw_target: np.ndarray
    row_ids: np.ndarray
    target: np.ndarray = None
    groups: tuple = field(default=())

    def __post_init__(self):
        if not self.groups:
            object.__setattr__(self, "groups", tuple(sorted(set(self.group.tolist()))))

    @property
    def feature_names(self):
        return self.roles.feature_columns

    def __len__(self):
        return self.features.shape[0]

    @property
    def privileged(self):
        """1 where the sensitive attribute equals the privileged value, else 0."""
        return (self.sensitive == self.roles.sensitive_privileged_value).astype(np.int64)

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(
            self,
            features=self.features[idx],
            group=self.group[idx],
            sensitive=self.sensitive[idx],
            raw_target=self.raw_target[idx],
            row_ids=self.row_ids[idx],
            target=None if self.target is None else self.target[idx],
            groups=(),
        )

    def group_slice(self, label):
        return self.subset(np.flatnonzero(self.group == label))


def load_csv(path, roles):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Feature columns are parsed as floats; group and sensitive columns stay as
    string labels; the raw target column is kept as text until
    :func:`derive_target` parses it. Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError("%s has no header row" % path) from None
        rows = [r for r in reader if r]

    for name in roles.required_columns():
        if name not in header:
            raise MissingColumnError("column %r is not in the header of %s" % (name, path))
    if not rows:
        raise EmptyDatasetError("%s has no data rows" % path)

    col = {name: i for i, name in enumerate(header)}
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ParseError("row %d has %d fields, header has %d" % (i, len(r), len(header)))
        for name, j in col.items():
            if r[j].strip() == "":
                raise MissingValueError("missing value in row %d, column %r" % (i, name))

    feats = np.empty((len(rows), len(roles.feature_columns)), dtype=np.float64)
    for k, name in enumerate(roles.feature_columns):
        j = col[name]
        for i, r in enumerate(rows):
            try:
                feats[i, k] = float(r[j])
            except ValueError:
                raise ParseError(
                    "row %d, column %r: %r is not a number (categorical features are not supported)"
                    % (i, name, r[j])
                ) from None
    if not np.all(np.isfinite(feats)):
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise ParseError("row %d, column %r: non-finite value" % (bad[0], roles.feature_columns[bad[1]]))

    def text(name):
        j = col[name]
        return np.array([r[j].strip() for r in rows], dtype=object)

    return Dataset(
        roles=roles,
        header=tuple(header),
        features=feats,
        group=text(roles.group_column),
        sensitive=text(roles.sensitive_column),
        raw_target=text(roles.target_column),
        row_ids=np.arange(len(rows)),
    )


def derive_target(ds, roles=None):
    """Binary target: 1 when the raw outcome is strictly greater than the threshold."""
    roles = roles or ds.roles
    raw = np.empty(len(ds), dtype=np.float64)
    for i, v in enumerate(ds.raw_target):
        try:
            raw[i] = float(v)
        except (TypeError, ValueError):
            raise ParseError("row %d, column %r: %r is not a number" % (i, roles.target_column, v)) from None
    return replace(ds, target=(raw > roles.target_threshold).astype(np.int64))


def load_dataset(path, roles):
    return derive_target(load_csv(path, roles), roles)


def _half_up(x):
    return int(math.floor(x + 0.5))


def split(ds, spec):
    """Seeded disjoint train/test partition.

    With ``stratify_by_group`` every group contributes
    ``max(1, round(test_fraction * size))`` test rows; each group must keep
    at least ``M + 2`` training rows.
    """
    rng = np.random.default_rng(int(spec.seed))
    m = ds.features.shape[1]
    test_idx = []
    if spec.stratify_by_group:
        for g in ds.groups:
            members = np.flatnonzero(ds.group == g)
            n_test = max(1, _half_up(spec.test_fraction * members.size))
            if members.size - n_test < m + 2:
                raise GroupTooSmallError(
                    "group %r has %d rows; cannot keep %d training rows after taking %d test rows"
                    % (g, members.size, m + 2, n_test)
                )
            test_idx.append(rng.permutation(members)[:n_test])
    else:
        n = len(ds)
        n_test = max(1, _half_up(spec.test_fraction * n))
        if n - n_test < m + 2:
            raise GroupTooSmallError("dataset too small for a %.3f test fraction" % spec.test_fraction)
        test_idx.append(rng.permutation(n)[:n_test])

    is_test = np.zeros(len(ds), dtype=bool)
    is_test[np.concatenate(test_idx)] = True
    train, test = ds.subset(np.flatnonzero(~is_test)), ds.subset(np.flatnonzero(is_test))
    return train, test
