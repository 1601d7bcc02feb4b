"""Tabular datasets with out-of-band group labels, CSV I/O and synthetic credit scenarios.

Protected-class membership never lives inside a :class:`Dataset`. It is carried
separately by :class:`GroupLabels`, which is linked to its dataset by a token
derived from the row identifiers.
"""

import csv
import dataclasses
import hashlib
import json
import math
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from ._validation import check_probability
from .exceptions import DataError, FairlendError

PROTECTED = "protected"
CONTROL = "control"
GROUP_COLUMN = "group"
OUTCOME_COLUMN = "default"

PROXY_FEATURE = "proxy"
INFORMATIVE_FEATURES = ("delinquent", "credit_score")

# Outcome model of the generator: logit = intercept[group] + 4*delinquent + (680 - credit_score)/50
_DELINQUENT_RATE = 0.35
_DELINQUENT_LOGIT = 4.0
_SCORE_CENTER = 680.0
_SCORE_SPREAD = 50.0
_SPLIT_STREAM = 0x5EED


def _frozen_array(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus binary default outcome (1 = does default).

    Instances are immutable; column selection and row subsetting return new
    datasets.
    """

    feature_names: tuple
    features: np.ndarray
    outcome: np.ndarray
    row_ids: tuple = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        y = np.asarray(self.outcome).ravel()
        n = y.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one row")
        X = np.array(self.features, dtype=float)
        if X.ndim != 2 and X.size == n * len(names):
            X = X.reshape(n, len(names))
        if X.shape != (n, len(names)):
            raise DataError(f"feature matrix has shape {X.shape}, expected ({n}, {len(names)})")
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        if GROUP_COLUMN in names:
            raise DataError("group membership may not be used as a feature", column=GROUP_COLUMN)
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError("non-finite feature value", row=int(r), column=names[c])
        if not np.all((y == 0) | (y == 1)):
            r = int(np.flatnonzero((y != 0) & (y != 1))[0])
            raise DataError(f"outcome must be 0/1, got {y[r]!r}", row=r)
        ids = tuple(str(r) for r in self.row_ids) if self.row_ids is not None else tuple(
            str(i) for i in range(n))
        if len(ids) != n:
            raise DataError(f"{len(ids)} row ids for {n} rows")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "features", _frozen_array(X, float))
        object.__setattr__(self, "outcome", _frozen_array(y, np.int64))
        object.__setattr__(self, "row_ids", ids)

    @property
    def n_rows(self):
        return self.outcome.shape[0]

    @property
    def n_features(self):
        return len(self.feature_names)

    @cached_property
    def token(self):
        """Identity of the row set, used to link GroupLabels to this dataset."""
        h = hashlib.sha256("\x1f".join(self.row_ids).encode("utf-8"))
        return h.hexdigest()[:16]

    def column(self, name):
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise DataError("no such feature", column=name) from None
        return self.features[:, j]

    def select(self, names):
        """Dataset restricted to ``names`` (in that order)."""
        names = list(names)
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError("no such feature", column=missing[0])
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(tuple(names), self.features[:, idx], self.outcome, self.row_ids)

    def drop(self, name):
        return self.select([n for n in self.feature_names if n != name])

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.feature_names, self.features[rows], self.outcome[rows],
                       tuple(self.row_ids[i] for i in rows))


@dataclasses.dataclass(frozen=True, eq=False)
class GroupLabels:
    """Protected/control membership for each row of one dataset."""

    is_protected: np.ndarray
    token: Optional[str] = None

    def __post_init__(self):
        mask = np.asarray(self.is_protected)
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise DataError("group mask must be boolean")
            mask = mask.astype(bool)
        object.__setattr__(self, "is_protected", _frozen_array(mask.ravel(), bool))

    @classmethod
    def from_labels(cls, labels, dataset=None):
        arr = np.asarray(labels, dtype=object).ravel()
        bad = [i for i, v in enumerate(arr) if v not in (PROTECTED, CONTROL)]
        if bad:
            raise DataError(f"group value must be {PROTECTED!r} or {CONTROL!r}, "
                            f"got {arr[bad[0]]!r}", row=bad[0])
        return cls.for_dataset(arr == PROTECTED, dataset)

    @classmethod
    def for_dataset(cls, mask, dataset=None):
        labels = cls(np.asarray(mask, dtype=bool), dataset.token if dataset is not None else None)
        if dataset is not None and len(labels) != dataset.n_rows:
            raise DataError(f"{len(labels)} group labels for {dataset.n_rows} rows")
        return labels

    def __len__(self):
        return self.is_protected.shape[0]

    @property
    def labels(self):
        return np.where(self.is_protected, PROTECTED, CONTROL)

    def counts(self):
        n_p = int(self.is_protected.sum())
        return {PROTECTED: n_p, CONTROL: len(self) - n_p}

    def check_linked(self, dataset):
        if len(self) != dataset.n_rows:
            raise DataError(f"{len(self)} group labels for {dataset.n_rows} rows")
        if self.token is not None and self.token != dataset.token:
            raise DataError("group labels belong to a different dataset")

    def take(self, rows, dataset=None):
        return GroupLabels.for_dataset(self.is_protected[np.asarray(rows, dtype=np.int64)], dataset)


class LabeledData(NamedTuple):
    dataset: Dataset
    groups: GroupLabels


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a synthetic credit population.

    ``proxy_correlation`` is the population point-biserial correlation between
    the ``proxy`` feature and protected-group membership.
    """

    n_rows: int = 5000
    base_rate_protected: float = 0.25
    base_rate_control: float = 0.15
    protected_fraction: float = 0.4
    proxy_correlation: float = 0.8
    n_noise_features: int = 2
    seed: int = 0

    def __post_init__(self):
        if int(self.n_rows) != self.n_rows or self.n_rows < 10:
            raise FairlendError(f"n_rows must be an integer >= 10, got {self.n_rows}")
        if int(self.n_noise_features) != self.n_noise_features or self.n_noise_features < 0:
            raise FairlendError("n_noise_features must be a non-negative integer")
        for name in ("base_rate_protected", "base_rate_control", "protected_fraction",
                     "proxy_correlation"):
            check_probability(getattr(self, name), name)
        n_protected = round(self.protected_fraction * self.n_rows)
        if n_protected in (0, self.n_rows):
            raise FairlendError(
                f"protected_fraction={self.protected_fraction} with n_rows={self.n_rows} "
                "yields a single-group sample")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise FairlendError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)


def _proxy_weight(rho, fraction):
    """Mixing weight a so that corr(a*g + (1-a)*e, g) = rho for e ~ N(0, 1)."""
    if rho >= 1.0:
        return 1.0
    sd_group = math.sqrt(fraction * (1.0 - fraction))
    return rho / (sd_group * math.sqrt(1.0 - rho * rho) + rho)


def _group_intercept(base_rate, logits):
    if base_rate <= 0.0:
        return -math.inf
    if base_rate >= 1.0:
        return math.inf
    return brentq(lambda c: expit(c + logits).mean() - base_rate, -60.0, 60.0, xtol=1e-12)


def generate_scenario(config):
    """Draw a synthetic credit dataset and its group labels.

    Features are ``delinquent`` (0/1), ``credit_score``, the planted ``proxy``
    and ``noise_1..k``. Default is Bernoulli with a logistic link on the two
    informative features plus a per-group intercept solved so that the mean
    default probability in each group equals its requested base rate.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_rows
    n_protected = round(config.protected_fraction * n)
    is_protected = np.zeros(n, dtype=bool)
    is_protected[rng.permutation(n)[:n_protected]] = True

    delinquent = (rng.random(n) < _DELINQUENT_RATE).astype(float)
    credit_score = np.round(_SCORE_CENTER - _SCORE_SPREAD * rng.standard_normal(n))
    a = _proxy_weight(config.proxy_correlation, n_protected / n)
    proxy = np.round(a * is_protected + (1.0 - a) * rng.standard_normal(n), 6)
    noise = np.round(rng.standard_normal((n, config.n_noise_features)), 6)

    logits = _DELINQUENT_LOGIT * delinquent + (_SCORE_CENTER - credit_score) / _SCORE_SPREAD
    prob = np.empty(n)
    for mask, rate in ((is_protected, config.base_rate_protected),
                       (~is_protected, config.base_rate_control)):
        prob[mask] = expit(_group_intercept(rate, logits[mask]) + logits[mask])
    outcome = (rng.random(n) < prob).astype(np.int64)

    names = INFORMATIVE_FEATURES + (PROXY_FEATURE,) + tuple(
        f"noise_{k + 1}" for k in range(config.n_noise_features))
    X = np.column_stack([delinquent, credit_score, proxy, noise])
    ds = Dataset(names, X, outcome, tuple(f"r{i:06d}" for i in range(n)))
    return ds, GroupLabels.for_dataset(is_protected, ds)


def _parse_number(text, line, column):
    text = text.strip()
    if text == "":
        raise DataError("missing value", row=line, column=column)
    try:
        value = float(text)
    except ValueError:
        hint = ""
        if text in (PROTECTED, CONTROL):
            hint = "; pass it as the group column"
        raise DataError(f"non-numeric value {text!r}{hint}", row=line, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r}", row=line, column=column)
    return value


def load_csv(path, outcome_column=OUTCOME_COLUMN, group_column=None, id_column=None):
    """Read a dataset from CSV.

    The group column, if named, is removed from the features and returned as
    :class:`GroupLabels`. Row numbers in errors are file line numbers (header
    is line 1).

    Returns
    -------
    (Dataset, GroupLabels or None)
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("file is empty") from None
        rows = list(reader)

    for name in (outcome_column, group_column, id_column):
        if name is not None and name not in header:
            raise DataError("column not found in header", column=name)
    special = {outcome_column, group_column, id_column} - {None}
    feature_idx = [j for j, h in enumerate(header) if h not in special]
    y_idx = header.index(outcome_column)

    X, y, groups, ids = [], [], [], []
    for i, row in enumerate(rows):
        line = i + 2
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(row)}", row=line)
        out = row[y_idx].strip()
        if out not in ("0", "1"):
            raise DataError(f"outcome must be 0 or 1, got {out!r}", row=line, column=outcome_column)
        y.append(int(out))
        X.append([_parse_number(row[j], line, header[j]) for j in feature_idx])
        if group_column is not None:
            g = row[header.index(group_column)].strip()
            if g not in (PROTECTED, CONTROL):
                raise DataError(f"group value must be {PROTECTED!r} or {CONTROL!r}, got {g!r}",
                                row=line, column=group_column)
            groups.append(g)
        ids.append(row[header.index(id_column)].strip() if id_column else str(len(ids)))

    if not y:
        raise DataError("no data rows")
    names = tuple(header[j] for j in feature_idx)
    X = np.array(X, dtype=float).reshape(len(y), len(names))
    ds = Dataset(names, X, np.array(y), tuple(ids))
    labels = GroupLabels.from_labels(groups, ds) if group_column is not None else None
    return ds, labels


def _format_cell(value):
    return repr(float(value))


def write_csv(path, dataset, groups=None, outcome_column=OUTCOME_COLUMN,
              group_column=GROUP_COLUMN, id_column=None):
    """Write ``dataset`` (and optionally its group labels) as CSV.

    Floats are written with ``repr`` so reloading reproduces them exactly.
    """
    header = ([id_column] if id_column else []) + list(dataset.feature_names) + [outcome_column]
    if groups is not None:
        groups.check_linked(dataset)
        header.append(group_column)
        labels = groups.labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n_rows):
            row = [dataset.row_ids[i]] if id_column else []
            row += [_format_cell(v) for v in dataset.features[i]]
            row.append(str(int(dataset.outcome[i])))
            if groups is not None:
                row.append(labels[i])
            writer.writerow(row)


def split(dataset, groups, train_fraction=0.7, seed=0):
    """Seeded train/test partition; group labels travel with their rows.

    Rows keep their original relative order inside each partition.
    """
    train_fraction = check_probability(train_fraction, "train_fraction", open_interval=True)
    if groups is not None:
        groups.check_linked(dataset)
    n = dataset.n_rows
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(f"train_fraction={train_fraction} leaves an empty partition of {n} rows")
    # separate stream so split(seed=s) never mirrors generate_scenario(seed=s)
    perm = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    parts = []
    for rows in (np.sort(perm[:n_train]), np.sort(perm[n_train:])):
        sub = dataset.take(rows)
        parts.append(LabeledData(sub, groups.take(rows, sub) if groups is not None else None))
    return parts[0], parts[1]
