"""Group fairness measures for binary credit decisions.

Conventions
-----------
* ``outcomes``: 1 = does default, 0 = does not default.
* ``scores``: estimated probability of default.
* A decision is *favorable* (loan approved) when the score is strictly below the
  decision threshold.
* Confusion counts treat approval as the predicted-positive event, so a false
  positive is an applicant who was approved and then defaulted.
"""

import csv
import dataclasses
from typing import NamedTuple, Optional

import numpy as np
from sklearn.metrics import roc_auc_score

from ._validation import check_binary, check_scores, protected_mask, require_both_groups
from .exceptions import EmptyGroupError, FairlendError, UndefinedAIRError

GROUPS = ("protected", "control")


@dataclasses.dataclass(frozen=True, eq=False)
class Decisions:
    """Approve (1) / deny (0) per row, with the threshold that produced them."""

    favorable: np.ndarray
    threshold: Optional[float] = None

    def __post_init__(self):
        fav = check_binary(self.favorable, name="favorable")
        fav.setflags(write=False)
        object.__setattr__(self, "favorable", fav)

    def __len__(self):
        return self.favorable.shape[0]


class Counts(NamedTuple):
    TP: int
    FP: int
    TN: int
    FN: int

    @property
    def total(self):
        return self.TP + self.FP + self.TN + self.FN


def _favorable(decisions, n=None):
    fav = decisions.favorable if isinstance(decisions, Decisions) else decisions
    return check_binary(fav, n, name="decisions")


def _group_masks(groups, n):
    mask = protected_mask(groups, n)
    return {"protected": mask, "control": ~mask}


def confusion(decisions, outcomes, groups):
    """Per-group {TP, FP, TN, FN} with approval as the positive prediction."""
    fav = _favorable(decisions)
    n = fav.shape[0]
    y = check_binary(outcomes, n)
    result = {}
    for name, m in _group_masks(groups, n).items():
        f, o = fav[m], y[m]
        result[name] = Counts(
            TP=int(np.sum((f == 1) & (o == 0))),
            FP=int(np.sum((f == 1) & (o == 1))),
            TN=int(np.sum((f == 0) & (o == 1))),
            FN=int(np.sum((f == 0) & (o == 0))),
        )
    return result


def accuracy(decisions, outcomes):
    """Fraction of rows where approval matched non-default (and denial matched default)."""
    fav = _favorable(decisions)
    y = check_binary(outcomes, fav.shape[0])
    return float(np.mean(fav != y))


def favorable_rates(decisions, groups):
    fav = _favorable(decisions)
    masks = _group_masks(groups, fav.shape[0])
    require_both_groups(masks["protected"])
    return {name: float(fav[m].mean()) for name, m in masks.items()}


def adverse_impact_ratio(decisions, groups):
    """Favorable rate of the protected group divided by that of the control group.

    Raises
    ------
    UndefinedAIRError
        If the control group received no favorable decisions.
    """
    rates = favorable_rates(decisions, groups)
    if rates["control"] == 0.0:
        raise UndefinedAIRError("control group has no favorable decisions; AIR is undefined")
    return rates["protected"] / rates["control"]


def statistical_parity(decisions, groups):
    """Signed gap favorable_rate(protected) - favorable_rate(control)."""
    rates = favorable_rates(decisions, groups)
    return rates["protected"] - rates["control"]


@dataclasses.dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    n_protected: int
    n_control: int
    rate_protected: Optional[float]
    rate_control: Optional[float]

    @property
    def both_present(self):
        return self.n_protected > 0 and self.n_control > 0

    @property
    def gap(self):
        if not self.both_present:
            return None
        return abs(self.rate_protected - self.rate_control)


@dataclasses.dataclass(frozen=True)
class CalibrationTable:
    bins: tuple
    max_gap: Optional[float]
    flagged_bins: tuple

    def to_dict(self):
        return {
            "n_bins": len(self.bins),
            "max_gap": self.max_gap,
            "flagged_bins": list(self.flagged_bins),
            "bins": [dict(dataclasses.asdict(b), gap=b.gap) for b in self.bins],
        }

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin", "lower", "upper", "n_protected", "n_control",
                        "rate_protected", "rate_control", "gap"])
            for k, b in enumerate(self.bins):
                w.writerow([k, repr(b.lower), repr(b.upper), b.n_protected, b.n_control,
                            "" if b.rate_protected is None else repr(b.rate_protected),
                            "" if b.rate_control is None else repr(b.rate_control),
                            "" if b.gap is None else repr(b.gap)])


def _edges(n_bins):
    # k / n_bins exactly, so a score of 0.3 lands in [0.3, 0.4)
    return np.arange(n_bins + 1) / n_bins


def score_bins(scores, n_bins):
    """Index of the equal-width bin over [0, 1] holding each score (1.0 goes in the last bin).

    Bin ``k`` is ``k/n_bins <= s < (k+1)/n_bins``.
    """
    edges = _edges(n_bins)
    return np.minimum(np.searchsorted(edges, scores, side="right") - 1, n_bins - 1)


def calibration_within_groups(scores, outcomes, groups, n_bins=10):
    """Observed default rate per group inside each score bin.

    ``max_gap`` is the largest cross-group difference over bins where both
    groups are present; bins with only one group are listed in ``flagged_bins``.
    """
    if int(n_bins) != n_bins or n_bins < 1:
        raise FairlendError(f"n_bins must be a positive integer, got {n_bins}")
    s = check_scores(scores)
    y = check_binary(outcomes, s.shape[0])
    masks = _group_masks(groups, s.shape[0])
    idx = score_bins(s, n_bins)
    edges = _edges(n_bins)

    bins, flagged = [], []
    for k in range(n_bins):
        in_bin = idx == k
        stats = {}
        for name, m in masks.items():
            sel = in_bin & m
            cnt = int(sel.sum())
            stats[name] = (cnt, float(y[sel].mean()) if cnt else None)
        b = CalibrationBin(float(edges[k]), float(edges[k + 1]),
                           stats["protected"][0], stats["control"][0],
                           stats["protected"][1], stats["control"][1])
        if not b.both_present and (b.n_protected or b.n_control):
            flagged.append(k)
        bins.append(b)
    gaps = [b.gap for b in bins if b.both_present]
    return CalibrationTable(tuple(bins), max(gaps) if gaps else None, tuple(flagged))


def _class_balance(scores, outcomes, groups, cls):
    s = check_scores(scores)
    y = check_binary(outcomes, s.shape[0])
    means = {}
    for name, m in _group_masks(groups, s.shape[0]).items():
        sel = m & (y == cls)
        if not sel.any():
            what = "non-defaulters" if cls == 0 else "defaulters"
            raise EmptyGroupError(f"{name} group has no {what}")
        means[name] = float(s[sel].mean())
    return abs(means["protected"] - means["control"])


def balance_negative(scores, outcomes, groups):
    """|mean score of protected non-defaulters - mean score of control non-defaulters|."""
    return _class_balance(scores, outcomes, groups, 0)


def balance_positive(scores, outcomes, groups):
    """Same as :func:`balance_negative` for defaulters."""
    return _class_balance(scores, outcomes, groups, 1)


class FairnessConditions(NamedTuple):
    calibrated_strict: bool
    balance_neg: bool
    balance_pos: bool

    @property
    def all(self):
        return self.calibrated_strict and self.balance_neg and self.balance_pos


def check_three_conditions(scores, outcomes, groups, tol=1e-9):
    """Test strict calibration and both balance conditions within ``tol``.

    Strict calibration: within each group, rows that share a score value ``v``
    default at rate ``v``. A balance condition holds vacuously when one group
    has no rows of that class.
    """
    if tol <= 0:
        raise FairlendError("tol must be positive")
    s = check_scores(scores)
    y = check_binary(outcomes, s.shape[0])
    masks = _group_masks(groups, s.shape[0])

    calibrated = True
    for m in masks.values():
        for v in np.unique(s[m]):
            if abs(y[m & (s == v)].mean() - v) > tol:
                calibrated = False

    balanced = []
    for cls in (0, 1):
        sel = [m & (y == cls) for m in masks.values()]
        if not all(x.any() for x in sel):
            balanced.append(True)
        else:
            balanced.append(abs(s[sel[0]].mean() - s[sel[1]].mean()) <= tol)
    return FairnessConditions(calibrated, balanced[0], balanced[1])


@dataclasses.dataclass(frozen=True)
class FairnessReport:
    """Every group-fairness statistic for one model on one evaluation set."""

    threshold: float
    n_rows: int
    group_sizes: dict
    base_rates: dict
    favorable_rates: dict
    accuracy: float
    auc: Optional[float]
    per_group_confusion: dict
    air: Optional[float]
    statistical_parity_gap: float
    calibration: CalibrationTable
    balance_negative_gap: Optional[float]
    balance_positive_gap: Optional[float]

    @property
    def air_defined(self):
        return self.air is not None

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "n_rows": self.n_rows,
            "group_sizes": dict(self.group_sizes),
            "base_rates": dict(self.base_rates),
            "favorable_rates": dict(self.favorable_rates),
            "accuracy": self.accuracy,
            "auc": self.auc,
            "per_group_confusion": {g: c._asdict() for g, c in self.per_group_confusion.items()},
            "air": self.air,
            "air_defined": self.air_defined,
            "statistical_parity_gap": self.statistical_parity_gap,
            "calibration": self.calibration.to_dict(),
            "balance_negative_gap": self.balance_negative_gap,
            "balance_positive_gap": self.balance_positive_gap,
        }


def fairness_report(scores, outcomes, groups, threshold=0.5, n_bins=10):
    """Compute the full metric battery for risk scores thresholded at ``threshold``."""
    s = check_scores(scores)
    y = check_binary(outcomes, s.shape[0])
    mask = protected_mask(groups, s.shape[0])
    require_both_groups(mask)
    decisions = Decisions((s < threshold).astype(np.int64), threshold)

    try:
        air = adverse_impact_ratio(decisions, mask)
    except UndefinedAIRError:
        air = None
    balances = []
    for fn in (balance_negative, balance_positive):
        try:
            balances.append(fn(s, y, mask))
        except EmptyGroupError:
            balances.append(None)
    auc = float(roc_auc_score(y, s)) if 0 < y.sum() < y.shape[0] else None

    return FairnessReport(
        threshold=float(threshold),
        n_rows=int(s.shape[0]),
        group_sizes={"protected": int(mask.sum()), "control": int((~mask).sum())},
        base_rates={"protected": float(y[mask].mean()), "control": float(y[~mask].mean())},
        favorable_rates=favorable_rates(decisions, mask),
        accuracy=accuracy(decisions, y),
        auc=auc,
        per_group_confusion=confusion(decisions, y, mask),
        air=air,
        statistical_parity_gap=statistical_parity(decisions, mask),
        calibration=calibration_within_groups(s, y, mask, n_bins),
        balance_negative_gap=balances[0],
        balance_positive_gap=balances[1],
    )
