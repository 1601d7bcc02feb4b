"""Input checks shared by the metric functions and estimators."""

import numpy as np

from .exceptions import EmptyGroupError, FairlendError


def check_scores(scores, n=None, name="scores"):
    s = np.asarray(scores, dtype=float).ravel()
    if n is not None and s.shape[0] != n:
        raise FairlendError(f"{name} has length {s.shape[0]}, expected {n}")
    if not np.all(np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise FairlendError(f"{name} must be finite probabilities in [0, 1]")
    return s


def check_binary(values, n=None, name="outcomes"):
    v = np.asarray(values).ravel()
    if n is not None and v.shape[0] != n:
        raise FairlendError(f"{name} has length {v.shape[0]}, expected {n}")
    if v.dtype == bool:
        return v.astype(np.int64)
    if not np.all((v == 0) | (v == 1)):
        raise FairlendError(f"{name} must be coded 0/1")
    return v.astype(np.int64)


def protected_mask(groups, n=None):
    """Boolean mask (True = protected) from GroupLabels, bools, 0/1 or label strings."""
    mask = getattr(groups, "is_protected", None)
    if mask is None:
        arr = np.asarray(groups).ravel()
        if arr.dtype.kind in "US" or arr.dtype == object:
            bad = ~np.isin(arr, ["protected", "control"])
            if bad.any():
                raise FairlendError(f"unknown group label {arr[bad][0]!r}; "
                                    "expected 'protected' or 'control'")
            mask = arr == "protected"
        else:
            mask = check_binary(arr, name="group labels").astype(bool)
    mask = np.asarray(mask, dtype=bool)
    if n is not None and mask.shape[0] != n:
        raise FairlendError(f"group labels have length {mask.shape[0]}, expected {n}")
    return mask


def require_both_groups(mask):
    if not mask.any():
        raise EmptyGroupError("protected group is empty")
    if mask.all():
        raise EmptyGroupError("control group is empty")


def check_probability(value, name, *, open_interval=False):
    value = float(value)
    if open_interval:
        ok = 0.0 < value < 1.0
    else:
        ok = 0.0 <= value <= 1.0
    if not ok:
        interval = "(0, 1)" if open_interval else "[0, 1]"
        raise FairlendError(f"{name} must lie in {interval}, got {value}")
    return value
