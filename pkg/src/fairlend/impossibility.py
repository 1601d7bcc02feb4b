"""Brute-force search for risk scores that are calibrated and balanced at once.

A score assignment must give the same score to every row sharing a group and
an observable-characteristics cell (``cells``). Rows cannot be told apart
beyond that, so a scorer cannot condition on the outcome itself. With one
cell per group (the default) the only freedom is one score per group.

Joint calibration and balance are reachable only when the groups have equal
base rates or every (group, cell) is pure in outcome (perfect prediction).
The search is exhaustive over a score grid, so it can confirm that on small
instances.
"""

import dataclasses
from fractions import Fraction
from typing import Optional

import numpy as np

from ._validation import check_binary, protected_mask, require_both_groups
from .exceptions import FairlendError, InstanceTooLargeError
from .metrics import check_three_conditions

MAX_ROWS = 40
MAX_GRID_STEPS = 100
MAX_ASSIGNMENTS = 5_000_000
_CHUNK = 1 << 16


def _units(mask, cells):
    """Map rows to (group, cell) units ordered protected-first, then by cell."""
    _, cell_code = np.unique(cells, return_inverse=True)
    key = np.where(mask, 0, 1) * (cell_code.max() + 1) + cell_code
    keys, unit_of_row = np.unique(key, return_inverse=True)
    return unit_of_row, keys < cell_code.max() + 1


def impossibility_search(outcomes, groups, score_grid_steps=20, tol=1e-9, cells=None):
    """Return the first grid assignment that passes :func:`check_three_conditions`.

    Assignments are enumerated in lexicographic order of the per-unit grid
    indices (units ordered protected-first, then by cell value). Returns the
    per-row witness scores, or ``None`` when no assignment works.

    Raises
    ------
    InstanceTooLargeError
        If the instance exceeds ``MAX_ROWS`` rows, ``MAX_GRID_STEPS`` grid
        steps, or ``MAX_ASSIGNMENTS`` assignments.
    """
    y = check_binary(outcomes)
    n = y.shape[0]
    q = int(score_grid_steps)
    if n > MAX_ROWS:
        raise InstanceTooLargeError(f"{n} rows exceeds the limit of {MAX_ROWS}")
    if q < 1 or q > MAX_GRID_STEPS:
        raise InstanceTooLargeError(f"score_grid_steps must be in [1, {MAX_GRID_STEPS}], got {q}")
    if tol <= 0:
        raise FairlendError("tol must be positive")
    mask = protected_mask(groups, n)
    require_both_groups(mask)
    cells = np.zeros(n, dtype=np.int64) if cells is None else np.asarray(cells).ravel()
    if cells.shape[0] != n:
        raise FairlendError(f"cells has length {cells.shape[0]}, expected {n}")

    unit_of_row, unit_protected = _units(mask, cells)
    k = unit_protected.shape[0]
    total = (q + 1) ** k
    if total > MAX_ASSIGNMENTS:
        raise InstanceTooLargeError(
            f"{k} score cells on a {q + 1}-point grid give {total} assignments "
            f"(limit {MAX_ASSIGNMENTS})")

    size = np.bincount(unit_of_row, minlength=k).astype(float)
    n_default = np.bincount(unit_of_row, weights=y, minlength=k)
    same_group = unit_protected[:, None] == unit_protected[None, :]
    class_weights = []
    for count in (size - n_default, n_default):
        w = [np.where(unit_protected == g, count, 0.0) for g in (True, False)]
        if all(x.sum() > 0 for x in w):
            class_weights.append([x / x.sum() for x in w])
        else:
            class_weights.append(None)

    grid = np.arange(q + 1) / q
    place = (q + 1) ** np.arange(k - 1, -1, -1)
    slack = tol + 1e-12
    for start in range(0, total, _CHUNK):
        index = np.arange(start, min(start + _CHUNK, total))
        scores = grid[(index[:, None] // place) % (q + 1)]

        tied = (scores[:, :, None] == scores[:, None, :]) & same_group
        pooled_rate = (tied @ n_default) / (tied @ size)
        ok = np.all(np.abs(pooled_rate - scores) <= slack, axis=1)
        for w in class_weights:
            if w is not None:
                ok &= np.abs(scores @ w[0] - scores @ w[1]) <= slack

        for a in np.flatnonzero(ok):
            witness = scores[a][unit_of_row]
            if check_three_conditions(witness, y, mask, tol).all:
                return witness
    return None


@dataclasses.dataclass(frozen=True)
class ImpossibilityInstance:
    name: str
    outcomes: tuple
    is_protected: tuple
    cells: tuple

    def _rate(self, protected):
        ys = [y for y, p in zip(self.outcomes, self.is_protected) if p == protected]
        return Fraction(sum(ys), len(ys))

    @property
    def base_rates(self):
        return self._rate(True), self._rate(False)

    @property
    def equal_base_rates(self):
        p, c = self.base_rates
        return p == c

    @property
    def perfect_prediction(self):
        """Every (group, cell) holds only defaulters or only non-defaulters."""
        seen = {}
        for y, p, c in zip(self.outcomes, self.is_protected, self.cells):
            seen.setdefault((p, c), set()).add(y)
        return all(len(v) == 1 for v in seen.values())


def make_instance(n_protected, d_protected, n_control, d_control, layout="pooled"):
    """Two-group instance with ``d`` defaulters among ``n`` rows per group.

    ``layout="pooled"`` puts each group in a single cell. ``layout="split"``
    halves each group into two cells and fills defaulters into the first cell
    first, so the cells are pure whenever ``d`` is 0, n/2 or n.
    """
    if layout not in ("pooled", "split"):
        raise FairlendError(f"unknown layout {layout!r}")
    outcomes, prot, cells = [], [], []
    for protected, n, d in ((True, n_protected, d_protected), (False, n_control, d_control)):
        if not 0 <= d <= n or n < 1:
            raise FairlendError(f"need 0 <= defaulters <= rows and rows >= 1, got {d}/{n}")
        for i in range(n):
            outcomes.append(1 if i < d else 0)
            prot.append(protected)
            cells.append(0 if layout == "pooled" or i < (n + 1) // 2 else 1)
    name = f"{layout}:{d_protected}/{n_protected}-vs-{d_control}/{n_control}"
    return ImpossibilityInstance(name, tuple(outcomes), tuple(prot), tuple(cells))


def default_instance_family():
    """101 small instances whose base rates all fall on the 20-step score grid."""
    family = []
    for layout, n_p, n_c in (("pooled", 4, 4), ("split", 4, 4), ("pooled", 5, 5),
                             ("pooled", 2, 4)):
        for d_p in range(n_p + 1):
            for d_c in range(n_c + 1):
                family.append(make_instance(n_p, d_p, n_c, d_c, layout))
    return family


def feasibility_table(instances, score_grid_steps=20, tol=1e-9):
    """One row per instance: base rates, expectation and whether a witness exists."""
    rows = []
    for inst in instances:
        witness = impossibility_search(inst.outcomes, np.array(inst.is_protected),
                                       score_grid_steps, tol, cells=inst.cells)
        p, c = inst.base_rates
        rows.append({
            "instance": inst.name,
            "base_rate_protected": float(p),
            "base_rate_control": float(c),
            "equal_base_rates": inst.equal_base_rates,
            "perfect_prediction": inst.perfect_prediction,
            "witness_found": witness is not None,
            "witness": None if witness is None else [float(v) for v in witness],
        })
    return rows
