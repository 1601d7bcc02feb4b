"""Burden-shifting review and the search for less discriminatory alternatives (LDAs).

The workflow: measure adverse impact of a baseline model, check that it meets
a minimum predictiveness, then retrain variants (drop or add a variable,
change hyperparameters, fairness-regularized trees, adversarial debiasing),
score them all on the same holdout at the same threshold, and pick from
the accuracy/AIR Pareto frontier.
"""

import dataclasses
from typing import NamedTuple, Optional

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone

from .data import Dataset
from .exceptions import FairlendError
from .learners import DecisionTreeRiskModel, LogisticRiskModel
from .metrics import fairness_report
from .mitigate import AdversarialDebiasingModel, FairDecisionTreeRiskModel

REPORT_SCHEMA = "fairlend-burden-shifting"
REPORT_VERSION = 1

STRATEGY_KINDS = ("drop", "add", "hyperparam", "lambda", "alpha")

DEFAULT_HYPERPARAM_GRID = {
    "logistic": ({"l2_penalty": 0.01}, {"l2_penalty": 0.05}, {"l2_penalty": 0.2},
                 {"epochs": 100}),
    "tree": ({"max_depth": 2}, {"max_depth": 4}, {"max_depth": 5}, {"min_leaf_size": 50}),
}


@dataclasses.dataclass
class CandidateModel:
    """A trained variant scored on the holdout split.

    ``predictiveness`` is holdout accuracy at the review threshold. ``air`` is
    None when undefined or when training failed (see ``error``).
    """

    strategy: str
    model: object
    predictiveness: Optional[float]
    air: Optional[float]
    report: object = None
    error: Optional[str] = None
    order: int = 0

    @property
    def failed(self):
        return self.error is not None

    def to_dict(self, include_report=False):
        d = {"strategy": self.strategy, "predictiveness": self.predictiveness, "air": self.air,
             "failed": self.failed}
        if self.error is not None:
            d["error"] = self.error
        if self.model is not None:
            d["model"] = {"kind": self.model.kind, "features": list(self.model.features_),
                          "hyperparams": self.model.to_dict()["hyperparams"]}
        if include_report and self.report is not None:
            d["report"] = self.report.to_dict()
        return d


def evaluate_candidate(model, strategy, test, threshold, n_bins=10, order=0):
    scores = model.risk_scores(test.dataset)
    report = fairness_report(scores, test.dataset.outcome, test.groups, threshold, n_bins)
    return CandidateModel(strategy, model, report.accuracy, report.air, report, order=order)


@dataclasses.dataclass(frozen=True)
class Strategy:
    """One search strategy.

    ``values`` is the lambda/alpha grid, the list of hyperparameter overrides,
    or the candidate features for ``add``. Empty means the default.
    """

    kind: str
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise FairlendError(f"unknown strategy {self.kind!r}; choose from {STRATEGY_KINDS}")
        object.__setattr__(self, "values", tuple(self.values))

    @classmethod
    def parse(cls, text):
        """``"drop"``, ``"add"``, ``"hyperparam"``, ``"lambda:0,0.5,1"`` or ``"alpha:1,2"``."""
        if isinstance(text, Strategy):
            return text
        kind, _, rest = str(text).partition(":")
        values = ()
        if rest:
            if kind in ("lambda", "alpha"):
                values = tuple(float(v) for v in rest.split(","))
            else:
                values = tuple(v for v in rest.split(",") if v)
        return cls(kind, values)


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


def _jobs(baseline, train, strategy, threshold):
    """Yield ``(tag, unfitted_model, needs_groups)`` for one strategy."""
    base = baseline.model
    kind = base.kind
    feats = list(base.features_)
    params = base.get_params()
    if strategy.kind == "drop":
        for f in feats:
            if len(feats) > 1:
                yield f"drop:{f}", clone(base).set_params(features=[x for x in feats if x != f]), False
    elif strategy.kind == "add":
        pool = strategy.values or [f for f in train.dataset.feature_names if f not in feats]
        for f in pool:
            if f in feats:
                continue
            yield f"add:{f}", clone(base).set_params(features=feats + [f]), False
    elif strategy.kind == "hyperparam":
        grid = strategy.values or DEFAULT_HYPERPARAM_GRID.get(
            "tree" if kind in ("tree", "fair_tree") else "logistic", ())
        for override in grid:
            if isinstance(override, str):
                key, _, val = override.partition("=")
                override = {key: type(params[key])(val) if params.get(key) is not None else val}
            desc = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(override.items()))
            yield f"hyperparam:{desc}", clone(base).set_params(**override), kind in (
                "fair_tree", "adversarial")
    elif strategy.kind == "lambda":
        tree_params = {k: params[k] for k in ("max_depth", "min_leaf_size", "cutoff_grid_size",
                                             "seed")} if isinstance(base, DecisionTreeRiskModel) else {}
        for lam in strategy.values or (0.0, 0.5, 1.0, 2.0):
            yield f"lambda:{_fmt(float(lam))}", FairDecisionTreeRiskModel(
                lam=float(lam), decision_threshold=threshold, features=feats, **tree_params), True
    elif strategy.kind == "alpha":
        lr_params = {k: params[k] for k in ("learning_rate", "epochs", "l2_penalty", "seed")} \
            if isinstance(base, LogisticRiskModel) else {}
        for alpha in strategy.values or (0.5, 1.0, 2.0, 5.0):
            yield f"alpha:{_fmt(float(alpha))}", AdversarialDebiasingModel(
                alpha=float(alpha), features=feats, **lr_params), True


def _run_job(tag, model, needs_groups, train, test, threshold, n_bins, order):
    try:
        if needs_groups:
            model.fit(train.dataset, groups=train.groups)
        else:
            model.fit(train.dataset)
        return evaluate_candidate(model, tag, test, threshold, n_bins, order)
    except (FairlendError, ValueError, FloatingPointError) as exc:
        return CandidateModel(tag, None, None, None, None, f"{type(exc).__name__}: {exc}", order)


def search_alternatives(baseline, train, test, strategies, budget, n_bins=10, n_jobs=1):
    """Train and score alternative models, in strategy order, up to ``budget`` of them.

    Every candidate is evaluated on ``test`` at the baseline's threshold.
    Candidates that fail to train are kept with ``error`` set.
    """
    if int(budget) != budget or budget < 1:
        raise FairlendError(f"budget must be a positive integer, got {budget}")
    strategies = [Strategy.parse(s) for s in strategies]
    if not strategies:
        raise FairlendError("at least one strategy is required")
    threshold = baseline.report.threshold
    jobs = []
    for strategy in strategies:
        for job in _jobs(baseline, train, strategy, threshold):
            if len(jobs) == budget:
                break
            jobs.append(job)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_job)(tag, model, needs_groups, train, test, threshold, n_bins, i + 1)
        for i, (tag, model, needs_groups) in enumerate(jobs))
    return sorted(results, key=lambda c: c.order)


def pareto_frontier(candidates):
    """Candidates not dominated in (predictiveness, air), both maximized.

    Sorted by descending predictiveness; equal points are all kept. Failed
    candidates and those with undefined AIR are ignored.
    """
    pool = [c for c in candidates if not c.failed and c.air is not None]
    if not pool:
        raise FairlendError("no candidate with a defined AIR")
    ordered = sorted(pool, key=lambda c: -c.predictiveness)
    frontier = []
    best_air_above = -np.inf
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].predictiveness == ordered[i].predictiveness:
            j += 1
        tier = ordered[i:j]
        top = max(c.air for c in tier)
        if top > best_air_above:
            frontier.extend(c for c in tier if c.air == top)
        best_air_above = max(best_air_above, top)
        i = j
    return frontier


class Prong1(NamedTuple):
    adverse_impact_found: bool
    air: Optional[float]
    threshold: float
    air_undefined: bool


def prong1_adverse_impact(report, air_threshold=0.8):
    """Adverse impact when AIR is strictly below ``air_threshold`` (or undefined)."""
    air = report.air if hasattr(report, "air") else report
    if air is None:
        return Prong1(True, None, air_threshold, True)
    return Prong1(bool(air < air_threshold), float(air), float(air_threshold), False)


def default_floor(outcomes):
    """Majority-class rate plus 0.05."""
    y = np.asarray(outcomes)
    p = float(y.mean())
    return max(p, 1.0 - p) + 0.05


def prong2_business_need(predictiveness, floor):
    return bool(predictiveness >= floor)


def prong3_select(frontier, baseline, epsilon_predictiveness=0.03, min_air_gain=0.05):
    """Highest-AIR frontier member within ``epsilon`` of the baseline's predictiveness
    and at least ``min_air_gain`` (and strictly) above its AIR."""
    base_air = baseline.air if baseline.air is not None else 0.0
    eligible = [c for c in frontier
                if c is not baseline and c.air is not None
                and c.predictiveness >= baseline.predictiveness - epsilon_predictiveness
                and c.air >= base_air + min_air_gain and c.air > base_air]
    if not eligible:
        return None
    return min(eligible, key=lambda c: (-c.air, -c.predictiveness, c.order))


class ProxyDiagnostic(NamedTuple):
    feature: str
    group_correlation: float
    importance: float
    bias_risk: float
    constant: bool


def proxy_diagnostics(dataset, groups, model, n_repeats=5, seed=0):
    """Per-feature group correlation and permutation importance, ranked by bias risk.

    Importance is the mean absolute change in the model's scores when the
    feature column is shuffled (``n_repeats`` seeded shuffles). Bias risk is
    ``importance * |group_correlation|``.
    """
    groups.check_linked(dataset)
    g = groups.is_protected.astype(float)
    base = model.risk_scores(dataset)
    rng = np.random.default_rng(seed)
    used = set(getattr(model, "features_", dataset.feature_names))
    rows = []
    for j, name in enumerate(dataset.feature_names):
        x = dataset.features[:, j]
        constant = bool(np.all(x == x[0]))
        corr = 0.0 if constant else float(np.corrcoef(x, g)[0, 1])
        importance = 0.0
        if name in used and not constant:
            deltas = []
            for _ in range(n_repeats):
                X = dataset.features.copy()
                X[:, j] = x[rng.permutation(x.shape[0])]
                shuffled = Dataset(dataset.feature_names, X, dataset.outcome, dataset.row_ids)
                deltas.append(np.mean(np.abs(model.risk_scores(shuffled) - base)))
            importance = float(np.mean(deltas))
        rows.append(ProxyDiagnostic(name, corr, importance, importance * abs(corr), constant))
    return sorted(rows, key=lambda r: -r.bias_risk)


@dataclasses.dataclass(frozen=True)
class BurdenShiftingConfig:
    model_kind: str = "logistic"
    model_params: dict = dataclasses.field(default_factory=dict)
    threshold: float = 0.5
    air_threshold: float = 0.8
    floor: Optional[float] = None
    epsilon_predictiveness: float = 0.03
    min_air_gain: float = 0.05
    strategies: tuple = STRATEGY_KINDS
    lambda_grid: tuple = (0.0, 0.5, 1.0, 2.0)
    alpha_grid: tuple = (0.5, 1.0, 2.0, 5.0)
    budget: int = 50
    n_bins: int = 10
    n_jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in ("logistic", "tree"):
            raise FairlendError(f"model_kind must be 'logistic' or 'tree', got {self.model_kind!r}")
        for name in ("threshold", "air_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise FairlendError(f"{name} must lie in [0, 1], got {v}")
        if self.epsilon_predictiveness < 0 or self.min_air_gain < 0:
            raise FairlendError("epsilon_predictiveness and min_air_gain must be >= 0")
        strategies = tuple(s.kind if isinstance(s, Strategy) else Strategy.parse(s).kind
                           for s in self.strategies)
        if not strategies:
            raise FairlendError("at least one strategy is required")
        if int(self.budget) != self.budget or self.budget < len(strategies):
            raise FairlendError(f"budget must be an integer >= the number of strategies "
                                f"({len(strategies)}), got {self.budget}")
        if not self.lambda_grid or not self.alpha_grid:
            raise FairlendError("lambda_grid and alpha_grid must be non-empty")
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "alpha_grid", tuple(float(v) for v in self.alpha_grid))
        object.__setattr__(self, "strategies", tuple(self.strategies))

    def strategy_objects(self):
        out = []
        for s in self.strategies:
            s = Strategy.parse(s)
            if s.kind == "lambda" and not s.values:
                s = Strategy("lambda", self.lambda_grid)
            elif s.kind == "alpha" and not s.values:
                s = Strategy("alpha", self.alpha_grid)
            out.append(s)
        return out

    def make_baseline(self):
        params = dict(self.model_params)
        params.setdefault("seed", self.seed)
        if self.model_kind == "tree":
            params.setdefault("decision_threshold", self.threshold)
            return DecisionTreeRiskModel(**params)
        return LogisticRiskModel(**params)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["strategies"] = [s if isinstance(s, str) else f"{s.kind}" for s in self.strategies]
        d["lambda_grid"] = list(self.lambda_grid)
        d["alpha_grid"] = list(self.alpha_grid)
        return d


@dataclasses.dataclass
class BurdenShiftingReport:
    config: BurdenShiftingConfig
    baseline: CandidateModel
    proxy_diagnostics: list
    prong1: Prong1
    prong2: dict
    prong3: Optional[dict]
    narrative: str

    @property
    def outcome(self):
        """``no_impact``, ``lda_found`` or ``no_lda``."""
        if not self.prong1.adverse_impact_found:
            return "no_impact"
        if self.prong3 is not None and self.prong3["lda_found"]:
            return "lda_found"
        return "no_lda"

    def to_dict(self):
        d = {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "outcome": self.outcome,
            "config": self.config.to_dict(),
            "baseline": self.baseline.to_dict(include_report=True),
            "proxy_diagnostics": [r._asdict() for r in self.proxy_diagnostics],
            "prong1": self.prong1._asdict(),
            "prong2": dict(self.prong2),
            "narrative": self.narrative,
        }
        if self.prong3 is not None:
            p3 = self.prong3
            d["prong3"] = {
                "lda_found": p3["lda_found"],
                "selected": None if p3["selected"] is None else p3["selected"].to_dict(True),
                "frontier": [c.to_dict() for c in p3["frontier"]],
                "candidates": [c.to_dict() for c in p3["candidates"]],
            }
        return d


def _narrative(config, baseline, p1, p2, p3):
    lines = []
    if p1.air_undefined:
        lines.append("The control group received no approvals, so AIR is undefined; "
                     "this is treated as adverse impact.")
    else:
        verdict = "below" if p1.adverse_impact_found else "at or above"
        lines.append(f"Baseline {baseline.model.kind} model: AIR {p1.air:.3f} is {verdict} "
                     f"the {p1.threshold:.2f} screen at decision threshold {config.threshold:.2f}.")
    lines.append(f"Holdout accuracy {p2['predictiveness']:.3f} against a floor of "
                 f"{p2['floor']:.3f} ({p2['floor_rule']}): business need "
                 f"{'met' if p2['business_need_met'] else 'not met'}.")
    if p3 is None:
        lines.append("No alternatives search was run.")
    elif p3["selected"] is None:
        lines.append(f"{len(p3['candidates'])} alternatives evaluated; none improves AIR by "
                     f">= {config.min_air_gain:.2f} within {config.epsilon_predictiveness:.2f} "
                     "accuracy of the baseline.")
    else:
        s = p3["selected"]
        lines.append(f"{len(p3['candidates'])} alternatives evaluated; selected {s.strategy} "
                     f"with accuracy {s.predictiveness:.3f} and AIR {s.air:.3f}.")
    lines.append("Thresholds (four-fifths screen, accuracy floor, epsilon, minimum AIR gain) "
                 "are configurable screening choices, not legal conclusions.")
    return " ".join(lines)


def run_burden_shifting(train, test, config=None):
    """Prong 1 (adverse impact), prong 2 (business need), then the LDA search (prong 3).

    The search runs only when impact is found and the business need is met.
    """
    config = config or BurdenShiftingConfig()
    strategies = config.strategy_objects()
    for part in (train, test):
        part.groups.check_linked(part.dataset)

    model = config.make_baseline()
    model.fit(train.dataset)
    baseline = evaluate_candidate(model, "baseline", test, config.threshold, config.n_bins)
    diagnostics = proxy_diagnostics(test.dataset, test.groups, model, seed=config.seed)

    p1 = prong1_adverse_impact(baseline.report, config.air_threshold)
    if config.floor is None:
        floor, rule = default_floor(test.dataset.outcome), "majority-class rate + 0.05 (heuristic)"
    else:
        floor, rule = float(config.floor), "configured"
    p2 = {"business_need_met": prong2_business_need(baseline.predictiveness, floor),
          "predictiveness": baseline.predictiveness, "floor": floor, "floor_rule": rule}

    p3 = None
    if p1.adverse_impact_found and p2["business_need_met"]:
        candidates = search_alternatives(baseline, train, test, strategies, config.budget,
                                         config.n_bins, config.n_jobs)
        frontier = pareto_frontier([baseline] + candidates)
        selected = prong3_select(frontier, baseline, config.epsilon_predictiveness,
                                 config.min_air_gain)
        if selected is not None:
            assert selected.predictiveness >= baseline.predictiveness - config.epsilon_predictiveness
            assert selected.air >= (baseline.air or 0.0) + config.min_air_gain
        p3 = {"lda_found": selected is not None, "selected": selected,
              "frontier": frontier, "candidates": candidates}
    return BurdenShiftingReport(config, baseline, diagnostics, p1, p2, p3,
                                _narrative(config, baseline, p1, p2, p3))
