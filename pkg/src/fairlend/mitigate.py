"""In-training mitigation: fairness-regularized trees and adversarial debiasing."""

import dataclasses
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from ._validation import check_probability, protected_mask, require_both_groups
from .data import Dataset
from .exceptions import FairlendError, UndefinedAIRError
from .learners import (DecisionTreeRiskModel, LogisticRiskModel, RiskModel, _check_gd_params,
                       _logistic_step, _standardize_fit, threshold_decisions)
from .metrics import accuracy as decision_accuracy
from .metrics import adverse_impact_ratio


def _groups_for(X, groups):
    if groups is None:
        raise FairlendError("group labels are required to fit this model")
    if isinstance(X, Dataset) and hasattr(groups, "check_linked"):
        groups.check_linked(X)
    n = X.n_rows if isinstance(X, Dataset) else len(X)
    mask = protected_mask(groups, n)
    require_both_groups(mask)
    return mask


@dataclasses.dataclass(frozen=True)
class RegularizationConfig:
    lam: float = 1.0
    decision_threshold: float = 0.5

    def __post_init__(self):
        if not self.lam >= 0:
            raise FairlendError(f"lambda must be >= 0, got {self.lam}")
        check_probability(self.decision_threshold, "decision_threshold")


class SplitEvaluation(NamedTuple):
    accuracy: float
    air: Optional[float]  # None when the control group gets no approvals


def evaluate_split(dataset, groups, feature, cutoff, threshold=0.5):
    """Accuracy and AIR of the two-leaf rule ``feature < cutoff``.

    Each side scores its observed default rate and approves when that rate is
    below ``threshold``.
    """
    mask = _groups_for(dataset, groups)
    x = dataset.column(feature)
    y = dataset.outcome
    left = x < cutoff
    scores = np.empty(dataset.n_rows)
    for side in (left, ~left):
        if side.any():
            scores[side] = y[side].mean()
    decisions = threshold_decisions(scores, threshold)
    try:
        air = adverse_impact_ratio(decisions, mask)
    except UndefinedAIRError:
        air = None
    return SplitEvaluation(decision_accuracy(decisions, y), air)


def regularized_objective(accuracy, air, lam):
    """``accuracy - lam * (1 - min(air, 1))``; an undefined AIR (None/NaN) counts as 0.

    Works elementwise on arrays.
    """
    a = np.nan_to_num(np.asarray(np.nan if air is None else air, dtype=float), nan=0.0)
    value = np.asarray(accuracy, dtype=float) - lam * (1.0 - np.minimum(a, 1.0))
    return float(value) if value.ndim == 0 else value


class FairDecisionTreeRiskModel(DecisionTreeRiskModel):
    """Decision tree whose splits trade accuracy against adverse impact.

    Every candidate split is scored by :func:`regularized_objective` using the
    accuracy and AIR of the whole tree's training decisions with that split
    applied. ``lam=0`` grows exactly the tree :class:`DecisionTreeRiskModel`
    grows.
    """

    kind = "fair_tree"

    def __init__(self, lam=1.0, max_depth=3, min_leaf_size=5, cutoff_grid_size=32,
                 decision_threshold=0.5, seed=0, features=None):
        self.lam = lam
        super().__init__(max_depth=max_depth, min_leaf_size=min_leaf_size,
                         cutoff_grid_size=cutoff_grid_size,
                         decision_threshold=decision_threshold, seed=seed, features=features)

    def fit(self, X, y=None, groups=None):
        self._check_params()
        RegularizationConfig(self.lam, self.decision_threshold)
        mask = _groups_for(X, groups)
        X, y = self._training_data(X, y)
        lam = float(self.lam)
        self._set_nodes(self._grower(
            X, y, mask, lambda acc, air: regularized_objective(acc, air, lam)).grow())
        decisions = threshold_decisions(self._scores(X), self.decision_threshold)
        self.train_accuracy_ = decision_accuracy(decisions, y)
        try:
            self.train_air_ = adverse_impact_ratio(decisions, mask)
        except UndefinedAIRError:
            self.train_air_ = None
        return self

    def _training_summary(self):
        summary = super()._training_summary()
        if hasattr(self, "train_accuracy_"):
            summary.update(lam=float(self.lam), train_accuracy=self.train_accuracy_,
                           train_air=self.train_air_)
        return summary


def fit_fair_tree(train, groups, reg_config=None, tree_hyperparams=None):
    reg = reg_config or RegularizationConfig()
    hp = dict(tree_hyperparams or {})
    hp["decision_threshold"] = reg.decision_threshold
    return FairDecisionTreeRiskModel(lam=reg.lam, **hp).fit(train, groups=groups)


class AdversarialDebiasingModel(LogisticRiskModel):
    """Logistic predictor trained against a logistic adversary.

    The adversary sees only the predictor's logit and tries to recover group
    membership. Each epoch takes one adversary step on its own log-loss,
    then one predictor step on ``log-loss(predictor) - alpha * log-loss(adversary)``.
    The reversed adversary gradient pushes the score away from carrying group
    information. With ``alpha=0`` the predictor follows the exact same path
    as :class:`LogisticRiskModel`.
    """

    kind = "adversarial"

    def __init__(self, alpha=1.0, learning_rate=0.5, epochs=500, l2_penalty=0.0,
                 adversary_learning_rate=0.5, seed=0, features=None):
        self.alpha = alpha
        self.adversary_learning_rate = adversary_learning_rate
        super().__init__(learning_rate=learning_rate, epochs=epochs, l2_penalty=l2_penalty,
                         seed=seed, features=features)

    def fit(self, X, y=None, groups=None):
        _check_gd_params(self.learning_rate, self.epochs, self.l2_penalty)
        _check_gd_params(self.adversary_learning_rate, self.epochs)
        if not self.alpha >= 0:
            raise FairlendError(f"alpha must be >= 0, got {self.alpha}")
        g = _groups_for(X, groups).astype(float)
        X, y = self._training_data(X, y)
        self.mean_, self.scale_ = _standardize_fit(X)
        Xs = (X - self.mean_) / self.scale_
        n = Xs.shape[0]
        w, b = np.zeros(Xs.shape[1]), 0.0
        u, c = np.zeros(1), 0.0
        pred_losses, adv_losses = [], []
        for epoch in range(1, self.epochs + 1):
            z = Xs @ w + b
            u, c, adv_loss = _logistic_step(u, c, z[:, None], g, self.adversary_learning_rate,
                                            0.0, epoch, component="adversary")
            extra = None
            if self.alpha:
                dz = (expit(u[0] * z + c) - g) * u[0] / n
                extra = (-self.alpha * (Xs.T @ dz), -self.alpha * float(dz.sum()))
            w, b, loss = _logistic_step(w, b, Xs, y, self.learning_rate, self.l2_penalty,
                                        epoch, extra)
            pred_losses.append(loss)
            adv_losses.append(adv_loss)
        self.coef_, self.intercept_ = w, b
        self.adversary_coef_, self.adversary_intercept_ = float(u[0]), c
        self.loss_curve_ = pred_losses
        self.adversary_loss_curve_ = adv_losses
        return self

    def _parameters(self):
        params = super()._parameters()
        params["adversary"] = {"weight": self.adversary_coef_,
                               "intercept": float(self.adversary_intercept_)}
        return params

    def _load_parameters(self, p):
        super()._load_parameters(p)
        self.adversary_coef_ = float(p["adversary"]["weight"])
        self.adversary_intercept_ = float(p["adversary"]["intercept"])

    def _training_summary(self):
        summary = super()._training_summary()
        if summary:
            summary.update(alpha=float(self.alpha),
                           adversary_initial_loss=self.adversary_loss_curve_[0],
                           adversary_final_loss=self.adversary_loss_curve_[-1])
        return summary


@dataclasses.dataclass(frozen=True)
class AdversarialConfig:
    alpha: float = 1.0
    predictor: dict = dataclasses.field(default_factory=dict)
    adversary: dict = dataclasses.field(default_factory=dict)
    epochs: int = 500
    seed: int = 0


def fit_adversarial(train, groups, adv_config=None):
    cfg = adv_config or AdversarialConfig()
    unknown = set(cfg.adversary) - {"learning_rate"}
    if unknown:
        raise FairlendError(f"unknown adversary settings: {sorted(unknown)}")
    model = AdversarialDebiasingModel(
        alpha=cfg.alpha, epochs=cfg.epochs, seed=cfg.seed,
        adversary_learning_rate=cfg.adversary.get("learning_rate", 0.5), **cfg.predictor)
    return model.fit(train, groups=groups)


def adversary_leakage(model, dataset, groups):
    """Accuracy of a fresh logistic adversary predicting group from the model's scores.

    Equals the majority-group share when the scores carry no group signal.
    """
    if isinstance(model, RiskModel):
        scores = model.risk_scores(dataset)
    else:
        scores = np.asarray(model(dataset) if callable(model) else model, dtype=float)
    mask = protected_mask(groups, scores.shape[0])
    require_both_groups(mask)
    adversary = LogisticRiskModel(learning_rate=0.5, epochs=300)
    adversary.fit(scores.reshape(-1, 1), mask.astype(np.int64))
    guess = adversary.predict(scores.reshape(-1, 1)).astype(bool)
    return float(np.mean(guess == mask))
