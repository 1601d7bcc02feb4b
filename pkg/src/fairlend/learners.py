"""Baseline default-risk learners: gradient-descent logistic regression and an
accuracy-split decision tree.

Both follow the scikit-learn estimator protocol. ``fit`` accepts either a
:class:`~fairlend.data.Dataset` (outcome taken from it, feature names
recorded) or a plain ``(X, y)`` pair. Plain learners never take group labels.
"""

import json

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_binary, check_probability, check_scores
from .data import Dataset
from .exceptions import DataError, FairlendError, TrainingDivergedError
from .metrics import Decisions

MODEL_FORMAT = "fairlend-model"
MODEL_VERSION = 1


def threshold_decisions(scores, threshold):
    """Approve rows whose default risk is strictly below ``threshold``."""
    threshold = check_probability(threshold, "threshold")
    s = check_scores(scores)
    return Decisions((s < threshold).astype(np.int64), threshold)


class RiskModel(BaseEstimator, ClassifierMixin):
    """Shared input handling, prediction surface and JSON persistence."""

    kind = None

    def _training_data(self, X, y):
        if isinstance(X, Dataset):
            ds = X if self.features is None else X.select(self.features)
            y = ds.outcome if y is None else y
            X, names = ds.features, ds.feature_names
        else:
            if self.features is not None:
                raise FairlendError("`features` selects by name and needs a Dataset")
            X = check_array(X, dtype=float)
            names = tuple(f"x{j}" for j in range(X.shape[1]))
        if y is None:
            raise FairlendError("outcome vector required")
        y = check_binary(y, X.shape[0])
        self.__dict__.pop("_loaded_training", None)
        if X.shape[0] < 2 or y.min() == y.max():
            raise FairlendError("training needs at least 2 rows and both outcome classes")
        self.features_ = tuple(names)
        self.n_features_in_ = len(names)
        self.classes_ = np.array([0, 1])
        return X, y

    def _design(self, X):
        check_is_fitted(self, "features_")
        if isinstance(X, Dataset):
            missing = [f for f in self.features_ if f not in X.feature_names]
            if missing:
                raise DataError("dataset lacks a model feature", column=missing[0])
            return X.select(self.features_).features
        X = check_array(X, dtype=float)
        if X.shape[1] != len(self.features_):
            raise DataError(f"expected {len(self.features_)} feature columns, got {X.shape[1]}")
        return X

    def risk_scores(self, X):
        """Estimated probability of default for each row."""
        return self._scores(self._design(X))

    def predict_proba(self, X):
        p = self.risk_scores(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        """Predicted outcome class (1 = default) at the 0.5 cut."""
        return (self.risk_scores(X) >= 0.5).astype(np.int64)

    def decide(self, X, threshold=0.5):
        return threshold_decisions(self.risk_scores(X), threshold)

    def to_dict(self):
        check_is_fitted(self, "features_")
        hp = self.get_params()
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "features": list(self.features_),
            "hyperparams": {k: (list(v) if k == "features" and v is not None else v)
                            for k, v in hp.items()},
            "parameters": self._parameters(),
            "training": (self._loaded_training if hasattr(self, "_loaded_training")
                         else self._training_summary()),
        }

    def _training_summary(self):
        return {}


def _standardize_fit(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


def logistic_loss(weights, intercept, X, y, l2_penalty=0.0):
    """Mean log-loss plus ``l2_penalty/2 * ||w||^2`` (intercept unpenalized)."""
    z = X @ weights + intercept
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2_penalty * weights @ weights)


def logistic_gradient(weights, intercept, X, y, l2_penalty=0.0):
    """Gradient of :func:`logistic_loss` as ``(d/dw, d/db)``."""
    residual = expit(X @ weights + intercept) - y
    return X.T @ residual / X.shape[0] + l2_penalty * weights, float(residual.mean())


def _check_gd_params(learning_rate, epochs, l2_penalty=0.0):
    if not l2_penalty >= 0:
        raise FairlendError(f"l2_penalty must be >= 0, got {l2_penalty}")
    if not learning_rate >= 0:
        raise FairlendError(f"learning_rate must be >= 0, got {learning_rate}")
    if int(epochs) != epochs or epochs < 1:
        raise FairlendError(f"epochs must be an integer >= 1, got {epochs}")


class LogisticRiskModel(RiskModel):
    """Logistic regression fit by full-batch gradient descent from zero weights.

    Features are standardized internally; the stored weights apply to the
    standardized columns.

    Parameters
    ----------
    learning_rate : float
    epochs : int
        Number of gradient steps.
    l2_penalty : float
    seed : int
        Recorded for provenance. Training is deterministic.
    features : list of str, optional
        Subset of dataset columns to use.
    """

    kind = "logistic"

    def __init__(self, learning_rate=0.5, epochs=500, l2_penalty=0.0, seed=0, features=None):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2_penalty = l2_penalty
        self.seed = seed
        self.features = features

    def fit(self, X, y=None):
        _check_gd_params(self.learning_rate, self.epochs, self.l2_penalty)
        X, y = self._training_data(X, y)
        self.mean_, self.scale_ = _standardize_fit(X)
        Xs = (X - self.mean_) / self.scale_
        w, b = np.zeros(Xs.shape[1]), 0.0
        losses = []
        for epoch in range(1, self.epochs + 1):
            w, b, loss = _logistic_step(w, b, Xs, y, self.learning_rate, self.l2_penalty, epoch)
            losses.append(loss)
        self.coef_, self.intercept_ = w, b
        self.loss_curve_ = losses
        return self

    def decision_function(self, X):
        return self._logits(self._design(X))

    def _logits(self, X):
        check_is_fitted(self, "coef_")
        return ((X - self.mean_) / self.scale_) @ self.coef_ + self.intercept_

    def _scores(self, X):
        return expit(self._logits(X))

    def _parameters(self):
        return {
            "weights": [float(v) for v in self.coef_],
            "intercept": float(self.intercept_),
            "mean": [float(v) for v in self.mean_],
            "scale": [float(v) for v in self.scale_],
        }

    def _load_parameters(self, p):
        self.coef_ = np.array(p["weights"], dtype=float)
        self.intercept_ = float(p["intercept"])
        self.mean_ = np.array(p["mean"], dtype=float)
        self.scale_ = np.array(p["scale"], dtype=float)

    def _training_summary(self):
        curve = getattr(self, "loss_curve_", None)
        if not curve:
            return {}
        return {"epochs_run": len(curve), "initial_loss": curve[0], "final_loss": curve[-1]}


def _logistic_step(w, b, X, y, lr, l2, epoch, extra_grad=None, component="predictor"):
    # overflow is reported as TrainingDivergedError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        loss = logistic_loss(w, b, X, y, l2)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, component)
        gw, gb = logistic_gradient(w, b, X, y, l2)
        if extra_grad is not None:
            gw, gb = gw + extra_grad[0], gb + extra_grad[1]
        w, b = w - lr * gw, b - lr * gb
    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise TrainingDivergedError(epoch, component)
    return w, b, loss


def candidate_cutoffs(x, grid_size):
    """Midpoints between adjacent distinct values, at up to ``grid_size`` quantile positions.

    Cutoffs depend only on the order of ``x``, so strictly increasing
    transforms of a feature yield the same partitions.
    """
    u = np.unique(x)
    if u.shape[0] < 2:
        return np.empty(0)
    if u.shape[0] <= grid_size:
        k = np.arange(1, u.shape[0])
    else:
        qs = np.quantile(x, np.linspace(0.0, 1.0, grid_size), method="inverted_cdf")
        k = np.unique(np.searchsorted(u, qs))
        k = k[k >= 1]
    return (u[k - 1] + u[k]) / 2.0


class _TreeGrower:
    """Greedy depth-first tree induction scored on whole-tree decisions.

    ``split_score(accuracy, air)`` maps arrays of candidate whole-tree
    accuracies and AIRs (NaN where undefined) to objective values. Without it
    candidates are ranked by accuracy alone.
    """

    def __init__(self, X, y, threshold, max_depth, min_leaf_size, grid_size,
                 protected=None, split_score=None):
        self.X, self.y = X, y
        self.threshold = threshold
        self.max_depth, self.min_leaf, self.grid = max_depth, min_leaf_size, grid_size
        self.protected = protected
        self.split_score = split_score
        self.n = y.shape[0]
        if protected is not None:
            self.n_protected = int(protected.sum())
            self.n_control = self.n - self.n_protected
        self.nodes = []

    def _leaf_summary(self, rows):
        cnt = rows.shape[0]
        d = int(self.y[rows].sum())
        fav = d / cnt < self.threshold
        correct = cnt - d if fav else d
        if self.protected is None:
            return np.array([correct, 0, 0])
        p = int(self.protected[rows].sum())
        return np.array([correct, p * fav, (cnt - p) * fav])

    def grow(self):
        rows = np.arange(self.n)
        self.totals = self._leaf_summary(rows)
        self._add_node(rows, 0)
        self._grow(0, rows, 0)
        return self.nodes

    def _add_node(self, rows, depth):
        self.nodes.append({"feature": -1, "cutoff": None, "left": -1, "right": -1,
                           "score": float(self.y[rows].mean()), "n": int(rows.shape[0]),
                           "depth": depth})
        return len(self.nodes) - 1

    def _grow(self, node, rows, depth):
        d = self.y[rows].sum()
        if depth >= self.max_depth or d == 0 or d == rows.shape[0]:
            return
        if rows.shape[0] < 2 * self.min_leaf:
            return
        best = self._best_split(rows)
        if best is None:
            return
        feature, cutoff = best
        go_left = self.X[rows, feature] < cutoff
        left_rows, right_rows = rows[go_left], rows[~go_left]
        self.totals = (self.totals - self._leaf_summary(rows)
                       + self._leaf_summary(left_rows) + self._leaf_summary(right_rows))
        left = self._add_node(left_rows, depth + 1)
        right = self._add_node(right_rows, depth + 1)
        self.nodes[node].update(feature=feature, cutoff=float(cutoff), left=left, right=right)
        self._grow(left, left_rows, depth + 1)
        self._grow(right, right_rows, depth + 1)

    def _best_split(self, rows):
        rest = self.totals - self._leaf_summary(rows)
        y = self.y[rows]
        best, best_value = None, -np.inf
        for j in range(self.X.shape[1]):
            x = self.X[rows, j]
            cutoffs = candidate_cutoffs(x, self.grid)
            if cutoffs.shape[0] == 0:
                continue
            order = np.argsort(x, kind="stable")
            n_left = np.searchsorted(x[order], cutoffs, side="left")
            n_right = rows.shape[0] - n_left
            valid = (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
            if not valid.any():
                continue
            cum_y = np.concatenate([[0], np.cumsum(y[order])])
            d_left = cum_y[n_left]
            d_right = cum_y[-1] - d_left
            with np.errstate(invalid="ignore", divide="ignore"):
                fav_left = d_left / n_left < self.threshold
                fav_right = d_right / n_right < self.threshold
            correct = (np.where(fav_left, n_left - d_left, d_left)
                       + np.where(fav_right, n_right - d_right, d_right))
            accuracy = (rest[0] + correct) / self.n
            if self.split_score is None:
                value = accuracy
            else:
                cum_p = np.concatenate([[0], np.cumsum(self.protected[rows][order])])
                p_left = cum_p[n_left]
                p_right = cum_p[-1] - p_left
                fav_p = rest[1] + fav_left * p_left + fav_right * p_right
                fav_c = (rest[2] + fav_left * (n_left - p_left)
                         + fav_right * (n_right - p_right))
                rate_c = fav_c / self.n_control
                with np.errstate(invalid="ignore", divide="ignore"):
                    air = np.where(rate_c > 0, (fav_p / self.n_protected) / rate_c, np.nan)
                value = self.split_score(accuracy, air)
            value = np.where(valid, value, -np.inf)
            i = int(np.argmax(value))
            if value[i] > best_value:
                best, best_value = (j, cutoffs[i]), value[i]
        return best


class DecisionTreeRiskModel(RiskModel):
    """Depth-limited tree whose splits maximize classification accuracy.

    At each node every feature is tried at quantile-placed cutoffs (rows with
    ``x < cutoff`` go left). A leaf approves when its observed default rate
    is below ``decision_threshold``, and the split chosen is the one giving
    the most correct approve/deny calls. Ties go to the lower feature index,
    then the lower cutoff. Leaf scores are observed default rates.
    """

    kind = "tree"

    def __init__(self, max_depth=3, min_leaf_size=5, cutoff_grid_size=32,
                 decision_threshold=0.5, seed=0, features=None):
        self.max_depth = max_depth
        self.min_leaf_size = min_leaf_size
        self.cutoff_grid_size = cutoff_grid_size
        self.decision_threshold = decision_threshold
        self.seed = seed
        self.features = features

    def _check_params(self):
        for name, low in (("max_depth", 1), ("min_leaf_size", 1), ("cutoff_grid_size", 2)):
            v = getattr(self, name)
            if int(v) != v or v < low:
                raise FairlendError(f"{name} must be an integer >= {low}, got {v}")
        check_probability(self.decision_threshold, "decision_threshold")

    def fit(self, X, y=None):
        self._check_params()
        X, y = self._training_data(X, y)
        self._set_nodes(self._grower(X, y).grow())
        return self

    def _grower(self, X, y, protected=None, split_score=None):
        return _TreeGrower(X, y, self.decision_threshold, self.max_depth, self.min_leaf_size,
                           self.cutoff_grid_size, protected, split_score)

    def _set_nodes(self, nodes):
        self.nodes_ = nodes
        self.feature_idx_ = np.array([n["feature"] for n in nodes], dtype=np.int64)
        self.cutoff_ = np.array([np.nan if n["cutoff"] is None else n["cutoff"] for n in nodes])
        self.left_ = np.array([n["left"] for n in nodes], dtype=np.int64)
        self.right_ = np.array([n["right"] for n in nodes], dtype=np.int64)
        self.leaf_score_ = np.array([n["score"] for n in nodes])

    def apply(self, X):
        """Index of the leaf each row lands in."""
        return self._route(self._design(X))

    def _route(self, X):
        check_is_fitted(self, "nodes_")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature_idx_[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.maximum(f, 0)] < self.cutoff_[node]
            node = np.where(internal, np.where(go_left, self.left_[node], self.right_[node]), node)

    def _scores(self, X):
        return self.leaf_score_[self._route(X)]

    @property
    def root_split(self):
        """``(feature name, cutoff)`` of the first split, or None for a stump."""
        root = self.nodes_[0]
        if root["feature"] < 0:
            return None
        return self.features_[root["feature"]], root["cutoff"]

    def _parameters(self):
        nodes = []
        for n in self.nodes_:
            nodes.append({
                "feature": None if n["feature"] < 0 else self.features_[n["feature"]],
                "cutoff": n["cutoff"],
                "left": None if n["left"] < 0 else n["left"],
                "right": None if n["right"] < 0 else n["right"],
                "score": n["score"],
                "n": n["n"],
                "depth": n["depth"],
            })
        return {"nodes": nodes}

    def _load_parameters(self, p):
        nodes = []
        for n in p["nodes"]:
            nodes.append({
                "feature": -1 if n["feature"] is None else self.features_.index(n["feature"]),
                "cutoff": n["cutoff"],
                "left": -1 if n["left"] is None else n["left"],
                "right": -1 if n["right"] is None else n["right"],
                "score": n["score"], "n": n["n"], "depth": n["depth"],
            })
        self._set_nodes(nodes)

    def _training_summary(self):
        return {"n_nodes": len(self.nodes_),
                "depth": max(n["depth"] for n in self.nodes_)}


def fit_logistic(train, hyperparams=None):
    """Fit :class:`LogisticRiskModel` on a Dataset with the given parameter dict."""
    return LogisticRiskModel(**(hyperparams or {})).fit(train)


def fit_tree(train, hyperparams=None):
    """Fit :class:`DecisionTreeRiskModel` on a Dataset with the given parameter dict."""
    return DecisionTreeRiskModel(**(hyperparams or {})).fit(train)


def predict(model, dataset):
    return model.risk_scores(dataset)


def _registry():
    from . import mitigate
    return {cls.kind: cls for cls in (LogisticRiskModel, DecisionTreeRiskModel,
                                      mitigate.FairDecisionTreeRiskModel,
                                      mitigate.AdversarialDebiasingModel)}


def model_to_json(model):
    return json.dumps(model.to_dict(), indent=2) + "\n"


def load_model(source):
    """Rebuild a fitted model from a JSON string, a parsed dict or a file path."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise FairlendError("not a fairlend model document (or unsupported version)")
    cls = _registry().get(doc["kind"])
    if cls is None:
        raise FairlendError(f"unknown model kind {doc['kind']!r}")
    model = cls(**doc["hyperparams"])
    model.features_ = tuple(doc["features"])
    model.n_features_in_ = len(model.features_)
    model.classes_ = np.array([0, 1])
    model._load_parameters(doc["parameters"])
    model._loaded_training = dict(doc.get("training", {}))
    return model
