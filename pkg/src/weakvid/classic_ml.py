"""The seven handcrafted-feature classifiers: LR, LDA, NB, KNN, SVM, CART, RF.

Every learner works on integer class indices; :func:`fit` maps labels to
indices through the lexicographically sorted ``class_list``, so "ties go to
the lowest index" also means "ties go to the lexicographically smallest
label".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import DimensionMismatch, InvalidSpec, NonFiniteFeature, SingleClass
from .trees import DecisionTree, RandomForest

ALGORITHMS = ("LR", "LDA", "NB", "KNN", "SVM", "CART", "RF")

DEFAULT_HYPERPARAMETERS = {
    "LR": {"C": 1.0, "tol": 1e-4, "max_iter": 1000, "standardize": True},
    "LDA": {"ridge": 1e-6},
    "NB": {"var_smoothing": 1e-9},
    "KNN": {"k": 5},
    "SVM": {"lam": 1e-4, "epochs": 20, "standardize": True},
    "CART": {"max_depth": None},
    "RF": {"n_trees": 100, "max_features": "sqrt", "bootstrap": True, "max_depth": None},
}


@dataclass(frozen=True)
class ClassifierSpec:
    algorithm: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        algo = self.algorithm.upper()
        if algo not in ALGORITHMS:
            raise InvalidSpec(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[algo])
        if unknown:
            raise InvalidSpec(f"{algo}: unknown hyperparameters {sorted(unknown)}")
        object.__setattr__(self, "algorithm", algo)
        hp = self.params
        if algo == "KNN" and int(hp["k"]) < 1:
            raise InvalidSpec("KNN needs k >= 1")
        if algo == "RF" and int(hp["n_trees"]) < 1:
            raise InvalidSpec("RF needs at least one tree")
        if algo == "LR" and hp["C"] <= 0:
            raise InvalidSpec("LR regularization strength must be > 0")
        if algo == "SVM" and (hp["lam"] <= 0 or int(hp["epochs"]) < 1):
            raise InvalidSpec("SVM needs lam > 0 and epochs >= 1")
        if algo == "LDA" and hp["ridge"] < 0:
            raise InvalidSpec("LDA ridge must be >= 0")

    @property
    def params(self) -> dict:
        return {**DEFAULT_HYPERPARAMETERS[self.algorithm], **self.hyperparameters}

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparameters": self.params, "seed": self.seed}


class Standardizer:
    """z-score with statistics from the training rows only."""

    def fit(self, X):
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (X - self.mean_) / self.scale_

    def to_state(self):
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_state(cls, st):
        s = cls()
        s.mean_, s.scale_ = np.array(st["mean"]), np.array(st["scale"])
        return s


class LogisticRegression:
    """Multinomial softmax regression with an L2 penalty on the weights."""

    def __init__(self, C=1.0, tol=1e-4, max_iter=1000, standardize=True):
        self.C, self.tol, self.max_iter, self.standardize = C, tol, max_iter, standardize

    def fit(self, X, y, n_classes):
        self.scaler_ = Standardizer().fit(X) if self.standardize else None
        Z = self.scaler_.transform(X) if self.scaler_ else X
        n, d = Z.shape
        Y = np.eye(n_classes)[y]

        def objective(theta):
            W = theta[: d * n_classes].reshape(d, n_classes)
            b = theta[d * n_classes:]
            logits = Z @ W + b
            lse = logsumexp(logits, axis=1)
            loss = self.C * (lse.sum() - (logits * Y).sum()) + 0.5 * (W * W).sum()
            P = np.exp(logits - lse[:, None])
            G = self.C * (P - Y)
            return loss, np.concatenate([(Z.T @ G + W).ravel(), G.sum(axis=0)])

        res = minimize(objective, np.zeros(d * n_classes + n_classes), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter, "gtol": self.tol})
        self.coef_ = res.x[: d * n_classes].reshape(d, n_classes)
        self.intercept_ = res.x[d * n_classes:]
        self.n_iter_ = int(res.nit)
        return self

    def decision_function(self, X):
        Z = self.scaler_.transform(X) if self.scaler_ else X
        return Z @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def to_state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_.tolist(),
                "scaler": self.scaler_.to_state() if self.scaler_ else None}

    def load_state(self, st):
        self.coef_, self.intercept_ = np.array(st["coef"]), np.array(st["intercept"])
        self.scaler_ = Standardizer.from_state(st["scaler"]) if st["scaler"] else None
        return self


class LinearDiscriminant:
    """Shared-covariance LDA; the pooled covariance is inverted through its eigenbasis."""

    def __init__(self, ridge=1e-6):
        self.ridge = ridge

    def fit(self, X, y, n_classes):
        counts = np.bincount(y, minlength=n_classes)
        present = counts > 0
        means = np.zeros((n_classes, X.shape[1]))
        np.add.at(means, y, X)
        means[present] /= counts[present, None]
        centered = X - means[y]
        dof = max(len(y) - int(present.sum()), 1)
        cov = centered.T @ centered / dof
        cov[np.diag_indices_from(cov)] += self.ridge
        evals, evecs = np.linalg.eigh(cov)
        evals = np.maximum(evals, np.finfo(float).tiny)
        self.scalings_ = evecs / np.sqrt(evals)
        self.means_w_ = means @ self.scalings_
        with np.errstate(divide="ignore"):
            self.log_prior_ = np.where(present, np.log(counts / counts.sum()), -np.inf)
        return self

    def decision_function(self, X):
        Z = X @ self.scalings_
        return Z @ self.means_w_.T - 0.5 * (self.means_w_ ** 2).sum(axis=1) + self.log_prior_

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def to_state(self):
        return {"scalings": self.scalings_.tolist(), "means_w": self.means_w_.tolist(),
                "log_prior": [float(v) if np.isfinite(v) else None for v in self.log_prior_]}

    def load_state(self, st):
        self.scalings_, self.means_w_ = np.array(st["scalings"]), np.array(st["means_w"])
        self.log_prior_ = np.array([-np.inf if v is None else v for v in st["log_prior"]])
        return self


class GaussianNaiveBayes:
    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y, n_classes):
        counts = np.bincount(y, minlength=n_classes)
        eps = self.var_smoothing * X.var(axis=0).max()
        if eps <= 0:
            eps = self.var_smoothing
        self.epsilon_ = float(eps)
        self.theta_ = np.zeros((n_classes, X.shape[1]))
        self.var_ = np.ones((n_classes, X.shape[1]))
        for c in np.flatnonzero(counts):
            Xc = X[y == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.var_[c] = Xc.var(axis=0) + eps
        with np.errstate(divide="ignore"):
            self.log_prior_ = np.where(counts > 0, np.log(counts / counts.sum()), -np.inf)
        return self

    def joint_log_likelihood(self, X):
        out = np.empty((len(X), len(self.theta_)))
        for c in range(len(self.theta_)):
            ll = -0.5 * np.log(2.0 * np.pi * self.var_[c]).sum()
            ll = ll - 0.5 * (((X - self.theta_[c]) ** 2) / self.var_[c]).sum(axis=1)
            out[:, c] = self.log_prior_[c] + ll
        return out

    def predict(self, X):
        return np.argmax(self.joint_log_likelihood(X), axis=1)

    def to_state(self):
        return {"theta": self.theta_.tolist(), "var": self.var_.tolist(), "epsilon": self.epsilon_,
                "log_prior": [float(v) if np.isfinite(v) else None for v in self.log_prior_]}

    def load_state(self, st):
        self.theta_, self.var_ = np.array(st["theta"]), np.array(st["var"])
        self.epsilon_ = st["epsilon"]
        self.log_prior_ = np.array([-np.inf if v is None else v for v in st["log_prior"]])
        return self


class KNearestNeighbors:
    """Euclidean k-NN; distance ties keep training-row order, vote ties the lowest class."""

    def __init__(self, k=5, chunk=512):
        self.k, self.chunk = int(k), chunk

    def fit(self, X, y, n_classes):
        self.X_, self.y_, self.n_classes = np.array(X, dtype=np.float64), np.array(y), n_classes
        return self

    def neighbors(self, X):
        k = min(self.k, len(self.X_))
        out = []
        for start in range(0, len(X), self.chunk):
            D = cdist(X[start:start + self.chunk], self.X_, "sqeuclidean")
            out.append(np.argsort(D, axis=1, kind="stable")[:, :k])
        return np.vstack(out) if out else np.zeros((0, k), dtype=np.int64)

    def predict(self, X):
        labels = self.y_[self.neighbors(X)]
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        for j in range(labels.shape[1]):
            np.add.at(votes, (np.arange(len(X)), labels[:, j]), 1)
        return np.argmax(votes, axis=1)

    def to_state(self):
        return {"X": self.X_.tolist(), "y": self.y_.tolist(), "n_classes": self.n_classes}

    def load_state(self, st):
        self.X_, self.y_, self.n_classes = np.array(st["X"]), np.array(st["y"]), st["n_classes"]
        return self


class LinearSVM:
    """One-vs-rest linear SVM trained by Pegasos stochastic subgradient steps.

    The bias is an extra constant feature and is regularized with the
    weights. Step size at update t is 1 / (lam * t).
    """

    def __init__(self, lam=1e-4, epochs=20, standardize=True, seed=0):
        self.lam, self.epochs, self.standardize, self.seed = lam, int(epochs), standardize, seed

    def fit(self, X, y, n_classes):
        self.scaler_ = Standardizer().fit(X) if self.standardize else None
        Z = self.scaler_.transform(X) if self.scaler_ else X
        Z = np.hstack([Z, np.ones((len(Z), 1))])
        sign = np.where(np.arange(n_classes)[None, :] == y[:, None], 1.0, -1.0)  # (n, C)
        W = np.zeros((n_classes, Z.shape[1]))
        radius = 1.0 / np.sqrt(self.lam)
        rng = np.random.default_rng(self.seed)
        t = 0
        for _ in range(self.epochs):
            for i in rng.permutation(len(Z)):
                t += 1
                eta = 1.0 / (self.lam * t)
                x, s = Z[i], sign[i]
                violated = s * (W @ x) < 1.0
                W *= 1.0 - eta * self.lam
                if violated.any():
                    W[violated] += (eta * s[violated])[:, None] * x
                norms = np.sqrt((W * W).sum(axis=1))
                over = norms > radius
                if over.any():
                    W[over] *= (radius / norms[over])[:, None]
        self.W_ = W
        return self

    def decision_function(self, X):
        Z = self.scaler_.transform(X) if self.scaler_ else X
        return Z @ self.W_[:, :-1].T + self.W_[:, -1]

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def to_state(self):
        return {"W": self.W_.tolist(), "scaler": self.scaler_.to_state() if self.scaler_ else None}

    def load_state(self, st):
        self.W_ = np.array(st["W"])
        self.scaler_ = Standardizer.from_state(st["scaler"]) if st["scaler"] else None
        return self


def _make_estimator(spec: ClassifierSpec):
    hp = spec.params
    if spec.algorithm == "LR":
        return LogisticRegression(hp["C"], hp["tol"], int(hp["max_iter"]), hp["standardize"])
    if spec.algorithm == "LDA":
        return LinearDiscriminant(hp["ridge"])
    if spec.algorithm == "NB":
        return GaussianNaiveBayes(hp["var_smoothing"])
    if spec.algorithm == "KNN":
        return KNearestNeighbors(int(hp["k"]))
    if spec.algorithm == "SVM":
        return LinearSVM(hp["lam"], int(hp["epochs"]), hp["standardize"], spec.seed)
    if spec.algorithm == "CART":
        return DecisionTree(max_features=None, max_depth=hp["max_depth"], seed=spec.seed)
    return RandomForest(int(hp["n_trees"]), hp["max_features"], hp["bootstrap"], hp["max_depth"], spec.seed)


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    class_list: list[str]
    estimator: object
    n_features: int

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "class_list": self.class_list,
                "n_features": self.n_features, "state": self.estimator.to_state()}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        spec = ClassifierSpec(doc["spec"]["algorithm"], doc["spec"]["hyperparameters"], doc["spec"]["seed"])
        if spec.algorithm == "CART":
            est = DecisionTree.from_state(doc["state"])
        elif spec.algorithm == "RF":
            est = RandomForest.from_state(doc["state"])
        else:
            est = _make_estimator(spec).load_state(doc["state"])
        return cls(spec, list(doc["class_list"]), est, int(doc["n_features"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("feature matrix contains NaN or infinite values")
    return X


def fit(spec: ClassifierSpec, X, y: Sequence) -> TrainedModel:
    X = _check_matrix(X)
    y = list(y)
    if X.shape[0] != len(y):
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {len(y)} labels")
    if len(y) < 2:
        raise SingleClass("need at least two training rows")
    class_list = sorted(set(y))
    if len(class_list) < 2:
        raise SingleClass(f"only one class present: {class_list[0]!r}")
    index = {c: i for i, c in enumerate(class_list)}
    yi = np.array([index[v] for v in y], dtype=np.int64)
    est = _make_estimator(spec)
    est.fit(X, yi, len(class_list))
    return TrainedModel(spec, class_list, est, X.shape[1])


def predict(model: TrainedModel, X) -> list[str]:
    X = _check_matrix(X)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    return [model.class_list[i] for i in model.estimator.predict(X)]


@dataclass
class CVResult:
    mean_accuracy: float
    fold_accuracies: list[float]
    notes: list[str] = field(default_factory=list)


def cross_validate(spec: ClassifierSpec, X, y: Sequence, folds) -> CVResult:
    """Fit on rows outside each fold, score on rows inside it.

    ``folds`` is a per-row fold index (array-like of ints).
    """
    X = _check_matrix(X)
    y = np.asarray(list(y), dtype=object)
    folds = np.asarray(folds)
    if len(folds) != len(y) or X.shape[0] != len(y):
        raise DimensionMismatch("folds, features and labels must have equal length")
    accs, notes = [], []
    for f in np.unique(folds):
        test = folds == f
        train_y = list(y[~test])
        if len(set(train_y)) == 1:
            # a single-class training fold predicts its only label
            pred = [train_y[0]] * int(test.sum())
            notes.append(f"fold {int(f)}: single training class, constant prediction")
        else:
            model = fit(spec, X[~test], train_y)
            pred = predict(model, X[test])
        accs.append(float(np.mean(np.asarray(pred, dtype=object) == y[test])))
    return CVResult(float(np.mean(accs)), accs, notes)
