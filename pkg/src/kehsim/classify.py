"""Five classifiers built from first principles, with stratified k-fold
cross-validation and confusion matrices.

Algorithms: random forest (bagged Gini trees, sqrt(d) features per split),
single decision tree, one-vs-rest linear SVM trained by fixed-step full-batch
subgradient descent on the hinge loss, k-nearest-neighbors, and Gaussian
naive Bayes. All ties (votes, posteriors, margins) break to the lowest class
index; classes are ordered lexicographically.

cross_validate fits normalization and SMOTE inside each training fold only,
so held-out rows never influence training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _trees
from .pipeline import Dataset, apply_norm, fit_norm, smote

ALGORITHMS = ("random_forest", "decision_tree", "svm_linear", "knn", "naive_bayes")

DEFAULT_HYPERPARAMS = {
    "random_forest": {"n_trees": 100, "max_features": "sqrt", "min_leaf": 1},
    "decision_tree": {"min_leaf": 1},
    "svm_linear": {"epochs": 200, "learning_rate": 0.05, "l2": 1e-3},
    "knn": {"k": 5},
    "naive_bayes": {},
}


@dataclass(frozen=True)
class ClassifierSpec:
    algorithm: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; valid: {ALGORITHMS}")
        defaults = DEFAULT_HYPERPARAMS[self.algorithm]
        unknown = set(self.hyperparams) - set(defaults)
        if unknown:
            raise ValueError(f"unknown hyperparams for {self.algorithm}: {sorted(unknown)}")

    def param(self, name: str):
        return self.hyperparams.get(name, DEFAULT_HYPERPARAMS[self.algorithm][name])


@dataclass
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray          # rows = truth, cols = predicted
    per_class_recall: np.ndarray
    accuracy: float
    ci95: float = 0.0           # half-width across folds, when applicable


def _encode_labels(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    classes = np.unique(y)
    enc = np.searchsorted(classes, y)
    return classes, enc.astype(np.int64)


class _ModelBase:
    def __init__(self, classes: np.ndarray, n_features: int):
        self.classes_ = classes
        self.n_features_ = n_features

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features_:
            raise ValueError(f"feature dimension mismatch: model expects "
                             f"{self.n_features_}, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        return self.classes_[self._predict_idx(X)]


class ForestModel(_ModelBase):
    def __init__(self, classes, n_features, arrays, n_trees, importances):
        super().__init__(classes, n_features)
        self._arrays = arrays
        self.n_trees_ = n_trees
        self.feature_importances_ = importances

    def _predict_idx(self, X):
        f, thr, le, ri, leaf = self._arrays
        votes = _trees.forest_votes(f, thr, le, ri, leaf, self.n_trees_, X,
                                    len(self.classes_))
        return np.argmax(votes, axis=1)

    def fingerprint(self) -> tuple:
        """Hashable digest of the fitted trees (for determinism checks)."""
        return tuple(arr.tobytes() for arr in self._arrays)


class SvmModel(_ModelBase):
    def __init__(self, classes, n_features, weights, biases):
        super().__init__(classes, n_features)
        self.weights_ = weights
        self.biases_ = biases

    def _predict_idx(self, X):
        scores = X @ self.weights_.T + self.biases_
        return np.argmax(scores, axis=1)


class KnnModel(_ModelBase):
    def __init__(self, classes, n_features, X, y_enc, k):
        super().__init__(classes, n_features)
        self._X = X
        self._y = y_enc
        self.k_ = k

    def _predict_idx(self, X):
        out = np.empty(X.shape[0], dtype=np.int64)
        n_classes = len(self.classes_)
        for i in range(X.shape[0]):
            d2 = np.sum((self._X - X[i]) ** 2, axis=1)
            order = np.argsort(d2, kind="stable")[: self.k_]
            votes = np.bincount(self._y[order], minlength=n_classes)
            out[i] = int(np.argmax(votes))
        return out


class NaiveBayesModel(_ModelBase):
    def __init__(self, classes, n_features, means, variances, log_priors):
        super().__init__(classes, n_features)
        self.means_ = means
        self.variances_ = variances
        self.log_priors_ = log_priors

    def _predict_idx(self, X):
        # log posterior up to a constant, per class
        ll = np.empty((X.shape[0], len(self.classes_)))
        for c in range(len(self.classes_)):
            diff = X - self.means_[c]
            ll[:, c] = self.log_priors_[c] - 0.5 * np.sum(
                np.log(2.0 * np.pi * self.variances_[c])
                + diff ** 2 / self.variances_[c], axis=1)
        return np.argmax(ll, axis=1)


def fit(spec: ClassifierSpec, train: Dataset):
    """Train one model; deterministic per (dataset, spec, seed)."""
    classes, y_enc = _encode_labels(train.y)
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    n, d = X.shape
    algo = spec.algorithm

    if algo in ("random_forest", "decision_tree"):
        if algo == "random_forest":
            n_trees = int(spec.param("n_trees"))
            mf = spec.param("max_features")
            max_features = max(1, int(round(np.sqrt(d)))) if mf == "sqrt" else int(mf)
            bootstrap = True
        else:
            n_trees = 1
            max_features = d
            bootstrap = False
        min_leaf = int(spec.param("min_leaf"))
        f, thr, le, ri, leaf, ncounts, imps = _trees.forest_fit(
            X, y_enc, len(classes), n_trees, max_features, min_leaf,
            np.uint64(spec.seed & 0xFFFFFFFFFFFFFFFF), bootstrap)
        per_tree = imps / n  # weighted impurity decrease per sample
        importances = per_tree.mean(axis=0)
        total = importances.sum()
        if total > 0:
            importances = importances / total
        return ForestModel(classes, d, (f, thr, le, ri, leaf), n_trees, importances)

    if algo == "svm_linear":
        epochs = int(spec.param("epochs"))
        lr = float(spec.param("learning_rate"))
        l2 = float(spec.param("l2"))
        n_classes = len(classes)
        W = np.zeros((n_classes, d))
        b = np.zeros(n_classes)
        for c in range(n_classes):
            t = np.where(y_enc == c, 1.0, -1.0)
            w = np.zeros(d)
            bc = 0.0
            for _ in range(epochs):
                margin = t * (X @ w + bc)
                active = margin < 1.0
                grad_w = l2 * w - (t[active, None] * X[active]).sum(axis=0) / n
                grad_b = -t[active].sum() / n
                w -= lr * grad_w
                bc -= lr * grad_b
            W[c] = w
            b[c] = bc
        return SvmModel(classes, d, W, b)

    if algo == "knn":
        k = int(spec.param("k"))
        if k < 1 or k > n:
            raise ValueError(f"knn k={k} out of range for {n} training rows")
        return KnnModel(classes, d, X.copy(), y_enc, k)

    if algo == "naive_bayes":
        n_classes = len(classes)
        means = np.empty((n_classes, d))
        variances = np.empty((n_classes, d))
        priors = np.empty(n_classes)
        for c in range(n_classes):
            Xc = X[y_enc == c]
            means[c] = Xc.mean(axis=0)
            variances[c] = Xc.var(axis=0)
            priors[c] = Xc.shape[0] / n
        # variance floor against zero-variance features
        eps = 1e-9 * max(float(np.max(variances)), 1.0)
        variances = np.maximum(variances, eps)
        return NaiveBayesModel(classes, d, means, variances, np.log(priors))

    raise AssertionError(f"unhandled algorithm {algo}")


def predict(model, features):
    """Predict the label of a single feature vector (or a batch)."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        return model.predict(arr[None, :])[0]
    return model.predict(arr)


def confusion(preds, truth, classes=None) -> ConfusionMatrix:
    """Count-based confusion matrix; rows are truth, columns predictions."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape[0] != truth.shape[0]:
        raise ValueError("preds and truth lengths differ")
    if classes is None:
        classes = np.unique(truth)
    classes = np.asarray(classes)
    lookup = {label: i for i, label in enumerate(classes.tolist())}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(preds.tolist(), truth.tolist()):
        if t not in lookup:
            raise ValueError(f"truth label {t!r} outside class set")
        if p not in lookup:
            raise ValueError(f"predicted label {p!r} outside class set")
        counts[lookup[t], lookup[p]] += 1
    row_sums = counts.sum(axis=1)
    recalls = np.divide(np.diag(counts), row_sums, out=np.zeros(len(classes)),
                        where=row_sums > 0)
    total = counts.sum()
    accuracy = float(np.trace(counts) / total) if total else 0.0
    return ConfusionMatrix(classes=tuple(classes.tolist()), counts=counts,
                           per_class_recall=recalls, accuracy=accuracy)


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Assign each row a fold id, stratified per class, shuffled per seed."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold_ids = np.empty(y.shape[0], dtype=np.int64)
    for label in np.unique(y):
        rows = np.flatnonzero(y == label)
        rng.shuffle(rows)
        for i, row in enumerate(rows):
            fold_ids[row] = i % folds
    return fold_ids


def _fold_accuracy(dataset: Dataset, spec: ClassifierSpec, fold_ids: np.ndarray,
                   fold: int, smote_k: int, collect):
    test_mask = fold_ids == fold
    train = Dataset(X=dataset.X[~test_mask], y=dataset.y[~test_mask],
                    feature_names=dataset.feature_names)
    mean, std, _ = fit_norm(train.X)
    train_n = Dataset(X=apply_norm(mean, std, train.X), y=train.y,
                      feature_names=train.feature_names)
    balanced = smote(train_n, k=smote_k, seed=spec.seed + fold)
    model = fit(spec, balanced)
    X_test = apply_norm(mean, std, dataset.X[test_mask])
    preds = model.predict(X_test)
    truth = dataset.y[test_mask]
    if collect is not None:
        collect.append((preds, truth, model))
    return float(np.mean(preds == truth))


def cv_accuracy_on_folds(dataset: Dataset, spec: ClassifierSpec,
                         fold_ids: np.ndarray, smote_k: int = 5) -> float:
    """Mean held-out accuracy over precomputed folds (used by RFE)."""
    accs = [_fold_accuracy(dataset, spec, fold_ids, f, smote_k, None)
            for f in np.unique(fold_ids)]
    return float(np.mean(accs))


def cross_validate(dataset: Dataset, spec: ClassifierSpec, folds: int = 10,
                   seed: int = 0, smote_k: int = 5,
                   return_models: bool = False):
    """Stratified k-fold CV with per-fold SMOTE and normalization.

    Returns (mean accuracy, ci95 half-width, aggregated ConfusionMatrix);
    with return_models=True a list of per-fold fitted models is appended.
    """
    counts = dataset.class_counts()
    if len(counts) < 2:
        raise ValueError("need at least 2 classes for cross-validation")
    low = min(counts.values())
    if low < folds:
        raise ValueError(f"every class needs >= {folds} rows for {folds}-fold CV; "
                         f"smallest class has {low}")

    fold_ids = stratified_folds(dataset.y, folds, seed)
    collect: list = []
    accs = np.array([_fold_accuracy(dataset, spec, fold_ids, f, smote_k, collect)
                     for f in range(folds)])
    classes = np.unique(dataset.y)
    all_preds = np.concatenate([c[0] for c in collect])
    all_truth = np.concatenate([c[1] for c in collect])
    cm = confusion(all_preds, all_truth, classes)
    ci95 = float(1.96 * np.std(accs, ddof=1) / np.sqrt(folds)) if folds > 1 else 0.0
    cm.ci95 = ci95
    mean_acc = float(np.mean(accs))
    if return_models:
        return mean_acc, ci95, cm, [c[2] for c in collect]
    return mean_acc, ci95, cm
