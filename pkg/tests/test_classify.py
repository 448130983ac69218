import numpy as np
import pytest

from kehsim.classify import (ALGORITHMS, ClassifierSpec, confusion, cross_validate,
                             fit, predict, stratified_folds)
from kehsim.pipeline import Dataset


def toy_dataset(rng, n_per=30, n_classes=3, d=4, sep=4.0):
    X, y = [], []
    for c in range(n_classes):
        center = np.zeros(d)
        center[c % d] = sep * (1 + c)
        X.append(rng.normal(center, 1.0, (n_per, d)))
        y += [f"c{c}"] * n_per
    return Dataset(X=np.vstack(X), y=np.array(y),
                   feature_names=tuple(f"f{i}" for i in range(d)))


# ----------------------------------------------------------------- fit/predict

def test_knn_nearest_neighbor():
    ds = Dataset(X=np.array([[0.0], [10.0]]), y=np.array(["A", "B"]),
                 feature_names=("f",))
    model = fit(ClassifierSpec("knn", {"k": 1}), ds)
    assert predict(model, np.array([1.0])) == "A"
    assert predict(model, np.array([9.0])) == "B"


def test_naive_bayes_symmetric_tie_breaks_low():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 1, 200)
    X = np.concatenate([a - 1.0, a + 1.0])[:, None]  # exactly mirrored classes
    y = np.array(["a"] * 200 + ["b"] * 200)
    model = fit(ClassifierSpec("naive_bayes"), Dataset(X=X, y=y, feature_names=("f",)))
    # x = midpoint of the two means: posteriors tie, lowest class index wins
    mid = float(model.means_.mean())
    assert predict(model, np.array([mid])) == "a"


def test_random_forest_separable_training_accuracy():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal([0, 0], 0.5, (40, 2)), rng.normal([5, 5], 0.5, (40, 2))])
    y = np.array(["lo"] * 40 + ["hi"] * 40)
    ds = Dataset(X=X, y=y, feature_names=("a", "b"))
    model = fit(ClassifierSpec("random_forest", seed=3), ds)
    assert np.mean(model.predict(X) == y) == 1.0


def test_decision_tree_fits_exactly_when_distinct(rng):
    ds = toy_dataset(rng, n_per=20)
    model = fit(ClassifierSpec("decision_tree"), ds)
    assert np.mean(model.predict(ds.X) == ds.y) == 1.0


def test_svm_linear_separable(rng):
    ds = toy_dataset(rng, n_per=25, n_classes=2, sep=6.0)
    model = fit(ClassifierSpec("svm_linear", seed=2), ds)
    assert np.mean(model.predict(ds.X) == ds.y) >= 0.98


def test_all_algorithms_roundtrip(rng):
    ds = toy_dataset(rng)
    for algo in ALGORITHMS:
        model = fit(ClassifierSpec(algo, seed=11), ds)
        preds = model.predict(ds.X)
        assert preds.shape == ds.y.shape
        assert np.mean(preds == ds.y) >= 0.9, algo


def test_fit_rejects_single_class(rng):
    ds = Dataset(X=rng.normal(0, 1, (10, 2)), y=np.array(["only"] * 10),
                 feature_names=("a", "b"))
    with pytest.raises(ValueError, match="single class"):
        fit(ClassifierSpec("knn"), ds)


def test_predict_dimension_mismatch(rng):
    ds = toy_dataset(rng, n_per=10)
    model = fit(ClassifierSpec("knn"), ds)
    with pytest.raises(ValueError, match="dimension"):
        predict(model, np.zeros(99))


def test_fit_determinism(rng):
    ds = toy_dataset(rng, n_per=25)
    m1 = fit(ClassifierSpec("random_forest", seed=5), ds)
    m2 = fit(ClassifierSpec("random_forest", seed=5), ds)
    assert m1.fingerprint() == m2.fingerprint()
    np.testing.assert_array_equal(m1.feature_importances_, m2.feature_importances_)


def test_nb_prior_scaling_leaves_predictions_unchanged(rng):
    ds = toy_dataset(rng, n_per=15)
    model = fit(ClassifierSpec("naive_bayes"), ds)
    probe = rng.normal(2, 3, (50, ds.n_features))
    before = model.predict(probe)
    model.log_priors_ = model.log_priors_ + np.log(7.5)  # scale all priors by 7.5
    after = model.predict(probe)
    assert np.array_equal(before, after)


def test_unknown_algorithm_and_hyperparams():
    with pytest.raises(ValueError):
        ClassifierSpec("perceptron")
    with pytest.raises(ValueError):
        ClassifierSpec("knn", {"n_trees": 4})


# ------------------------------------------------------------------ confusion

def test_confusion_perfect_prediction():
    cm = confusion(["a", "b", "a"], ["a", "b", "a"])
    assert cm.accuracy == 1.0
    assert np.trace(cm.counts) == 3


def test_confusion_single_column_collapse():
    truth = ["a", "b", "c", "d", "e", "f"] * 5
    preds = ["a"] * 30
    cm = confusion(preds, truth)
    assert cm.accuracy == pytest.approx(1 / 6)
    col_a = cm.counts[:, list(cm.classes).index("a")]
    assert col_a.sum() == 30


def test_confusion_counts_layout():
    cm = confusion(["A", "B"], ["A", "A"], classes=["A", "B"])
    assert cm.accuracy == 0.5
    assert cm.counts[0, 0] == 1 and cm.counts[0, 1] == 1


def test_confusion_rejects_unknown_labels():
    with pytest.raises(ValueError, match="outside class set"):
        confusion(["zz"], ["a"], classes=["a", "b"])


# ------------------------------------------------------------- cross-validate

def test_cv_memorizer_upper_bound(rng):
    # Duplicated rows: a 1-NN model holds an identical twin of every test row.
    base = toy_dataset(rng, n_per=20)
    ds = Dataset(X=np.vstack([base.X, base.X]), y=np.concatenate([base.y, base.y]),
                 feature_names=base.feature_names)
    acc, ci, cm = cross_validate(ds, ClassifierSpec("knn", {"k": 1}), folds=10, seed=0)
    assert acc == 1.0


def test_cv_chance_level_for_random_predictor(rng):
    # Uniform-random predictions over 6 balanced classes score about 1/6.
    classes = [f"m{i}" for i in range(6)]
    truth = np.repeat(classes, 200)
    preds = rng.choice(classes, size=truth.size)
    fold_accs = [np.mean(p == t) for p, t in
                 zip(np.split(preds, 10), np.split(truth, 10))]
    assert np.mean(fold_accs) == pytest.approx(1 / 6, abs=0.05)


def test_cv_requires_enough_rows_per_class(rng):
    ds = toy_dataset(rng, n_per=5)
    with pytest.raises(ValueError, match="needs"):
        cross_validate(ds, ClassifierSpec("knn"), folds=10, seed=0)


def test_cv_stratified_fold_sizes(rng):
    y = np.array(["a"] * 25 + ["b"] * 15)
    folds = stratified_folds(y, 5, seed=3)
    for f in range(5):
        mask = folds == f
        assert np.sum(y[mask] == "a") == 5
        assert np.sum(y[mask] == "b") == 3


def test_cv_deterministic(rng):
    ds = toy_dataset(rng, n_per=20)
    spec = ClassifierSpec("random_forest", seed=9)
    r1 = cross_validate(ds, spec, folds=5, seed=4)
    r2 = cross_validate(ds, spec, folds=5, seed=4)
    assert r1[0] == r2[0] and r1[1] == r2[1]
    assert np.array_equal(r1[2].counts, r2[2].counts)


def test_cv_no_leakage_from_test_fold(rng):
    # Models depend only on their training fold: permuting the labels of the
    # held-out rows leaves the fitted model bit-identical.
    ds = toy_dataset(rng, n_per=20)
    fold_ids = stratified_folds(ds.y, 5, seed=1)
    test_mask = fold_ids == 0
    train = Dataset(X=ds.X[~test_mask], y=ds.y[~test_mask],
                    feature_names=ds.feature_names)
    spec = ClassifierSpec("random_forest", seed=17)
    m1 = fit(spec, train)
    shuffled = ds.y.copy()
    shuffled[test_mask] = np.random.default_rng(0).permutation(shuffled[test_mask])
    train2 = Dataset(X=ds.X[~test_mask], y=shuffled[~test_mask],
                     feature_names=ds.feature_names)
    m2 = fit(spec, train2)
    assert m1.fingerprint() == m2.fingerprint()


def test_cv_confusion_aggregates_all_rows(rng):
    ds = toy_dataset(rng, n_per=20)
    acc, ci, cm = cross_validate(ds, ClassifierSpec("decision_tree"), folds=5, seed=2)
    assert cm.counts.sum() == ds.n_rows
    assert ci >= 0.0
