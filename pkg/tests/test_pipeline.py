import numpy as np
import pytest

from kehsim.acquisition import SensingRecord
from kehsim.pipeline import (FEATURE_NAMES, N_FEATURES, N_FEATURES_ACC, Dataset,
                             Window, acc_feature_names, dataset_from_features,
                             dataset_from_records, extract_features,
                             extract_features_acc, make_windows, normalize,
                             remove_stops, remove_stops_aligned, rfe, smote,
                             window_count)


def record(values, signal_id="CB-C", mode="car", rate=100.0):
    values = np.asarray(values, dtype=np.float64)
    return SensingRecord(signal_id=signal_id, codes=np.zeros(values.size, np.int64),
                         engineering_values=values, sample_rate=rate, mode=mode)


def window(values, window_s=1.0, mode="car"):
    return Window(values=np.asarray(values, dtype=np.float64), mode=mode,
                  signal_id="CB-C", window_s=window_s)


def feat(fv, name):
    return fv.values[FEATURE_NAMES.index(name)]


# -------------------------------------------------------------- stop removal

def test_remove_stops_drops_gap():
    rng = np.random.default_rng(0)
    strong = rng.normal(0, 1.0, 2000)
    gap = np.zeros(1000)
    rec = record(np.concatenate([strong[:1000], gap, strong[1000:]]))
    out = remove_stops(rec)
    removed = rec.engineering_values.size - out.engineering_values.size
    assert abs(removed - 1000) <= 100  # the 10 s gap, within one segment


def test_remove_stops_constant_zero_errors():
    with pytest.raises(ValueError, match="stationary"):
        remove_stops(record(np.zeros(500)))


def test_remove_stops_identity_when_active():
    rng = np.random.default_rng(1)
    rec = record(rng.normal(0, 1.0, 1500))
    out = remove_stops(rec)
    assert np.array_equal(out.engineering_values, rec.engineering_values)


def test_remove_stops_keeps_sparse_nonneg_records():
    # Sparse rectified currents have a zero 95th percentile; nothing should
    # be dropped (and no false "stationary" error).
    x = np.zeros(1000)
    x[::40] = 20e-6
    out = remove_stops(record(x))
    assert out.engineering_values.size == 1000


def test_remove_stops_aligned_keeps_axes_in_step():
    rng = np.random.default_rng(2)
    strong = rng.normal(0, 1.0, 1200)
    quiet = np.zeros(300)
    x = np.concatenate([strong[:600], quiet, strong[600:]])
    rx, ry, rz = (record(x, signal_id=s) for s in ("ACC-X", "ACC-Y", "ACC-Z"))
    outs = remove_stops_aligned([rx, ry, rz])
    assert len({o.engineering_values.size for o in outs}) == 1


# ------------------------------------------------------------------ windows

def test_window_count_formula():
    assert window_count(6000, 100) == 119
    assert window_count(1000, 1000) == 1
    assert window_count(990, 1000) == 0


def test_make_windows_60s_100hz():
    rec = record(np.arange(6000, dtype=float) + 1.0)
    wins = make_windows(rec, 1.0)
    assert len(wins) == 119
    assert all(w.values.size == 100 for w in wins)


def test_make_windows_exact_fit():
    rec = record(np.ones(1000))
    wins = make_windows(rec, 10.0)
    assert len(wins) == 1


def test_make_windows_too_short():
    with pytest.raises(ValueError, match="too short"):
        make_windows(record(np.ones(990)), 10.0)


def test_make_windows_range_validation():
    rec = record(np.ones(6000))
    with pytest.raises(ValueError):
        make_windows(rec, 0.5)
    with pytest.raises(ValueError):
        make_windows(rec, 11.0)


def test_window_coverage_with_half_overlap():
    n, w = 1000, 100
    rec = record(np.arange(n, dtype=float) + 1.0)
    wins = make_windows(rec, 1.0)
    hits = np.zeros(n, dtype=int)
    hop = w // 2
    for i, win in enumerate(wins):
        hits[i * hop: i * hop + w] += 1
    assert np.all(hits >= 1) and np.all(hits <= 2)


# ----------------------------------------------------------------- features

def test_feature_count_single_channel():
    fv = extract_features(window(np.sin(np.arange(100) * 0.3)))
    assert fv.values.size == N_FEATURES == 42
    assert fv.names == FEATURE_NAMES


def test_feature_basic_stats():
    fv = extract_features(window([3.0, 4.0, 0.0, 0.0], window_s=1.0))
    assert feat(fv, "rms") == pytest.approx(2.5, rel=1e-12)
    assert feat(fv, "max") == 4.0
    assert feat(fv, "min") == 0.0
    assert feat(fv, "range") == 4.0


def test_feature_symmetric_window_zero_skewness():
    fv = extract_features(window([-1.0, 0.0, 1.0]))
    assert feat(fv, "skewness") == pytest.approx(0.0, abs=1e-12)


def test_feature_dominant_frequency_25hz():
    t = np.arange(100) / 100.0
    fv = extract_features(window(np.sin(2 * np.pi * 25.0 * t), window_s=1.0))
    assert feat(fv, "dominant_freq") == pytest.approx(25.0, abs=1e-9)
    bands = [feat(fv, f"band_energy_{lo}_{hi}")
             for lo, hi in ((0, 5), (5, 10), (10, 20), (20, 35), (35, 50))]
    assert np.argmax(bands) == 3
    assert bands[3] > 0.99 * sum(bands)


def test_feature_translation_covariance(rng):
    x = rng.normal(0, 1, 200)
    a = extract_features(window(x, window_s=2.0))
    b = extract_features(window(x + 5.0, window_s=2.0))
    for name in ("mean", "median", "max", "min"):
        assert feat(b, name) == pytest.approx(feat(a, name) + 5.0, rel=1e-9)
    for name in ("std", "variance", "skewness", "kurtosis", "iqr", "range", "mad"):
        assert feat(b, name) == pytest.approx(feat(a, name), rel=1e-8, abs=1e-10)


def test_feature_degenerate_windows_all_finite():
    for values in (np.zeros(100), np.full(100, 2.5)):
        fv = extract_features(window(values))
        assert np.all(np.isfinite(fv.values))
        assert fv.degenerate
        assert feat(fv, "skewness") == 0.0
        assert feat(fv, "kurtosis") == 0.0
        assert feat(fv, "cv") == 0.0


def test_feature_acc_count():
    t = np.arange(100) / 100.0
    wx = window(np.sin(2 * np.pi * 3 * t))
    wy = window(np.cos(2 * np.pi * 3 * t))
    wz = window(0.5 * np.sin(2 * np.pi * 3 * t))
    fv = extract_features_acc(wx, wy, wz)
    assert fv.values.size == N_FEATURES_ACC == 128
    assert fv.names == acc_feature_names()
    assert np.all(np.isfinite(fv.values))


def test_dataset_from_records_acc_groups():
    rng = np.random.default_rng(3)
    recs = [record(rng.normal(0, 1, 300), signal_id=s)
            for s in ("ACC-X", "ACC-Y", "ACC-Z")]
    ds = dataset_from_records([recs], 1.0)
    assert ds.n_features == 128


# ---------------------------------------------------------------- normalize

def test_normalize_z_scores():
    ds = Dataset(X=np.array([[1.0], [2.0], [3.0]]), y=np.array(["a", "b", "a"]),
                 feature_names=("f0",))
    out = normalize(ds)
    np.testing.assert_allclose(out.X[:, 0], [-1.224744871, 0.0, 1.224744871],
                               rtol=1e-9)


def test_normalize_constant_column_flagged():
    ds = Dataset(X=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]),
                 y=np.array(["a", "b", "a"]), feature_names=("f0", "f1"))
    out = normalize(ds)
    assert np.all(out.X[:, 1] == 0.0)
    assert out.constant_features.tolist() == [False, True]


def test_normalize_idempotent_on_params():
    rng = np.random.default_rng(4)
    ds = Dataset(X=rng.normal(3, 2, (50, 4)), y=np.array(["a", "b"] * 25),
                 feature_names=tuple(f"f{i}" for i in range(4)))
    once = normalize(ds)
    twice = normalize(once)
    np.testing.assert_allclose(twice.X, once.X, atol=1e-9)


# -------------------------------------------------------------------- smote

def test_smote_balances_counts(rng):
    X = np.vstack([rng.normal(0, 1, (10, 3)), rng.normal(5, 1, (4, 3))])
    y = np.array(["A"] * 10 + ["B"] * 4)
    out = smote(Dataset(X=X, y=y, feature_names=("a", "b", "c")), seed=0)
    assert out.class_counts() == {"A": 10, "B": 10}


def test_smote_synthetic_points_are_convex_combinations():
    X = np.array([[0.0, 0.0], [1.0, 1.0]] + [[10.0, 0.0]] * 8)
    y = np.array(["m", "m"] + ["M"] * 8)
    out = smote(Dataset(X=X, y=y, feature_names=("x", "y")), k=1, seed=3)
    synth = out.X[10:]
    assert synth.shape == (6, 2)
    np.testing.assert_allclose(synth[:, 0], synth[:, 1], atol=1e-12)  # on y=x
    assert np.all(synth >= -1e-12) and np.all(synth <= 1.0 + 1e-12)


def test_smote_identity_when_balanced(rng):
    X = rng.normal(0, 1, (12, 2))
    y = np.array(["A"] * 6 + ["B"] * 6)
    ds = Dataset(X=X, y=y, feature_names=("a", "b"))
    out = smote(ds, seed=1)
    assert np.array_equal(out.X, X)
    assert np.array_equal(out.y, y)


def test_smote_single_sample_class_errors(rng):
    X = np.vstack([rng.normal(0, 1, (5, 2)), [[9.0, 9.0]]])
    y = np.array(["A"] * 5 + ["lonely"])
    with pytest.raises(ValueError, match="lonely"):
        smote(Dataset(X=X, y=y, feature_names=("a", "b")), seed=0)


def test_smote_deterministic(rng):
    X = np.vstack([rng.normal(0, 1, (9, 3)), rng.normal(4, 1, (3, 3))])
    y = np.array(["A"] * 9 + ["B"] * 3)
    ds = Dataset(X=X, y=y, feature_names=("a", "b", "c"))
    a = smote(ds, seed=7)
    b = smote(ds, seed=7)
    assert np.array_equal(a.X, b.X)


# ---------------------------------------------------------------------- rfe

def planted_dataset(seed, n_per_class=40, n_noise=6, separation=3.0):
    rng = np.random.default_rng(seed)
    X0 = np.hstack([rng.normal(0, 1, (n_per_class, 2)),
                    rng.normal(0, 1, (n_per_class, n_noise))])
    X1 = np.hstack([rng.normal(separation, 1, (n_per_class, 2)),
                    rng.normal(0, 1, (n_per_class, n_noise))])
    X = np.vstack([X0, X1])
    y = np.array(["a"] * n_per_class + ["b"] * n_per_class)
    names = tuple(f"f{i}" for i in range(2 + n_noise))
    return Dataset(X=X, y=y, feature_names=names)


def test_rfe_recovers_planted_features():
    ds = planted_dataset(seed=0)
    selected, scores = rfe(ds, folds=10, seed=5, n_trees=15)
    informative = {0, 1}
    noise_picked = set(selected) - informative
    assert set(selected) & informative
    assert len(noise_picked) <= 2
    # Brute-force oracle: the chosen subset scores within 2% of the full set.
    assert scores[len(selected)] >= scores[ds.n_features] - 0.02


def test_rfe_reports_score_for_every_size():
    ds = planted_dataset(seed=1, n_noise=4)
    selected, scores = rfe(ds, folds=10, seed=2, n_trees=15)
    assert sorted(scores) == list(range(1, ds.n_features + 1))
    assert 1 <= len(selected) <= ds.n_features


def test_rfe_single_feature_dataset():
    ds = planted_dataset(seed=2, n_noise=0).select_features([0])
    selected, scores = rfe(ds, folds=10, seed=0, n_trees=15)
    assert selected == [0]
    assert list(scores) == [1]


def test_rfe_drops_duplicate_columns():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        n = 40
        informative = np.concatenate([rng.normal(0, 1, n), rng.normal(5, 1, n)])
        X = np.column_stack([informative, informative,
                             rng.normal(0, 1, 2 * n), rng.normal(0, 1, 2 * n)])
        y = np.array(["a"] * n + ["b"] * n)
        ds = Dataset(X=X, y=y, feature_names=("dup1", "dup2", "n1", "n2"))
        selected, _ = rfe(ds, folds=10, seed=seed, n_trees=15)
        if len(set(selected) & {0, 1}) <= 1:
            hits += 1
    assert hits >= 18  # >= 90% of seeds


def test_rfe_requires_enough_rows():
    ds = planted_dataset(seed=3, n_per_class=5)
    with pytest.raises(ValueError, match="rows"):
        rfe(ds, folds=10, seed=0)
