"""Signal-to-features stage: stop removal, windowing, feature extraction,
normalization, SMOTE oversampling and recursive feature elimination.

The canonical feature list (42 per channel) is a versioned contract: 24 time
domain and 18 frequency domain features, in the order of FEATURE_NAMES.
Three-axis accelerometer windows get 42 features per axis plus the mean and
standard deviation of the magnitude signal (128 total).

Degenerate windows (constant signal) define skewness, kurtosis and the
coefficient of variation as 0 and carry a flag; spectral features of an
all-zero window are 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .acquisition import SensingRecord

TIME_FEATURE_NAMES = (
    "mean", "median", "max", "min", "range", "std", "variance", "cv",
    "skewness", "kurtosis", "rms", "iqr", "mad", "abs_area", "energy",
    "zero_cross_rate", "mean_cross_rate", "peak_count", "mean_peak_spacing",
    "autocorr_lag1", "hjorth_mobility", "hjorth_complexity",
    "mean_abs_diff", "max_abs_diff",
)
FREQ_FEATURE_NAMES = (
    "dc_magnitude", "dominant_freq", "dominant_mag", "second_dominant_freq",
    "second_dominant_mag", "dominant_energy_ratio", "spectral_energy",
    "spectral_entropy", "spectral_centroid", "spectral_spread",
    "spectral_skewness", "spectral_kurtosis", "rolloff_85",
    "band_energy_0_5", "band_energy_5_10", "band_energy_10_20",
    "band_energy_20_35", "band_energy_35_50",
)
FEATURE_NAMES = TIME_FEATURE_NAMES + FREQ_FEATURE_NAMES
N_FEATURES = len(FEATURE_NAMES)  # 42

_BANDS = ((0.0, 5.0), (5.0, 10.0), (10.0, 20.0), (20.0, 35.0), (35.0, 50.0))
_PEAK_PROMINENCE_FRACTION = 0.1
_ROLLOFF_FRACTION = 0.85


def acc_feature_names() -> tuple[str, ...]:
    names = []
    for axis in ("accx", "accy", "accz"):
        names.extend(f"{axis}_{n}" for n in FEATURE_NAMES)
    names.extend(("acc_mag_mean", "acc_mag_std"))
    return tuple(names)


N_FEATURES_ACC = len(acc_feature_names())  # 128


@dataclass
class Window:
    """One analysis window of engineering values (50% overlap by construction)."""

    values: np.ndarray
    mode: str
    signal_id: str
    window_s: float

    @property
    def sample_rate(self) -> float:
        return self.values.size / self.window_s


@dataclass
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    label: str
    degenerate: bool = False


@dataclass
class Dataset:
    """Rectangular feature matrix with labels and optional z-score params."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    constant_features: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts differ")
        if self.feature_names and len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length does not match X columns")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def select_features(self, indices) -> "Dataset":
        idx = list(indices)
        names = tuple(self.feature_names[i] for i in idx) if self.feature_names else ()
        return Dataset(X=self.X[:, idx], y=self.y.copy(), feature_names=names)

    def class_counts(self) -> dict:
        labels, counts = np.unique(self.y, return_counts=True)
        return dict(zip(labels.tolist(), counts.tolist()))


def stop_mask(values: np.ndarray, sample_rate: float,
              threshold_fraction: float = 0.1) -> np.ndarray:
    """Per-sample keep mask: False inside 1 s segments judged stationary.

    A segment is stationary when its mean absolute value falls below
    threshold_fraction times the 95th percentile of the whole series'
    absolute values. The trailing partial segment is judged the same way.
    """
    abs_v = np.abs(np.asarray(values, dtype=np.float64))
    if abs_v.size == 0 or float(np.max(abs_v)) == 0.0:
        raise ValueError("trace entirely stationary")
    p95 = float(np.percentile(abs_v, 95))
    threshold = threshold_fraction * p95
    seg = max(1, int(round(sample_rate)))
    keep = np.ones(abs_v.size, dtype=bool)
    for start in range(0, abs_v.size, seg):
        chunk = abs_v[start:start + seg]
        if float(np.mean(chunk)) < threshold:
            keep[start:start + chunk.size] = False
    if not keep.any():
        raise ValueError("trace entirely stationary")
    return keep


def remove_stops(record: SensingRecord, threshold_fraction: float = 0.1) -> SensingRecord:
    """Drop stationary 1 s segments from a record and concatenate survivors."""
    keep = stop_mask(record.engineering_values, record.sample_rate, threshold_fraction)
    return SensingRecord(signal_id=record.signal_id, codes=record.codes[keep],
                         engineering_values=record.engineering_values[keep],
                         sample_rate=record.sample_rate, mode=record.mode)


def remove_stops_aligned(records: list[SensingRecord],
                         threshold_fraction: float = 0.1) -> list[SensingRecord]:
    """Stop removal for multi-axis records, keeping the axes aligned.

    The mask is computed on the per-sample L2 magnitude across all records.
    """
    if not records:
        raise ValueError("no records")
    mag = np.sqrt(sum(r.engineering_values.astype(np.float64) ** 2 for r in records))
    keep = stop_mask(mag, records[0].sample_rate, threshold_fraction)
    return [SensingRecord(signal_id=r.signal_id, codes=r.codes[keep],
                          engineering_values=r.engineering_values[keep],
                          sample_rate=r.sample_rate, mode=r.mode)
            for r in records]


def window_count(n_samples: int, window: int) -> int:
    hop = max(1, window // 2)
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def make_windows(record: SensingRecord, window_s: float) -> list[Window]:
    """Slice a record into equal windows with 50% overlap."""
    if not (1.0 <= window_s <= 10.0):
        raise ValueError("window_s must lie in [1, 10] seconds")
    w = int(round(window_s * record.sample_rate))
    n = record.engineering_values.size
    if n < w:
        raise ValueError(f"record too short: {n} samples < one {window_s} s window ({w})")
    hop = max(1, w // 2)
    count = (n - w) // hop + 1
    return [Window(values=record.engineering_values[i * hop: i * hop + w],
                   mode=record.mode, signal_id=record.signal_id, window_s=window_s)
            for i in range(count)]


def _time_features(x: np.ndarray, dt: float) -> tuple[list[float], bool]:
    n = x.size
    mean = float(np.mean(x))
    mx = float(np.max(x))
    mn = float(np.min(x))
    rng = mx - mn
    var = float(np.var(x))
    std = float(np.sqrt(var))
    degenerate = rng == 0.0

    if std > 0.0:
        z = (x - mean) / std
        skew = float(np.mean(z ** 3))
        kurt = float(np.mean(z ** 4)) - 3.0
    else:
        skew = 0.0
        kurt = 0.0
    cv = std / abs(mean) if abs(mean) > 1e-12 else 0.0

    rms = float(np.sqrt(np.mean(x ** 2)))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    mad = float(np.mean(np.abs(x - mean)))
    abs_area = float(np.sum(np.abs(x)) * dt)
    energy = float(np.sum(x ** 2))

    duration = n * dt
    zc = float(np.count_nonzero(x[:-1] * x[1:] < 0.0)) / duration
    xm = x - mean
    mc = float(np.count_nonzero(xm[:-1] * xm[1:] < 0.0)) / duration

    if rng > 0.0:
        peaks, _ = find_peaks(x, prominence=_PEAK_PROMINENCE_FRACTION * rng)
    else:
        peaks = np.empty(0, dtype=np.int64)
    peak_count = float(peaks.size)
    peak_spacing = float(np.mean(np.diff(peaks))) * dt if peaks.size >= 2 else 0.0

    if std > 0.0 and n >= 2:
        a, b = x[:-1], x[1:]
        sa, sb = np.std(a), np.std(b)
        if sa > 0.0 and sb > 0.0:
            ac1 = float(np.mean((a - np.mean(a)) * (b - np.mean(b))) / (sa * sb))
        else:
            ac1 = 0.0
    else:
        ac1 = 0.0

    dx = np.diff(x)
    var_dx = float(np.var(dx)) if dx.size else 0.0
    mobility = float(np.sqrt(var_dx / var)) if var > 0.0 else 0.0
    ddx = np.diff(dx)
    var_ddx = float(np.var(ddx)) if ddx.size else 0.0
    if var_dx > 0.0 and mobility > 0.0:
        complexity = float(np.sqrt(var_ddx / var_dx)) / mobility
    else:
        complexity = 0.0
    mean_ad = float(np.mean(np.abs(dx))) if dx.size else 0.0
    max_ad = float(np.max(np.abs(dx))) if dx.size else 0.0

    feats = [mean, float(np.median(x)), mx, mn, rng, std, var, cv, skew, kurt,
             rms, iqr, mad, abs_area, energy, zc, mc, peak_count, peak_spacing,
             ac1, mobility, complexity, mean_ad, max_ad]
    return feats, degenerate


def _freq_features(x: np.ndarray, dt: float) -> list[float]:
    n = x.size
    spec = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(n, d=dt)
    dc = float(spec[0])

    ac_mag = spec[1:]
    ac_freq = freqs[1:]
    power = ac_mag ** 2
    total = float(np.sum(power))

    if ac_mag.size == 0 or total == 0.0:
        dom_f = dom_m = f2 = m2 = ratio = 0.0
        entropy = centroid = spread = sskew = skurt = rolloff = 0.0
    else:
        k = int(np.argmax(ac_mag))
        dom_f = float(ac_freq[k])
        dom_m = float(ac_mag[k])
        if ac_mag.size >= 2:
            order = np.argsort(ac_mag, kind="stable")
            k2 = int(order[-2]) if int(order[-1]) == k else int(order[-1])
            f2 = float(ac_freq[k2])
            m2 = float(ac_mag[k2])
        else:
            f2 = m2 = 0.0
        ratio = float(power[k] / total)

        p = power / total
        nz = p[p > 0.0]
        if nz.size > 1:
            entropy = float(-np.sum(nz * np.log(nz)) / np.log(p.size))
        else:
            entropy = 0.0
        centroid = float(np.sum(ac_freq * p))
        spread = float(np.sqrt(np.sum((ac_freq - centroid) ** 2 * p)))
        if spread > 0.0:
            zf = (ac_freq - centroid) / spread
            sskew = float(np.sum(zf ** 3 * p))
            skurt = float(np.sum(zf ** 4 * p))
        else:
            sskew = skurt = 0.0
        cum = np.cumsum(power)
        rolloff = float(ac_freq[int(np.searchsorted(cum, _ROLLOFF_FRACTION * total))])

    full_power = spec ** 2
    bands = []
    for i, (lo, hi) in enumerate(_BANDS):
        if i == len(_BANDS) - 1:
            mask = (freqs >= lo) & (freqs <= hi)
        else:
            mask = (freqs >= lo) & (freqs < hi)
        bands.append(float(np.sum(full_power[mask])))

    return [dc, dom_f, dom_m, f2, m2, ratio, float(np.sum(power)), entropy,
            centroid, spread, sskew, skurt, rolloff] + bands


def extract_features(window: Window) -> FeatureVector:
    """Compute the canonical 42 features of a single-channel window."""
    x = np.asarray(window.values, dtype=np.float64)
    dt = window.window_s / x.size
    tf, degenerate = _time_features(x, dt)
    ff = _freq_features(x, dt)
    values = np.asarray(tf + ff, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(values))]
        raise FloatingPointError(f"non-finite features {bad} for signal "
                                 f"{window.signal_id} ({window.mode})")
    return FeatureVector(values=values, names=FEATURE_NAMES, label=window.mode,
                         degenerate=degenerate)


def extract_features_acc(wx: Window, wy: Window, wz: Window) -> FeatureVector:
    """Features for aligned 3-axis accelerometer windows (42 per axis + 2)."""
    if not (wx.values.size == wy.values.size == wz.values.size):
        raise ValueError("accelerometer axis windows are not aligned")
    parts = []
    degenerate = False
    for w in (wx, wy, wz):
        fv = extract_features(w)
        parts.append(fv.values)
        degenerate = degenerate or fv.degenerate
    mag = np.sqrt(wx.values.astype(np.float64) ** 2
                  + wy.values.astype(np.float64) ** 2
                  + wz.values.astype(np.float64) ** 2)
    parts.append(np.array([np.mean(mag), np.std(mag)]))
    return FeatureVector(values=np.concatenate(parts), names=acc_feature_names(),
                         label=wx.mode, degenerate=degenerate)


def dataset_from_features(features: list[FeatureVector]) -> Dataset:
    if not features:
        raise ValueError("no feature vectors")
    names = features[0].names
    for fv in features:
        if fv.names != names:
            raise ValueError("inconsistent feature name lists")
    X = np.vstack([fv.values for fv in features])
    y = np.asarray([fv.label for fv in features])
    return Dataset(X=X, y=y, feature_names=names)


def dataset_from_records(record_groups: list[list[SensingRecord]], window_s: float,
                         threshold_fraction: float = 0.1,
                         on_error: str = "raise") -> Dataset:
    """Full record-to-feature-matrix path for a list of record groups.

    Each group is either a single-channel record [r] or an aligned 3-axis
    accelerometer triple [x, y, z]. Stop removal runs first, then windowing
    and feature extraction. With on_error="skip", groups that are entirely
    stationary or too short are dropped instead of raising.
    """
    features: list[FeatureVector] = []
    for group in record_groups:
        if len(group) not in (1, 3):
            raise ValueError(f"record group must have 1 or 3 records, got {len(group)}")
        try:
            if len(group) == 1:
                clean = remove_stops(group[0], threshold_fraction)
                features.extend(extract_features(w) for w in make_windows(clean, window_s))
            else:
                cx, cy, cz = remove_stops_aligned(list(group), threshold_fraction)
                wins = [make_windows(c, window_s) for c in (cx, cy, cz)]
                features.extend(extract_features_acc(a, b, c) for a, b, c in zip(*wins))
        except ValueError:
            if on_error == "skip":
                continue
            raise
    return dataset_from_features(features)


def fit_norm(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature mean/std for z-scoring. Zero-variance features get std 1
    and are flagged."""
    mean = np.mean(X, axis=0)
    std = np.std(X, axis=0)
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    return mean, std, constant


def apply_norm(mean: np.ndarray, std: np.ndarray, X: np.ndarray) -> np.ndarray:
    return (X - mean) / std


def normalize(dataset: Dataset) -> Dataset:
    """Z-score each feature with the dataset's own statistics.

    The fitted parameters are stored on the returned dataset so they can be
    reapplied to held-out data (never re-fit on test folds).
    """
    if dataset.n_rows < 2:
        raise ValueError("need at least 2 rows to normalize")
    mean, std, constant = fit_norm(dataset.X)
    return Dataset(X=apply_norm(mean, std, dataset.X), y=dataset.y.copy(),
                   feature_names=dataset.feature_names, norm_mean=mean,
                   norm_std=std, constant_features=constant)


def smote(dataset: Dataset, k: int = 5, seed: int = 0) -> Dataset:
    """Oversample every minority class to the majority count.

    Synthetic rows are x + u * (x_nn - x) with u ~ U(0,1) and x_nn one of
    the k nearest same-class neighbors (Euclidean). Deterministic per seed.
    """
    counts = dataset.class_counts()
    majority = max(counts.values())
    if all(c == majority for c in counts.values()):
        return dataset

    rng = np.random.default_rng(seed)
    new_X = [dataset.X]
    new_y = [dataset.y]
    for label in sorted(counts):
        count = counts[label]
        if count == majority:
            continue
        if count < 2:
            raise ValueError(f"class {label!r} has a single sample; "
                             "SMOTE needs at least 2")
        Xc = dataset.X[dataset.y == label]
        k_eff = min(k, count - 1)
        # Pairwise distances within the class; self excluded by sort order.
        d2 = np.sum((Xc[:, None, :] - Xc[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbor_idx = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]

        need = majority - count
        base = rng.integers(0, count, size=need)
        pick = rng.integers(0, k_eff, size=need)
        u = rng.uniform(0.0, 1.0, size=need)
        nn = neighbor_idx[base, pick]
        synth = Xc[base] + u[:, None] * (Xc[nn] - Xc[base])
        new_X.append(synth)
        new_y.append(np.full(need, label, dtype=dataset.y.dtype))

    return Dataset(X=np.vstack(new_X), y=np.concatenate(new_y),
                   feature_names=dataset.feature_names)


def rfe(dataset: Dataset, folds: int = 10, seed: int = 0,
        n_trees: int = 30) -> tuple[list[int], dict[int, float]]:
    """Recursive feature elimination with cross-validated subset scoring.

    Repeatedly drops the feature with the lowest random-forest impurity
    importance, one per iteration, recording the stratified k-fold CV
    accuracy at every visited subset size. Returns the smallest subset
    whose score is within 0.005 of the best, along with all scores.
    """
    from . import classify  # late import; classify depends on this module

    counts = dataset.class_counts()
    if len(counts) < 2:
        raise ValueError("need at least 2 classes")
    low = min(counts.values())
    if low < folds:
        raise ValueError(f"every class needs >= {folds} rows; smallest has {low}")

    fold_ids = classify.stratified_folds(dataset.y, folds, seed)
    spec = classify.ClassifierSpec("random_forest", {"n_trees": n_trees}, seed=seed)

    remaining = list(range(dataset.n_features))
    scores: dict[int, float] = {}
    subsets: dict[int, list[int]] = {}
    while remaining:
        sub = dataset.select_features(remaining)
        scores[len(remaining)] = classify.cv_accuracy_on_folds(sub, spec, fold_ids)
        subsets[len(remaining)] = list(remaining)
        if len(remaining) == 1:
            break
        model = classify.fit(spec, sub)
        importances = model.feature_importances_
        drop = int(np.argmin(importances))
        remaining.pop(drop)

    best = max(scores.values())
    chosen_size = min(s for s, v in scores.items() if v >= best - 0.005)
    return subsets[chosen_size], scores
