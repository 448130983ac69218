"""Synthetic base-acceleration traces per transport mode, plus CSV ingestion.

Each mode is described by a ModeProfile: band-limited Gaussian noise,
fixed-frequency harmonics, Poisson-timed damped half-sine impulses, and a
fraction of the trace spent stationary. The shipped default profiles are
synthetic stand-ins tuned for qualitative realism (no field recordings are
bundled); see data/default_profiles.cfg.

Generation is deterministic per (mode, duration, seed, profile) and linear
in the profile amplitudes: random draws never depend on amplitude values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .config import ConfigError, load_kv_file, parse_kv_text, parse_tuple_list

MODES = ("ferry", "train", "bus", "car", "tricycle", "pedestrian")
TRACE_LABELS = MODES + ("unlabeled",)

DEFAULT_SAMPLE_RATE = 10_000.0

# Impulse shape: half-sine of fixed width with an exponential decay envelope.
_IMPULSE_WIDTH_S = 0.030
_IMPULSE_DECAY = 3.0


@dataclass(frozen=True)
class ModeProfile:
    """Spectral recipe for one transport mode's base acceleration."""

    band_noise: tuple[tuple[float, float, float], ...] = ()  # (low Hz, high Hz, RMS m/s^2)
    harmonics: tuple[tuple[float, float], ...] = ()          # (freq Hz, amplitude m/s^2)
    impulse_rate: float = 0.0                                # events per second
    impulse_amplitude: float = 0.0                           # m/s^2
    stop_fraction: float = 0.0

    def __post_init__(self):
        for low, high, rms in self.band_noise:
            if not (0.0 < low < high):
                raise ValueError(f"band edges must satisfy 0 < low < high, got ({low}, {high})")
            if rms < 0:
                raise ValueError("band RMS amplitude must be >= 0")
        for freq, amp in self.harmonics:
            if freq <= 0:
                raise ValueError("harmonic frequency must be > 0")
            if amp < 0:
                raise ValueError("harmonic amplitude must be >= 0")
        if self.impulse_rate < 0 or self.impulse_amplitude < 0:
            raise ValueError("impulse rate/amplitude must be >= 0")
        if not (0.0 <= self.stop_fraction < 1.0):
            raise ValueError("stop_fraction must lie in [0, 1)")

    def scaled(self, alpha: float) -> "ModeProfile":
        """Profile with every amplitude scaled by alpha (rates/stops untouched)."""
        return ModeProfile(
            band_noise=tuple((lo, hi, alpha * rms) for lo, hi, rms in self.band_noise),
            harmonics=tuple((f, alpha * a) for f, a in self.harmonics),
            impulse_rate=self.impulse_rate,
            impulse_amplitude=alpha * self.impulse_amplitude,
            stop_fraction=self.stop_fraction,
        )


@dataclass
class VibrationTrace:
    """Labeled base-acceleration time series driving the simulator."""

    mode: str
    sample_rate: float
    samples: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TRACE_LABELS:
            raise ValueError(f"unknown mode {self.mode!r}; valid labels: {', '.join(TRACE_LABELS)}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise ValueError("trace has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def _band_noise_shape(rng: np.random.Generator, n: int, low: float, high: float,
                      rate: float) -> np.ndarray:
    """Unit-RMS band-limited Gaussian noise. Always consumes one draw block."""
    white = rng.standard_normal(n)
    nyq = rate / 2.0
    high = min(high, 0.99 * nyq)
    sos = sps.butter(2, [low, high], btype="bandpass", fs=rate, output="sos")
    shaped = sps.sosfilt(sos, white)
    rms = float(np.sqrt(np.mean(shaped * shaped)))
    if rms == 0.0:
        return np.zeros(n)
    return shaped * (1.0 / rms)


def _impulse_waveform(rate: float) -> np.ndarray:
    """Unit-amplitude damped half-sine pulse."""
    width = max(2, int(round(_IMPULSE_WIDTH_S * rate)))
    t = np.arange(width) / (width - 1)
    return np.sin(np.pi * t) * np.exp(-_IMPULSE_DECAY * t)


def gen_mode_trace(mode: str, duration: float, seed: int,
                   profile: ModeProfile | None = None,
                   sample_rate: float = DEFAULT_SAMPLE_RATE) -> VibrationTrace:
    """Generate a synthetic base-acceleration trace for one transport mode.

    Deterministic per (mode, duration, seed, profile, sample_rate). Stops are
    contiguous zero-excitation segments covering stop_fraction of the trace.
    """
    if mode not in TRACE_LABELS:
        raise ValueError(f"unknown mode {mode!r}; valid labels: {', '.join(TRACE_LABELS)}")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if profile is None:
        profiles = default_profiles()
        if mode not in profiles:
            raise ValueError(f"no default profile for mode {mode!r}")
        profile = profiles[mode]

    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    total = np.zeros(n)

    # Draw order is fixed and amplitude-independent so that scaling a
    # profile's amplitudes scales the output samples exactly.
    for low, high, rms in profile.band_noise:
        shape = _band_noise_shape(rng, n, low, high, sample_rate)
        total += rms * shape

    t = np.arange(n) / sample_rate
    for freq, amp in profile.harmonics:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        total += amp * np.sin(2.0 * np.pi * freq * t + phase)

    n_events = rng.poisson(profile.impulse_rate * duration) if profile.impulse_rate > 0 else 0
    if n_events > 0:
        starts = np.sort(rng.uniform(0.0, duration, size=n_events))
        pulse = _impulse_waveform(sample_rate)
        polarity = rng.choice([-1.0, 1.0], size=n_events)
        for t0, sign in zip(starts, polarity):
            i0 = int(t0 * sample_rate)
            i1 = min(i0 + pulse.size, n)
            if i1 > i0:
                total[i0:i1] += (profile.impulse_amplitude * sign) * pulse[: i1 - i0]

    if profile.stop_fraction > 0.0:
        _insert_stops(total, rng, profile.stop_fraction, sample_rate)

    return VibrationTrace(mode=mode, sample_rate=sample_rate, samples=total, seed=seed)


def _insert_stops(samples: np.ndarray, rng: np.random.Generator, stop_fraction: float,
                  sample_rate: float):
    """Zero out contiguous segments totalling stop_fraction of the trace.

    One stop per ~8 s of total stop time, each placed at a random offset
    inside its own zone of the trace so segments never overlap.
    """
    n = samples.size
    stop_total = int(round(stop_fraction * n))
    if stop_total <= 0:
        return
    n_stops = max(1, int(round(stop_total / (8.0 * sample_rate))))
    seg = stop_total // n_stops
    zone = n // n_stops
    for k in range(n_stops):
        lo = k * zone
        hi = min((k + 1) * zone, n) - seg
        start = int(rng.integers(lo, max(hi, lo + 1)))
        samples[start:start + seg] = 0.0


def load_trace_csv(path: str | Path, sample_rate: float, mode: str = "unlabeled") -> VibrationTrace:
    """Ingest a trace from CSV: one acceleration value (m/s^2) per row.

    An optional header row `accel_ms2` is skipped. Malformed rows are
    rejected with their row number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    values = []
    with open(path) as fh:
        for rownum, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if rownum == 1 and line.lower() in ("accel_ms2", "accel", "acceleration"):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}: malformed row {rownum}: {line!r}") from None
    if not values:
        raise ValueError(f"{path}: no samples")
    return VibrationTrace(mode=mode, sample_rate=sample_rate,
                          samples=np.asarray(values, dtype=np.float64), seed=0)


_DEFAULT_PROFILES: dict[str, ModeProfile] | None = None


def _profiles_from_kv(kv: dict[str, str]) -> dict[str, ModeProfile]:
    modes = sorted({key.split(".")[1] for key in kv if key.startswith("mode.")})
    profiles = {}
    for mode in modes:
        def get(field_name: str, default: str = "") -> str:
            return kv.get(f"mode.{mode}.{field_name}", default)

        profiles[mode] = ModeProfile(
            band_noise=tuple(parse_tuple_list(get("band_noise"), 3)),
            harmonics=tuple(parse_tuple_list(get("harmonics"), 2)),
            impulse_rate=float(get("impulse_rate", "0")),
            impulse_amplitude=float(get("impulse_amplitude", "0")),
            stop_fraction=float(get("stop_fraction", "0")),
        )
    return profiles


def load_profiles(path: str | Path) -> dict[str, ModeProfile]:
    """Load per-mode profiles from a flat key-value config file."""
    return _profiles_from_kv(load_kv_file(path))


def default_profiles() -> dict[str, ModeProfile]:
    """The shipped synthetic default profiles (cached)."""
    global _DEFAULT_PROFILES
    if _DEFAULT_PROFILES is None:
        text = resources.files("kehsim.data").joinpath("default_profiles.cfg").read_text()
        _DEFAULT_PROFILES = _profiles_from_kv(parse_kv_text(text, "default_profiles.cfg"))
        missing = [m for m in MODES if m not in _DEFAULT_PROFILES]
        if missing:
            raise ConfigError(f"default profile config missing modes: {missing}")
    return _DEFAULT_PROFILES
