import numpy as np
import pytest

from kehsim.excitation import (MODES, ModeProfile, default_profiles, gen_mode_trace,
                               load_trace_csv)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_car_spectral_peak_near_resonance():
    # Oracle: FFT of the generated trace; the car profile carries a strong
    # harmonic near 25 Hz, so the magnitude peak must land in 20-30 Hz.
    trace = gen_mode_trace("car", 60.0, seed=1)
    spec = np.abs(np.fft.rfft(trace.samples))
    freqs = np.fft.rfftfreq(trace.samples.size, 1.0 / trace.sample_rate)
    peak = freqs[int(np.argmax(spec[1:])) + 1]
    assert 20.0 <= peak <= 30.0


def test_zero_profile_gives_zero_trace():
    trace = gen_mode_trace("bus", 10.0, seed=7, profile=ModeProfile())
    assert trace.samples.shape == (100_000,)
    assert not np.any(trace.samples)


def test_ferry_quieter_than_car():
    ferry = gen_mode_trace("ferry", 60.0, seed=2)
    car = gen_mode_trace("car", 60.0, seed=2)
    assert rms(ferry.samples) < rms(car.samples)


def test_determinism_bit_identical():
    a = gen_mode_trace("tricycle", 20.0, seed=99)
    b = gen_mode_trace("tricycle", 20.0, seed=99)
    assert np.array_equal(a.samples, b.samples)


def test_unknown_mode_names_valid_labels():
    with pytest.raises(ValueError) as exc:
        gen_mode_trace("zeppelin", 1.0, seed=0)
    for label in MODES:
        assert label in str(exc.value)


def test_amplitude_scaling_is_exact():
    # Scaling every profile amplitude by 2 (a power of two) must scale the
    # samples exactly: random draws do not depend on amplitudes.
    base = default_profiles()["car"]
    a = gen_mode_trace("car", 5.0, seed=3, profile=base)
    b = gen_mode_trace("car", 5.0, seed=3, profile=base.scaled(2.0))
    assert np.array_equal(2.0 * a.samples, b.samples)


def test_stop_segments_are_quiet():
    # Windowed mean |x| inside inserted stops stays below 5% of the trace's
    # 95th-percentile amplitude.
    profile = default_profiles()["bus"]
    trace = gen_mode_trace("bus", 60.0, seed=11, profile=profile)
    x = np.abs(trace.samples)
    p95 = np.percentile(x, 95)
    n_seg = int(trace.duration_s)
    seg = x[: n_seg * 10_000].reshape(n_seg, 10_000)
    seg_means = seg.mean(axis=1)
    quiet = np.sort(seg_means)[: int(round(profile.stop_fraction * n_seg)) - 1]
    assert quiet.size > 0
    assert np.all(quiet < 0.05 * p95)


def test_stop_fraction_zeroes_expected_span():
    profile = ModeProfile(band_noise=((5.0, 40.0, 1.0),), stop_fraction=0.25)
    trace = gen_mode_trace("train", 40.0, seed=4, profile=profile)
    zero_frac = np.mean(trace.samples == 0.0)
    assert 0.2 <= zero_frac <= 0.3


def test_profile_validation():
    with pytest.raises(ValueError):
        ModeProfile(band_noise=((10.0, 5.0, 1.0),))
    with pytest.raises(ValueError):
        ModeProfile(stop_fraction=1.0)
    with pytest.raises(ValueError):
        ModeProfile(harmonics=((25.0, -1.0),))


def test_default_profiles_cover_all_modes():
    profiles = default_profiles()
    assert set(MODES) <= set(profiles)


def test_load_trace_csv_roundtrip(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("accel_ms2\n0.0\n1.0\n-1.0\n")
    trace = load_trace_csv(p, 10_000.0, mode="car")
    assert trace.samples.tolist() == [0.0, 1.0, -1.0]
    assert trace.sample_rate == 10_000.0
    assert trace.mode == "car"
    assert trace.seed == 0


def test_load_trace_csv_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(ValueError, match="no samples"):
        load_trace_csv(p, 10_000.0)


def test_load_trace_csv_malformed_row_cites_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.0\n1.0\n2.0\n3.0\nabc\n")
    with pytest.raises(ValueError, match="row 5"):
        load_trace_csv(p, 10_000.0)


def test_load_trace_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trace_csv(tmp_path / "nope.csv", 100.0)
