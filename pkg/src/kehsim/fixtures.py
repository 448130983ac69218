"""The shipped synthetic end-to-end fixture: 6 modes x 4 trials x 60 s.

Everything here is deterministic for a given global seed; per-trace seeds are
fanned out with config.derive_seed so individual runs can be reproduced in
isolation.
"""

from __future__ import annotations

from functools import lru_cache

from .circuit import CircuitParams, SimRecord, simulate
from .config import derive_seed
from .excitation import MODES, VibrationTrace, gen_mode_trace
from .pipeline import Dataset, dataset_from_records
from .acquisition import AdcConfig, ShuntConfig, sample_accelerometer, sample_signals
from .transducer import TransducerParams

FIXTURE_SEED = 42
FIXTURE_TRIALS = 4
FIXTURE_DURATION_S = 60.0


def fixture_trace(mode: str, trial: int, seed: int = FIXTURE_SEED,
                  duration: float = FIXTURE_DURATION_S) -> VibrationTrace:
    return gen_mode_trace(mode, duration, derive_seed(seed, "trace", mode, trial))


def fixture_run(mode: str, trial: int, topology: str, seed: int = FIXTURE_SEED,
                duration: float = FIXTURE_DURATION_S,
                tparams: TransducerParams | None = None,
                cparams: CircuitParams | None = None) -> SimRecord:
    trace = fixture_trace(mode, trial, seed, duration)
    tparams = tparams or TransducerParams()
    cparams = cparams or CircuitParams(topology=topology)
    return simulate(trace, tparams, cparams)


@lru_cache(maxsize=8)
def fixture_signal_dataset(signal_id: str = "CB-C", window_s: float = 1.0,
                           seed: int = FIXTURE_SEED, trials: int = FIXTURE_TRIALS,
                           duration: float = FIXTURE_DURATION_S) -> Dataset:
    """Feature dataset of one sensing signal over the whole fixture.

    Cached; treat the returned dataset as read-only.
    """
    topology = {"OC": "open_circuit", "CL": "converterless", "CB": "converter_based"}[
        signal_id.split("-")[0]] if not signal_id.startswith("ACC") else None
    tparams = TransducerParams()
    adc = AdcConfig()
    shunt = ShuntConfig()
    groups = []
    for mode in MODES:
        for trial in range(trials):
            trace = fixture_trace(mode, trial, seed, duration)
            if signal_id.startswith("ACC"):
                groups.append(sample_accelerometer(trace, adc))
            else:
                sim = simulate(trace, tparams, CircuitParams(topology=topology))
                recs = [r for r in sample_signals(sim, adc, shunt)
                        if r.signal_id == signal_id]
                if not recs:
                    raise ValueError(f"signal {signal_id} not produced by {topology}")
                groups.append(recs)
    return dataset_from_records(groups, window_s)
