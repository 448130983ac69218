"""What the microcontroller sees: shunt current sensing, 12-bit ADC sampling
at 100 Hz, and the per-signal acquisition power model.

Signal naming follows the sensing points of the three circuit designs:

  OC-AC-V, OC-REC-V   open-circuit AC / rectified voltage
  CL-AC-V, CL-REC-V   converter-less AC voltage / rectified (capacitor) voltage
  CL-C, CB-C          converter-less / converter-based harvesting current
  ACC-X, ACC-Y, ACC-Z accelerometer stand-in channels

Signed AC voltages are biased to mid-scale before quantization (single
supply virtual ground) and de-biased in the engineering values. Currents go
through the shunt amplifier first. Decimation takes every Nth internal
sample with no anti-alias filter, matching a bare ADC input.

The accelerometer stand-in is synthetic: ACC-X is the base acceleration,
ACC-Y a 90 degree phase-shifted copy, ACC-Z a delayed copy at half scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .circuit import SimRecord
from .excitation import VibrationTrace

KEH_SIGNALS = ("OC-AC-V", "OC-REC-V", "CL-AC-V", "CL-REC-V", "CL-C", "CB-C")
ACC_SIGNALS = ("ACC-X", "ACC-Y", "ACC-Z")
ALL_SIGNALS = KEH_SIGNALS + ACC_SIGNALS + ("ACC",)

CURRENT_SIGNALS = ("CL-C", "CB-C")
AC_VOLTAGE_SIGNALS = ("OC-AC-V", "CL-AC-V")

# Sensing taps per topology: (signal_id, channel, kind).
TOPOLOGY_TAPS = {
    "open_circuit": (("OC-AC-V", "v_ac", "ac_voltage"),
                     ("OC-REC-V", "v_rect", "voltage")),
    "converterless": (("CL-AC-V", "v_ac", "ac_voltage"),
                      ("CL-REC-V", "v_rect", "voltage"),
                      ("CL-C", "i_rect", "current")),
    # The converter pins its input voltage, so only the current carries
    # information; no CB rectified-voltage record is produced.
    "converter_based": (("CB-C", "i_rect", "current"),),
}

# Accelerometer stand-in scaling: volts at the ADC pin per m/s^2.
ACC_SENSITIVITY_V_PER_MS2 = 0.15
_ACC_Z_DELAY_S = 0.005
_ACC_Z_SCALE = 0.5


@dataclass(frozen=True)
class AdcConfig:
    resolution_bits: int = 12
    full_scale: float = 3.0   # V
    sample_rate: float = 100.0  # Hz

    def __post_init__(self):
        if self.resolution_bits < 1:
            raise ValueError("resolution_bits must be >= 1")
        if self.full_scale <= 0:
            raise ValueError("full_scale must be > 0")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")

    @property
    def max_code(self) -> int:
        return 2 ** self.resolution_bits - 1

    @property
    def lsb(self) -> float:
        return self.full_scale / self.max_code


@dataclass(frozen=True)
class ShuntConfig:
    shunt_resistance: float = 10.0   # ohm
    amplifier_gain: float = 100.0

    def __post_init__(self):
        if self.shunt_resistance <= 0 or self.amplifier_gain <= 0:
            raise ValueError("shunt_resistance and amplifier_gain must be > 0")


@dataclass
class SensingRecord:
    """One ADC-sampled signal from a run."""

    signal_id: str
    codes: np.ndarray            # integer ADC codes
    engineering_values: np.ndarray  # V, A or m/s^2 depending on the signal
    sample_rate: float
    mode: str

    def __post_init__(self):
        if self.signal_id not in ALL_SIGNALS:
            raise ValueError(f"unknown signal_id {self.signal_id!r}")

    @property
    def duration_s(self) -> float:
        return self.codes.size / self.sample_rate


@dataclass(frozen=True)
class PowerModel:
    """Acquisition power constants in microwatts (3 V supply assumed)."""

    keh_amplifier: float = 1.05
    keh_shunt_losses: float = 0.95
    external_adc: float = 0.7
    voltage_divider: float = 0.3
    accel_analog: float = 450.0
    accel_digital: float = 7.2
    supply_voltage: float = 3.0

    def __post_init__(self):
        for name in ("keh_amplifier", "keh_shunt_losses", "external_adc",
                     "voltage_divider", "accel_analog", "accel_digital"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


DEFAULT_POWER_MODEL = PowerModel()


def shunt_sense(current: float, cfg: ShuntConfig, rail_voltage: float = 3.0) -> float:
    """Shunt ampere-meter output: current -> amplified voltage, clamped to the rails."""
    v = current * cfg.shunt_resistance * cfg.amplifier_gain
    return min(max(v, 0.0), rail_voltage)


def adc_sample(volts: float, cfg: AdcConfig) -> int:
    """Quantize a voltage to an ADC code, clamping to [0, full_scale]."""
    v = min(max(volts, 0.0), cfg.full_scale)
    return int(round(v / cfg.full_scale * cfg.max_code))


def _quantize_array(volts: np.ndarray, cfg: AdcConfig) -> np.ndarray:
    v = np.clip(volts, 0.0, cfg.full_scale)
    return np.rint(v / cfg.full_scale * cfg.max_code).astype(np.int64)


def _codes_to_volts(codes: np.ndarray, cfg: AdcConfig) -> np.ndarray:
    return codes.astype(np.float64) / cfg.max_code * cfg.full_scale


def sample_signals(sim: SimRecord, adc: AdcConfig | None = None,
                   shunt: ShuntConfig | None = None) -> list[SensingRecord]:
    """Sample every sensing point of a run at the ADC rate.

    Sample k of every returned record corresponds to internal sample
    k * (internal_rate / adc_rate), i.e. all records of a run stay aligned.
    """
    adc = adc or AdcConfig()
    shunt = shunt or ShuntConfig()
    ratio = sim.sample_rate / adc.sample_rate
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError(f"ADC rate {adc.sample_rate} Hz must divide the internal "
                         f"rate {sim.sample_rate} Hz")
    decim = int(round(ratio))
    n_out = sim.time.size // decim
    idx = np.arange(n_out) * decim

    records = []
    for signal_id, channel, kind in TOPOLOGY_TAPS[sim.topology]:
        raw = getattr(sim, channel)[idx]
        records.append(_make_record(signal_id, kind, raw, adc, shunt, sim.mode))
    return records


def _make_record(signal_id: str, kind: str, raw: np.ndarray, adc: AdcConfig,
                 shunt: ShuntConfig, mode: str) -> SensingRecord:
    if kind == "voltage":
        codes = _quantize_array(raw, adc)
        eng = _codes_to_volts(codes, adc)
    elif kind == "ac_voltage":
        bias = adc.full_scale / 2.0
        codes = _quantize_array(raw + bias, adc)
        eng = _codes_to_volts(codes, adc) - bias
    elif kind == "current":
        gain = shunt.shunt_resistance * shunt.amplifier_gain
        volts = np.clip(raw * gain, 0.0, adc.full_scale)
        codes = _quantize_array(volts, adc)
        eng = _codes_to_volts(codes, adc) / gain
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    return SensingRecord(signal_id=signal_id, codes=codes, engineering_values=eng,
                         sample_rate=adc.sample_rate, mode=mode)


def sample_accelerometer(trace: VibrationTrace, adc: AdcConfig | None = None) -> list[SensingRecord]:
    """Produce the synthetic 3-axis accelerometer records for a trace.

    ACC-X is the base acceleration itself; ACC-Y and ACC-Z are fixed
    decorrelating transforms (90 degree phase shift; delayed half-scale
    copy). Engineering values are in m/s^2.
    """
    adc = adc or AdcConfig()
    ratio = trace.sample_rate / adc.sample_rate
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError(f"ADC rate {adc.sample_rate} Hz must divide the trace "
                         f"rate {trace.sample_rate} Hz")
    decim = int(round(ratio))
    x = trace.samples
    y = np.imag(hilbert(x))
    delay = int(round(_ACC_Z_DELAY_S * trace.sample_rate))
    z = np.empty_like(x)
    z[:delay] = 0.0
    z[delay:] = _ACC_Z_SCALE * x[:x.size - delay]

    n_out = x.size // decim
    idx = np.arange(n_out) * decim
    bias = adc.full_scale / 2.0
    records = []
    for signal_id, axis in (("ACC-X", x), ("ACC-Y", y), ("ACC-Z", z)):
        volts = axis[idx] * ACC_SENSITIVITY_V_PER_MS2 + bias
        codes = _quantize_array(volts, adc)
        eng = (_codes_to_volts(codes, adc) - bias) / ACC_SENSITIVITY_V_PER_MS2
        records.append(SensingRecord(signal_id=signal_id, codes=codes,
                                     engineering_values=eng,
                                     sample_rate=adc.sample_rate, mode=trace.mode))
    return records


def acquisition_power(signal_id: str, model: PowerModel | None = None) -> float:
    """Acquisition power in microwatts for one sensing signal.

    KEH current signals pay for the shunt amplifier chain plus the external
    ADC; KEH voltage signals for the ADC plus divider losses; the 3-axis
    accelerometer uses the digital part's figure (a single axis is
    approximated as one third of it).
    """
    model = model or DEFAULT_POWER_MODEL
    if signal_id in CURRENT_SIGNALS:
        return model.keh_amplifier + model.keh_shunt_losses + model.external_adc
    if signal_id in ("OC-AC-V", "OC-REC-V", "CL-AC-V", "CL-REC-V"):
        return model.external_adc + model.voltage_divider
    if signal_id == "ACC":
        return model.accel_digital
    if signal_id in ACC_SIGNALS:
        return model.accel_digital / 3.0
    raise ValueError(f"unknown signal_id {signal_id!r}; "
                     f"known: {', '.join(ALL_SIGNALS)}")
