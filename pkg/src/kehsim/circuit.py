"""Rectifier, storage, DC-DC converter and intermittent load.

Three topologies:

  open_circuit    -- nothing draws current; AC and rectified voltages only.
  converterless   -- storage capacitor directly behind the full bridge; the
                     transducer voltage is enveloped by v_cap + 2*v_d.
  converter_based -- DC-DC stage regulates the rectifier output to a fixed
                     low voltage and transfers power to the capacitor with a
                     fixed efficiency.

Diodes are piecewise resistive (fixed drop v_d plus R_on in series). Within
the fused simulation loop the conduction branch is solved implicitly per
step: R_on*C_p is much smaller than the step, so an explicit update of the
transducer voltage against the clamp would oscillate. The recorded
(v_ac, i_rect, v_cap) triple of each row is algebraically consistent, i.e.
|v_ac| = v_out + 2*v_d + i_rect*R_on exactly whenever current flows.

The load is a constant-current sink with on/off hysteresis between
v_thr_on and v_thr_off, mimicking an intermittently powered node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import load_kv_file
from .excitation import VibrationTrace
from .transducer import TransducerParams, TransducerState

TOPOLOGIES = ("open_circuit", "converterless", "converter_based")
_TOPO_CODE = {name: i for i, name in enumerate(TOPOLOGIES)}

# Floor for the capacitor voltage in the converter's power-transfer division,
# avoiding the cold-start singularity at v_cap = 0.
_VCAP_TRANSFER_FLOOR = 0.05


@dataclass(frozen=True)
class CircuitParams:
    topology: str = "converterless"
    diode_drop: float = 0.7              # V
    diode_on_resistance: float = 100.0   # ohm
    storage_capacitance: float = 220e-6  # F
    v_thr_on: float = 3.38               # V
    v_thr_off: float = 2.18              # V
    load_current: float = 5e-3           # A
    converter_input_voltage: float = 1.0  # V
    converter_efficiency: float = 0.8

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; valid: {TOPOLOGIES}")
        if not (0.0 < self.v_thr_off < self.v_thr_on):
            raise ValueError("thresholds must satisfy 0 < v_thr_off < v_thr_on")
        if self.diode_drop < 0:
            raise ValueError("diode_drop must be >= 0")
        if self.diode_on_resistance <= 0:
            raise ValueError("diode_on_resistance must be > 0")
        if self.storage_capacitance <= 0:
            raise ValueError("storage_capacitance must be > 0")
        if not (0.0 < self.converter_efficiency <= 1.0):
            raise ValueError("converter_efficiency must lie in (0, 1]")
        if self.converter_input_voltage <= 0:
            raise ValueError("converter_input_voltage must be > 0")
        if self.load_current < 0:
            raise ValueError("load_current must be >= 0")

    @classmethod
    def from_config(cls, kv: dict[str, str], topology: str = "converterless") -> "CircuitParams":
        mapping = {"diode_drop": "circuit.diode_drop",
                   "diode_on_resistance": "circuit.diode_on_resistance",
                   "storage_capacitance": "circuit.storage_capacitance",
                   "v_thr_on": "circuit.v_thr_on",
                   "v_thr_off": "circuit.v_thr_off",
                   "load_current": "circuit.load_current",
                   "converter_input_voltage": "circuit.converter_input_voltage",
                   "converter_efficiency": "circuit.converter_efficiency"}
        kwargs = {name: float(kv[key]) for name, key in mapping.items() if key in kv}
        return cls(topology=topology, **kwargs)

    @classmethod
    def from_config_file(cls, path, topology: str = "converterless") -> "CircuitParams":
        return cls.from_config(load_kv_file(path), topology)


@dataclass
class LoadState:
    """Intermittent load with on/off hysteresis."""

    is_on: bool = False
    on_events: int = 0
    time_on: float = 0.0

    def update(self, v_cap: float, params: CircuitParams):
        if self.is_on:
            if v_cap <= params.v_thr_off:
                self.is_on = False
        else:
            if v_cap >= params.v_thr_on:
                self.is_on = True
                self.on_events += 1


@dataclass
class CircuitState:
    v_cap: float = 0.0
    load: LoadState = field(default_factory=LoadState)


@dataclass
class SimRow:
    """One recorded step: the state of every sensing point."""

    v_ac: float
    i_ac: float
    v_rect: float
    i_rect: float
    v_cap: float
    i_load: float
    load_on: bool
    displacement: float


@dataclass
class SimRecord:
    """Dense multi-channel record of a full run at the internal rate."""

    mode: str
    topology: str
    sample_rate: float
    time: np.ndarray
    v_ac: np.ndarray
    i_ac: np.ndarray
    v_rect: np.ndarray
    i_rect: np.ndarray
    v_cap: np.ndarray
    i_load: np.ndarray
    load_on: np.ndarray
    displacement: np.ndarray
    on_events: int = 0
    time_on: float = 0.0
    seed: int = 0

    CHANNELS = ("v_ac", "i_ac", "v_rect", "i_rect", "v_cap", "i_load",
                "load_on", "displacement")

    @property
    def duration_s(self) -> float:
        return self.time.size / self.sample_rate

    def to_csv(self, path):
        header = "time_s,v_ac,i_ac,v_rect,i_rect,v_cap,i_load,load_on,displacement"
        data = np.column_stack([self.time, self.v_ac, self.i_ac, self.v_rect,
                                self.i_rect, self.v_cap, self.i_load,
                                self.load_on.astype(np.float64), self.displacement])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def rectifier_current(v_ac: float, v_out: float, params: CircuitParams) -> float:
    """Full-bridge rectifier current for a given transducer and output voltage.

    Zero below the conduction threshold v_out + 2*v_d, resistive above it;
    symmetric in the sign of v_ac.
    """
    if v_out < 0:
        raise ValueError("v_out must be >= 0")
    excess = abs(v_ac) - (v_out + 2.0 * params.diode_drop)
    if excess <= 0.0:
        return 0.0
    return excess / params.diode_on_resistance


def step_circuit(circ: CircuitState, trans: TransducerState, params: CircuitParams,
                 dt: float) -> tuple[CircuitState, SimRow]:
    """Advance storage and load by one step given the transducer state.

    Returns the new circuit state and the recorded row. The row's v_cap is
    the value the conduction threshold was evaluated against (start of
    step); the load draws current according to its state entering the step.
    """
    if not (math.isfinite(circ.v_cap) and math.isfinite(trans.terminal_voltage)):
        raise FloatingPointError(
            f"non-finite circuit step: v_cap={circ.v_cap}, v_ac={trans.terminal_voltage}")

    v_ac = trans.terminal_voltage
    topo = params.topology
    load = circ.load

    if topo == "open_circuit":
        row = SimRow(v_ac=v_ac, i_ac=0.0, v_rect=max(abs(v_ac) - 2.0 * params.diode_drop, 0.0),
                     i_rect=0.0, v_cap=circ.v_cap, i_load=0.0, load_on=False,
                     displacement=trans.displacement)
        return CircuitState(v_cap=circ.v_cap, load=load), row

    v_out = circ.v_cap if topo == "converterless" else params.converter_input_voltage
    i_rect = rectifier_current(v_ac, v_out, params)
    i_ac = math.copysign(i_rect, v_ac)
    i_load = params.load_current if load.is_on else 0.0

    if topo == "converterless":
        v_rect = circ.v_cap
        dv = (i_rect - i_load) * dt / params.storage_capacitance
    else:
        v_rect = params.converter_input_voltage if i_rect > 0.0 \
            else max(abs(v_ac) - 2.0 * params.diode_drop, 0.0)
        i_into_cap = (params.converter_efficiency * params.converter_input_voltage * i_rect
                      / max(circ.v_cap, _VCAP_TRANSFER_FLOOR))
        dv = (i_into_cap - i_load) * dt / params.storage_capacitance

    row = SimRow(v_ac=v_ac, i_ac=i_ac, v_rect=v_rect, i_rect=i_rect, v_cap=circ.v_cap,
                 i_load=i_load, load_on=load.is_on, displacement=trans.displacement)

    v_cap_new = max(circ.v_cap + dv, 0.0)
    new_load = LoadState(is_on=load.is_on, on_events=load.on_events,
                         time_on=load.time_on + (dt if load.is_on else 0.0))
    new_load.update(v_cap_new, params)
    return CircuitState(v_cap=v_cap_new, load=new_load), row


def _sim_loop_python(samples, dt, m, c, k, theta, cp, topo, vd, ron, cap,
                     von, voff, iload_const, vreg, eff, vcap0):
    """Reference implementation of the fused loop (same arithmetic as the kernel)."""
    n = samples.size
    v_ac = np.empty(n)
    i_ac = np.empty(n)
    v_rect = np.empty(n)
    i_rect = np.empty(n)
    v_cap_arr = np.empty(n)
    i_load_arr = np.empty(n)
    load_arr = np.zeros(n, dtype=np.bool_)
    disp = np.empty(n)

    x = 0.0
    v = 0.0
    vp = 0.0
    vcap = vcap0
    load_on = False
    on_events = 0
    time_on = 0.0
    beta = dt / (ron * cp)

    for i in range(n):
        accel = (-c * v - k * x - theta * vp) / m - samples[i]
        v = v + dt * accel
        x = x + dt * v
        vp_star = vp + dt * theta * v / cp

        if topo == 0:
            vp = vp_star
            ir = 0.0
            ia = 0.0
            vr = abs(vp) - 2.0 * vd
            if vr < 0.0:
                vr = 0.0
            il = 0.0
            row_vcap = vcap
            row_load = False
        else:
            vth = (vcap if topo == 1 else vreg) + 2.0 * vd
            if vp_star > vth:
                vp = (vp_star + beta * vth) / (1.0 + beta)
                ir = (vp - vth) / ron
                if ir < 0.0:
                    ir = 0.0
                ia = ir
            elif vp_star < -vth:
                vp = (vp_star - beta * vth) / (1.0 + beta)
                ir = (-vp - vth) / ron
                if ir < 0.0:
                    ir = 0.0
                ia = -ir
            else:
                vp = vp_star
                ir = 0.0
                ia = 0.0
            il = iload_const if load_on else 0.0
            row_vcap = vcap
            row_load = load_on
            if topo == 1:
                vr = vcap
                vcap = vcap + (ir - il) * dt / cap
            else:
                if ir > 0.0:
                    vr = vreg
                else:
                    vr = abs(vp) - 2.0 * vd
                    if vr < 0.0:
                        vr = 0.0
                vfloor = vcap if vcap > _VCAP_TRANSFER_FLOOR else _VCAP_TRANSFER_FLOOR
                vcap = vcap + (eff * vreg * ir / vfloor - il) * dt / cap
            if vcap < 0.0:
                vcap = 0.0
            if load_on:
                time_on += dt
                if vcap <= voff:
                    load_on = False
            else:
                if vcap >= von:
                    load_on = True
                    on_events += 1

        v_ac[i] = vp
        i_ac[i] = ia
        v_rect[i] = vr
        i_rect[i] = ir
        v_cap_arr[i] = row_vcap
        i_load_arr[i] = il
        load_arr[i] = row_load
        disp[i] = x

    return v_ac, i_ac, v_rect, i_rect, v_cap_arr, i_load_arr, load_arr, disp, on_events, time_on


try:
    from numba import njit

    _sim_loop_kernel = njit(cache=True)(_sim_loop_python)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _sim_loop_kernel = _sim_loop_python
    HAVE_NUMBA = False


def simulate(trace: VibrationTrace, tparams: TransducerParams, cparams: CircuitParams,
             initial_v_cap: float | None = None, use_kernel: bool = True) -> SimRecord:
    """Co-step transducer and circuit over a whole trace.

    The capacitor starts at v_thr_off unless initial_v_cap is given
    (open_circuit runs carry a zero v_cap channel). Deterministic; the
    compiled kernel and the Python reference produce identical output.
    """
    samples = np.ascontiguousarray(trace.samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("trace contains non-finite samples")
    dt = 1.0 / trace.sample_rate

    if cparams.topology == "open_circuit":
        vcap0 = 0.0
    elif initial_v_cap is not None:
        if initial_v_cap < 0:
            raise ValueError("initial_v_cap must be >= 0")
        vcap0 = float(initial_v_cap)
    else:
        vcap0 = cparams.v_thr_off

    loop = _sim_loop_kernel if use_kernel else _sim_loop_python
    out = loop(samples, dt, tparams.mass, tparams.damping, tparams.stiffness,
               tparams.coupling, tparams.piezo_capacitance,
               _TOPO_CODE[cparams.topology], cparams.diode_drop,
               cparams.diode_on_resistance, cparams.storage_capacitance,
               cparams.v_thr_on, cparams.v_thr_off, cparams.load_current,
               cparams.converter_input_voltage, cparams.converter_efficiency, vcap0)
    v_ac, i_ac, v_rect, i_rect, v_cap, i_load, load_on, disp, on_events, time_on = out

    for name, arr in (("v_ac", v_ac), ("v_cap", v_cap), ("displacement", disp)):
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise FloatingPointError(
                f"simulation diverged: channel {name} non-finite at sample {bad} "
                f"(t={bad * dt:.6f} s, mode={trace.mode}, topology={cparams.topology})")

    time = np.arange(samples.size) * dt
    return SimRecord(mode=trace.mode, topology=cparams.topology,
                     sample_rate=trace.sample_rate, time=time, v_ac=v_ac, i_ac=i_ac,
                     v_rect=v_rect, i_rect=i_rect, v_cap=v_cap, i_load=i_load,
                     load_on=load_on, displacement=disp,
                     on_events=int(on_events), time_on=float(time_on), seed=trace.seed)
