"""Lumped electromechanical model of a tip-mass loaded piezoelectric bender.

Single mechanical mode with linear force-voltage coupling and an internal
capacitance:

    m*x'' = -c*x' - k*x - theta*v_p - m*a_base
    C_p*v_p' = theta*x' - i_terminal

Stepped with semi-implicit (symplectic) Euler: velocity first from forces at
the current state, then displacement and terminal voltage from the new
velocity. Stable and deterministic at the 10 kHz internal rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import load_kv_file


@dataclass(frozen=True)
class TransducerParams:
    """Constitutive constants of the bender.

    Defaults place the mechanical resonance at 25 Hz for the 24.62 g tip
    mass; coupling, capacitance and damping are calibration values chosen so
    open-circuit peaks reach a few volts under strong excitation.
    """

    mass: float = 0.02462            # kg
    stiffness: float = 607.5         # N/m
    damping: float = 0.232           # N*s/m  (zeta ~ 0.03)
    coupling: float = 1.0e-3         # N/V
    piezo_capacitance: float = 100e-9  # F

    def __post_init__(self):
        for name in ("mass", "stiffness", "damping", "coupling", "piezo_capacitance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_config(cls, kv: dict[str, str]) -> "TransducerParams":
        kwargs = {}
        for name, key in (("mass", "transducer.mass"),
                          ("stiffness", "transducer.stiffness"),
                          ("damping", "transducer.damping"),
                          ("coupling", "transducer.coupling"),
                          ("piezo_capacitance", "transducer.piezo_capacitance")):
            if key in kv:
                kwargs[name] = float(kv[key])
        return cls(**kwargs)

    @classmethod
    def from_config_file(cls, path) -> "TransducerParams":
        return cls.from_config(load_kv_file(path))


@dataclass
class TransducerState:
    """Tip displacement/velocity and terminal (AC) voltage."""

    displacement: float = 0.0  # m
    velocity: float = 0.0      # m/s
    terminal_voltage: float = 0.0  # V


def step_transducer(state: TransducerState, params: TransducerParams,
                    base_accel: float, terminal_current: float, dt: float) -> TransducerState:
    """Advance the bender by one semi-implicit Euler step.

    terminal_current is the current drawn from the transducer terminals
    (positive out of the + terminal), held constant over the step.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not (math.isfinite(base_accel) and math.isfinite(terminal_current)):
        raise ValueError(f"non-finite inputs: base_accel={base_accel}, "
                         f"terminal_current={terminal_current}")

    x, v, vp = state.displacement, state.velocity, state.terminal_voltage
    accel = (-params.damping * v - params.stiffness * x
             - params.coupling * vp) / params.mass - base_accel
    v_new = v + dt * accel
    x_new = x + dt * v_new
    vp_new = vp + dt * (params.coupling * v_new - terminal_current) / params.piezo_capacitance

    if not (math.isfinite(x_new) and math.isfinite(v_new) and math.isfinite(vp_new)):
        raise FloatingPointError(
            f"transducer state diverged: x={x_new}, v={v_new}, v_p={vp_new}")
    return TransducerState(displacement=x_new, velocity=v_new, terminal_voltage=vp_new)


def resonant_frequency(params: TransducerParams) -> float:
    """Undamped mechanical resonance (1/2pi)*sqrt(k/m) in Hz."""
    return math.sqrt(params.stiffness / params.mass) / (2.0 * math.pi)


def stored_energy(state: TransducerState, params: TransducerParams) -> float:
    """Total mechanical plus electrical stored energy in joules."""
    return (0.5 * params.mass * state.velocity ** 2
            + 0.5 * params.stiffness * state.displacement ** 2
            + 0.5 * params.piezo_capacitance * state.terminal_voltage ** 2)
