"""kehsim: kinetic-energy-harvesting sensor node simulation and analysis.

End-to-end chain: synthetic vibration excitation -> piezoelectric transducer
-> rectifier/storage circuit (open-circuit, converter-less, converter-based)
-> ADC acquisition at the circuit's sensing points -> transport-mode
detection pipeline -> energy ledger (harvested vs acquisition power).
"""

import os as _os

# Must be set before numba's first import; the TBB probe is version-sensitive
# and workqueue suits the coarse per-tree/per-run parallelism used here.
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .excitation import (MODES, ModeProfile, VibrationTrace, default_profiles,
                         gen_mode_trace, load_trace_csv)
from .transducer import (TransducerParams, TransducerState, resonant_frequency,
                         step_transducer)
from .circuit import (TOPOLOGIES, CircuitParams, CircuitState, LoadState,
                      SimRecord, rectifier_current, simulate, step_circuit)

__version__ = "0.1.0"
