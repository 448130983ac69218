import numpy as np
import pytest

from kehsim import _trees
from kehsim.circuit import CircuitParams, simulate
from kehsim.excitation import gen_mode_trace
from kehsim.transducer import TransducerParams


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure runs, not JIT."""
    _trees.warmup()
    trace = gen_mode_trace("car", 0.2, seed=0)
    for topo in ("open_circuit", "converterless", "converter_based"):
        simulate(trace, TransducerParams(), CircuitParams(topology=topo))


@pytest.fixture(scope="session")
def tparams():
    return TransducerParams()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
