"""
Shared fixtures for the Bloch Sentinel test suite.
"""

import os
import sys
import tempfile

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

# keep test runs out of the repository log directory
os.environ.setdefault('BLOCH_LOG_DIR', tempfile.mkdtemp(prefix='bloch-logs-'))

import numpy as np
import pytest

from spectral.fourier_core import Lattice, PeriodicField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plane16():
    return Lattice(2, 16)


def random_field(lattice, rng, rank='scalar', amp=1.0, decay=None, real=False):
    """Random complex coefficients, optionally damped by exp(-|m|^2/decay)."""
    shape = {'scalar': (lattice.size,), 'vector': (lattice.size, lattice.d)}[rank]
    coeffs = amp * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    if decay is not None:
        envelope = np.exp(-lattice.norms_squared / decay)
        coeffs = coeffs * (envelope if rank == 'scalar' else envelope[:, None])
    if real:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    return PeriodicField(lattice, coeffs, rank, real=real)
