"""
Real-quasimomentum band structure over the Brillouin zone [-π, π]^d
and flat-band detection.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import eigh

from spectral.errors import DomainError, IntegrityError, ShapeError
from spectral.fourier_core import Lattice, PeriodicField
from spectral.operator_assembly import assemble
from utils.log_setup import get_logger

logger = get_logger('bloch_analysis')

HERMITIAN_TOL = 1e-8
DEFAULT_GRID_POINTS = 33


def default_workers() -> int:
    try:
        return max(1, int(os.getenv('BLOCH_WORKERS', '1')))
    except ValueError:
        return 1


def brillouin_grid(d: int, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform tensor grid on [-π, π]^d, endpoints included, shape (points**d, d)."""
    if d < 1 or points < 1:
        raise DomainError(f"grid needs d >= 1 and points >= 1, got d={d}, points={points}")
    axis = np.linspace(-np.pi, np.pi, points)
    mesh = np.meshgrid(*([axis] * d), indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class BandTable:
    k_grid: np.ndarray
    eigenvalues: np.ndarray
    lattice: Lattice
    band_count: int
    a_name: str = ''
    v_name: str = ''
    hermitian_residual: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        """One row per (k, n, λ_n(k)), in grid order then band order."""
        K, B = self.eigenvalues.shape
        columns = {f"k_{i + 1}": np.repeat(self.k_grid[:, i], B) for i in range(self.k_grid.shape[1])}
        columns['n'] = np.tile(np.arange(B), K)
        columns['lambda'] = self.eigenvalues.ravel()
        return pd.DataFrame(columns)


@dataclass(frozen=True)
class FlatBandReport:
    oscillations: Tuple[float, ...]
    thresholds: Tuple[float, ...]
    flagged: Tuple[int, ...]
    tol: float
    relative: bool

    def to_dict(self) -> dict:
        return {'oscillations': list(self.oscillations), 'thresholds': list(self.thresholds),
                'flagged': list(self.flagged), 'tol': self.tol, 'relative': self.relative}


def _real_k(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k)
    if np.iscomplexobj(k):
        if np.any(k.imag != 0):
            raise DomainError(f"band computation needs real quasimomentum, got {k}")
        k = k.real
    return k.astype(float)


def lowest_eigenvalues(A: Optional[PeriodicField], V: Optional[PeriodicField], lattice: Lattice,
                       k: np.ndarray, B: int, hermitian_tol: float = HERMITIAN_TOL) -> Tuple[np.ndarray, float]:
    """The B lowest eigenvalues of H(k) at one real k, with the Hermitian residual."""
    op = assemble(A, V, _real_k(k), lattice)
    residual = op.hermitian_residual()
    if residual > hermitian_tol:
        logger.error(f"H(k) at k={k} is not Hermitian (residual {residual:.3e})")
        raise IntegrityError(f"H(k) at k={np.asarray(k).tolist()} has Hermitian residual "
                             f"{residual:.3e} > {hermitian_tol:.0e}; complex data flagged real?")
    H = 0.5 * (op.matrix + op.matrix.conj().T)
    values = eigh(H, eigvals_only=True, subset_by_index=[0, B - 1])
    return values, residual


def compute_bands(A: Optional[PeriodicField], V: Optional[PeriodicField], lattice: Lattice,
                  k_grid: np.ndarray, B: int, workers: Optional[int] = None,
                  hermitian_tol: float = HERMITIAN_TOL) -> BandTable:
    k_grid = np.atleast_2d(_real_k(k_grid))
    if k_grid.shape[1] != lattice.d:
        raise ShapeError(f"k-grid has {k_grid.shape[1]} columns, lattice d={lattice.d}")
    if B < 1 or B > lattice.size:
        raise DomainError(f"band count B={B} must lie in [1, {lattice.size}]")
    workers = workers or default_workers()
    logger.info(f"Computing {B} bands on {len(k_grid)} k-points, lattice d={lattice.d} N={lattice.N}, "
                f"workers={workers}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda k: lowest_eigenvalues(A, V, lattice, k, B, hermitian_tol), k_grid))
    eigenvalues = np.array([r[0] for r in results])
    residual = max(r[1] for r in results)
    return BandTable(k_grid, eigenvalues, lattice, B,
                     A.name if A is not None else '', V.name if V is not None else '', residual)


def detect_flat_bands(table: BandTable, tol: float = 1e-3, relative: bool = True) -> FlatBandReport:
    """Flag band n when max_k λ_n - min_k λ_n < tol (scaled by max(1, max|λ_n|) if relative)."""
    if table.eigenvalues.size == 0:
        raise DomainError("flat-band detection needs a nonempty band table")
    values = table.eigenvalues
    oscillations = values.max(axis=0) - values.min(axis=0)
    if relative:
        thresholds = tol * np.maximum(1.0, np.abs(values).max(axis=0))
    else:
        thresholds = np.full(values.shape[1], float(tol))
    flagged = tuple(int(n) for n in np.flatnonzero(oscillations < thresholds))
    if flagged:
        logger.warning(f"Flat bands flagged: {flagged} (tol={tol}, relative={relative})")
    return FlatBandReport(tuple(oscillations.tolist()), tuple(thresholds.tolist()), flagged,
                          float(tol), relative)


def band_gap(table: BandTable, n: int, k_index: int) -> float:
    """λ_{n+1}(k) - λ_n(k) at one grid point (bands counted from 0)."""
    if not 0 <= n < table.band_count - 1:
        raise DomainError(f"gap needs 0 <= n < {table.band_count - 1}, got {n}")
    row = table.eigenvalues[k_index]
    return float(row[n + 1] - row[n])


@dataclass(frozen=True)
class TruncationDrift:
    cutoffs: Tuple[int, ...]
    eigenvalues: Tuple[Tuple[float, ...], ...]
    drifts: Tuple[float, ...]


def truncation_drift(potentials: Callable[[Lattice], Tuple[Optional[PeriodicField], Optional[PeriodicField]]],
                     k: Sequence[float], cutoffs: Sequence[int], B: int) -> TruncationDrift:
    """Eigenvalue drift max_n |λ_n(N_{i+1}) - λ_n(N_i)| between consecutive cutoffs at fixed k.

    potentials(lattice) returns (A, V) on that lattice.
    """
    k = np.atleast_1d(_real_k(k))
    rows: List[np.ndarray] = []
    for N in cutoffs:
        lattice = Lattice(len(k), int(N))
        A, V = potentials(lattice)
        rows.append(lowest_eigenvalues(A, V, lattice, k, B)[0])
    drifts = tuple(float(np.max(np.abs(b - a))) for a, b in zip(rows, rows[1:]))
    logger.info(f"Truncation drift at k={k.tolist()} over N={list(cutoffs)}: {drifts}")
    return TruncationDrift(tuple(int(N) for N in cutoffs),
                           tuple(tuple(r.tolist()) for r in rows), drifts)
