"""
Complex-quasimomentum lower bounds and the dual-space parametrix.

k = 2π(β + iρ)e. For large ρ, H(k) and H(k)Λ_ρ^{-1} stay injective; this module
measures that through σ_min scans, and builds the covering of dual space by
ρ^δ-boxes, the local approximate inverses R_{ρ,j} and the global parametrix
R_ρ = Σ_j φ_j R_{ρ,j} ψ_j with residual T_ρ = R_ρ H(k)Λ_ρ^{-1} - I.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import lu_factor, lu_solve, norm, pinv, svdvals
from scipy.sparse.linalg import LinearOperator, eigsh

from spectral.bloch_analysis import default_workers
from spectral.dbar_model import exp_field, symbol_gauge
from spectral.errors import ClassificationError, DomainError, RankError, ShapeError
from spectral.fourier_core import Lattice, PeriodicField, lambda_weights, sobolev_norm
from spectral.operator_assembly import (
    AssembledOperator,
    ComplexQuasimomentum,
    assemble,
    precondition,
    symbol_table,
)
from utils.log_setup import get_logger

logger = get_logger('thomas_engine')

DENSE_LIMIT = 4000
FIT_DISCARD = 0.2
LOCAL_MODES = ('far', 'near-direct', 'near-model')


# smallest singular values

@dataclass(frozen=True)
class SigmaMin:
    value: float
    method: str


def _shift_invert_sigma_min(M: np.ndarray) -> float:
    """σ_min from the largest eigenvalue of (M^H M)^{-1}, applied through one LU factorization."""
    n = M.shape[0]
    lu, piv = lu_factor(M, check_finite=False)
    if np.any(np.diag(lu) == 0):
        return 0.0

    def matvec(y):
        # (M^H M)^{-1} y = M^{-1} M^{-H} y
        return lu_solve((lu, piv), lu_solve((lu, piv), y, trans=2))

    op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    mu = eigsh(op, k=1, which='LM', v0=np.ones(n, dtype=complex), tol=0,
               return_eigenvectors=False)
    return float(1.0 / np.sqrt(np.max(np.abs(mu))))


def sigma_min(M, method: str = 'auto', dense_limit: int = DENSE_LIMIT) -> SigmaMin:
    """Smallest singular value of a square matrix (or AssembledOperator).

    'dense-svd' uses the full singular value list; 'shift-invert' runs Lanczos on
    (M^H M)^{-1}. 'auto' picks dense below dense_limit.
    """
    matrix = M.matrix if isinstance(M, AssembledOperator) else np.asarray(M)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"σ_min needs a square matrix, got shape {matrix.shape}")
    if method == 'auto':
        method = 'dense-svd' if matrix.shape[0] <= dense_limit else 'shift-invert'
    if method == 'dense-svd':
        value = float(svdvals(matrix, check_finite=False)[-1])
    elif method == 'shift-invert':
        if matrix.shape[0] < 3:
            value = float(svdvals(matrix)[-1])
        else:
            value = _shift_invert_sigma_min(matrix.astype(complex))
    else:
        raise DomainError(f"unknown σ_min method {method!r}")
    return SigmaMin(value, method)


# lower-bound scans

@dataclass(frozen=True)
class EstimateScan:
    e: Tuple[float, ...]
    beta: float
    rhos: Tuple[float, ...]
    sigma_h: Tuple[float, ...]
    sigma_precond: Tuple[float, ...]
    fitted_c: float
    floor: float
    flagged: Tuple[float, ...]
    methods: Tuple[str, ...]
    t_norms: Tuple[float, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        t_norms = self.t_norms if self.t_norms else (float('nan'),) * len(self.rhos)
        return pd.DataFrame({'rho': self.rhos, 'sigma_min_H': self.sigma_h,
                             'sigma_min_precond': self.sigma_precond,
                             'fitted_C': [self.fitted_c] * len(self.rhos), 'T_rho_norm': t_norms})


def fit_growth_constant(rhos: Sequence[float], sigmas: Sequence[float],
                        discard: float = FIT_DISCARD) -> float:
    """Least-squares Ĉ in σ ≈ Ĉρ after dropping the smallest floor(discard·n) values of ρ."""
    rhos = np.asarray(rhos, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    drop = int(math.floor(discard * len(rhos)))
    order = np.argsort(rhos)[drop:]
    r, s = rhos[order], sigmas[order]
    return float(np.dot(r, s) / np.dot(r, r))


def _check_rhos(rho_list: Sequence[float]) -> Tuple[float, ...]:
    rhos = tuple(float(r) for r in rho_list)
    if not rhos or any(r <= 0 for r in rhos) or any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise DomainError(f"ρ list must be positive and strictly ascending, got {list(rhos)}")
    return rhos


def thomas_scan(A: Optional[PeriodicField], V: Optional[PeriodicField], e: Sequence[float],
                beta: float, rho_list: Sequence[float], lattice: Lattice, floor: float = 1e-6,
                workers: Optional[int] = None, method: str = 'auto') -> EstimateScan:
    """σ_min of H(k) and H(k)Λ_ρ^{-1} along k = 2π(β + iρ)e."""
    rhos = _check_rhos(rho_list)
    ks = [ComplexQuasimomentum(tuple(e), beta, rho) for rho in rhos]
    logger.info(f"Thomas scan e={tuple(e)} β={beta} ρ={list(rhos)} on d={lattice.d} N={lattice.N}")

    def one(k: ComplexQuasimomentum):
        op = assemble(A, V, k, lattice)
        plain = sigma_min(op, method)
        pre = sigma_min(precondition(op), method)
        return plain, pre

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        results = list(pool.map(one, ks))
    sigma_h = tuple(r[0].value for r in results)
    sigma_p = tuple(r[1].value for r in results)
    flagged = tuple(rho for rho, s in zip(rhos, sigma_p) if s < floor)
    if flagged:
        logger.warning(f"σ_min(HΛ^-1) fell below floor {floor} at ρ={list(flagged)}")
    fitted = fit_growth_constant(rhos, sigma_h)
    return EstimateScan(ks[0].e, float(beta), rhos, sigma_h, sigma_p, fitted, float(floor),
                        flagged, tuple(r[0].method for r in results))


@dataclass(frozen=True)
class EstimateCheck:
    rho: float
    constant: float
    min_ratio: float
    holds: bool
    samples: int
    seed: int


def estimate_check(A: Optional[PeriodicField], V: Optional[PeriodicField], k: ComplexQuasimomentum,
                   lattice: Lattice, constant: float, samples: int = 32, seed: int = 0) -> EstimateCheck:
    """Check ||H(k)û|| >= C(ρ||û|| + ||û||_{H^1}) on seeded random polynomials."""
    op = assemble(A, V, k, lattice)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        coeffs = rng.standard_normal(lattice.size) + 1j * rng.standard_normal(lattice.size)
        u = PeriodicField(lattice, coeffs, 'scalar')
        lhs = float(np.linalg.norm(op.matrix @ coeffs))
        rhs = k.rho * sobolev_norm(u, 0).norm + sobolev_norm(u, 1).norm
        ratios.append(lhs / rhs)
    min_ratio = float(min(ratios))
    return EstimateCheck(k.rho, float(constant), min_ratio, min_ratio >= constant, samples, seed)


# zero set and covering

@dataclass(frozen=True, eq=False)
class ZeroSetSlab:
    rho: float
    beta: float
    e: Tuple[float, ...]
    thickness: float
    exact: Tuple[Tuple[int, ...], ...]
    near: Tuple[Tuple[int, ...], ...]
    near_indices: np.ndarray


def zero_set(rho: float, beta: float, e: Sequence[float], lattice: Lattice,
             thickness: float) -> ZeroSetSlab:
    """Exact zeros {(m+βe)^2 = ρ^2, e·(m+βe) = 0} and the slab of thickness t around them."""
    if thickness < 0:
        raise DomainError(f"thickness must be >= 0, got {thickness}")
    e = np.asarray(e, dtype=float)
    shifted = lattice.modes.astype(float) + beta * e[None, :]
    radial = np.sum(shifted ** 2, axis=1) - rho ** 2
    along = shifted @ e
    eps = 64 * np.finfo(float).eps * max(1.0, rho ** 2)
    exact = (np.abs(radial) <= eps) & (np.abs(along) <= eps)
    near = (np.abs(along) <= thickness) & (np.abs(radial) <= thickness * rho)
    near = near | exact
    to_modes = lambda mask: tuple(tuple(int(x) for x in m) for m in lattice.modes[mask])
    return ZeroSetSlab(float(rho), float(beta), tuple(e.tolist()), float(thickness),
                       to_modes(exact), to_modes(near), np.flatnonzero(near))


@dataclass(frozen=True, eq=False)
class Patch:
    index: int
    lo: Tuple[int, ...]
    hi: Tuple[int, ...]
    center: Tuple[int, ...]
    classification: str
    psi_indices: np.ndarray
    phi_indices: np.ndarray

    @property
    def diameter(self) -> int:
        return max(h - l for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True, eq=False)
class DualCover:
    rho: float
    delta: float
    side: int
    widen: int
    lattice: Lattice
    patches: Tuple[Patch, ...]

    def psi(self, j: int) -> np.ndarray:
        out = np.zeros(self.lattice.size)
        out[self.patches[j].psi_indices] = 1.0
        return out

    def phi(self, j: int) -> np.ndarray:
        out = np.zeros(self.lattice.size)
        out[self.patches[j].phi_indices] = 1.0
        return out

    def partition_sum(self) -> np.ndarray:
        total = np.zeros(self.lattice.size)
        for p in self.patches:
            total[p.psi_indices] += 1
        return total

    def multiplicity(self) -> int:
        total = np.zeros(self.lattice.size, dtype=int)
        for p in self.patches:
            total[p.phi_indices] += 1
        return int(total.max())

    def near_patches(self) -> List[int]:
        return [p.index for p in self.patches if p.classification == 'near']


def _box_mask(modes: np.ndarray, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
    return np.all((modes >= np.asarray(lo)) & (modes <= np.asarray(hi)), axis=1)


def build_cover(rho: float, delta: float, lattice: Lattice, slab: ZeroSetSlab) -> DualCover:
    """Tile the lattice box by cubes of side floor(ρ^δ); φ_j widens tile j by floor(side/2)."""
    if not 0 < delta < 1:
        raise DomainError(f"δ must lie in (0, 1), got {delta}")
    if not rho > 0:
        raise DomainError(f"ρ must be positive, got {rho}")
    radius = rho ** delta
    side = max(1, int(math.floor(radius)))
    widen = side // 2
    N = lattice.N
    starts = range(-N, N + 1, side)
    near_modes = lattice.modes[slab.near_indices]
    patches = []
    for index, lo in enumerate(itertools.product(starts, repeat=lattice.d)):
        hi = tuple(min(a + side - 1, N) for a in lo)
        if near_modes.size:
            gap = np.maximum(np.maximum(np.asarray(lo) - near_modes, near_modes - np.asarray(hi)), 0)
            distance = float(np.min(np.max(gap, axis=1)))
        else:
            distance = math.inf
        center = tuple((a + b) // 2 for a, b in zip(lo, hi))
        psi = np.flatnonzero(_box_mask(lattice.modes, lo, hi))
        phi_lo = tuple(max(-N, a - widen) for a in lo)
        phi_hi = tuple(min(N, b + widen) for b in hi)
        phi = np.flatnonzero(_box_mask(lattice.modes, phi_lo, phi_hi))
        patches.append(Patch(index, tuple(lo), hi, center,
                             'near' if distance <= radius else 'far', psi, phi))
    cover = DualCover(float(rho), float(delta), side, widen, lattice, tuple(patches))
    logger.info(f"Cover at ρ={rho}, δ={delta}: side {side}, {len(patches)} patches, "
                f"{len(cover.near_patches())} near, multiplicity {cover.multiplicity()}")
    return cover


# local inverses and the parametrix

@dataclass(frozen=True, eq=False)
class LocalInverse:
    patch: int
    mode: str
    matrix: np.ndarray
    phi_indices: np.ndarray
    psi_indices: np.ndarray
    norm: float
    residual: float
    details: Dict[str, float] = field(default_factory=dict)


def _preconditioned(op: AssembledOperator) -> AssembledOperator:
    if op.quasimomentum is None:
        raise DomainError("the parametrix needs an operator assembled at a ComplexQuasimomentum")
    return precondition(op)


def principal_diagonal(op: AssembledOperator) -> np.ndarray:
    """H_0(k, m)/Λ_ρ(m), the principal symbol of H(k)Λ_ρ^{-1}."""
    return symbol_table(op.k, op.lattice.modes) / lambda_weights(op.lattice, op.rho)


def _local_residual(R: np.ndarray, P: np.ndarray, patch: Patch) -> float:
    """||R_j P[Φ, Ψ] - I[Φ, Ψ]||_2."""
    block = P[np.ix_(patch.phi_indices, patch.psi_indices)]
    eye = (patch.phi_indices[:, None] == patch.psi_indices[None, :]).astype(float)
    return float(norm(R @ block - eye, 2))


def _neumann_inverse(block: np.ndarray, diagonal: np.ndarray, order: int) -> Tuple[np.ndarray, float]:
    """Σ_{n<=order} (-D^{-1}E)^n D^{-1} for block = D + E."""
    E = block - np.diag(diagonal)
    X = -E / diagonal[:, None]
    R = np.diag(1.0 / diagonal).astype(complex)
    term = R.copy()
    for _ in range(order):
        term = X @ term
        R = R + term
    return R, float(norm(X, 2))


def _direct_inverse(block: np.ndarray, rcond: float, j: int) -> np.ndarray:
    s = svdvals(block)
    if s[-1] <= rcond * s[0]:
        logger.error(f"Patch {j}: compressed block singular (σ_min/σ_max = {s[-1] / s[0]:.3e})")
        raise RankError(f"compressed block of patch {j} is singular "
                        f"(σ_min/σ_max = {s[-1] / s[0]:.3e} <= {rcond:.0e})", patch=j)
    return pinv(block)


def _convolution_block(f: PeriodicField, modes: np.ndarray) -> np.ndarray:
    """Matrix of multiplication by f on the given modes: entry (a, b) = f̂(m_a - m_b)."""
    diff = (modes[:, None, :] - modes[None, :, :]).reshape(-1, modes.shape[1])
    return f.coeffs[f.lattice.indices_of(diff)].reshape(len(modes), len(modes))


def _model_inverse(op: AssembledOperator, patch: Patch) -> Tuple[np.ndarray, Dict[str, float]]:
    """Gauge-reduced inverse of the symbol linearized at the patch center.

    Near c, H ≈ H_0(c) + w·(m - c) + q with w = 4π(2πc + k) and q = 2(2πc + k)·A.
    Conjugating by e^h with (w·ξ)ĥ(ξ) = q̂(ξ) leaves the diagonal H_0(c) + q̂(0) + w·(m - c).
    """
    lattice = op.lattice
    if lattice.d != 2:
        raise DomainError(f"near-model inverse is restricted to d=2, got d={lattice.d}")
    c = np.asarray(patch.center, dtype=float)
    w = 4 * np.pi * (2 * np.pi * c + op.k)
    A = op.potential_a
    q_coeffs = np.zeros(lattice.size, dtype=complex)
    if A is not None:
        q_coeffs = A.coeffs @ (w / (2 * np.pi))
    q = PeriodicField(lattice, q_coeffs, 'scalar', name='linearized-coupling')
    h, obstructed = symbol_gauge(q, lattice.modes.astype(float) @ w)
    leftover = obstructed.copy()
    leftover[lattice.zero_index] = False

    phi_modes = lattice.modes[patch.phi_indices]
    width = int(np.max(phi_modes.max(axis=0) - phi_modes.min(axis=0))) if len(phi_modes) > 1 else 1
    span = Lattice(2, max(1, width))
    c_plus = _convolution_block(exp_field(h, span), phi_modes)
    c_minus = _convolution_block(exp_field(-h, span), phi_modes)

    h0_c = complex(symbol_table(op.k, c[None, :])[0])
    mu = h0_c + q_coeffs[lattice.zero_index] + (phi_modes - c) @ w
    if np.min(np.abs(mu)) == 0:
        raise RankError(f"model diagonal of patch {patch.index} vanishes", patch=patch.index)
    lam_c = float(np.sqrt(op.rho ** 2 + c @ c))
    R = lam_c * (c_minus * (1.0 / mu)[None, :]) @ c_plus

    h0_phi = symbol_table(op.k, phi_modes)
    details = {
        'model_obstruction': float(np.linalg.norm(q_coeffs[leftover])),
        'linearization_error': float(np.max(np.abs(h0_phi - h0_c - (phi_modes - c) @ w))),
    }
    return R, details


def local_inverse(op: AssembledOperator, cover: DualCover, j: int, mode: str,
                  order: int = 2, rcond: float = 1e-12) -> LocalInverse:
    """Approximate inverse R_{ρ,j} of H(k)Λ_ρ^{-1} on the fattened patch Φ_j."""
    if mode not in LOCAL_MODES:
        raise DomainError(f"unknown local-inverse mode {mode!r}, expected one of {LOCAL_MODES}")
    if not 0 <= j < len(cover.patches):
        raise DomainError(f"patch index {j} outside [0, {len(cover.patches)})")
    patch = cover.patches[j]
    expected = 'far' if mode == 'far' else 'near'
    if patch.classification != expected:
        raise ClassificationError(f"patch {j} is {patch.classification}, cannot use mode {mode!r}")
    P = _preconditioned(op)
    phi = patch.phi_indices
    block = P.matrix[np.ix_(phi, phi)]
    details: Dict[str, float] = {}
    if mode == 'far':
        R, ratio = _neumann_inverse(block, principal_diagonal(P)[phi], order)
        details['neumann_ratio'] = ratio
    elif mode == 'near-direct':
        R = _direct_inverse(block, rcond, j)
    else:
        R, details = _model_inverse(P, patch)
        try:
            direct = _direct_inverse(block, rcond, j)
            details['model_vs_direct'] = float(norm(R - direct, 2) / norm(direct, 2))
            details['direct_residual'] = _local_residual(direct, P.matrix, patch)
        except RankError:
            details['model_vs_direct'] = float('nan')
            details['direct_residual'] = float('nan')
    return LocalInverse(j, mode, R, phi, patch.psi_indices, float(norm(R, 2)),
                        _local_residual(R, P.matrix, patch), details)


def local_inverses_for(op: AssembledOperator, cover: DualCover, near_mode: str = 'near-direct',
                       order: int = 2, workers: Optional[int] = None) -> List[LocalInverse]:
    """One local inverse per patch, the mode picked from the patch classification."""
    if near_mode not in ('near-direct', 'near-model'):
        raise DomainError(f"near patches take 'near-direct' or 'near-model', got {near_mode!r}")

    def one(patch: Patch) -> LocalInverse:
        mode = 'far' if patch.classification == 'far' else near_mode
        return local_inverse(op, cover, patch.index, mode, order)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        return list(pool.map(one, cover.patches))


@dataclass(frozen=True)
class ParametrixReport:
    rho: float
    local_norms: Tuple[float, ...]
    local_residuals: Tuple[float, ...]
    t_norm: float
    r_norm: float
    multiplicity: int
    modes: Tuple[str, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'rho': [self.rho] * len(self.modes),
                             'patch': list(range(len(self.modes))), 'mode': list(self.modes),
                             'R_local_norm': list(self.local_norms),
                             'T_local_norm': list(self.local_residuals)})


def assemble_parametrix(op: AssembledOperator, cover: DualCover,
                        local_inverses: Sequence[LocalInverse]) -> ParametrixReport:
    """R_ρ = Σ_j φ_j R_{ρ,j} ψ_j and ||T_ρ|| = ||R_ρ H(k)Λ_ρ^{-1} - I||_2."""
    if len(local_inverses) != len(cover.patches) or any(
            li.patch != i for i, li in enumerate(local_inverses)):
        raise ShapeError(f"need one local inverse per patch in patch order "
                         f"({len(cover.patches)} patches, {len(local_inverses)} inverses)")
    P = _preconditioned(op).matrix
    size = op.lattice.size
    R = np.zeros((size, size), dtype=complex)
    for li in local_inverses:
        columns = np.searchsorted(li.phi_indices, li.psi_indices)
        R[np.ix_(li.phi_indices, li.psi_indices)] += li.matrix[:, columns]
    T = R @ P - np.eye(size)
    report = ParametrixReport(cover.rho, tuple(li.norm for li in local_inverses),
                              tuple(li.residual for li in local_inverses),
                              float(norm(T, 2)), float(norm(R, 2)), cover.multiplicity(),
                              tuple(li.mode for li in local_inverses))
    logger.info(f"Parametrix at ρ={cover.rho}: ||T||={report.t_norm:.3e}, ||R||={report.r_norm:.3e}, "
                f"max local residual {max(report.local_residuals):.3e}")
    return report


def parametrix_run(A: Optional[PeriodicField], V: Optional[PeriodicField], k: ComplexQuasimomentum,
                   lattice: Lattice, delta: float, thickness: float = 1.0,
                   near_mode: str = 'near-direct', order: int = 2,
                   workers: Optional[int] = None) -> Tuple[DualCover, ParametrixReport]:
    """Zero set, cover, local inverses and parametrix at one complex quasimomentum."""
    op = assemble(A, V, k, lattice, precondition_lambda=True)
    slab = zero_set(k.rho, k.beta, k.e, lattice, thickness)
    cover = build_cover(k.rho, delta, lattice, slab)
    inverses = local_inverses_for(op, cover, near_mode, order, workers)
    return cover, assemble_parametrix(op, cover, inverses)
