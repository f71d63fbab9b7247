"""
Fourier-basis assembly of H(k) = (D + k + A)^2 + V on the torus.

D_j = -i d/dx_j, so D e^{2πi m·x} = 2πm e^{2πi m·x}. Entries:
    H[m, n] = δ_mn (2πm + k)^2 + (2π(m+n) + 2k)·Â(m-n) + (A·A)^(m-n) + V̂(m-n)
An independent quadrature path (apply_oracle) certifies the matrix.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft

from spectral.errors import DomainError, IntegrityError, ShapeError
from spectral.fourier_core import (
    Lattice,
    PeriodicField,
    coeffs_to_grid,
    convolve,
    full_product,
    grid_frequencies,
    grid_to_coeffs,
    lambda_weights,
    resample,
    sobolev_norm,
)
from utils.log_setup import get_logger

logger = get_logger('operator_assembly')

UNIT_TOL = 1e-12
SYMBOL_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class ComplexQuasimomentum:
    """k = 2π(β + iρ)e for a unit direction e."""
    e: Tuple[float, ...]
    beta: float
    rho: float

    def __post_init__(self):
        e = tuple(float(x) for x in self.e)
        object.__setattr__(self, 'e', e)
        norm = float(np.sqrt(sum(x * x for x in e)))
        if not e or abs(norm - 1.0) > UNIT_TOL:
            raise DomainError(f"direction e={e} must have unit length (|e|={norm!r})")
        if self.rho < 0:
            raise DomainError(f"height ρ must be nonnegative, got {self.rho}")

    @property
    def dimension(self) -> int:
        return len(self.e)

    @property
    def vector(self) -> np.ndarray:
        return 2 * np.pi * (self.beta + 1j * self.rho) * np.asarray(self.e, dtype=float)

    @property
    def is_real(self) -> bool:
        return self.rho == 0


Quasimomentum = Union[ComplexQuasimomentum, Sequence[complex], np.ndarray]


def quasimomentum_vector(k: Quasimomentum) -> np.ndarray:
    if isinstance(k, ComplexQuasimomentum):
        return k.vector
    return np.atleast_1d(np.asarray(k, dtype=complex))


def symbol_table(k: Quasimomentum, modes: np.ndarray) -> np.ndarray:
    """(2πm + k)^2 as a complex square (not a modulus) for each row of modes."""
    z = 2 * np.pi * np.atleast_2d(modes).astype(float) + quasimomentum_vector(k)[None, :]
    return np.sum(z * z, axis=1)


def symbol_closed_form(k: ComplexQuasimomentum, m: Sequence[int]) -> complex:
    """4π^2 [(m+βe)^2 - ρ^2 + 2iρ e·(m+βe)]."""
    shifted = np.asarray(m, dtype=float) + k.beta * np.asarray(k.e)
    return complex(4 * np.pi ** 2 * (shifted @ shifted - k.rho ** 2
                                     + 2j * k.rho * (np.asarray(k.e) @ shifted)))


def symbol_h0(k: Quasimomentum, m: Sequence[int]) -> complex:
    value = complex(symbol_table(k, np.array([m]))[0])
    if isinstance(k, ComplexQuasimomentum):
        other = symbol_closed_form(k, m)
        scale = max(abs(value), abs(other), 1.0)
        if abs(value - other) > SYMBOL_AGREEMENT_TOL * scale:
            logger.error(f"Symbol forms disagree at m={tuple(m)}: {value} vs {other}")
            raise IntegrityError(f"principal symbol forms disagree at m={tuple(m)}")
    return value


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    lattice: Lattice
    matrix: np.ndarray
    k: np.ndarray
    quasimomentum: Optional[ComplexQuasimomentum] = None
    preconditioned: bool = False
    potential_a: Optional[PeriodicField] = field(default=None, repr=False)
    potential_v: Optional[PeriodicField] = field(default=None, repr=False)
    square_loss: float = 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def a_name(self) -> str:
        return self.potential_a.name if self.potential_a is not None else ''

    @property
    def v_name(self) -> str:
        return self.potential_v.name if self.potential_v is not None else ''

    @property
    def rho(self) -> Optional[float]:
        return self.quasimomentum.rho if self.quasimomentum is not None else None

    def entry(self, m: Sequence[int], n: Sequence[int]) -> complex:
        return complex(self.matrix[self.lattice.index_of(m), self.lattice.index_of(n)])

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def bandwidth(self) -> int:
        """Largest sup-norm mode distance |m - n| over nonzero off-diagonal entries."""
        rows, cols = np.nonzero(self.matrix)
        if rows.size == 0:
            return 0
        modes = self.lattice.modes
        return int(np.max(np.abs(modes[rows] - modes[cols])))

    def apply(self, u: PeriodicField) -> np.ndarray:
        return self.matrix @ u.coeffs


def _check_potentials(A: Optional[PeriodicField], V: Optional[PeriodicField], lattice: Lattice):
    if A is not None and (A.lattice != lattice or A.rank != 'vector'):
        raise ShapeError(f"A must be a vector field on {lattice}, got {A.rank} on {A.lattice}")
    if V is not None and (V.lattice != lattice or V.rank != 'scalar'):
        raise ShapeError(f"V must be a scalar field on {lattice}, got {V.rank} on {V.lattice}")


def _difference_table(u: PeriodicField) -> np.ndarray:
    """u(m - n) for every pair of lattice modes (last axis holds components)."""
    lattice = u.lattice
    wide = resample(u, lattice.doubled())
    flat = wide.coeffs.reshape(wide.lattice.size, -1)
    return flat[lattice.difference_index]


def precondition(op: AssembledOperator, rho: Optional[float] = None) -> AssembledOperator:
    """Right-multiply by Λ_ρ^{-1}."""
    if op.preconditioned:
        return op
    rho = op.rho if rho is None else rho
    if not rho:
        raise DomainError("preconditioning needs ρ > 0 (Λ_ρ degenerates at m=0 when ρ=0)")
    matrix = op.matrix / lambda_weights(op.lattice, rho)[None, :]
    matrix.setflags(write=False)
    return AssembledOperator(op.lattice, matrix, op.k, op.quasimomentum, True,
                             op.potential_a, op.potential_v, op.square_loss)


def assemble(A: Optional[PeriodicField], V: Optional[PeriodicField], k: Quasimomentum,
             lattice: Lattice, precondition_lambda: bool = False) -> AssembledOperator:
    """Matrix of H(k) (optionally H(k)Λ_ρ^{-1}) in the truncated Fourier basis."""
    _check_potentials(A, V, lattice)
    kv = quasimomentum_vector(k)
    if kv.shape != (lattice.d,):
        raise ShapeError(f"quasimomentum has {kv.shape[0]} components, lattice d={lattice.d}")
    if precondition_lambda:
        if not isinstance(k, ComplexQuasimomentum):
            raise DomainError("preconditioning needs a ComplexQuasimomentum carrying ρ")
        if k.rho == 0:
            raise DomainError("preconditioning with ρ=0 is undefined")

    modes = lattice.modes.astype(float)
    matrix = np.diag(symbol_table(kv, lattice.modes)).astype(complex)
    square_loss = 0.0
    if A is not None and not A.is_zero():
        a_diff = _difference_table(A)
        for j in range(lattice.d):
            weight = 2 * np.pi * (modes[:, j][:, None] + modes[:, j][None, :]) + 2 * kv[j]
            matrix += weight * a_diff[..., j]
        square = full_product(A, A)
        inside = np.all(np.abs(square.lattice.modes) <= lattice.N, axis=1)
        square_loss = float(np.linalg.norm(square.coeffs[~inside]))
        matrix += square.coeffs[lattice.difference_index]
    if V is not None and not V.is_zero():
        matrix += _difference_table(V)[..., 0]

    matrix.setflags(write=False)
    op = AssembledOperator(lattice, matrix, kv, k if isinstance(k, ComplexQuasimomentum) else None,
                           False, A, V, square_loss)
    logger.info(f"Assembled H(k) size {op.size} for k={np.round(kv, 6).tolist()} "
                f"A={op.a_name or '0'} V={op.v_name or '0'} square_loss={square_loss:.3e}")
    return precondition(op) if precondition_lambda else op


def apply_oracle(A: Optional[PeriodicField], V: Optional[PeriodicField], k: Quasimomentum,
                 u: PeriodicField) -> PeriodicField:
    """Apply (D+k+A)^2 + V to u pointwise on a (4N+1)^d grid and re-expand.

    Every intermediate is a trigonometric polynomial of degree <= 2N before the last
    product, so the in-band result is free of aliasing.
    """
    lattice = u.lattice
    _check_potentials(A, V, lattice)
    if u.rank != 'scalar':
        raise ShapeError(f"oracle acts on scalar fields, got {u.rank}")
    kv = quasimomentum_vector(k)
    d = lattice.d
    P = 4 * lattice.N + 1
    freq = grid_frequencies(P)

    def shifted_derivative(values: np.ndarray, j: int) -> np.ndarray:
        # (D_j + k_j) applied through exact coefficients on the grid
        table = sfft.fftn(values, norm="forward")
        shape = [1] * d
        shape[j] = P
        table = table * (2 * np.pi * freq.reshape(shape) + kv[j])
        return sfft.ifftn(table, norm="forward")

    u_grid = coeffs_to_grid(lattice, u.coeffs, P)
    a_grid = coeffs_to_grid(lattice, A.coeffs, P) if A is not None else np.zeros((P,) * d + (d,))
    result = np.zeros((P,) * d, dtype=complex)
    for j in range(d):
        first = shifted_derivative(u_grid, j) + a_grid[..., j] * u_grid
        result += shifted_derivative(first, j) + a_grid[..., j] * first
    if V is not None:
        result += coeffs_to_grid(lattice, V.coeffs, P) * u_grid
    coeffs = grid_to_coeffs(result, lattice)
    return PeriodicField(lattice, coeffs, 'scalar', name='oracle')


def gauge_shift(A: Optional[PeriodicField], chi: PeriodicField) -> PeriodicField:
    """A + ∇χ with (∇χ)_j(m) = 2πi m_j χ(m)."""
    if chi.rank != 'scalar' or not chi.real:
        raise ShapeError("gauge function χ must be a real-flagged scalar field")
    lattice = chi.lattice
    grad = 2j * np.pi * lattice.modes.astype(float) * chi.coeffs[:, None]
    base = A.coeffs if A is not None else np.zeros_like(grad)
    if A is not None and (A.lattice != lattice or A.rank != 'vector'):
        raise ShapeError(f"A must be a vector field on {lattice}")
    real = A.real if A is not None else True
    name = f"{A.name if A is not None and A.name else '0'}+grad({chi.name or 'chi'})"
    return PeriodicField(lattice, base + grad, 'vector', real=real, name=name)


@dataclass(frozen=True)
class RelativeBoundReport:
    """Sampled lower estimate of C_ε in ||Vu|| <= C_ε ||u|| + ε ||u||_{H^1}."""
    eps_grid: Tuple[float, ...]
    constants: Tuple[float, ...]
    family: str
    trials: int
    seed: int
    max_ratio: float


def _sample_unit_h1(lattice: Lattice, rng: np.random.Generator) -> PeriodicField:
    width = rng.uniform(0.5, lattice.N + 0.5)
    envelope = np.exp(-lattice.norms_squared / (2 * width ** 2))
    coeffs = (rng.standard_normal(lattice.size) + 1j * rng.standard_normal(lattice.size)) * envelope
    u = PeriodicField(lattice, coeffs, 'scalar')
    return u.scale(1.0 / sobolev_norm(u, 1).norm)


def estimate_relative_bound(V: PeriodicField, eps_grid: Sequence[float], trials: int,
                            seed: int = 0) -> RelativeBoundReport:
    """Smallest C such that every sampled unit-H^1 polynomial satisfies the bound.

    Samples are drawn from one seeded stream, so more trials only add samples and the
    estimate is monotone non-decreasing in trials.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if V.rank != 'scalar':
        raise ShapeError(f"relative bound needs a scalar potential, got {V.rank}")
    eps = np.asarray(list(eps_grid), dtype=float)
    rng = np.random.default_rng(seed)
    best = np.zeros_like(eps)
    max_ratio = 0.0
    for _ in range(trials):
        u = _sample_unit_h1(V.lattice, rng)
        product = convolve(V, u)
        vu = float(np.hypot(np.linalg.norm(product.field.coeffs), product.truncation_loss))
        l2 = sobolev_norm(u, 0).norm
        max_ratio = max(max_ratio, vu / l2)
        # ||u||_{H^1} = 1 for every sample
        best = np.maximum(best, np.maximum(0.0, (vu - eps) / l2))
    report = RelativeBoundReport(tuple(eps.tolist()), tuple(best.tolist()),
                                 'gaussian-envelope trigonometric polynomials, unit H^1',
                                 trials, seed, max_ratio)
    logger.info(f"Relative bound for V={V.name or '<anon>'}: eps={report.eps_grid} C={report.constants}")
    return report
