"""
Truncated Fourier-lattice arithmetic on the torus T^d.
Mode sets, periodic fields, truncated products, Sobolev norms and the Λ_ρ multiplier.
"""

import os
import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.signal import convolve as nd_convolve

from spectral.errors import DomainError, IntegrityError, ShapeError, SizeError
from utils.log_setup import get_logger

logger = get_logger('fourier_core')

DEFAULT_MEMORY_BUDGET_MB = 1024.0
RANKS = ('scalar', 'vector', 'matrix')
SYMMETRY_TOL = 1e-12

Mode = Tuple[int, ...]


def memory_budget_mb() -> float:
    """Dense-matrix budget in MiB, from BLOCH_MEMORY_BUDGET_MB."""
    raw = os.getenv('BLOCH_MEMORY_BUDGET_MB')
    if not raw:
        return DEFAULT_MEMORY_BUDGET_MB
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"Ignoring malformed BLOCH_MEMORY_BUDGET_MB={raw!r}")
        return DEFAULT_MEMORY_BUDGET_MB


def flat_index(modes: np.ndarray, N: int) -> np.ndarray:
    """Lexicographic index of integer modes inside the box of radius N."""
    modes = np.atleast_2d(np.asarray(modes, dtype=np.int64))
    side = 2 * N + 1
    idx = np.zeros(modes.shape[0], dtype=np.int64)
    for i in range(modes.shape[1]):
        idx = idx * side + (modes[:, i] + N)
    return idx


@dataclass(frozen=True)
class Lattice:
    """The box {m in Z^d : max_i |m_i| <= N} in lexicographic order."""
    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or int(self.N) != self.N or self.d < 1 or self.N < 1:
            raise DomainError(f"lattice needs integers d >= 1, N >= 1, got d={self.d}, N={self.N}")

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def size(self) -> int:
        return self.side ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def zero_index(self) -> int:
        return self.size // 2

    @property
    def dense_bytes(self) -> int:
        return self.size * self.size * 16

    @cached_property
    def modes(self) -> np.ndarray:
        axes = np.meshgrid(*([np.arange(-self.N, self.N + 1)] * self.d), indexing='ij')
        modes = np.stack([a.ravel() for a in axes], axis=-1).astype(np.int64)
        modes.setflags(write=False)
        return modes

    @cached_property
    def norms_squared(self) -> np.ndarray:
        values = np.sum(self.modes.astype(float) ** 2, axis=1)
        values.setflags(write=False)
        return values

    @cached_property
    def difference_index(self) -> np.ndarray:
        """Flat index of m_a - m_b inside the doubled box, for every pair (a, b)."""
        wide = 4 * self.N + 1
        idx = np.zeros((self.size, self.size), dtype=np.int64)
        for i in range(self.d):
            col = self.modes[:, i]
            idx = idx * wide + (col[:, None] - col[None, :] + 2 * self.N)
        idx.setflags(write=False)
        return idx

    def doubled(self) -> 'Lattice':
        return Lattice(self.d, 2 * self.N)

    def contains(self, m: Sequence[int]) -> bool:
        return len(m) == self.d and all(abs(int(x)) <= self.N for x in m)

    def index_of(self, m: Sequence[int]) -> int:
        if not self.contains(m):
            raise ShapeError(f"mode {tuple(m)} is not in the lattice d={self.d}, N={self.N}")
        return int(flat_index(np.array([m]), self.N)[0])

    def mode_at(self, i: int) -> Mode:
        return tuple(int(x) for x in self.modes[i])

    def indices_of(self, modes: np.ndarray) -> np.ndarray:
        return flat_index(modes, self.N)


def build_lattice(d: int, N: int, budget_mb: Optional[float] = None) -> Lattice:
    """Build a lattice after checking its dense operator fits the memory budget."""
    lattice = Lattice(d, N)
    budget = memory_budget_mb() if budget_mb is None else budget_mb
    needed_mb = lattice.dense_bytes / 2 ** 20
    if needed_mb > budget:
        logger.error(f"Lattice d={d}, N={N} needs {needed_mb:.1f} MiB, budget {budget:.1f} MiB")
        raise SizeError(f"lattice d={d}, N={N} needs {needed_mb:.1f} MiB of dense storage, "
                        f"budget is {budget:.1f} MiB (BLOCH_MEMORY_BUDGET_MB)")
    logger.info(f"Built lattice d={d}, N={N} with {lattice.size} modes")
    return lattice


@dataclass(frozen=True)
class SobolevReport:
    s: float
    norm: float


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Truncated Fourier representation of a scalar, d-vector or q×q matrix function.

    coeffs has shape (M,), (M, d) or (M, q, q) with rows in lattice order.
    """
    lattice: Lattice
    coeffs: np.ndarray
    rank: str = 'scalar'
    real: bool = False
    mean_zero: bool = False
    smoothness: Optional[float] = None
    name: str = ''

    def __post_init__(self):
        if self.rank not in RANKS:
            raise ShapeError(f"unknown rank {self.rank!r}, expected one of {RANKS}")
        coeffs = np.array(self.coeffs, dtype=complex)
        M = self.lattice.size
        if coeffs.shape[:1] != (M,):
            raise ShapeError(f"expected {M} coefficient rows, got shape {coeffs.shape}")
        if self.rank == 'scalar' and coeffs.ndim != 1:
            raise ShapeError(f"scalar field needs shape ({M},), got {coeffs.shape}")
        if self.rank == 'vector' and coeffs.shape != (M, self.lattice.d):
            raise ShapeError(f"vector field needs shape ({M}, {self.lattice.d}), got {coeffs.shape}")
        if self.rank == 'matrix' and (coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2]):
            raise ShapeError(f"matrix field needs shape ({M}, q, q), got {coeffs.shape}")
        scale = max(1.0, float(np.max(np.abs(coeffs))) if coeffs.size else 0.0)
        if self.real:
            # lexicographic box order puts -m at M-1-i
            asymmetry = float(np.max(np.abs(coeffs - np.conj(coeffs[::-1])))) if coeffs.size else 0.0
            if asymmetry > SYMMETRY_TOL * scale:
                raise IntegrityError(f"field {self.name or '<anon>'} flagged real but "
                                     f"conjugate symmetry fails by {asymmetry:.3e}")
        if self.mean_zero:
            mean = np.abs(coeffs[self.lattice.zero_index])
            if np.max(mean) > SYMMETRY_TOL * scale:
                raise IntegrityError(f"field {self.name or '<anon>'} flagged mean-zero but "
                                     f"has mean of size {float(np.max(mean)):.3e}")
            coeffs[self.lattice.zero_index] = 0
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coeffs', coeffs)

    # construction helpers

    @classmethod
    def zeros(cls, lattice: Lattice, rank: str = 'scalar', q: int = 2, **meta) -> 'PeriodicField':
        shape = {'scalar': (lattice.size,), 'vector': (lattice.size, lattice.d),
                 'matrix': (lattice.size, q, q)}.get(rank)
        if shape is None:
            raise ShapeError(f"unknown rank {rank!r}")
        meta.setdefault('real', True)
        return cls(lattice, np.zeros(shape, dtype=complex), rank, **meta)

    @classmethod
    def constant(cls, lattice: Lattice, value: complex, **meta) -> 'PeriodicField':
        coeffs = np.zeros(lattice.size, dtype=complex)
        coeffs[lattice.zero_index] = value
        meta.setdefault('real', complex(value).imag == 0)
        return cls(lattice, coeffs, 'scalar', **meta)

    @classmethod
    def from_modes(cls, lattice: Lattice, entries: Dict[Mode, object], rank: str = 'scalar',
                   q: int = 2, **meta) -> 'PeriodicField':
        """Build a field from a sparse {mode: value} table; absent modes are zero."""
        base = cls.zeros(lattice, rank, q, real=False)
        coeffs = np.array(base.coeffs)
        for m, value in entries.items():
            coeffs[lattice.index_of(m)] = value
        return cls(lattice, coeffs, rank, **meta)

    @classmethod
    def from_components(cls, components: Sequence['PeriodicField'], **meta) -> 'PeriodicField':
        """Stack d scalar fields into a vector field."""
        lattice = _common_lattice(components)
        if len(components) != lattice.d or any(c.rank != 'scalar' for c in components):
            raise ShapeError(f"vector field needs {lattice.d} scalar components")
        meta.setdefault('real', all(c.real for c in components))
        return cls(lattice, np.stack([c.coeffs for c in components], axis=-1), 'vector', **meta)

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence['PeriodicField']], **meta) -> 'PeriodicField':
        """Assemble a q×q matrix field from a nested list of scalar fields."""
        flat = [f for row in entries for f in row]
        lattice = _common_lattice(flat)
        q = len(entries)
        if any(len(row) != q for row in entries) or any(f.rank != 'scalar' for f in flat):
            raise ShapeError("matrix field needs a square table of scalar fields")
        coeffs = np.stack([np.stack([f.coeffs for f in row], axis=-1) for row in entries], axis=-2)
        meta.setdefault('real', all(f.real for f in flat))
        return cls(lattice, coeffs, 'matrix', **meta)

    # views

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def q(self) -> int:
        return self.coeffs.shape[1] if self.rank == 'matrix' else 1

    def box(self) -> np.ndarray:
        return self.coeffs.reshape(self.lattice.shape + self.value_shape)

    def coefficient(self, m: Sequence[int]):
        return self.coeffs[self.lattice.index_of(m)]

    def component(self, j: int) -> 'PeriodicField':
        if self.rank != 'vector':
            raise ShapeError(f"component() needs a vector field, got {self.rank}")
        return PeriodicField(self.lattice, self.coeffs[:, j], 'scalar', real=self.real,
                             smoothness=self.smoothness, name=f"{self.name}[{j}]")

    def entry(self, a: int, b: int) -> 'PeriodicField':
        if self.rank != 'matrix':
            raise ShapeError(f"entry() needs a matrix field, got {self.rank}")
        return PeriodicField(self.lattice, self.coeffs[:, a, b], 'scalar', real=self.real,
                             name=f"{self.name}[{a},{b}]")

    def support(self) -> np.ndarray:
        """Modes carrying a nonzero coefficient (exact test)."""
        nonzero = np.abs(self.coeffs.reshape(self.lattice.size, -1)).max(axis=1) > 0
        return self.lattice.modes[nonzero]

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def replace(self, **changes) -> 'PeriodicField':
        return dataclasses.replace(self, **changes)

    # linear structure

    def _check_compatible(self, other: 'PeriodicField'):
        if other.lattice != self.lattice or other.rank != self.rank or other.value_shape != self.value_shape:
            raise ShapeError(f"cannot combine {self.rank}{self.value_shape} on {self.lattice} "
                             f"with {other.rank}{other.value_shape} on {other.lattice}")

    def __add__(self, other: 'PeriodicField') -> 'PeriodicField':
        self._check_compatible(other)
        return PeriodicField(self.lattice, self.coeffs + other.coeffs, self.rank,
                             real=self.real and other.real,
                             mean_zero=self.mean_zero and other.mean_zero)

    def __sub__(self, other: 'PeriodicField') -> 'PeriodicField':
        self._check_compatible(other)
        return PeriodicField(self.lattice, self.coeffs - other.coeffs, self.rank,
                             real=self.real and other.real,
                             mean_zero=self.mean_zero and other.mean_zero)

    def __neg__(self) -> 'PeriodicField':
        return self.scale(-1.0)

    def scale(self, factor: complex) -> 'PeriodicField':
        factor = complex(factor)
        return PeriodicField(self.lattice, self.coeffs * factor, self.rank,
                             real=self.real and factor.imag == 0, mean_zero=self.mean_zero,
                             smoothness=self.smoothness, name=self.name)


def _common_lattice(fields: Iterable[PeriodicField]) -> Lattice:
    lattices = {f.lattice for f in fields}
    if len(lattices) != 1:
        raise ShapeError(f"fields live on different lattices: {sorted(map(str, lattices))}")
    return lattices.pop()


def resample(u: PeriodicField, lattice: Lattice) -> PeriodicField:
    """Copy u onto another lattice of the same dimension, truncating or zero-padding."""
    if lattice.d != u.lattice.d:
        raise ShapeError(f"cannot resample d={u.lattice.d} field onto d={lattice.d}")
    coeffs = np.zeros((lattice.size,) + u.value_shape, dtype=complex)
    keep = np.all(np.abs(lattice.modes) <= u.lattice.N, axis=1)
    coeffs[keep] = u.coeffs[flat_index(lattice.modes[keep], u.lattice.N)]
    return PeriodicField(lattice, coeffs, u.rank, real=u.real, mean_zero=u.mean_zero,
                         smoothness=u.smoothness, name=u.name)


class ConvolutionResult(NamedTuple):
    field: PeriodicField
    truncation_loss: float


def _box_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return nd_convolve(a, b, mode='full', method='direct')


def full_product(u: PeriodicField, v: PeriodicField) -> PeriodicField:
    """Exact Fourier image of the pointwise product, on the doubled lattice."""
    lattice = _common_lattice((u, v))
    wide = lattice.doubled()
    ub, vb = u.box(), v.box()
    pair = (u.rank, v.rank)
    if pair == ('scalar', 'scalar'):
        out, rank = _box_product(ub, vb), 'scalar'
    elif pair == ('scalar', 'vector'):
        out, rank = np.stack([_box_product(ub, vb[..., j]) for j in range(lattice.d)], axis=-1), 'vector'
    elif pair == ('vector', 'scalar'):
        out, rank = np.stack([_box_product(ub[..., j], vb) for j in range(lattice.d)], axis=-1), 'vector'
    elif pair == ('vector', 'vector'):
        out, rank = sum(_box_product(ub[..., j], vb[..., j]) for j in range(lattice.d)), 'scalar'
    elif pair in (('scalar', 'matrix'), ('matrix', 'scalar')):
        mat, sca = (vb, ub) if u.rank == 'scalar' else (ub, vb)
        q = mat.shape[-1]
        out = np.empty(wide.shape + (q, q), dtype=complex)
        for a in range(q):
            for b in range(q):
                out[..., a, b] = _box_product(sca, mat[..., a, b])
        rank = 'matrix'
    elif pair == ('matrix', 'matrix') and u.q == v.q:
        q = u.q
        out = np.empty(wide.shape + (q, q), dtype=complex)
        for a in range(q):
            for b in range(q):
                out[..., a, b] = sum(_box_product(ub[..., a, c], vb[..., c, b]) for c in range(q))
        rank = 'matrix'
    else:
        raise ShapeError(f"incompatible ranks for product: {u.rank}{u.value_shape} · {v.rank}{v.value_shape}")
    coeffs = out.reshape((wide.size,) + out.shape[wide.d:])
    return PeriodicField(wide, coeffs, rank, real=u.real and v.real)


def convolve(u: PeriodicField, v: PeriodicField) -> ConvolutionResult:
    """Truncated product: coefficient at m is sum_n u(m-n) v(n) for m in the lattice.

    The l2 norm of the discarded out-of-lattice coefficients is returned alongside.
    """
    full = full_product(u, v)
    kept = resample(full, u.lattice)
    inside = np.all(np.abs(full.lattice.modes) <= u.lattice.N, axis=1)
    loss = float(np.linalg.norm(full.coeffs[~inside]))
    return ConvolutionResult(kept, loss)


def sobolev_weights(lattice: Lattice, s: float) -> np.ndarray:
    return (1.0 + lattice.norms_squared) ** s


def sobolev_norm(u: PeriodicField, s: float) -> SobolevReport:
    """(sum_m (1+|m|^2)^s |u(m)|^2)^(1/2), summed over components."""
    power = np.sum(np.abs(u.coeffs.reshape(u.lattice.size, -1)) ** 2, axis=1)
    return SobolevReport(float(s), float(np.sqrt(np.sum(sobolev_weights(u.lattice, s) * power))))


def lambda_weights(lattice: Lattice, rho: float) -> np.ndarray:
    """Diagonal of Λ_ρ: (ρ^2 + |m|^2)^(1/2) with the Euclidean mode norm."""
    if not rho > 0:
        raise DomainError(f"Λ_ρ needs ρ > 0, got {rho}")
    return np.sqrt(rho ** 2 + lattice.norms_squared)


def apply_lambda(u: PeriodicField, rho: float, direction: str = 'forward') -> PeriodicField:
    if direction not in ('forward', 'inverse'):
        raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    weights = lambda_weights(u.lattice, rho)
    weights = weights.reshape((-1,) + (1,) * len(u.value_shape))
    coeffs = u.coeffs * weights if direction == 'forward' else u.coeffs / weights
    return PeriodicField(u.lattice, coeffs, u.rank, real=u.real, mean_zero=u.mean_zero, name=u.name)


# quadrature grids

def grid_frequencies(P: int) -> np.ndarray:
    """Signed integer frequency of each FFT bin on a grid of P points."""
    return np.rint(sfft.fftfreq(P, 1.0 / P)).astype(np.int64)


def coeffs_to_grid(lattice: Lattice, coeffs: np.ndarray, P: int) -> np.ndarray:
    """Values of sum_m c_m e^{2πi m·x} at x = j/P, shape (P,)*d + value shape."""
    if P < lattice.side:
        raise ShapeError(f"grid of {P} points cannot hold modes up to {lattice.N}")
    value_shape = coeffs.shape[1:]
    table = np.zeros((P,) * lattice.d + value_shape, dtype=complex)
    table[tuple((lattice.modes % P).T)] = coeffs
    return sfft.ifftn(table, axes=tuple(range(lattice.d)), norm='forward')


def grid_to_coeffs(values: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Fourier coefficients at the lattice modes of grid samples (inverse of coeffs_to_grid)."""
    P = values.shape[0]
    table = sfft.fftn(values, axes=tuple(range(lattice.d)), norm='forward')
    return table[tuple((lattice.modes % P).T)]


def to_grid(u: PeriodicField, P: int) -> np.ndarray:
    return coeffs_to_grid(u.lattice, u.coeffs, P)


def from_grid(values: np.ndarray, lattice: Lattice, rank: str = 'scalar', **meta) -> PeriodicField:
    return PeriodicField(lattice, grid_to_coeffs(values, lattice), rank, **meta)
