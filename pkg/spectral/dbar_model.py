"""
Model Cauchy-Riemann problem on the 2-torus: solve ∂̄f = g f.

Complex structure z = x_1 + i x_2, ∂̄ = (∂_1 + i ∂_2)/2, so ∂̄ acts on mode m
by πi(m_1 + i m_2). Scalar problems are solved through the exponential gauge
f = e^h with ∂̄h = g; the only obstruction on the torus is the mean ĝ(0).
The matrix variant is an experimental damped Picard iteration.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from spectral.errors import DomainError, PreconditionError, ShapeError, ToleranceError
from spectral.fourier_core import (
    Lattice,
    PeriodicField,
    coeffs_to_grid,
    convolve,
    grid_to_coeffs,
    sobolev_norm,
)
from utils.log_setup import get_logger

logger = get_logger('dbar_model')

DIVERGENCE_NORM = 1e8
SYMBOL_CUTOFF = 1e-12


def _require_plane(u: PeriodicField):
    if u.lattice.d != 2:
        raise DomainError(f"the ∂̄ model lives on T^2, got a d={u.lattice.d} field")


def dbar_symbol(lattice: Lattice) -> np.ndarray:
    m = lattice.modes.astype(float)
    return np.pi * 1j * (m[:, 0] + 1j * m[:, 1])


def _broadcast(weights: np.ndarray, u: PeriodicField) -> np.ndarray:
    return weights.reshape((-1,) + (1,) * len(u.value_shape))


def dbar_apply(f: PeriodicField) -> PeriodicField:
    _require_plane(f)
    coeffs = f.coeffs * _broadcast(dbar_symbol(f.lattice), f)
    return PeriodicField(f.lattice, coeffs, f.rank, mean_zero=True, name=f"dbar({f.name})" if f.name else '')


def symbol_gauge(q: PeriodicField, symbol: np.ndarray,
                 cutoff: float = SYMBOL_CUTOFF) -> Tuple[PeriodicField, np.ndarray]:
    """Logarithmic gauge for a first-order symbol σ: ĥ(ξ) = q̂(ξ)/σ(ξ).

    Modes where |σ| <= cutoff·max|σ| cannot be gauged; they are returned as a mask and
    ĥ is zero there.
    """
    scale = float(np.max(np.abs(symbol))) if symbol.size else 0.0
    obstructed = np.abs(symbol) <= cutoff * max(scale, 1.0)
    coeffs = np.zeros_like(q.coeffs)
    safe = np.where(obstructed, 1.0, symbol)
    coeffs[~obstructed] = (q.coeffs / _broadcast(safe, q))[~obstructed]
    h = PeriodicField(q.lattice, coeffs, q.rank, name=f"log-gauge({q.name})" if q.name else '')
    return h, obstructed


def dbar_inverse(u: PeriodicField) -> PeriodicField:
    """Mean-zero solution h of ∂̄h = u - û(0)."""
    _require_plane(u)
    h, _ = symbol_gauge(u, dbar_symbol(u.lattice))
    return PeriodicField(u.lattice, h.coeffs, u.rank, mean_zero=True, name=h.name)


def exp_field(h: PeriodicField, lattice: Optional[Lattice] = None) -> PeriodicField:
    """Coefficients of e^h on the target lattice via grid exponentiation and re-expansion."""
    if h.rank != 'scalar':
        raise ShapeError(f"exp_field needs a scalar field, got {h.rank}")
    lattice = lattice or h.lattice
    P = 2 * max(lattice.N, 2 * h.lattice.N) + 1
    values = np.exp(coeffs_to_grid(h.lattice, h.coeffs, P))
    return PeriodicField(lattice, grid_to_coeffs(values, lattice), 'scalar',
                         name=f"exp({h.name})" if h.name else '')


def gauge_residual(g: PeriodicField, f: PeriodicField) -> float:
    """||∂̄f - g f||_{L2}, counting product modes beyond the lattice."""
    product = convolve(g, f)
    inside = dbar_apply(f).coeffs - product.field.coeffs
    return float(np.hypot(np.linalg.norm(inside), product.truncation_loss))


def min_modulus(f: PeriodicField) -> float:
    """min |f| (scalar) or min |det f| (matrix) on the (4N+1)^2 quadrature grid."""
    values = coeffs_to_grid(f.lattice, f.coeffs, 4 * f.lattice.N + 1)
    if f.rank == 'matrix':
        return float(np.min(np.abs(np.linalg.det(values))))
    return float(np.min(np.abs(values)))


def _complex_pair(z) -> List[float]:
    z = complex(z)
    return [z.real, z.imag]


@dataclass(frozen=True, eq=False)
class GaugeResult:
    g: PeriodicField
    verdict: str
    obstruction: object
    f: Optional[PeriodicField] = None
    h: Optional[PeriodicField] = None
    residual: Optional[float] = None
    margin: Optional[float] = None
    log: Tuple[Dict[str, float], ...] = field(default_factory=tuple)
    stop_reason: str = ''

    @property
    def obstruction_norm(self) -> float:
        return float(np.linalg.norm(np.atleast_1d(self.obstruction)))

    def to_dict(self) -> dict:
        if np.ndim(self.obstruction) == 0:
            obstruction = _complex_pair(self.obstruction)
        else:
            obstruction = [[_complex_pair(z) for z in row] for row in np.asarray(self.obstruction)]
        return {'verdict': self.verdict, 'obstruction': obstruction,
                'obstruction_norm': self.obstruction_norm, 'residual': self.residual,
                'margin': self.margin, 'iterations': list(self.log), 'stop_reason': self.stop_reason}


def gauge_scalar(g: PeriodicField, tol: float = 1e-8) -> GaugeResult:
    """Solve ∂̄f = g f by f = exp(∂̄^{-1} g), or report the obstruction ĝ(0)."""
    _require_plane(g)
    if g.rank != 'scalar':
        raise ShapeError(f"gauge_scalar needs a scalar g, got {g.rank}")
    lattice = g.lattice
    obstruction = complex(g.coeffs[lattice.zero_index])
    if obstruction != 0:
        logger.info(f"Scalar gauge for g={g.name or '<anon>'} obstructed by mean {obstruction}")
        return GaugeResult(g, 'obstructed', obstruction)

    if g.is_zero():
        h = PeriodicField.zeros(lattice)
        f = PeriodicField.constant(lattice, 1.0)
    else:
        h = dbar_inverse(g)
        f = exp_field(h)
    residual = gauge_residual(g, f)
    margin = min_modulus(f)
    log = ({'iteration': 1, 'update': sobolev_norm(h, 0).norm, 'obstruction': 0.0},)
    if residual > tol:
        logger.error(f"Scalar gauge residual {residual:.3e} exceeds tol {tol:.1e} at N={lattice.N}")
        raise ToleranceError(f"gauge residual {residual:.3e} > {tol:.1e} at N={lattice.N}; "
                             f"increase the cutoff N")
    logger.info(f"Scalar gauge solved: residual {residual:.3e}, margin {margin:.3e}")
    return GaugeResult(g, 'solved', obstruction, f, h, residual, margin, log)


@dataclass(frozen=True, eq=False)
class SplitGauge:
    result: GaugeResult
    remainder: PeriodicField
    remainder_norms: Dict[int, float]

    def to_dict(self) -> dict:
        out = self.result.to_dict()
        out['remainder_norms'] = {str(s): v for s, v in self.remainder_norms.items()}
        return out


def split_and_gauge(g: PeriodicField, M: int, tol: float = 1e-8) -> SplitGauge:
    """Gauge the modes 0 < |m| <= M exactly and return the rest (mean plus tail)."""
    _require_plane(g)
    if g.rank != 'scalar':
        raise ShapeError(f"split_and_gauge needs a scalar g, got {g.rank}")
    lattice = g.lattice
    low_mask = (lattice.norms_squared > 0) & (lattice.norms_squared <= M * M)
    low = PeriodicField(lattice, np.where(low_mask, g.coeffs, 0), 'scalar', real=g.real,
                        mean_zero=True, name=f"{g.name}|low" if g.name else 'low')
    remainder = PeriodicField(lattice, np.where(low_mask, 0, g.coeffs), 'scalar', real=g.real,
                              name=f"{g.name}|rest" if g.name else 'rest')
    result = gauge_scalar(low, tol)
    norms = {0: sobolev_norm(remainder, 0).norm, 1: sobolev_norm(remainder, 1).norm}
    logger.info(f"Split gauge at M={M}: remainder L2 {norms[0]:.3e}, H1 {norms[1]:.3e}")
    return SplitGauge(result, remainder, norms)


@dataclass(frozen=True)
class PlaneChoice:
    l: Tuple[int, ...]
    n: Tuple[int, ...]
    tau: float
    bound: int
    candidates: int

    def to_dict(self) -> dict:
        return {'l': list(self.l), 'n': list(self.n),
                'tau': 'inf' if np.isinf(self.tau) else self.tau,
                'bound': self.bound, 'candidates': self.candidates}


def _nonzero_support(A: PeriodicField) -> np.ndarray:
    support = A.support()
    return support[np.any(support != 0, axis=1)]


def plane_tail_index(A: PeriodicField, l: Sequence[int], n: Sequence[int]) -> float:
    """Smallest |m| over nonzero support modes of A projecting to plane frequency (0, 0)."""
    support = _nonzero_support(A)
    hits = (support @ np.asarray(l) == 0) & (support @ np.asarray(n) == 0)
    if not np.any(hits):
        return float('inf')
    return float(np.sqrt(np.min(np.sum(support[hits].astype(float) ** 2, axis=1))))


def _canonical_vectors(d: int, L: int) -> List[Tuple[int, ...]]:
    out = []
    for v in itertools.product(range(-L, L + 1), repeat=d):
        nonzero = [x for x in v if x != 0]
        if nonzero and nonzero[0] > 0:
            out.append(v)
    return out


def _independent(l: Tuple[int, ...], n: Tuple[int, ...]) -> bool:
    return any(l[a] * n[b] - l[b] * n[a] != 0 for a in range(len(l)) for b in range(a + 1, len(l)))


def select_plane(A: PeriodicField, L: int) -> PlaneChoice:
    """Integer pair (l, n), entries bounded by L, pushing obstructed frequencies furthest out."""
    d = A.lattice.d
    if d < 2:
        raise DomainError(f"plane selection needs d >= 2, got d={d}")
    if L < 1:
        raise DomainError(f"search bound L must be >= 1, got {L}")
    vectors = _canonical_vectors(d, L)
    best_key, best = None, None
    count = 0
    for i, l in enumerate(vectors):
        for n in vectors[i + 1:]:
            if not _independent(l, n):
                continue
            count += 1
            tau = plane_tail_index(A, l, n)
            key = (-tau, sum(x * x for x in l) + sum(x * x for x in n), l, n)
            if best_key is None or key < best_key:
                best_key, best = key, (l, n, tau)
    l, n, tau = best
    logger.info(f"Selected plane l={l}, n={n} with tail index {tau} among {count} pairs")
    return PlaneChoice(l, n, tau, L, count)


def restrict_to_plane(u: PeriodicField, plane: PlaneChoice) -> PeriodicField:
    """The T^2 field (s, t) -> u(s·l + t·n): coefficients grouped by (m·l, m·n)."""
    if u.rank != 'scalar':
        raise ShapeError(f"plane restriction needs a scalar field, got {u.rank}")
    modes = u.lattice.modes
    projected = np.stack([modes @ np.asarray(plane.l), modes @ np.asarray(plane.n)], axis=-1)
    keep = np.abs(u.coeffs) > 0
    radius = max(1, int(np.max(np.abs(projected[keep]))) if np.any(keep) else 1)
    target = Lattice(2, radius)
    coeffs = np.zeros(target.size, dtype=complex)
    np.add.at(coeffs, target.indices_of(projected[keep]), u.coeffs[keep])
    return PeriodicField(target, coeffs, 'scalar', real=u.real, smoothness=u.smoothness,
                         name=f"{u.name}|plane" if u.name else '')


def _identity_field(lattice: Lattice, q: int) -> np.ndarray:
    coeffs = np.zeros((lattice.size, q, q), dtype=complex)
    coeffs[lattice.zero_index] = np.eye(q)
    return coeffs


def gauge_matrix(G: PeriodicField, maxiter: int = 200, tol: float = 1e-12, damping: float = 1.0,
                 obstruction_tol: float = 1e-9) -> GaugeResult:
    """Experimental damped Picard iteration F <- (1-θ)F + θ(I + ∂̄^{-1} P(G F)).

    P removes the mean; the removed mean of G F is logged as the running obstruction.
    stop_reason tells a blow-up apart from running out of iterations.
    """
    _require_plane(G)
    if G.rank != 'matrix':
        raise ShapeError(f"gauge_matrix needs a matrix field, got {G.rank}")
    if not 0 < damping <= 1:
        raise DomainError(f"damping must lie in (0, 1], got {damping}")
    lattice = G.lattice
    q = G.q
    mean = G.coeffs[lattice.zero_index]
    scale = max(1.0, float(np.max(np.abs(G.coeffs))))
    if np.max(np.abs(mean)) > 1e-14 * scale:
        logger.error(f"Matrix gauge precondition failed: mean(G) has norm {np.linalg.norm(mean):.3e}")
        raise PreconditionError("matrix gauge needs mean(G) = 0")

    symbol = dbar_symbol(lattice)
    identity = _identity_field(lattice, q)
    F = identity.copy()
    log: List[Dict[str, float]] = []
    verdict = 'diverged'
    stop_reason = 'maxiter'
    obstruction = np.zeros((q, q), dtype=complex)
    for iteration in range(1, maxiter + 1):
        GF = convolve(G, PeriodicField(lattice, F, 'matrix')).field
        obstruction = np.array(GF.coeffs[lattice.zero_index])
        h, _ = symbol_gauge(GF, symbol)
        F_new = (1 - damping) * F + damping * (identity + h.coeffs)
        update = float(np.linalg.norm(F_new - F))
        F = F_new
        log.append({'iteration': iteration, 'update': update,
                    'obstruction': float(np.linalg.norm(obstruction))})
        if not np.all(np.isfinite(F)) or np.linalg.norm(F) > DIVERGENCE_NORM:
            stop_reason = 'blow-up'
            break
        if update <= tol:
            verdict = 'converged'
            stop_reason = 'converged'
            break

    if verdict == 'diverged':
        if stop_reason == 'maxiter':
            logger.warning(f"Matrix gauge not converged within maxiter={maxiter} "
                           f"(last update {log[-1]['update']:.3e})")
        else:
            logger.warning(f"Matrix gauge blew up after {len(log)} iterations")
        return GaugeResult(G, verdict, obstruction, log=tuple(log), stop_reason=stop_reason)

    f = PeriodicField(lattice, F, 'matrix', name=f"gauge({G.name})" if G.name else '')
    obstruction = np.array(convolve(G, f).field.coeffs[lattice.zero_index])
    if np.linalg.norm(obstruction) > obstruction_tol:
        verdict = 'obstructed'
    residual = gauge_residual(G, f)
    margin = min_modulus(f)
    logger.info(f"Matrix gauge {verdict} after {len(log)} iterations: residual {residual:.3e}, "
                f"margin {margin:.3e}, obstruction {np.linalg.norm(obstruction):.3e}")
    return GaugeResult(G, verdict, obstruction, f, None, residual, margin, tuple(log), stop_reason)
