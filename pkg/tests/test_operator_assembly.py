"""
Tests for quasimomenta, the principal symbol, matrix assembly and its quadrature oracle
"""

import numpy as np
import pytest

from conftest import random_field
from spectral.errors import DomainError, ShapeError
from spectral.fourier_core import Lattice, PeriodicField
from spectral.operator_assembly import (
    ComplexQuasimomentum,
    apply_oracle,
    assemble,
    estimate_relative_bound,
    gauge_shift,
    symbol_h0,
    symbol_table,
)

PI2 = np.pi ** 2


class TestQuasimomentum:
    """Test the complex quasimomentum family."""

    def test_vector(self):
        """Test k = 2π(β + iρ)e."""
        k = ComplexQuasimomentum((1.0, 0.0), 0.5, 2.0)
        np.testing.assert_allclose(k.vector, [2 * np.pi * (0.5 + 2j), 0])

    def test_non_unit_direction(self):
        """Test |e| != 1 is rejected."""
        with pytest.raises(DomainError):
            ComplexQuasimomentum((1.0, 1.0), 0.0, 1.0)

    def test_negative_height(self):
        """Test ρ < 0 is rejected."""
        with pytest.raises(DomainError):
            ComplexQuasimomentum((1.0,), 0.0, -1.0)


class TestPrincipalSymbol:
    """Test H_0(k, m) in both closed forms."""

    def test_zero_mode(self):
        """Test e=(1,0), β=0, ρ=1, m=0 gives -4π^2."""
        k = ComplexQuasimomentum((1.0, 0.0), 0.0, 1.0)
        assert symbol_h0(k, (0, 0)) == pytest.approx(-4 * PI2)

    def test_first_mode(self):
        """Test e=(1,0), β=0, ρ=1, m=(1,0) gives 8π^2 i."""
        k = ComplexQuasimomentum((1.0, 0.0), 0.0, 1.0)
        assert symbol_h0(k, (1, 0)) == pytest.approx(8j * PI2)

    @pytest.mark.parametrize("m", [(0, 0), (2, -3), (-5, 1)])
    def test_real_quasimomentum_gives_real_symbol(self, m):
        """Test ρ=0 gives 4π^2 (m + βe)^2."""
        k = ComplexQuasimomentum((1.0, 0.0), 0.3, 0.0)
        value = symbol_h0(k, m)
        assert value.imag == pytest.approx(0.0, abs=1e-12)
        assert value.real == pytest.approx(4 * PI2 * ((m[0] + 0.3) ** 2 + m[1] ** 2))


class TestAssembly:
    """Test the Fourier matrix of H(k)."""

    def test_free_operator_is_diagonal_symbol(self):
        """Test A=V=0 gives diag(H_0(k, m)) exactly."""
        lattice = Lattice(2, 3)
        k = ComplexQuasimomentum((0.6, 0.8), 0.25, 3.0)
        op = assemble(None, None, k, lattice)
        np.testing.assert_array_equal(np.diag(op.matrix), symbol_table(k, lattice.modes))
        assert np.count_nonzero(op.matrix - np.diag(np.diag(op.matrix))) == 0
        assert op.entry((1, 2), (1, 2)) == pytest.approx(symbol_h0(k, (1, 2)))

    def test_cosine_potential_is_tridiagonal(self):
        """Test d=1, V̂(±1)=1 fills the first off-diagonals with 1."""
        lattice = Lattice(1, 4)
        V = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0}, real=True)
        op = assemble(None, V, np.array([0.3]), lattice)
        off = op.matrix - np.diag(np.diag(op.matrix))
        np.testing.assert_array_equal(np.diag(off, 1), np.ones(lattice.size - 1))
        np.testing.assert_array_equal(np.diag(off, -1), np.ones(lattice.size - 1))
        assert op.bandwidth() == 1

    def test_real_data_is_hermitian(self, rng):
        """Test real k, real A, real V give a Hermitian matrix."""
        lattice = Lattice(2, 3)
        A = random_field(lattice, rng, 'vector', amp=0.3, decay=2.0, real=True)
        V = random_field(lattice, rng, amp=0.5, decay=2.0, real=True)
        op = assemble(A, V, np.array([0.4, -1.1]), lattice)
        assert op.hermitian_residual() <= 1e-12

    def test_precondition_scales_columns(self):
        """Test H Λ_ρ^{-1} divides column n by (ρ^2 + |n|^2)^{1/2}."""
        lattice = Lattice(1, 3)
        k = ComplexQuasimomentum((1.0,), 0.5, 4.0)
        plain = assemble(None, None, k, lattice)
        pre = assemble(None, None, k, lattice, precondition_lambda=True)
        assert pre.preconditioned
        assert pre.entry((3,), (3,)) == pytest.approx(plain.entry((3,), (3,)) / 5.0)

    def test_precondition_needs_height(self):
        """Test ρ=0 with preconditioning is a domain error."""
        k = ComplexQuasimomentum((1.0,), 0.5, 0.0)
        with pytest.raises(DomainError):
            assemble(None, None, k, Lattice(1, 2), precondition_lambda=True)

    def test_rank_checked(self):
        """Test a scalar A is rejected."""
        lattice = Lattice(1, 2)
        with pytest.raises(ShapeError):
            assemble(PeriodicField.zeros(lattice), None, np.array([0.0]), lattice)


class TestOracle:
    """Test the quadrature application path against the matrix."""

    def test_constant_free(self):
        """Test u=1, A=V=0 gives k^2 u."""
        lattice = Lattice(2, 2)
        k = np.array([0.7, -0.2])
        u = PeriodicField.constant(lattice, 1.0)
        result = apply_oracle(None, None, k, u)
        assert result.coefficient((0, 0)) == pytest.approx(k @ k)

    def test_constant_potential(self, rng):
        """Test V = c adds c·u."""
        lattice = Lattice(1, 4)
        u = random_field(lattice, rng)
        k = np.array([1.3])
        V = PeriodicField.constant(lattice, 2.5)
        diff = apply_oracle(None, V, k, u).coeffs - apply_oracle(None, None, k, u).coeffs
        np.testing.assert_allclose(diff, 2.5 * u.coeffs, atol=1e-10)

    @pytest.mark.parametrize("instance", range(20))
    def test_matrix_matches_quadrature(self, instance):
        """Test 20 random (A, V, k) instances agree to 1e-8 relative."""
        rng = np.random.default_rng(1000 + instance)
        d = 1 + instance % 2
        lattice = Lattice(d, 6 if d == 1 else 4)
        A = random_field(lattice, rng, 'vector', amp=0.3, decay=3.0)
        V = random_field(lattice, rng, amp=0.5, decay=3.0)
        e = rng.standard_normal(d)
        k = ComplexQuasimomentum(tuple(e / np.linalg.norm(e)), rng.uniform(-0.5, 0.5), rng.uniform(0, 3))
        u = random_field(lattice, rng)
        matrix_path = assemble(A, V, k, lattice).apply(u)
        oracle_path = apply_oracle(A, V, k, u).coeffs
        assert np.linalg.norm(matrix_path - oracle_path) <= 1e-8 * np.linalg.norm(oracle_path)


class TestGaugeShift:
    """Test A -> A + ∇χ."""

    def test_zero_chi(self, rng):
        """Test χ = 0 leaves A unchanged."""
        lattice = Lattice(2, 2)
        A = random_field(lattice, rng, 'vector', real=True)
        shifted = gauge_shift(A, PeriodicField.zeros(lattice))
        np.testing.assert_array_equal(shifted.coeffs, A.coeffs)

    def test_cosine_gradient(self):
        """Test χ = cos(2πx) gives Â(±1) = ±πi."""
        lattice = Lattice(1, 2)
        chi = PeriodicField.from_modes(lattice, {(1,): 0.5, (-1,): 0.5}, real=True)
        A = gauge_shift(None, chi)
        assert A.coefficient((1,))[0] == pytest.approx(np.pi * 1j)
        assert A.coefficient((-1,))[0] == pytest.approx(-np.pi * 1j)
        assert A.real

    def test_chi_must_be_real(self):
        """Test a complex χ is rejected."""
        lattice = Lattice(1, 2)
        with pytest.raises(ShapeError):
            gauge_shift(None, PeriodicField.from_modes(lattice, {(1,): 1.0}))

    def test_spectrum_invariant(self, rng):
        """Test eigenvalues of H(A) and H(A + ∇χ) agree at real k."""
        lattice = Lattice(1, 24)
        A = PeriodicField.from_modes(lattice, {(1,): 0.15, (-1,): 0.15}, 'vector', real=True)
        V = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0}, real=True)
        chi = PeriodicField.from_modes(lattice, {(2,): 0.05, (-2,): 0.05}, real=True)
        k = np.array([0.9])
        before = np.linalg.eigvalsh(assemble(A, V, k, lattice).matrix)[:5]
        after = np.linalg.eigvalsh(assemble(gauge_shift(A, chi), V, k, lattice).matrix)[:5]
        np.testing.assert_allclose(after, before, atol=1e-8)


class TestRelativeBound:
    """Test the sampled relative-bound constant."""

    def test_zero_potential(self):
        """Test V = 0 gives C = 0."""
        report = estimate_relative_bound(PeriodicField.zeros(Lattice(2, 4)), [0.0, 0.5], 8)
        assert report.constants == (0.0, 0.0)

    def test_constant_potential(self):
        """Test V = 5 gives C = 5 at ε = 0."""
        report = estimate_relative_bound(PeriodicField.constant(Lattice(2, 4), 5.0), [0.0], 8)
        assert report.constants[0] == pytest.approx(5.0, rel=1e-12)

    def test_cosine_potential(self):
        """Test V = 2cos(2πx) stays below ||V||_∞ = 2 and above the sampled ratios."""
        lattice = Lattice(1, 16)
        V = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0}, real=True)
        report = estimate_relative_bound(V, [0.0], 32, seed=3)
        assert report.constants[0] <= 2.0 + 1e-12
        assert report.constants[0] >= report.max_ratio - 1e-12

    def test_monotone_in_trials(self):
        """Test more trials never lower the estimate."""
        lattice = Lattice(1, 8)
        V = PeriodicField.from_modes(lattice, {(2,): 0.5, (-2,): 0.5, (1,): 0.2, (-1,): 0.2}, real=True)
        few = estimate_relative_bound(V, [0.0, 0.1], 4, seed=9)
        many = estimate_relative_bound(V, [0.0, 0.1], 16, seed=9)
        assert all(b >= a for a, b in zip(few.constants, many.constants))
