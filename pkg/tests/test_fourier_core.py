"""
Tests for lattice construction, periodic fields, truncated products, Sobolev norms and Λ_ρ
"""

import numpy as np
import pytest

from conftest import random_field
from spectral.errors import DomainError, IntegrityError, ShapeError, SizeError
from spectral.fourier_core import (
    Lattice,
    PeriodicField,
    apply_lambda,
    build_lattice,
    coeffs_to_grid,
    convolve,
    grid_to_coeffs,
    resample,
    sobolev_norm,
)


class TestLattice:
    """Test mode enumeration and ordering."""

    @pytest.mark.parametrize("d,N,count", [(2, 1, 9), (1, 3, 7), (3, 2, 125)])
    def test_mode_counts(self, d, N, count):
        """Test the box holds (2N+1)^d modes."""
        lattice = build_lattice(d, N)
        assert lattice.size == count
        assert lattice.modes.shape == (count, d)

    def test_plane_modes_are_the_unit_box(self):
        """Test d=2, N=1 enumerates {-1,0,1}^2 lexicographically."""
        lattice = build_lattice(2, 1)
        expected = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        assert [tuple(m) for m in lattice.modes] == expected

    def test_negation_is_reversal(self):
        """Test -m sits at index M-1-i."""
        lattice = Lattice(3, 2)
        assert np.array_equal(lattice.modes[::-1], -lattice.modes)
        assert lattice.mode_at(lattice.zero_index) == (0, 0, 0)

    def test_index_roundtrip(self):
        """Test index_of inverts mode_at."""
        lattice = Lattice(2, 3)
        for i in (0, 7, lattice.zero_index, lattice.size - 1):
            assert lattice.index_of(lattice.mode_at(i)) == i

    def test_index_outside_box(self):
        """Test a mode outside the box is rejected."""
        with pytest.raises(ShapeError):
            Lattice(2, 2).index_of((3, 0))

    def test_budget_exceeded(self):
        """Test the size error names d and N."""
        with pytest.raises(SizeError, match="d=3, N=20"):
            build_lattice(3, 20, budget_mb=1.0)

    def test_budget_from_environment(self, monkeypatch):
        """Test BLOCH_MEMORY_BUDGET_MB is honoured."""
        monkeypatch.setenv('BLOCH_MEMORY_BUDGET_MB', '0.001')
        with pytest.raises(SizeError):
            build_lattice(2, 8)

    def test_invalid_cutoff(self):
        """Test N < 1 is a domain error."""
        with pytest.raises(DomainError):
            Lattice(2, 0)


class TestPeriodicField:
    """Test field validation and flags."""

    def test_real_flag_checks_symmetry(self):
        """Test a real-flagged field must be conjugate symmetric."""
        lattice = Lattice(1, 2)
        with pytest.raises(IntegrityError):
            PeriodicField.from_modes(lattice, {(1,): 1.0}, real=True)
        field = PeriodicField.from_modes(lattice, {(1,): 1j, (-1,): -1j}, real=True)
        assert field.real

    def test_mean_zero_flag(self):
        """Test mean-zero fields reject a mean and store an exact zero."""
        lattice = Lattice(2, 2)
        with pytest.raises(IntegrityError):
            PeriodicField.constant(lattice, 1.0, mean_zero=True)
        field = PeriodicField.from_modes(lattice, {(0, 0): 1e-20, (1, 0): 1.0}, mean_zero=True)
        assert field.coefficient((0, 0)) == 0

    def test_vector_shape_checked(self):
        """Test a vector field needs d components."""
        lattice = Lattice(2, 1)
        with pytest.raises(ShapeError):
            PeriodicField(lattice, np.zeros((lattice.size, 3)), 'vector')

    def test_coefficients_are_read_only(self):
        """Test stored coefficients cannot be mutated."""
        field = PeriodicField.constant(Lattice(1, 1), 2.0)
        with pytest.raises(ValueError):
            field.coeffs[0] = 1.0

    def test_resample_pads_and_truncates(self):
        """Test resampling keeps shared modes."""
        small = PeriodicField.from_modes(Lattice(1, 1), {(1,): 3.0})
        big = resample(small, Lattice(1, 4))
        assert big.coefficient((1,)) == 3.0
        back = resample(big, Lattice(1, 1))
        assert np.array_equal(back.coeffs, small.coeffs)


class TestConvolution:
    """Test truncated products."""

    def test_delta_product(self):
        """Test δ(1,0) * δ(0,1) = δ(1,1)."""
        lattice = Lattice(2, 2)
        u = PeriodicField.from_modes(lattice, {(1, 0): 1.0})
        v = PeriodicField.from_modes(lattice, {(0, 1): 1.0})
        result = convolve(u, v)
        assert result.field.coefficient((1, 1)) == 1.0
        assert np.count_nonzero(result.field.coeffs) == 1
        assert result.truncation_loss == 0.0

    def test_cosine_square(self):
        """Test (e^{iθ} + e^{-iθ})^2 expansion."""
        lattice = Lattice(1, 3)
        u = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0})
        field = convolve(u, u).field
        expected = {(-2,): 1.0, (0,): 2.0, (2,): 1.0}
        for i, m in enumerate(lattice.modes):
            assert field.coeffs[i] == pytest.approx(expected.get(tuple(m), 0.0), abs=1e-14)

    def test_constant_is_identity(self, rng):
        """Test the constant field 1 is the unit of the product."""
        lattice = Lattice(2, 3)
        u = random_field(lattice, rng)
        one = PeriodicField.constant(lattice, 1.0)
        result = convolve(one, u)
        np.testing.assert_allclose(result.field.coeffs, u.coeffs, atol=1e-14)
        assert result.truncation_loss == pytest.approx(0.0, abs=1e-14)

    def test_truncation_loss_reported(self):
        """Test modes pushed out of the box are counted in the loss."""
        lattice = Lattice(1, 1)
        u = PeriodicField.from_modes(lattice, {(1,): 1.0})
        result = convolve(u, u)
        assert result.field.is_zero()
        assert result.truncation_loss == pytest.approx(1.0)

    def test_commutative_and_bilinear(self, rng):
        """Test scalar products commute and are bilinear."""
        lattice = Lattice(2, 3)
        u, v, w = (random_field(lattice, rng) for _ in range(3))
        uv = convolve(u, v).field.coeffs
        vu = convolve(v, u).field.coeffs
        np.testing.assert_allclose(uv, vu, atol=1e-12)
        lhs = convolve(u, v + w.scale(2.0)).field.coeffs
        rhs = uv + 2.0 * convolve(u, w).field.coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_vector_dot_product(self, rng):
        """Test vector·vector sums the componentwise products."""
        lattice = Lattice(2, 2)
        a = random_field(lattice, rng, 'vector')
        b = random_field(lattice, rng, 'vector')
        expected = sum(convolve(a.component(j), b.component(j)).field.coeffs for j in range(2))
        np.testing.assert_allclose(convolve(a, b).field.coeffs, expected, atol=1e-12)

    def test_rank_mismatch(self):
        """Test vector·matrix is rejected."""
        lattice = Lattice(2, 1)
        with pytest.raises(ShapeError):
            convolve(PeriodicField.zeros(lattice, 'vector'), PeriodicField.zeros(lattice, 'matrix'))


class TestNormsAndLambda:
    """Test Sobolev norms and the Λ_ρ multiplier."""

    def test_single_mode_norms(self):
        """Test mode (1,0) has H^1 norm √2 and L2 norm 1."""
        field = PeriodicField.from_modes(Lattice(2, 2), {(1, 0): 1.0})
        assert sobolev_norm(field, 1).norm == pytest.approx(np.sqrt(2))
        assert sobolev_norm(field, 0).norm == pytest.approx(1.0)

    def test_zero_field_norm(self):
        """Test the zero field has norm 0 for any s."""
        field = PeriodicField.zeros(Lattice(2, 2))
        assert sobolev_norm(field, 3.5).norm == 0.0

    def test_lambda_values(self):
        """Test (ρ^2 + |m|^2)^{1/2} scaling."""
        lattice = Lattice(2, 4)
        field = PeriodicField.from_modes(lattice, {(4, 0): 1.0})
        assert apply_lambda(field, 3.0).coefficient((4, 0)) == pytest.approx(5.0)
        constant = PeriodicField.constant(lattice, 1.0)
        assert apply_lambda(constant, 1.0).coefficient((0, 0)) == pytest.approx(1.0)

    def test_lambda_roundtrip(self, rng):
        """Test forward then inverse is the identity."""
        u = random_field(Lattice(2, 5), rng)
        back = apply_lambda(apply_lambda(u, 2.5, 'forward'), 2.5, 'inverse')
        np.testing.assert_allclose(back.coeffs, u.coeffs, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("rho", [0.0, -1.0])
    def test_lambda_needs_positive_rho(self, rho):
        """Test ρ <= 0 is a domain error."""
        with pytest.raises(DomainError):
            apply_lambda(PeriodicField.zeros(Lattice(1, 1)), rho)


class TestGrids:
    """Test quadrature grid transfer."""

    def test_grid_roundtrip(self, rng):
        """Test coefficients survive evaluation and re-expansion."""
        lattice = Lattice(2, 3)
        u = random_field(lattice, rng)
        values = coeffs_to_grid(lattice, u.coeffs, 4 * lattice.N + 1)
        np.testing.assert_allclose(grid_to_coeffs(values, lattice), u.coeffs, atol=1e-12)

    def test_grid_values(self):
        """Test 2cos(2πx) evaluates correctly at x = j/P."""
        lattice = Lattice(1, 2)
        u = PeriodicField.from_modes(lattice, {(1,): 1.0, (-1,): 1.0})
        P = 9
        values = coeffs_to_grid(lattice, u.coeffs, P)
        x = np.arange(P) / P
        np.testing.assert_allclose(values, 2 * np.cos(2 * np.pi * x), atol=1e-13)
