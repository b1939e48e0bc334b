"""
Tests for the closed-form profiles, the quadrature helpers, the v problem
and the coefficient pipeline.
"""

import math

import numpy as np
import pytest

from app.core.errors import DomainValidationError
from app.services.analytic import (
    SQRT2,
    chi0,
    chi_k_field,
    coefficient_convergence,
    critical_width,
    decay_rate,
    gl_distance,
    h_norm,
    refined_nx,
    richardson,
    soliton,
    solve_v,
    u_star_residual,
    v_equation_residual,
)
from app.services.strip_core import line_grid


class TestProfiles:
    """S₀, χ₀ and the critical widths."""

    def test_soliton_values(self):
        assert soliton(0.0) == 0.0
        assert soliton(40.0) == pytest.approx(1.0)
        assert soliton(-40.0) == pytest.approx(-1.0)

    def test_kernel_profile_values(self):
        assert chi0(0.0) == 1.0
        x = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(chi0(x) ** 2, 1.0 - soliton(x) ** 2)

    def test_critical_widths(self):
        assert critical_width(1) == pytest.approx(SQRT2 * math.pi)
        assert critical_width(2) == pytest.approx(2.0 * critical_width(1))

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_critical_width_rejects_invalid_mode(self, k):
        with pytest.raises(DomainValidationError) as exc_info:
            critical_width(k)
        assert "positive integer" in str(exc_info.value)

    def test_u_star_solves_its_equation(self):
        x = np.linspace(-15, 15, 301)
        assert np.max(np.abs(u_star_residual(x))) < 1e-12

    def test_chi_k_field(self, domain):
        f = chi_k_field(domain, 1)
        np.testing.assert_allclose(f.coeffs[1], 1j * chi0(domain.x))
        assert np.count_nonzero(f.coeffs[0]) == 0

    def test_chi_k_field_rejects_unretained_mode(self, domain):
        with pytest.raises(DomainValidationError) as exc_info:
            chi_k_field(domain, domain.n_modes + 1)
        assert "exceeds retained modes" in str(exc_info.value)


class TestQuadrature:
    """Norms, distances, decay fits and extrapolation."""

    def test_h_norm_of_soliton(self):
        x = line_grid(801, 20.0)
        assert h_norm(soliton(x), x) ** 2 == pytest.approx(4.0 * SQRT2 / 3.0, abs=1e-6)

    def test_distance_to_self_vanishes(self):
        x = line_grid(401, 20.0)
        f = soliton(x) + 0.1j * chi0(x)
        assert gl_distance(f, f, x) == 0.0

    def test_distance_is_positive_for_distinct_fields(self):
        x = line_grid(401, 20.0)
        assert gl_distance(soliton(x), soliton(x) + 0.1j * chi0(x), x) > 0.0

    def test_decay_rate_of_exponential(self):
        x = line_grid(401, 20.0)
        assert decay_rate(np.exp(-SQRT2 * np.abs(x)), x) == pytest.approx(SQRT2, rel=1e-9)

    def test_decay_rate_of_kernel(self):
        x = line_grid(401, 20.0)
        assert decay_rate(chi0(x), x) == pytest.approx(1.0 / SQRT2, rel=1e-2)

    def test_decay_rate_needs_samples(self):
        x = line_grid(401, 20.0)
        with pytest.raises(DomainValidationError):
            decay_rate(chi0(x), x, lo=30.0, hi=40.0)

    def test_richardson(self):
        assert richardson(1.0, 1.25) == pytest.approx(1.25 + 0.25 / 3.0)
        assert refined_nx(401) == 801


class TestVProblem:
    """Odd solution of −v″ + 4v − 3χ₀²v = −S₀χ₀²."""

    @pytest.mark.parametrize("nx", [401, 801])
    def test_banded_solve_residual(self, nx):
        # diagonally dominant tridiagonal solve: residual within a few ulps of |A||v|
        v = solve_v(nx, 20.0)
        assert v_equation_residual(v, line_grid(nx, 20.0)) <= 1e-12

    def test_solution_is_odd(self):
        v = solve_v(401, 20.0)
        np.testing.assert_allclose(v, -v[::-1], atol=1e-12)

    def test_solution_decays(self):
        v = solve_v(401, 20.0)
        assert abs(v[0]) < 1e-6 and abs(v[-1]) < 1e-6


class TestCoefficients:
    """Integrals, derived coefficients and their bounds."""

    def test_integrals(self, coefficients):
        c = coefficients
        assert c.int_chi0_sq == pytest.approx(2.0 * SQRT2, abs=1e-6)
        assert c.int_chi0_4 == pytest.approx(4.0 * SQRT2 / 3.0, abs=1e-6)
        assert c.soliton_energy_density == pytest.approx(2.0 * SQRT2 / 3.0, abs=1e-6)
        assert c.int_s0_u_chi0_sq == pytest.approx(-c.int_chi0_4 / 8.0, abs=1e-6)

    def test_bounds_hold(self, coefficients):
        assert all(coefficients.bounds().values())
        assert -coefficients.int_chi0_4 <= coefficients.cross_term <= 0.0

    def test_derived_values(self, coefficients):
        c = coefficients
        assert c.lambda_coeff == pytest.approx(math.sqrt(12.0 * SQRT2 / c.omega))
        assert c.omega_consistent == pytest.approx(c.omega - 4.5 * c.int_chi0_4)
        assert c.lambda_consistent == pytest.approx(math.sqrt(12.0 * SQRT2 / c.omega_consistent))
        assert c.energy_consistent == pytest.approx(6.0 / c.omega_consistent)
        assert c.omega_consistent > 0.0

    def test_grid_refinement_changes_little(self):
        coarse, fine, extrapolated = coefficient_convergence(401, 20.0)
        assert fine.nx == 801
        assert abs(fine.omega - coarse.omega) < 1e-2
        assert abs(extrapolated.omega - fine.omega) < abs(fine.omega - coarse.omega)
