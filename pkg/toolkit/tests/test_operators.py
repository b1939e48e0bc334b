"""
Tests for the 1-D linearizations, the strip Jacobian and the eigen solves.
"""

import math

import numpy as np
import pytest

from app.core.errors import DomainValidationError
from app.models.enums import L0Sign, OperatorKind
from app.services.analytic import SQRT2, chi0, critical_width, soliton
from app.services.continuation import gp_residual
from app.services.operators import (
    assemble_L0,
    assemble_strip_linearization,
    assemble_Tk,
    discrete_critical_width,
    discrete_soliton,
    expected_soliton_morse_index,
    kernel_profile,
    lowest_l0_minus,
    morse_index,
    soliton_field,
    spectrum,
    symmetry_basis,
)
from app.services.strip_core import (
    SectorField,
    enforce_symmetry,
    from_real_vector,
    from_sectors,
    line_grid,
    make_domain,
    to_real_vector,
)


class TestSymmetryBasis:
    """Orthonormal odd and even grid bases."""

    def test_orthonormal(self):
        odd, even = symmetry_basis(11)
        np.testing.assert_allclose((odd.T @ odd).toarray(), np.eye(5), atol=1e-15)
        np.testing.assert_allclose((even.T @ even).toarray(), np.eye(6), atol=1e-15)
        assert abs(odd.T @ even).max() == 0.0

    def test_first_even_column_is_the_centre_node(self):
        _, even = symmetry_basis(11)
        np.testing.assert_array_equal(even[:, 0].toarray().ravel(), np.eye(11)[5])


class TestSolitonOperators:
    """L₀± about S₀ on the default grid."""

    x = line_grid(801, 20.0)

    def test_operators_are_symmetric(self):
        assert assemble_L0(L0Sign.PLUS, self.x).asymmetry() == 0.0
        assert assemble_L0("minus", self.x).asymmetry() == 0.0

    def test_lowest_l0_minus_eigenpair(self):
        result = spectrum(assemble_L0(L0Sign.MINUS, self.x), 2)
        assert result.eigenvalues[0] == pytest.approx(-0.5, abs=5e-4)
        h = self.x[1] - self.x[0]
        chi = chi0(self.x) / math.sqrt(h * np.sum(chi0(self.x) ** 2))
        assert math.sqrt(h * np.sum((result.eigenvectors[:, 0] - chi) ** 2)) < 1e-3
        assert result.n_negative == 1

    def test_l0_plus_kernel_lies_outside_the_symmetry_class(self):
        restricted = spectrum(assemble_L0(L0Sign.PLUS, self.x), 1)
        full = spectrum(assemble_L0(L0Sign.PLUS, self.x), 1, restrict=False)
        assert restricted.eigenvalues[0] > 0.1
        assert full.eigenvalues[0] == pytest.approx(0.0, abs=5e-4)

    def test_eigenvectors_are_normalized(self):
        result = spectrum(assemble_L0(L0Sign.MINUS, self.x), 3)
        h = self.x[1] - self.x[0]
        np.testing.assert_allclose(h * np.sum(result.eigenvectors**2, axis=0), 1.0, rtol=1e-10)
        assert np.all(result.residuals < 1e-8)

    def test_n_eigs_must_be_positive(self):
        with pytest.raises(ValueError) as exc_info:
            spectrum(assemble_L0(L0Sign.MINUS, self.x), 0)
        assert "n_eigs" in str(exc_info.value)


class TestDiscreteReferences:
    """Discrete soliton, kernel and critical width."""

    def test_discrete_soliton_is_odd_and_close_to_tanh(self):
        s = discrete_soliton(401, 20.0)
        x = line_grid(401, 20.0)
        np.testing.assert_allclose(s, -s[::-1], atol=1e-14)
        assert np.max(np.abs(s - soliton(x))) < 5e-3

    def test_kernel_profile_is_normalized_at_the_centre(self):
        phi = kernel_profile(401, 20.0)
        assert phi[200] == 1.0
        assert np.max(np.abs(phi - chi0(line_grid(401, 20.0)))) < 5e-3

    def test_discrete_critical_width(self):
        assert lowest_l0_minus(801, 20.0) == pytest.approx(-0.5, abs=5e-4)
        assert discrete_critical_width(1, 801, 20.0) == pytest.approx(critical_width(1), abs=1e-2)
        assert discrete_critical_width(2, 801, 20.0) == pytest.approx(2 * discrete_critical_width(1, 801, 20.0))


class TestTk:
    """Sector-k linearization about the soliton."""

    x = line_grid(401, 20.0)

    def test_block_structure(self):
        op = assemble_Tk(soliton(self.x), 1, 5.0, self.x)
        assert op.kind == OperatorKind.TK
        assert op.size == 2 * self.x.size
        assert op.parities == ("odd", "even")
        assert op.asymmetry() == 0.0

    def test_lowest_eigenvalue_changes_sign_at_the_critical_width(self):
        psi0 = discrete_soliton(401, 20.0)
        d1 = critical_width(1)
        below = spectrum(assemble_Tk(psi0, 1, d1 - 0.05, self.x), 1).eigenvalues[0]
        above = spectrum(assemble_Tk(psi0, 1, d1 + 0.05, self.x), 1).eigenvalues[0]
        assert below > 0.0 > above

    def test_kernel_at_discrete_critical_width(self):
        psi0 = discrete_soliton(401, 20.0)
        d = discrete_critical_width(1, 401, 20.0)
        assert spectrum(assemble_Tk(psi0, 1, d, self.x), 1).eigenvalues[0] == pytest.approx(0.0, abs=1e-10)


class TestStripLinearization:
    """Jacobian of the sector residual and the Morse index about S₀."""

    def test_symmetric(self, domain):
        f = from_sectors(domain, {0: soliton(domain.x), 1: 0.2j * chi0(domain.x)})
        assert assemble_strip_linearization(f).asymmetry() < 1e-12

    def test_jacobian_matches_finite_differences(self, domain):
        f = from_sectors(domain, {0: soliton(domain.x), 1: 0.2j * chi0(domain.x), 2: 0.05 * soliton(domain.x)})
        rng = np.random.default_rng(7)
        shape = (domain.n_modes + 1, domain.nx)
        direction = enforce_symmetry(SectorField(domain, rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
        eps = 1e-5
        plus = gp_residual(f + direction.scaled(eps))
        minus = gp_residual(f - direction.scaled(eps))
        fd = -(to_real_vector(plus) - to_real_vector(minus)) / (2 * eps)
        exact = assemble_strip_linearization(f).jacobian @ to_real_vector(direction)
        assert np.linalg.norm(exact - fd) <= 1e-6 * np.linalg.norm(exact)

    def test_solve_inverts_jacobian(self, domain):
        f = from_sectors(domain, {0: soliton(domain.x), 1: 0.2j * chi0(domain.x)})
        lin = assemble_strip_linearization(f)
        rhs = to_real_vector(gp_residual(f))
        delta = lin.solve(rhs)
        assert np.linalg.norm(lin.jacobian @ delta - rhs) <= 1e-8 * np.linalg.norm(rhs)
        assert from_real_vector(domain, delta).coeffs.shape == f.coeffs.shape

    @pytest.mark.parametrize("width, expected", [(4.0, 1), (5.0, 2), (9.5, 3)])
    def test_morse_index_of_soliton(self, width, expected):
        dom = make_domain(20.0, width, 401, 4)
        assert expected_soliton_morse_index(width) == expected
        assert morse_index(soliton_field(dom)) == expected

    def test_morse_staircase_formula(self):
        assert expected_soliton_morse_index(critical_width(1) - 1e-9) == 1
        assert expected_soliton_morse_index(critical_width(1) + 1e-9) == 2
        assert expected_soliton_morse_index(2 * SQRT2 * math.pi + 0.1) == 3

    def test_morse_index_jumps_at_the_critical_width(self):
        def count(d):
            return morse_index(soliton_field(make_domain(20.0, d, 401, 2)))

        lo, hi = critical_width(1) - 0.2, critical_width(1) + 0.2
        assert (count(lo), count(hi)) == (1, 2)
        while hi - lo > 1e-3:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if count(mid) == 1 else (lo, mid)
        jump = 0.5 * (lo + hi)
        assert jump == pytest.approx(discrete_critical_width(1, 401, 20.0), abs=2e-3)
        assert jump == pytest.approx(critical_width(1), abs=0.02)

    def test_strip_needs_a_transverse_mode(self):
        with pytest.raises(DomainValidationError):
            make_domain(20.0, 5.0, 401, 0)
