"""
Tests for the sector residual, the energy, Newton and the continuation of
vortex branches, including the onset fits and the tiling check.
"""

import math

import numpy as np
import pytest

from app.core.errors import (
    ConvergenceError,
    DomainValidationError,
    InsufficientDataError,
)
from app.models.enums import BranchStatus, StepMethod
from app.services import continuation
from app.services.analytic import SQRT2, chi0, critical_width, soliton
from app.services.continuation import (
    Branch,
    _arclength,
    _fixed_amplitude,
    amplitude,
    asymptotic_guess,
    continue_branch,
    energy,
    fit_amplitude_law,
    gp_residual,
    newton_iterate,
    r_symmetry_defect,
    sector_fraction,
    tile,
    verify_energy_expansion,
    verify_tiling,
)
from app.services.operators import soliton_field
from app.services.strip_core import from_sectors, make_domain


class TestResidual:
    """ΔΨ + Ψ(1 − |Ψ|²) in sector form."""

    def test_constant_state_is_exact(self, domain):
        f = from_sectors(domain, {0: np.ones(domain.nx)})
        assert gp_residual(f).max_norm() == 0.0

    def test_discrete_soliton_is_a_solution(self, domain):
        assert gp_residual(soliton_field(domain)).max_norm() <= 1e-9

    def test_analytic_soliton_is_second_order_accurate(self, fine_domain):
        f = from_sectors(fine_domain, {0: soliton(fine_domain.x)})
        assert gp_residual(f).max_norm() <= 3e-4

    def test_cubic_term_is_projected_exactly(self, domain):
        # linear terms cancel, the cubic leaves −6S₀³
        s = soliton(domain.x)
        r = gp_residual(from_sectors(domain, {0: 2.0 * s})).coeffs[0]
        r_half = gp_residual(from_sectors(domain, {0: s})).coeffs[0]
        np.testing.assert_allclose(r - 2.0 * r_half, -6.0 * s**3, atol=1e-12)


class TestEnergy:
    """Discrete GL energy."""

    def test_constant_state_has_zero_energy(self, domain):
        assert energy(from_sectors(domain, {0: np.ones(domain.nx)})) == pytest.approx(0.0, abs=1e-14)

    def test_soliton_energy_density(self, fine_domain):
        e = energy(soliton_field(fine_domain))
        assert e / fine_domain.width == pytest.approx(2.0 * SQRT2 / 3.0, rel=1e-3)

    def test_energy_scales_with_width(self, domain):
        e1 = energy(soliton_field(domain))
        e2 = energy(soliton_field(domain.with_width(2.0 * domain.width)))
        assert e2 == pytest.approx(2.0 * e1, rel=1e-12)


class TestNewton:
    """Symmetry-restricted Newton on the strip."""

    def test_soliton_needs_no_iterations(self, domain):
        result = newton_iterate(soliton_field(domain))
        assert result.iterations == 0

    def test_converges_from_the_asymptotic_guess(self, domain, coefficients):
        guess = asymptotic_guess(1, domain.width, domain, coefficients.lambda_consistent)
        result = newton_iterate(guess)
        assert result.residual <= 1e-10
        assert amplitude(result.field, 1) > 0.0

    def test_conjugate_is_also_a_solution(self, branch_k1):
        f = branch_k1.points[-1].field
        assert gp_residual(f.conjugate()).max_norm() == pytest.approx(gp_residual(f).max_norm(), abs=1e-14)
        assert amplitude(f.conjugate(), 1) == pytest.approx(-amplitude(f, 1))

    def test_failure_carries_the_history(self, domain):
        guess = from_sectors(domain, {0: 50.0 * soliton(domain.x)})
        with pytest.raises(ConvergenceError) as exc_info:
            newton_iterate(guess, max_iter=2)
        assert len(exc_info.value.details["history"]) == 3


class TestAsymptoticGuess:
    """Onset approximation S₀ + iΛ√ε χ₀ cos(πky/d)."""

    def test_below_onset_is_rejected(self, domain):
        with pytest.raises(DomainValidationError) as exc_info:
            asymptotic_guess(1, critical_width(1) - 0.1, domain, 1.0)
        assert "exists only for d > d_k" in str(exc_info.value)

    def test_zero_amplitude_at_onset(self, domain):
        f = asymptotic_guess(1, critical_width(1), domain, 1.0)
        assert np.count_nonzero(f.coeffs[1]) == 0

    def test_amplitude_follows_the_square_root_law(self, domain):
        d = critical_width(1) * 1.04
        f = asymptotic_guess(1, d, domain, 2.0)
        np.testing.assert_allclose(f.coeffs[1].imag, 2.0 * 0.2 * chi0(domain.x), atol=1e-12)


class TestBranch:
    """The k = 1 branch a short distance above onset."""

    def test_branch_completes(self, branch_k1):
        assert branch_k1.status == BranchStatus.COMPLETE
        assert len(branch_k1.points) == 4
        assert branch_k1.points[0].method == StepMethod.GUESS
        assert np.all(np.diff(branch_k1.widths) > 0)

    def test_points_are_converged_vortex_states(self, branch_k1):
        amps = [p.amplitude for p in branch_k1.points]
        assert all(a > 0 for a in amps)
        assert amps == sorted(amps)
        for p in branch_k1.points:
            assert p.residual_norm <= 1e-10
            assert p.energy_deficit > 0.0

    def test_single_vortex_at_the_centre(self, branch_k1):
        for p in branch_k1.points:
            assert len(p.vortices) == 1
            v = p.vortices.entries[0]
            assert v.x == pytest.approx(0.0, abs=1e-8)
            assert v.y == pytest.approx(p.width / 2.0, abs=1e-8)
            assert v.degree == -1

    def test_first_sector_dominates(self, branch_k1):
        for p in branch_k1.points:
            assert sector_fraction(p.field, 1) > 0.5

    def test_reflection_symmetry(self, branch_k1):
        for p in branch_k1.points:
            assert r_symmetry_defect(p.field) <= 1e-8

    def test_point_lookup(self, branch_k1):
        p = branch_k1.points[1]
        assert branch_k1.point_at(p.width) is p
        assert branch_k1.last_good_width == branch_k1.points[-1].width
        with pytest.raises(DomainValidationError):
            branch_k1.point_at(p.width + 0.01)

    @pytest.mark.parametrize("start, end, step", [(0.0, 0.2, 0.05), (0.2, 0.1, 0.05), (0.05, 0.2, 0.0)])
    def test_invalid_ranges(self, domain, start, end, step):
        with pytest.raises(DomainValidationError):
            continue_branch(1, start, end, step, domain, lambda_coeff=1.0)

    def test_mode_must_be_retained(self, domain):
        with pytest.raises(DomainValidationError) as exc_info:
            continue_branch(domain.n_modes + 1, 0.05, 0.1, 0.05, domain, lambda_coeff=1.0)
        assert "exceeds n_modes" in str(exc_info.value)


class TestBorderedSolves:
    """Fixed-amplitude and pseudo-arclength corrections."""

    def test_fixed_amplitude_returns_to_the_branch_point(self, branch_k1):
        p = branch_k1.points[1]
        guess = p.field.with_width(p.width + 0.03)
        result = _fixed_amplitude(guess, 1, p.amplitude, 1e-10)
        assert result.residual <= 1e-10
        assert result.field.domain.width == pytest.approx(p.width, abs=1e-6)
        assert amplitude(result.field, 1) == pytest.approx(p.amplitude, abs=1e-9)

    def test_arclength_step_advances_along_the_branch(self, branch_k1):
        p0, p1 = branch_k1.points[1], branch_k1.points[2]
        result = _arclength(p0, p1, 1e-10)
        assert result.residual <= 1e-10
        assert gp_residual(result.field).max_norm() <= 1e-10
        assert result.field.domain.width == pytest.approx(p1.width + 0.05, abs=0.01)
        assert amplitude(result.field, 1) > p1.amplitude

    def test_newton_failure_falls_back_to_arclength(self, domain, coefficients, monkeypatch):
        calls = []

        def failing_third(initial, tol=1e-10, max_iter=25):
            calls.append(initial.domain.width)
            if len(calls) == 3:
                raise ConvergenceError("Newton did not converge", history=[1.0])
            return newton_iterate(initial, tol, max_iter)

        monkeypatch.setattr(continuation, "newton_iterate", failing_third)
        branch = continue_branch(
            1, 0.05, 0.2, 0.05, domain, lambda_coeff=coefficients.lambda_consistent, tol=1e-10
        )
        methods = [p.method for p in branch.points]
        assert methods[2] == StepMethod.ARCLENGTH
        assert branch.status == BranchStatus.COMPLETE
        assert all(p.residual_norm <= 1e-10 for p in branch.points)

    def test_fixed_amplitude_fallback_for_the_first_point(self, domain, coefficients):
        # no Newton iterations: the first point comes from the bordered solve
        guess = asymptotic_guess(1, critical_width(1) + 0.05, domain, coefficients.lambda_consistent)
        branch = continue_branch(
            1, 0.05, 0.06, 0.05, domain, lambda_coeff=coefficients.lambda_consistent, max_iter=0
        )
        assert [p.method for p in branch.points] == [StepMethod.FIXED_AMPLITUDE]
        assert branch.points[0].residual_norm <= 1e-10
        assert branch.points[0].amplitude == pytest.approx(amplitude(guess, 1), abs=1e-9)
        assert branch.status == BranchStatus.COMPLETE

    def test_branch_is_lost_when_the_fallback_fails(self, domain, coefficients, monkeypatch):
        def failing(guess, k, target, tol):
            raise ConvergenceError("Bordered Newton did not converge", history=[1.0])

        monkeypatch.setattr(continuation, "_fixed_amplitude", failing)
        branch = continue_branch(
            1, 0.05, 0.1, 0.05, domain, lambda_coeff=coefficients.lambda_consistent, max_iter=0
        )
        assert branch.points == []
        assert branch.status == BranchStatus.LOST
        assert "Bordered Newton" in branch.message


class TestOnsetFits:
    """Square-root amplitude law and quadratic energy deficit."""

    def test_too_few_points(self, branch_k1, coefficients):
        with pytest.raises(InsufficientDataError) as exc_info:
            fit_amplitude_law(branch_k1, coefficients)
        assert exc_info.value.exit_code == 1

    def test_empty_branch(self, coefficients):
        with pytest.raises(InsufficientDataError):
            verify_energy_expansion(Branch(k=1, critical_width=critical_width(1)), coefficients)

    @pytest.mark.slow
    def test_amplitude_law(self, onset_branch, coefficients):
        fit = fit_amplitude_law(onset_branch, coefficients, max_relative_offset=0.051)
        assert fit.all_positive
        assert fit.exponent == pytest.approx(0.5, abs=0.05)
        assert fit.relative_error <= 0.05

    @pytest.mark.slow
    def test_energy_expansion(self, onset_branch, coefficients):
        fit = verify_energy_expansion(onset_branch, coefficients, max_relative_offset=0.051)
        assert fit.all_positive
        assert fit.exponent == pytest.approx(2.0, abs=0.1)
        assert fit.relative_error <= 0.05


class TestTiling:
    """k-fold tilings of the k = 1 branch."""

    def test_soliton_tiles_onto_itself(self, domain):
        s = soliton_field(domain)
        y = np.linspace(0.0, 3.0 * domain.width, 31)
        np.testing.assert_allclose(tile(s, 3, y), np.repeat(s.coeffs[0].real[:, None], 31, axis=1), atol=1e-14)

    def test_tile_is_continuous_across_the_seam(self, branch_k1):
        f = branch_k1.points[0].field
        d = f.domain.width
        y = np.array([d - 1e-9, d + 1e-9])
        values = tile(f, 2, y)
        assert np.max(np.abs(values[:, 0] - values[:, 1])) < 1e-6

    def test_needs_the_first_branch(self, branch_k1):
        with pytest.raises(DomainValidationError):
            verify_tiling(branch_k1, Branch(k=2, critical_width=critical_width(2)))

    def test_empty_branch_has_nothing_to_compare(self, branch_k1):
        with pytest.raises(InsufficientDataError):
            verify_tiling(Branch(k=2, critical_width=critical_width(2)), branch_k1)

    @pytest.mark.slow
    def test_second_branch_is_a_tiling_of_the_first(self, coefficients):
        d1 = critical_width(1)
        wide = make_domain(20.0, 2.0 * d1 + 0.2, 401, 4)
        narrow = make_domain(20.0, d1 + 0.1, 401, 2)
        branch_2 = continue_branch(2, 0.1, 0.2, 0.1, wide, lambda_coeff=coefficients.lambda_consistent)
        branch_1 = continue_branch(1, 0.05, 0.1, 0.05, narrow, lambda_coeff=coefficients.lambda_consistent)
        report = verify_tiling(branch_2, branch_1)
        assert report.k == 2
        assert len(report.widths) == 2
        assert report.max_error <= 1e-6
        for p in branch_2.points:
            assert len(p.vortices) == 2
            assert math.isclose(p.vortices.entries[1].y - p.vortices.entries[0].y, p.width / 2.0, abs_tol=1e-6)
            assert p.vortices.degrees() == [-1, 1]
