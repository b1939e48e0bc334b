"""
Tests for zero finding and winding degrees.
"""

import numpy as np
import pytest

from app.core.errors import DomainValidationError
from app.services.analytic import chi0, soliton
from app.services.operators import soliton_field
from app.services.strip_core import evaluate_at, from_sectors, make_domain
from app.services.vortices import FieldEvaluator, find_zeros, vortex_census, winding_number


@pytest.fixture(scope="module")
def synthetic():
    """S₀ + 0.3iχ₀ cos(πy/d) at d = 5: one zero at (0, d/2)."""
    dom = make_domain(20.0, 5.0, 401, 4)
    return from_sectors(dom, {0: soliton(dom.x), 1: 0.3j * chi0(dom.x)})


class TestWindingNumber:
    """Degrees counted counterclockwise."""

    def test_identity_has_degree_one(self):
        assert winding_number(lambda x, y: x + 1j * y, (0.0, 0.0), 1.0) == 1

    def test_conjugate_has_degree_minus_one(self):
        assert winding_number(lambda x, y: x - 1j * y, (0.0, 0.0), 1.0) == -1

    def test_square_has_degree_two(self):
        assert winding_number(lambda x, y: (x + 1j * y) ** 2, (0.0, 0.0), 1.0, n_points=256) == 2

    def test_contour_without_zero(self):
        assert winding_number(lambda x, y: x + 1j * y, (3.0, 0.0), 1.0) == 0

    def test_needs_enough_points(self):
        with pytest.raises(DomainValidationError) as exc_info:
            winding_number(lambda x, y: x + 1j * y, (0.0, 0.0), 1.0, n_points=32)
        assert "at least 64" in str(exc_info.value)

    def test_contour_must_stay_inside_the_strip(self, synthetic):
        with pytest.raises(DomainValidationError) as exc_info:
            winding_number(synthetic, (0.0, 0.5), 1.0)
        assert "boundary" in str(exc_info.value)


class TestFieldEvaluator:
    """Spline-in-x evaluation of sector fields."""

    def test_matches_the_series_at_grid_nodes(self, synthetic):
        evaluator = FieldEvaluator(synthetic)
        dom = synthetic.domain
        y = np.array([0.3, 1.7, 4.2])
        i = np.array([150, 200, 260])
        np.testing.assert_allclose(evaluator(dom.x[i], y), evaluate_at(synthetic, y)[i, [0, 1, 2]], atol=1e-12)

    def test_rejects_points_outside_the_interval(self, synthetic):
        with pytest.raises(DomainValidationError):
            FieldEvaluator(synthetic)(25.0, 1.0)


class TestCensus:
    """Isolated zeros of strip fields."""

    def test_real_field_is_degenerate(self, domain):
        result = find_zeros(soliton_field(domain))
        assert result.degenerate
        assert len(result) == 0

    def test_synthetic_vortex(self, synthetic):
        census = vortex_census(synthetic)
        assert not census.degenerate
        assert len(census) == 1
        v = census.entries[0]
        assert v.x == pytest.approx(0.0, abs=1e-8)
        assert v.y == pytest.approx(2.5, abs=1e-8)
        assert v.degree == -1
        assert v.refined

    def test_conjugate_reverses_the_degree(self, synthetic):
        assert vortex_census(synthetic.conjugate()).degrees() == [1]
