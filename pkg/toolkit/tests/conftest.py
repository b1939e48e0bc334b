"""
Shared grids, coefficients and branches. Expensive solves are session-scoped
so each runs once per test session.
"""

import pytest

from app.services.analytic import compute_coefficients, critical_width
from app.services.continuation import continue_branch
from app.services.strip_core import make_domain

HALF_LENGTH = 20.0
NX = 401
N_MODES = 4


@pytest.fixture(scope="session")
def d1():
    return critical_width(1)


@pytest.fixture(scope="session")
def domain(d1):
    """k = 1 strip slightly above onset on the test grid."""
    return make_domain(HALF_LENGTH, d1 + 0.2, NX, N_MODES)


@pytest.fixture(scope="session")
def fine_domain(d1):
    """Single-mode strip on the default grid, for O(h²)-sensitive checks."""
    return make_domain(HALF_LENGTH, d1, 801, 1)


@pytest.fixture(scope="session")
def coefficients():
    return compute_coefficients(NX, HALF_LENGTH)


@pytest.fixture(scope="session")
def branch_k1(domain, coefficients):
    """Points at d₁ + 0.05, ..., d₁ + 0.2."""
    return continue_branch(
        1, 0.05, 0.2, 0.05, domain, lambda_coeff=coefficients.lambda_consistent, tol=1e-10
    )


@pytest.fixture(scope="session")
def onset_branch(domain, coefficients, d1):
    """Ten points with (d − d₁)/d₁ between 0.005 and 0.05."""
    start, stop = 0.005 * d1, 0.05 * d1
    return continue_branch(
        1, start, stop, (stop - start) / 9, domain,
        lambda_coeff=coefficients.lambda_consistent, tol=1e-10,
    )


@pytest.fixture
def config_file(tmp_path):
    def write(text: str):
        path = tmp_path / "run.env"
        path.write_text(text)
        return path

    return write
