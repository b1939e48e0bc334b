"""
Closed-form profiles of the soliton problem and the coefficient pipeline.

The soliton S₀ = tanh(x/√2) and the kernel profile χ₀ = sech(x/√2) are
exact; ω, Λ and 𝓔 depend on the odd solution v of
−v″ + 4v − 3χ₀²v = −S₀χ₀², obtained here by a banded finite-difference
solve and integrated with composite Simpson quadrature.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate, linalg

from app.core.errors import DomainValidationError
from app.services.strip_core import SectorField, StripDomain, from_sectors, line_grid

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
BOUND_SLACK = 1e-8


# ── Profiles ──────────────────────────────────────────────────────────────────
def soliton(x):
    return np.tanh(np.asarray(x) / SQRT2)


def soliton_derivative(x):
    return 1.0 / (SQRT2 * np.cosh(np.asarray(x) / SQRT2) ** 2)


def chi0(x):
    return 1.0 / np.cosh(np.asarray(x) / SQRT2)


def critical_width(k: int) -> float:
    if int(k) != k or k < 1:
        raise DomainValidationError(f"Mode index k must be a positive integer, got {k}")
    return SQRT2 * math.pi * k


def chi_k_field(domain: StripDomain, k: int, profile: np.ndarray | None = None) -> SectorField:
    """iχ₀(x)cos(πky/d); ``profile`` substitutes a discrete kernel for χ₀."""
    if k > domain.n_modes:
        raise DomainValidationError(
            f"Mode k = {k} exceeds retained modes n_modes = {domain.n_modes}", k=k
        )
    critical_width(k)
    p = chi0(domain.x) if profile is None else profile
    return from_sectors(domain, {k: 1j * p})


def u_star(x):
    """∂_{λλ} of the zero sector at the onset: −x/(2√2 cosh²(x/√2))."""
    x = np.asarray(x, dtype=float)
    return -x / (2.0 * SQRT2 * np.cosh(x / SQRT2) ** 2)


def u_star_second_derivative(x):
    x = np.asarray(x, dtype=float)
    t = np.tanh(x / SQRT2)
    s2 = 1.0 / np.cosh(x / SQRT2) ** 2
    return s2 * t + x * s2 * (s2 - 2.0 * t**2) / (2.0 * SQRT2)


def u_star_residual(x):
    """−U″ − U/cosh² + 2U tanh² + sinh/cosh³, which vanishes identically."""
    x = np.asarray(x, dtype=float)
    u = u_star(x)
    t = np.tanh(x / SQRT2)
    s2 = 1.0 / np.cosh(x / SQRT2) ** 2
    return -u_star_second_derivative(x) - u * s2 + 2.0 * u * t**2 + t * s2


# ── Quadrature and norms ──────────────────────────────────────────────────────
def simpson(values, h: float) -> float:
    return float(integrate.simpson(np.asarray(values), dx=h))


def derivative(values, h: float) -> np.ndarray:
    """Sixth-order central difference; np.gradient near the ends."""
    f = np.asarray(values)
    out = np.gradient(f, h, edge_order=2)
    if f.size >= 7:
        out[3:-3] = (
            -f[:-6] + 9.0 * f[1:-5] - 45.0 * f[2:-4] + 45.0 * f[4:-2] - 9.0 * f[5:-1] + f[6:]
        ) / (60.0 * h)
    return out


def _spacing(x: np.ndarray) -> float:
    return float(x[1] - x[0])


def h_norm(f, x: np.ndarray) -> float:
    """Weighted norm ∫ |f′|² + (1 − S₀²)|f|² adapted to the soliton."""
    h = _spacing(x)
    f = np.asarray(f)
    integrand = np.abs(derivative(f, h)) ** 2 + (1.0 - soliton(x) ** 2) * np.abs(f) ** 2
    return math.sqrt(max(simpson(integrand, h), 0.0))


def gl_distance(f, g, x: np.ndarray) -> float:
    h = _spacing(x)
    f = np.asarray(f)
    g = np.asarray(g)
    modulus_gap = simpson((np.abs(g) ** 2 - np.abs(f) ** 2) ** 2, h)
    return math.sqrt(h_norm(f - g, x) ** 2 + modulus_gap)


def decay_rate(values, x: np.ndarray, lo: float = 5.0, hi: float | None = None) -> float:
    """Exponential rate σ of |values| ~ e^{−σ|x|} fitted on lo ≤ |x| ≤ hi."""
    if hi is None:
        hi = float(np.max(np.abs(x))) - 5.0
    mag = np.abs(np.asarray(values))
    mask = (np.abs(x) >= lo) & (np.abs(x) <= hi) & (mag > 1e-300)
    if mask.sum() < 2:
        raise DomainValidationError(
            f"No samples with lo={lo} <= |x| <= hi={hi} to fit a decay rate"
        )
    slope, _ = np.polyfit(np.abs(x[mask]), np.log(mag[mask]), 1)
    return float(-slope)


def richardson(coarse: float, fine: float, order: int = 2) -> float:
    """Extrapolate values computed at spacing h and h/2."""
    return fine + (fine - coarse) / (2**order - 1)


# ── v boundary-value problem ──────────────────────────────────────────────────
def _v_system(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = _spacing(x)
    n = x.size
    main = 2.0 / h**2 + 4.0 - 3.0 * chi0(x) ** 2
    main[0] -= 1.0 / h**2
    main[-1] -= 1.0 / h**2
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0 / h**2
    ab[1] = main
    ab[2, :-1] = -1.0 / h**2
    rhs = -soliton(x) * chi0(x) ** 2
    return ab, rhs


def solve_v(nx: int, half_length: float) -> np.ndarray:
    x = line_grid(nx, half_length)
    ab, rhs = _v_system(x)
    v = linalg.solve_banded((1, 1), ab, rhs)
    logger.debug("v solved on nx=%d, max|v|=%.6e", nx, np.max(np.abs(v)))
    return v


def v_equation_residual(v: np.ndarray, x: np.ndarray) -> float:
    """Max-norm residual of the discrete v-equation."""
    ab, rhs = _v_system(x)
    applied = ab[1] * v
    applied[:-1] += ab[0, 1:] * v[1:]
    applied[1:] += ab[2, :-1] * v[:-1]
    return float(np.max(np.abs(applied - rhs)))


# ── Coefficients ──────────────────────────────────────────────────────────────
class Coefficients(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int
    half_length: float
    omega: float
    lambda_coeff: float
    energy_coeff: float
    int_chi0_sq: float
    int_chi0_4: float
    cross_term: float
    soliton_energy_density: float
    soliton_h_norm_sq: float
    int_s0_u_chi0_sq: float
    omega_consistent: float
    lambda_consistent: float
    energy_consistent: float

    def bounds(self) -> dict[str, bool]:
        """Verdicts of the four inequalities the closed-form values obey."""
        lam_from_omega = math.sqrt(12.0 * SQRT2 / self.omega)
        return {
            "omega_lower_bound": self.omega >= 5.25 * self.int_chi0_4 - BOUND_SLACK,
            "lambda_from_omega": abs(self.lambda_coeff - lam_from_omega) <= BOUND_SLACK,
            "energy_lower_bound": self.energy_coeff
            >= 9.0 * self.lambda_coeff**2 / (14.0 * SQRT2) - BOUND_SLACK,
            "cross_term_range": -self.int_chi0_4 - BOUND_SLACK
            <= self.cross_term
            <= BOUND_SLACK,
        }


def _derived(int_chi0_4: float, cross_term: float) -> dict[str, float]:
    a, b = int_chi0_4, cross_term
    omega = 33.0 / 4.0 * a + 3.0 * b
    lam = math.sqrt(12.0 * SQRT2 / omega)
    energy = lam**2 / SQRT2 * (1.0 - (5.0 * a + 12.0 * b) / (2.0 * (11.0 * a + 4.0 * b)))
    omega_c = 15.0 / 4.0 * a + 3.0 * b
    return {
        "omega": omega,
        "lambda_coeff": lam,
        "energy_coeff": energy,
        "omega_consistent": omega_c,
        "lambda_consistent": math.sqrt(12.0 * SQRT2 / omega_c),
        "energy_consistent": 6.0 / omega_c,
    }


def compute_coefficients(nx: int, half_length: float) -> Coefficients:
    x = line_grid(nx, half_length)
    h = _spacing(x)
    s0 = soliton(x)
    c0 = chi0(x)
    v = solve_v(nx, half_length)

    int_chi0_4 = simpson(c0**4, h)
    cross_term = simpson(s0 * v * c0**2, h)
    coeffs = Coefficients(
        nx=nx,
        half_length=half_length,
        int_chi0_sq=simpson(c0**2, h),
        int_chi0_4=int_chi0_4,
        cross_term=cross_term,
        soliton_energy_density=simpson(
            0.5 * soliton_derivative(x) ** 2 + 0.25 * (1.0 - s0**2) ** 2, h
        ),
        soliton_h_norm_sq=h_norm(s0, x) ** 2,
        int_s0_u_chi0_sq=simpson(s0 * u_star(x) * c0**2, h),
        **_derived(int_chi0_4, cross_term),
    )
    logger.info(
        "coefficients nx=%d: omega=%.8f omega_consistent=%.8f cross_term=%.8e",
        nx,
        coeffs.omega,
        coeffs.omega_consistent,
        coeffs.cross_term,
    )
    return coeffs


def extrapolate_coefficients(coarse: Coefficients, fine: Coefficients) -> Coefficients:
    """Richardson-combine two resolutions; derived values are recomputed."""
    measured = (
        "int_chi0_sq",
        "int_chi0_4",
        "cross_term",
        "soliton_energy_density",
        "soliton_h_norm_sq",
        "int_s0_u_chi0_sq",
    )
    values = {name: richardson(getattr(coarse, name), getattr(fine, name)) for name in measured}
    return Coefficients(
        nx=fine.nx,
        half_length=fine.half_length,
        **values,
        **_derived(values["int_chi0_4"], values["cross_term"]),
    )


def refined_nx(nx: int) -> int:
    """Grid with half the spacing on the same interval."""
    return 2 * nx - 1


def coefficient_convergence(nx: int, half_length: float) -> tuple[Coefficients, Coefficients, Coefficients]:
    """(coarse, fine, extrapolated) coefficients at spacings h and h/2."""
    coarse = compute_coefficients(nx, half_length)
    fine = compute_coefficients(refined_nx(nx), half_length)
    return coarse, fine, extrapolate_coefficients(coarse, fine)
