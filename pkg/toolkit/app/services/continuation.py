"""
Full strip solver: sector-form GP residual, Newton on the symmetry class,
natural continuation of the vortex branches in the width d, the discrete
Ginzburg–Landau energy, and the checks against the onset expansions.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse
from scipy.sparse import linalg as splinalg

from app.core.errors import (
    BranchLostError,
    ConvergenceError,
    DomainValidationError,
    InsufficientDataError,
    SingularSystemError,
)
from app.models.enums import BranchStatus, StepMethod
from app.services.analytic import Coefficients, chi0, critical_width, soliton
from app.services.operators import (
    assemble_strip_linearization,
    discrete_critical_width,
    kernel_profile,
    morse_index,
    soliton_field,
)
from app.services.reduction import kernel_component, residual_floor
from app.services.strip_core import (
    SectorField,
    StripDomain,
    VortexSet,
    enforce_symmetry,
    evaluate_at,
    from_real_vector,
    from_sectors,
    project_sectors,
    reflect_conjugate,
    second_difference,
    to_real_vector,
)
from app.services.vortices import vortex_census

logger = logging.getLogger(__name__)

COLLAPSE_RATIO = 0.5


# ── Residual and energy ───────────────────────────────────────────────────────
def gp_residual(f: SectorField) -> SectorField:
    """ΔΨ + Ψ(1 − |Ψ|²) per sector, reflecting ends in x."""
    dom = f.domain
    lap = second_difference(dom.nx, dom.h)
    values = f.quadrature_values
    nonlinear = project_sectors(values * (1.0 - np.abs(values) ** 2), dom)
    out = (lap @ f.coeffs.T).T - dom.wavenumbers[:, None] * f.coeffs + nonlinear
    return SectorField(dom, out, f.symmetric)


def energy(f: SectorField) -> float:
    """Discrete GL energy on ℝ × (0, d); its gradient is the sector residual."""
    dom = f.domain
    lap = second_difference(dom.nx, dom.h)
    c = f.coeffs
    stiffness = -np.sum((np.conj(c) * (lap @ c.T).T).real, axis=1) * dom.h
    mass = np.sum(np.abs(c) ** 2, axis=1) * dom.h
    kinetic = 0.5 * float(dom.sector_weights @ (stiffness + dom.wavenumbers * mass))
    values = f.quadrature_values
    potential = 0.25 * float(np.sum((1.0 - np.abs(values) ** 2) ** 2)) * dom.h * dom.width / dom.ny_quad
    return kinetic + potential


def amplitude(f: SectorField, k: int) -> float:
    """Component λ̂ of the field along iφ cos(πky/d)."""
    phi = kernel_profile(f.domain.nx, f.domain.half_length)
    return kernel_component(f, k, phi) / (f.domain.h * float(np.sum(phi**2)))


def sector_fraction(f: SectorField, k: int) -> float:
    """Share of sector k in the Parseval norm of Ψ − S₀."""
    dom = f.domain
    diff = np.array(f.coeffs)
    diff[0] -= soliton_field(dom).coeffs[0]
    per_sector = dom.sector_weights * np.sum(np.abs(diff) ** 2, axis=1)
    total = float(np.sum(per_sector))
    return float(per_sector[k] / total) if total > 0 else 0.0


def r_symmetry_defect(f: SectorField, y_points: int = 129) -> float:
    """max |RΨ − Ψ| on a physical grid."""
    y = np.linspace(0.0, f.domain.width, y_points)
    return float(np.max(np.abs(evaluate_at(reflect_conjugate(f), y) - evaluate_at(f, y))))


# ── Newton ────────────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class NewtonResult:
    field: SectorField
    history: tuple[float, ...]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def residual(self) -> float:
        return self.history[-1]


def newton_iterate(initial: SectorField, tol: float = 1e-10, max_iter: int = 25) -> NewtonResult:
    f = enforce_symmetry(initial)
    dom = f.domain
    target = max(tol, residual_floor(dom.h))
    history: list[float] = []
    for _ in range(max_iter + 1):
        r = gp_residual(f)
        history.append(r.max_norm())
        if history[-1] <= target:
            logger.debug("Newton converged at d=%.6f: %s", dom.width, history)
            return NewtonResult(f, tuple(history))
        if not math.isfinite(history[-1]):
            break
        step = assemble_strip_linearization(f).solve(to_real_vector(r))
        f = enforce_symmetry(f + from_real_vector(dom, step))
    raise ConvergenceError(
        f"Newton did not converge at d={dom.width:.6f} in {max_iter} iterations",
        history=history,
        width=dom.width,
    )


def newton_solve(initial: SectorField, width: float | None = None, tol: float = 1e-10, max_iter: int = 25) -> SectorField:
    if width is not None and width != initial.domain.width:
        initial = initial.with_width(width)
    return newton_iterate(initial, tol, max_iter).field


def _width_derivative(f: SectorField) -> np.ndarray:
    """∂/∂d of the negated residual at fixed coefficients: −2(πj)²/d³ ψ_j."""
    dom = f.domain
    dq = -2.0 * dom.wavenumbers / dom.width
    return to_real_vector(SectorField(dom, dq[:, None] * f.coeffs))


def bordered_newton(
    initial: SectorField,
    row: np.ndarray,
    row_width: float,
    target: float,
    tol: float = 1e-10,
    max_iter: int = 25,
) -> NewtonResult:
    """Newton on (Ψ, d) with one extra linear equation row·Ψ + row_width·d = target."""
    f = enforce_symmetry(initial)
    template = f.domain
    history: list[float] = []
    for _ in range(max_iter + 1):
        dom = f.domain
        r = gp_residual(f)
        u = to_real_vector(f)
        constraint = float(row @ u + row_width * dom.width - target)
        history.append(max(r.max_norm(), abs(constraint)))
        if history[-1] <= max(tol, residual_floor(dom.h)):
            return NewtonResult(f, tuple(history))
        lin = assemble_strip_linearization(f)
        basis = lin.basis()
        jac = (basis.T @ lin.jacobian @ basis).tocsr()
        column = basis.T @ _width_derivative(f)
        border_row = basis.T @ row
        system = sparse.bmat(
            [
                [jac, sparse.csr_matrix(column[:, None])],
                [sparse.csr_matrix(border_row[None, :]), sparse.csr_matrix([[row_width]])],
            ],
            format="csc",
        )
        rhs = np.concatenate([basis.T @ to_real_vector(r), [-constraint]])
        sol = splinalg.spsolve(system, rhs)
        if not np.all(np.isfinite(sol)):
            raise SingularSystemError("Bordered continuation system is singular", width=dom.width)
        new_width = dom.width + float(sol[-1])
        if new_width <= 0:
            break
        coeffs = from_real_vector(dom, u + basis @ sol[:-1]).coeffs
        f = enforce_symmetry(SectorField(template.with_width(new_width), coeffs))
    raise ConvergenceError("Bordered Newton did not converge", history=history)


def _amplitude_row(domain: StripDomain, k: int) -> np.ndarray:
    phi = kernel_profile(domain.nx, domain.half_length)
    row = np.zeros(2 * (domain.n_modes + 1) * domain.nx)
    start = (2 * k + 1) * domain.nx
    row[start : start + domain.nx] = phi / float(np.sum(phi**2))
    return row


# ── Branch records ────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class BranchPoint:
    width: float
    field: SectorField
    amplitude: float
    energy: float
    soliton_energy: float
    residual_norm: float
    vortices: VortexSet
    method: StepMethod
    iterations: int
    n_negative: int | None = None

    @property
    def energy_deficit(self) -> float:
        return self.soliton_energy - self.energy


@dataclass(eq=False)
class Branch:
    k: int
    critical_width: float
    points: list[BranchPoint] = field(default_factory=list)
    status: BranchStatus = BranchStatus.COMPLETE
    message: str | None = None

    @property
    def widths(self) -> np.ndarray:
        return np.array([p.width for p in self.points])

    @property
    def last_good_width(self) -> float | None:
        return self.points[-1].width if self.points else None

    def point_at(self, width: float, tol: float = 1e-9) -> BranchPoint:
        for p in self.points:
            if abs(p.width - width) <= tol:
                return p
        raise DomainValidationError(f"Branch k={self.k} has no point at d={width:.9f}")


def asymptotic_guess(k: int, width: float, domain: StripDomain, lambda_coeff: float) -> SectorField:
    """S₀ + iΛ√((d − d_k)/d_k) χ₀ cos(πky/d)."""
    d_k = critical_width(k)
    if width < d_k:
        raise DomainValidationError(
            f"Vortex branch k={k} exists only for d > d_k = {d_k:.6f}; got d = {width:.6f}",
            width=width,
        )
    dom = domain.with_width(width)
    x = dom.x
    amp = lambda_coeff * math.sqrt((width - d_k) / d_k)
    return from_sectors(dom, {0: soliton(x), k: 1j * amp * chi0(x)})


def _record(
    result: NewtonResult, k: int, method: StepMethod, with_spectrum: bool
) -> BranchPoint:
    f = result.field
    return BranchPoint(
        width=f.domain.width,
        field=f,
        amplitude=amplitude(f, k),
        energy=energy(f),
        soliton_energy=energy(soliton_field(f.domain)),
        residual_norm=result.residual,
        vortices=vortex_census(f),
        method=method,
        iterations=result.iterations,
        n_negative=morse_index(f) if with_spectrum else None,
    )


def _orient(result: NewtonResult, k: int) -> NewtonResult:
    """Pick the member of the conjugate pair with positive amplitude."""
    if amplitude(result.field, k) < 0:
        return NewtonResult(result.field.conjugate(), result.history)
    return result


def _fixed_amplitude(guess: SectorField, k: int, target: float, tol: float) -> NewtonResult:
    row = _amplitude_row(guess.domain, k)
    return bordered_newton(guess, row, 0.0, target, tol)


def _arclength(p0: BranchPoint, p1: BranchPoint, tol: float) -> NewtonResult:
    u0, u1 = to_real_vector(p0.field), to_real_vector(p1.field)
    du, dd = u1 - u0, p1.width - p0.width
    norm = math.sqrt(float(du @ du) + dd**2)
    tu, td = du / norm, dd / norm
    predicted_u, predicted_d = u1 + du, p1.width + dd
    guess = SectorField(p1.field.domain.with_width(predicted_d), from_real_vector(p1.field.domain, predicted_u).coeffs)
    target = float(tu @ predicted_u + td * predicted_d)
    return bordered_newton(guess, tu, td, target, tol)


def continue_branch(
    k: int,
    d_start_offset: float,
    d_end_offset: float,
    step: float,
    domain: StripDomain,
    lambda_coeff: float,
    tol: float = 1e-10,
    max_iter: int = 25,
    with_spectrum: bool = False,
) -> Branch:
    """March d over d_k + [start, end]; secant predictor, Newton corrector.

    ``lambda_coeff`` sets the onset amplitude of the first guess. Points
    reached through a bordered fallback carry the width the fallback
    converged to.
    """
    if not 0 < d_start_offset < d_end_offset:
        raise DomainValidationError(
            f"Offsets must satisfy 0 < start < end, got ({d_start_offset}, {d_end_offset})"
        )
    if step <= 0:
        raise DomainValidationError(f"Continuation step must be positive, got {step}")
    if k > domain.n_modes:
        raise DomainValidationError(f"Mode k = {k} exceeds n_modes = {domain.n_modes}", k=k)

    d_k = critical_width(k)
    n_steps = int(round((d_end_offset - d_start_offset) / step))
    widths = d_k + d_start_offset + step * np.arange(n_steps + 1)
    branch = Branch(k=k, critical_width=discrete_critical_width(k, domain.nx, domain.half_length))

    for d in widths:
        points = branch.points
        if points and d <= points[-1].width:
            continue
        if not points:
            guess = asymptotic_guess(k, d, domain, lambda_coeff)
            method = StepMethod.GUESS
        elif len(points) == 1:
            guess = points[-1].field.with_width(d)
            method = StepMethod.SECANT
        else:
            p0, p1 = points[-2], points[-1]
            ratio = (d - p1.width) / (p1.width - p0.width)
            coeffs = p1.field.coeffs + ratio * (p1.field.coeffs - p0.field.coeffs)
            guess = SectorField(domain.with_width(d), coeffs)
            method = StepMethod.SECANT
        expected = abs(amplitude(guess, k))

        try:
            result = _orient(newton_iterate(guess, tol, max_iter), k)
            if amplitude(result.field, k) < COLLAPSE_RATIO * expected:
                raise BranchLostError(
                    f"Newton collapsed onto the soliton at d={d:.6f}", width=d
                )
        except (ConvergenceError, SingularSystemError, BranchLostError) as e:
            logger.warning("Newton failed at d=%.6f (%s); switching to a bordered solve", d, e)
            try:
                if len(points) < 2:
                    method = StepMethod.FIXED_AMPLITUDE
                    result = _orient(_fixed_amplitude(guess, k, expected, tol), k)
                else:
                    method = StepMethod.ARCLENGTH
                    result = _orient(_arclength(points[-2], points[-1], tol), k)
            except (ConvergenceError, SingularSystemError) as fallback_error:
                branch.status = BranchStatus.LOST
                branch.message = str(fallback_error)
                logger.warning(
                    "branch k=%d lost after d=%s: %s", k, branch.last_good_width, fallback_error
                )
                break
            if points and result.field.domain.width <= points[-1].width:
                branch.status = BranchStatus.LOST
                branch.message = "bordered solve turned back in d"
                break

        point = _record(result, k, method, with_spectrum)
        branch.points.append(point)
        logger.info(
            "k=%d d=%.6f amplitude=%.6f residual=%.2e vortices=%d (%s)",
            k,
            point.width,
            point.amplitude,
            point.residual_norm,
            len(point.vortices),
            method.value,
        )
    return branch


# ── Onset expansions ──────────────────────────────────────────────────────────
class PowerLawFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_points: int
    exponent: float
    prefactor: float
    onset_coefficient: float
    reference: float
    reference_closed_form: float
    relative_error: float
    all_positive: bool


def _onset_points(branch: Branch, max_relative_offset: float, min_points: int) -> list[BranchPoint]:
    d_star = branch.critical_width
    chosen = [p for p in branch.points if 0 < (p.width - d_star) / d_star <= max_relative_offset]
    if len(chosen) < min_points:
        raise InsufficientDataError(
            f"Need at least {min_points} branch points within {max_relative_offset:.3f} "
            f"relative offset of d_k, got {len(chosen)}",
            available=len(chosen),
        )
    return chosen


def _fit(eps: np.ndarray, values: np.ndarray, power: float) -> tuple[float, float, float]:
    """Log-log slope and prefactor, and the intercept of values/eps^power linear in eps."""
    slope, log_c = np.polyfit(np.log(eps), np.log(values), 1)
    reduced = values / eps**power
    _, intercept = np.polyfit(eps, reduced, 1)
    return float(slope), float(math.exp(log_c)), float(intercept)


def fit_amplitude_law(
    branch: Branch,
    coefficients: Coefficients,
    max_relative_offset: float = 0.05,
    min_points: int = 6,
) -> PowerLawFit:
    """amplitude ≈ Λ((d − d_k)/d_k)^{1/2}; Λ from the intercept of amplitude²/ε."""
    pts = _onset_points(branch, max_relative_offset, min_points)
    eps = np.array([(p.width - branch.critical_width) / branch.critical_width for p in pts])
    amps = np.array([p.amplitude for p in pts])
    slope, prefactor, _ = _fit(eps, amps, 0.5)
    _, intercept = np.polyfit(eps, amps**2 / eps, 1)
    lam = math.sqrt(max(intercept, 0.0))
    return PowerLawFit(
        n_points=len(pts),
        exponent=slope,
        prefactor=prefactor,
        onset_coefficient=lam,
        reference=coefficients.lambda_consistent,
        reference_closed_form=coefficients.lambda_coeff,
        relative_error=abs(lam - coefficients.lambda_consistent) / coefficients.lambda_consistent,
        all_positive=bool(np.all(amps > 0)),
    )


def verify_energy_expansion(
    branch: Branch,
    coefficients: Coefficients,
    max_relative_offset: float = 0.05,
    min_points: int = 6,
) -> PowerLawFit:
    """E(S₀) − E(Ψ) ≈ 𝓔 (d − d_k)²/d_k near onset."""
    pts = _onset_points(branch, max_relative_offset, min_points)
    d_star = branch.critical_width
    offsets = np.array([p.width - d_star for p in pts])
    deficits = np.array([p.energy_deficit for p in pts])
    if np.any(deficits <= 0):
        slope, prefactor, coefficient = float("nan"), float("nan"), float("nan")
    else:
        slope, prefactor, _ = _fit(offsets, deficits, 2.0)
        _, coefficient = np.polyfit(offsets, deficits * d_star / offsets**2, 1)
    return PowerLawFit(
        n_points=len(pts),
        exponent=slope,
        prefactor=prefactor,
        onset_coefficient=float(coefficient),
        reference=coefficients.energy_consistent,
        reference_closed_form=coefficients.energy_coeff,
        relative_error=abs(coefficient - coefficients.energy_consistent) / coefficients.energy_consistent,
        all_positive=bool(np.all(deficits > 0)),
    )


# ── Tiling ────────────────────────────────────────────────────────────────────
class TilingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    widths: list[float]
    max_errors: list[float]
    max_error: float


def tile(f1: SectorField, k: int, y: np.ndarray) -> np.ndarray:
    """Values of the k-fold tiling of f1 (width d/k) at ordinates y ∈ [0, d].

    Even tiles repeat f1; odd tiles are its mirror image
    Ψ₁(x, d/k − y) = conj((RΨ₁)(x, y)).
    """
    d1 = f1.domain.width
    mirrored = reflect_conjugate(f1)
    index = np.clip(np.floor(y / d1).astype(int), 0, k - 1)
    local = y - index * d1
    out = np.empty((f1.domain.nx, y.size), dtype=complex)
    even = index % 2 == 0
    out[:, even] = evaluate_at(f1, local[even])
    out[:, ~even] = np.conj(evaluate_at(mirrored, local[~even]))
    return out


def verify_tiling(branch_k: Branch, branch_1: Branch, y_points: int = 257) -> TilingReport:
    if branch_1.k != 1:
        raise DomainValidationError("Tiling compares against the k = 1 branch")
    widths, errors = [], []
    for p in branch_k.points:
        base = branch_1.point_at(p.width / branch_k.k)
        if base.field.domain.nx != p.field.domain.nx:
            raise DomainValidationError("Tiled branches must share the x grid")
        y = np.linspace(0.0, p.width, y_points)
        err = float(np.max(np.abs(evaluate_at(p.field, y) - tile(base.field, branch_k.k, y))))
        widths.append(p.width)
        errors.append(err)
    if not widths:
        raise InsufficientDataError("No branch points to compare")
    return TilingReport(k=branch_k.k, widths=widths, max_errors=errors, max_error=max(errors))
