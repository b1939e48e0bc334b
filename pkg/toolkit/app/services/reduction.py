"""
Executable Lyapunov–Schmidt reduction around the soliton.

A field Ψ = ψ₀ + W + λχ_k is split into its y-independent sector ψ₀, the
complement W ∈ H_k (sector k orthogonal to the kernel iφ) and the scalar
amplitude λ along χ_k = iφ cos(πky/d). The fixed point of the map Ξ_k
solves every equation except the kernel direction; the scalar residual
left in that direction is the bifurcation function J(d, λ).

The discrete soliton and its discrete kernel φ (operators module) play the
roles of S₀ and χ₀, so that J and its derivatives vanish to roundoff where
the continuum theory says they vanish.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize, sparse
from scipy.sparse import linalg as splinalg

from app.core.errors import (
    ConvergenceError,
    DomainValidationError,
    SingularSystemError,
    VortexStripError,
)
from app.models.enums import CellStatus
from app.services.analytic import SQRT2, chi_k_field
from app.services.operators import (
    assemble_Tk,
    discrete_critical_width,
    discrete_soliton,
    kernel_profile,
    symmetry_basis,
)
from app.services.strip_core import (
    SectorField,
    StripDomain,
    branch_class_mask,
    impose_branch_class,
    project_sectors,
    second_difference,
    zeros,
)

logger = logging.getLogger(__name__)

EXPECTED_MIXED_DERIVATIVE = -2.0 * SQRT2


def residual_floor(h: float) -> float:
    """Roundoff level of a three-point second difference at spacing h."""
    return 64.0 * np.finfo(float).eps / h**2


# ── Nonlinearities ────────────────────────────────────────────────────────────
def _check_zero_mean(w_full: SectorField) -> None:
    if np.max(np.abs(w_full.coeffs[0])) > 1e-12:
        raise DomainValidationError(
            "Complement field must have a vanishing zero sector",
            zero_sector=float(np.max(np.abs(w_full.coeffs[0]))),
        )


def _cubic_terms(psi0: np.ndarray, w_full: SectorField) -> np.ndarray:
    """2⟨ψ₀, w⟩_ℂ w + |w|²(ψ₀ + w) on the quadrature nodes."""
    w = w_full.quadrature_values
    p = np.asarray(psi0, dtype=complex)[:, None]
    inner = (np.conj(p) * w).real
    return 2.0 * inner * w + np.abs(w) ** 2 * (p + w)


def f0(psi0: np.ndarray, w_full: SectorField) -> np.ndarray:
    _check_zero_mean(w_full)
    return _cubic_terms(psi0, w_full).mean(axis=1)


def g_nl(psi0: np.ndarray, w_full: SectorField) -> SectorField:
    _check_zero_mean(w_full)
    cubic = _cubic_terms(psi0, w_full)
    values = -cubic + cubic.mean(axis=1)[:, None]
    return SectorField(w_full.domain, project_sectors(values, w_full.domain))


def apply_T(psi0: np.ndarray, w: SectorField) -> SectorField:
    """T(w) = −Δw − w(1 − |ψ₀|²) + 2⟨ψ₀, w⟩_ℂ ψ₀, sector by sector."""
    dom = w.domain
    lap = second_difference(dom.nx, dom.h)
    p = np.asarray(psi0, dtype=complex)
    c = w.coeffs
    out = -(lap @ c.T).T + dom.wavenumbers[:, None] * c
    out += -c * (1.0 - np.abs(p) ** 2) + 2.0 * (np.conj(p) * c).real * p
    return SectorField(dom, out)


def kernel_component(w: SectorField, k: int, phi: np.ndarray) -> float:
    """⟨w_k, iφ⟩ on the grid."""
    return float(w.domain.h * np.sum((w.coeffs[k] * np.conj(1j * phi)).real))


def project_out_kernel(w: SectorField, k: int, phi: np.ndarray) -> SectorField:
    """π_k: remove the iφ cos(πky/d) component."""
    coeffs = np.array(w.coeffs)
    coeffs[k] -= kernel_component(w, k, phi) / (w.domain.h * np.sum(phi**2)) * 1j * phi
    return SectorField(w.domain, coeffs, w.symmetric)


# ── Zero sector ───────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class ZeroSectorSolution:
    psi0: np.ndarray
    multiplier: float
    history: tuple[float, ...]


def zero_sector_newton(
    f0_rhs: np.ndarray,
    x: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 25,
    initial: np.ndarray | None = None,
) -> ZeroSectorSolution:
    """Newton for −ψ″ − ψ(1 − |ψ|²) + f₀ = 0 in the symmetry class, Im ψ(0) pinned.

    The pin enters through a Lagrange multiplier ν acting on Im ψ at x = 0;
    ν vanishes when the forcing is compatible with the pin.
    """
    nx = x.size
    h = float(x[1] - x[0])
    c = nx // 2
    lap = -second_difference(nx, h)
    odd, even = symmetry_basis(nx)
    basis = sparse.block_diag([odd, even], format="csr")
    pin = sparse.csr_matrix(([1.0], ([c], [0])), shape=(basis.shape[1], 1))

    f = np.asarray(f0_rhs, dtype=complex)
    psi = np.array(discrete_soliton(nx, x[-1]) if initial is None else initial, dtype=complex)
    psi[c] = psi[c].real
    nu = 0.0
    effective_tol = max(tol, residual_floor(h))
    history: list[float] = []

    def residual(p: np.ndarray, multiplier: float) -> np.ndarray:
        r = lap @ p - p * (1.0 - np.abs(p) ** 2) + f
        r[c] += 1j * multiplier
        return np.concatenate([r.real, r.imag])

    for _ in range(max_iter + 1):
        r = residual(psi, nu)
        history.append(float(np.max(np.abs(r))))
        if history[-1] <= effective_tol:
            logger.debug("zero sector converged: %s", history)
            return ZeroSectorSolution(psi, nu, tuple(history))
        jac = assemble_Tk(psi, 0, math.inf, x).restricted()
        bordered = sparse.bmat([[jac, pin], [pin.T, None]], format="csc")
        r_plain = residual(psi, 0.0)
        rhs = np.concatenate([-(basis.T @ r_plain), [-psi[c].imag]])
        sol = splinalg.spsolve(bordered, rhs)
        step = basis @ sol[:-1]
        nu = float(sol[-1])
        psi = psi + step[:nx] + 1j * step[nx:]
        if np.max(np.abs(step)) < 1e-13 and history[-1] <= 1e3 * effective_tol:
            return ZeroSectorSolution(psi, nu, tuple(history))

    raise ConvergenceError(
        f"Zero-sector Newton did not converge in {max_iter} iterations",
        history=history,
    )


def solve_zero_sector(
    f0_rhs: np.ndarray,
    x: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 25,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    return zero_sector_newton(f0_rhs, x, tol, max_iter, initial).psi0


# ── Complement ────────────────────────────────────────────────────────────────
def _sparse_solve(matrix: sparse.spmatrix, rhs: np.ndarray, sector: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", splinalg.MatrixRankWarning)
        try:
            sol = splinalg.spsolve(matrix.tocsc(), rhs)
        except (splinalg.MatrixRankWarning, RuntimeError) as e:
            raise SingularSystemError(f"Sector {sector} operator is singular", sector=sector) from e
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError(f"Sector {sector} operator is singular", sector=sector)
    return sol


def solve_projected_w_with_multiplier(
    psi0: np.ndarray,
    rhs: SectorField,
    k: int,
    width: float,
    tol: float = 1e-10,
) -> tuple[SectorField, float]:
    """Solve π_k(T w − rhs) = 0 for w ∈ H_k; also returns the multiplier μ of iφ."""
    dom = rhs.domain
    x = dom.x
    nx = dom.nx
    phi = kernel_profile(nx, dom.half_length)
    out = np.zeros_like(rhs.coeffs)
    mu = 0.0
    for j in range(1, dom.n_modes + 1):
        op = assemble_Tk(psi0, j, width, x)
        basis = op.basis()
        reduced = op.restricted()
        r = np.concatenate([rhs.coeffs[j].real, rhs.coeffs[j].imag])
        r_reduced = basis.T @ r
        if j == k:
            border = basis.T @ np.concatenate([np.zeros(nx), phi])
            border = sparse.csr_matrix(border[:, None])
            system = sparse.bmat([[reduced, border], [border.T, None]])
            sol = _sparse_solve(system, np.concatenate([r_reduced, [0.0]]), j)
            z, mu = sol[:-1], float(sol[-1])
            defect = reduced @ z + border.toarray().ravel() * mu - r_reduced
        else:
            z = _sparse_solve(reduced, r_reduced, j)
            defect = reduced @ z - r_reduced
        scale = max(1.0, float(np.max(np.abs(r_reduced))))
        if np.max(np.abs(defect)) > max(tol, residual_floor(dom.h)) * scale:
            raise SingularSystemError(
                f"Sector {j} solve left residual {np.max(np.abs(defect)):.3e}",
                sector=j,
            )
        full = basis @ z
        out[j] = full[:nx] + 1j * full[nx:]
    return SectorField(dom, out), mu


def solve_projected_w(
    psi0: np.ndarray,
    rhs: SectorField,
    k: int,
    width: float,
    tol: float = 1e-10,
) -> SectorField:
    if np.max(np.abs(rhs.coeffs[0])) > 1e-12:
        raise DomainValidationError("Right-hand side must have a vanishing zero sector")
    return solve_projected_w_with_multiplier(psi0, rhs, k, width, tol)[0]


# ── Fixed point ───────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class ReducedState:
    psi0: np.ndarray
    w: SectorField
    lam: float
    k: int
    width: float
    fp_residual: float
    history: tuple[float, ...]
    pin_multiplier: float
    kernel_multiplier: float

    @property
    def iterations(self) -> int:
        return len(self.history)

    def chi(self) -> SectorField:
        dom = self.w.domain
        return chi_k_field(dom, self.k, kernel_profile(dom.nx, dom.half_length))

    def full_field(self) -> SectorField:
        """ψ₀ + W + λχ_k."""
        coeffs = np.array(self.w.coeffs + self.lam * self.chi().coeffs)
        coeffs[0] += self.psi0
        return SectorField(self.w.domain, coeffs)


def fixed_point(
    k: int,
    width: float,
    lam: float,
    domain: StripDomain,
    tol: float = 1e-11,
    max_iter: int = 60,
    damping: float = 0.5,
    max_contraction: float = 0.5,
    patience: int = 3,
) -> ReducedState:
    """Picard iteration of Ξ_k from (S₀, 0), restricted to the k-vortex class.

    Damping engages on the first increase of the successive difference and
    stays on; a further increase under damping tightens it once more. Once
    past the second iterate, ``patience`` consecutive steps whose contraction
    (undamped equivalent) exceeds ``max_contraction`` abort with
    ConvergenceError.
    """
    dom = domain.with_width(width)
    if k > dom.n_modes:
        raise DomainValidationError(f"Mode k = {k} exceeds n_modes = {dom.n_modes}", k=k)
    x = dom.x
    mask = branch_class_mask(k, dom)
    chi = chi_k_field(dom, k, kernel_profile(dom.nx, dom.half_length))
    psi0 = np.array(discrete_soliton(dom.nx, dom.half_length), dtype=complex)
    w = zeros(dom)
    relax = 1.0
    history: list[float] = []
    slow_steps = 0
    pin = mu = 0.0

    def fail(message: str, diffs: list[float]) -> ConvergenceError:
        return ConvergenceError(message, history=diffs, width=width, lam=lam, relax=relax)

    for it in range(max_iter):
        w_full = w + chi.scaled(lam)
        forcing = f0(psi0, w_full)
        if mask is not None:
            forcing = forcing.real.astype(complex)
        zero = zero_sector_newton(forcing, x, tol=min(tol, 1e-12), initial=psi0)
        pin = zero.multiplier
        new_psi0 = zero.psi0.real.astype(complex) if mask is not None else zero.psi0
        rhs = impose_branch_class(g_nl(new_psi0, w_full) - apply_T(new_psi0, chi).scaled(lam), mask)
        w_new, mu = solve_projected_w_with_multiplier(new_psi0, rhs, k, width)
        w_new = impose_branch_class(w_new, mask)
        diff = max(
            float(np.max(np.abs(new_psi0 - psi0))),
            float(np.max(np.abs(w_new.coeffs - w.coeffs))),
        )
        if not math.isfinite(diff) or diff > 1e3:
            raise fail(f"Fixed point diverged at d={width:.6f}, lambda={lam:.6f}", history + [diff])

        if len(history) >= 2 and diff > 10.0 * tol:
            ratio = diff / history[-1]
            if ratio > 1.0:
                if relax > damping**2:
                    relax *= damping
                    logger.warning(
                        "fixed point residual increased at d=%.6f lambda=%.4f; damping by %.3f",
                        width,
                        lam,
                        relax,
                    )
                else:
                    raise fail(
                        f"Fixed point grows under damping at d={width:.6f}, lambda={lam:.6f}",
                        history + [diff],
                    )
            undamped = 1.0 - (1.0 - ratio) / relax
            slow_steps = slow_steps + 1 if undamped > max_contraction else 0
            if slow_steps >= patience:
                raise fail(
                    f"Fixed point contraction {undamped:.3f} exceeds {max_contraction:g} "
                    f"at d={width:.6f}, lambda={lam:.6f}",
                    history + [diff],
                )
        elif history and diff > history[-1] and relax == 1.0:
            relax = damping
            logger.warning(
                "fixed point residual increased at d=%.6f lambda=%.4f; damping by %.3f",
                width,
                lam,
                relax,
            )

        psi0 = psi0 + relax * (new_psi0 - psi0)
        w = w + (w_new - w).scaled(relax)
        history.append(diff)
        logger.debug("fixed point d=%.6f lambda=%.4f iter %d diff %.3e", width, lam, it + 1, diff)
        if diff <= tol:
            return ReducedState(
                psi0=psi0,
                w=w,
                lam=lam,
                k=k,
                width=width,
                fp_residual=diff,
                history=tuple(history),
                pin_multiplier=pin,
                kernel_multiplier=mu,
            )

    raise fail(f"Fixed point did not contract to {tol:g} in {max_iter} iterations", history)


# ── Bifurcation function ──────────────────────────────────────────────────────
def J_of_state(state: ReducedState) -> float:
    """d·∫⟨[T(W + λχ_k) − g]_k, iφ⟩_ℂ dx on a converged state."""
    chi = state.chi()
    w_full = state.w + chi.scaled(state.lam)
    r = apply_T(state.psi0, w_full) - g_nl(state.psi0, w_full)
    return state.width * kernel_component(r, state.k, kernel_profile(chi.domain.nx, chi.domain.half_length))


def bifurcation_J(k: int, width: float, lam: float, domain: StripDomain, tol: float = 1e-11) -> float:
    return J_of_state(fixed_point(k, width, lam, domain, tol=tol))


class JCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: float
    lam: float
    J: float | None = None
    reduced_J: float | None = None
    status: CellStatus
    iterations: int | None = None
    reason: str | None = None


def evaluate_J_cell(k: int, width: float, lam: float, domain: StripDomain, tol: float = 1e-11) -> JCell:
    """One (d, λ) cell of the J surface; failures are recorded, not raised."""
    try:
        state = fixed_point(k, width, lam, domain, tol=tol)
    except VortexStripError as e:
        return JCell(width=width, lam=lam, status=CellStatus.DIVERGED, reason=str(e))
    value = J_of_state(state)
    return JCell(
        width=width,
        lam=lam,
        J=value,
        reduced_J=value / lam if lam != 0 else None,
        status=CellStatus.CONVERGED,
        iterations=state.iterations,
    )


def j_zero_set_scan(cells: list[JCell]) -> list[dict]:
    """Sign of 𝓙 = J/λ per converged cell (the pitchfork picture)."""
    return [
        {"width": c.width, "lam": c.lam, "sign": int(np.sign(c.reduced_J))}
        for c in cells
        if c.status == CellStatus.CONVERGED and c.reduced_J is not None
    ]


# ── Derivative probe ──────────────────────────────────────────────────────────
class DerivativeEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    error: float
    coarse: float
    fine: float


class JDerivativeTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    critical_width: float
    d_step: float
    lam_step: float
    J: float
    dJ_dd: DerivativeEstimate
    dJ_dlam: DerivativeEstimate
    d2J_dd2: DerivativeEstimate
    d2J_dlam2: DerivativeEstimate
    d2J_dd_dlam: DerivativeEstimate
    d3J_dlam3: DerivativeEstimate

    @property
    def omega_estimate(self) -> float:
        return self.d3J_dlam3.value / self.critical_width

    def vanishing(self) -> dict[str, float]:
        return {
            "J": self.J,
            "dJ_dd": self.dJ_dd.value,
            "dJ_dlam": self.dJ_dlam.value,
            "d2J_dd2": self.d2J_dd2.value,
            "d2J_dlam2": self.d2J_dlam2.value,
        }


def _combine(coarse: float, fine: float) -> DerivativeEstimate:
    return DerivativeEstimate(
        value=(4.0 * fine - coarse) / 3.0,
        error=abs(fine - coarse) / 3.0,
        coarse=coarse,
        fine=fine,
    )


def probe_J_derivatives(
    k: int,
    domain: StripDomain,
    d_step: float = 0.05,
    lam_step: float = 0.05,
    tol: float = 1e-11,
) -> JDerivativeTable:
    """Central differences of J at (d_k, 0), each refined once by step halving.

    Odd first and mixed derivatives use a fifth of ``lam_step`` so the λ³
    term stays below the target accuracy.
    """
    d0 = discrete_critical_width(k, domain.nx, domain.half_length)
    cache: dict[tuple[float, float], float] = {}

    def J(d: float, lam: float) -> float:
        key = (round(d, 14), round(lam, 14))
        if key not in cache:
            cache[key] = bifurcation_J(k, d, lam, domain, tol)
        return cache[key]

    t_small = lam_step / 5.0

    def first_lam(t):
        return (J(d0, t) - J(d0, -t)) / (2.0 * t)

    def first_d(s):
        return (J(d0 + s, 0.0) - J(d0 - s, 0.0)) / (2.0 * s)

    def second_d(s):
        return (J(d0 + s, 0.0) - 2.0 * J(d0, 0.0) + J(d0 - s, 0.0)) / s**2

    def second_lam(t):
        return (J(d0, t) - 2.0 * J(d0, 0.0) + J(d0, -t)) / t**2

    def mixed(s, t):
        return (J(d0 + s, t) - J(d0 + s, -t) - J(d0 - s, t) + J(d0 - s, -t)) / (4.0 * s * t)

    def third_lam(t):
        return (J(d0, 2 * t) - 2.0 * J(d0, t) + 2.0 * J(d0, -t) - J(d0, -2 * t)) / (2.0 * t**3)

    table = JDerivativeTable(
        k=k,
        critical_width=d0,
        d_step=d_step,
        lam_step=lam_step,
        J=J(d0, 0.0),
        dJ_dd=_combine(first_d(d_step), first_d(d_step / 2)),
        dJ_dlam=_combine(first_lam(t_small), first_lam(t_small / 2)),
        d2J_dd2=_combine(second_d(d_step), second_d(d_step / 2)),
        d2J_dlam2=_combine(second_lam(lam_step), second_lam(lam_step / 2)),
        d2J_dd_dlam=_combine(mixed(d_step, t_small), mixed(d_step / 2, t_small / 2)),
        d3J_dlam3=_combine(third_lam(lam_step), third_lam(lam_step / 2)),
    )
    logger.info(
        "J derivatives at d_k=%.8f: d2J/dd dlam=%.6f d3J/dlam3 / d_k=%.6f",
        d0,
        table.d2J_dd_dlam.value,
        table.omega_estimate,
    )
    return table


# ── Branch from the reduced equation ──────────────────────────────────────────
def lambda_star(
    k: int,
    width: float,
    domain: StripDomain,
    tol: float = 1e-11,
    lam_max: float = 0.5,
    n_scan: int = 25,
) -> float | None:
    """Positive root of λ ↦ J(d, λ), or None when there is none below lam_max.

    Scan points where the fixed point fails are skipped; a sign change is
    bracketed between the nearest converged neighbours.
    """
    lams = np.linspace(lam_max / n_scan, lam_max, n_scan)
    previous = None
    for lam in lams:
        try:
            value = bifurcation_J(k, width, float(lam), domain, tol)
        except ConvergenceError as e:
            logger.warning("J scan skips d=%.6f lambda=%.4f: %s", width, lam, e)
            continue
        if previous is not None and np.sign(value) != np.sign(previous[1]):
            try:
                root = optimize.brentq(
                    lambda t: bifurcation_J(k, width, t, domain, tol),
                    previous[0],
                    float(lam),
                    xtol=1e-13,
                    rtol=4 * np.finfo(float).eps,
                )
            except ConvergenceError as e:
                logger.warning(
                    "J root bracket [%.4f, %.4f] at d=%.6f not resolved: %s", previous[0], lam, width, e
                )
            else:
                return float(root)
        previous = (float(lam), value)
    return None


def branch_from_reduction(k: int, width: float, domain: StripDomain, tol: float = 1e-11) -> ReducedState:
    """Reduced state on the vortex branch: J(d, λ*) = 0 with λ* > 0."""
    lam = lambda_star(k, width, domain, tol)
    if lam is None:
        raise ConvergenceError(
            f"No positive root of J at d={width:.6f}; the branch exists only for d > d_k",
            width=width,
        )
    return fixed_point(k, width, lam, domain, tol=tol)
