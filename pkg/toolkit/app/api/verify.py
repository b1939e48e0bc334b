"""
End-to-end acceptance run: twelve numbered criteria, one record each.

Criteria whose tolerances presuppose the default resolution are skipped
with a reason when the grid is coarser than nx = 801.
"""

import logging
import math
import time
from collections.abc import Callable

import numpy as np

from app.core.config import Settings
from app.core.deps import get_domain
from app.core.errors import VortexStripError
from app.core.records import RecordWriter
from app.models.enums import L0Sign, Verdict
from app.schemas.schemas import CriterionRecord
from app.services.analytic import (
    SQRT2,
    Coefficients,
    chi0,
    compute_coefficients,
    critical_width,
    soliton,
    soliton_derivative,
)
from app.services.continuation import (
    asymptotic_guess,
    continue_branch,
    fit_amplitude_law,
    newton_iterate,
    r_symmetry_defect,
    verify_energy_expansion,
    verify_tiling,
)
from app.services.operators import (
    assemble_L0,
    assemble_Tk,
    morse_index,
    soliton_field,
    spectrum,
)
from app.services.reduction import EXPECTED_MIXED_DERIVATIVE, bifurcation_J, branch_from_reduction, probe_J_derivatives
from app.services.strip_core import StripDomain

logger = logging.getLogger(__name__)

FULL_RESOLUTION = 801
CONVERGENCE_SENSITIVE = frozenset({2, 3, 5, 6, 7, 12})
ONSET_RANGE = (0.005, 0.05)
ONSET_POINTS = 10


class Context:
    """Lazily computed inputs shared between criteria."""

    def __init__(self, settings: Settings):
        self.settings = settings
        self.nx = settings.domain.nx
        self.half_length = settings.domain.half_length
        self.tol = settings.solver.newton_tol
        self._cache: dict = {}

    def _memo(self, key, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def domain(self, width: float, n_modes: int | None = None) -> StripDomain:
        return get_domain(self.settings, width, n_modes)

    @property
    def x(self) -> np.ndarray:
        return self.domain(critical_width(1)).x

    def coefficients(self) -> Coefficients:
        return self._memo("coefficients", lambda: compute_coefficients(self.nx, self.half_length))

    def onset_branch(self):
        def build():
            d1 = critical_width(1)
            start, stop = d1 * ONSET_RANGE[0], d1 * ONSET_RANGE[1]
            step = (stop - start) / (ONSET_POINTS - 1)
            return continue_branch(
                1, start, stop, step, self.domain(d1),
                lambda_coeff=self.coefficients().lambda_consistent, tol=self.tol,
            )

        return self._memo("onset", build)

    def near_branch(self, k: int):
        """Points at d_k + 0.05, ..., d_k + 0.2."""
        return self._memo(("near", k), lambda: self._branch(k, 0.05, self.domain(critical_width(k))))

    def tiling_partner(self):
        """k = 1 points at half the k = 2 widths, with half the modes."""
        dom = self.domain(critical_width(1), self.settings.domain.n_modes // 2)
        return self._memo("partner", lambda: self._branch(1, 0.025, dom))

    def _branch(self, k: int, step: float, domain: StripDomain):
        return continue_branch(
            k, step, 4 * step, step, domain,
            lambda_coeff=self.coefficients().lambda_consistent, tol=self.tol,
        )


# ── Criteria ──────────────────────────────────────────────────────────────────
def critical_widths(ctx: Context) -> tuple[dict, bool]:
    step = 0.01
    measured, ok = {}, True
    x = ctx.x
    for k in (1, 2):
        d_k = critical_width(k)
        widths = d_k + step * np.arange(-5, 6)
        lowest = [spectrum(assemble_Tk(soliton(x), k, float(d), x), 1).eigenvalues[0] for d in widths]
        crossing = None
        for a, b, la, lb in zip(widths[:-1], widths[1:], lowest[:-1], lowest[1:]):
            if la > 0 >= lb:
                crossing = float(a + (b - a) * la / (la - lb))
                break
        measured[f"crossing_k{k}"] = crossing
        ok &= crossing is not None and abs(crossing - d_k) <= step
    return measured, ok


def soliton_spectrum(ctx: Context) -> tuple[dict, bool]:
    x = ctx.x
    h = float(x[1] - x[0])
    minus = spectrum(assemble_L0(L0Sign.MINUS, x), 1)
    chi = chi0(x) / math.sqrt(h * np.sum(chi0(x) ** 2))
    chi_error = math.sqrt(h * np.sum((minus.eigenvectors[:, 0] - chi) ** 2))
    plus = spectrum(assemble_L0(L0Sign.PLUS, x), 1, restrict=False)
    ds = soliton_derivative(x) / math.sqrt(h * np.sum(soliton_derivative(x) ** 2))
    ds_error = math.sqrt(h * np.sum((plus.eigenvectors[:, 0] - ds) ** 2))
    measured = {
        "l0_minus_lowest": float(minus.eigenvalues[0]),
        "chi0_l2_error": chi_error,
        "l0_plus_lowest": float(plus.eigenvalues[0]),
        "s0_prime_l2_error": ds_error,
    }
    ok = (
        abs(minus.eigenvalues[0] + 0.5) <= 5e-4
        and chi_error <= 1e-3
        and abs(plus.eigenvalues[0]) <= 5e-4
        and ds_error <= 1e-3
    )
    return measured, bool(ok)


def soliton_integrals(ctx: Context) -> tuple[dict, bool]:
    c = ctx.coefficients()
    errors = {
        "int_chi0_sq_error": abs(c.int_chi0_sq - 2.0 * SQRT2),
        "soliton_h_norm_sq_error": abs(c.soliton_h_norm_sq - 4.0 * SQRT2 / 3.0),
        "int_s0_u_chi0_sq_error": abs(c.int_s0_u_chi0_sq + c.int_chi0_4 / 8.0),
    }
    return errors, all(e <= 1e-6 for e in errors.values())


def coefficient_bounds(ctx: Context) -> tuple[dict, bool]:
    c = ctx.coefficients()
    bounds = c.bounds()
    measured = {"omega": c.omega, "lambda_coeff": c.lambda_coeff, "energy_coeff": c.energy_coeff, **bounds}
    return measured, all(bounds.values())


def bifurcation_function(ctx: Context) -> tuple[dict, bool]:
    d1 = critical_width(1)
    dom = ctx.domain(d1)
    fp_tol = ctx.settings.solver.fp_tol
    at_zero = bifurcation_J(1, d1 + 0.1, 0.0, dom, fp_tol)
    odd = bifurcation_J(1, d1 + 0.1, 0.1, dom, fp_tol) + bifurcation_J(1, d1 + 0.1, -0.1, dom, fp_tol)
    table = probe_J_derivatives(1, dom, ctx.settings.scan.probe_d_step, ctx.settings.scan.probe_lambda_step, fp_tol)
    omega = ctx.coefficients().omega_consistent
    vanishing = table.vanishing()
    measured = {
        "J_at_zero": at_zero,
        "antisymmetry": abs(odd),
        "mixed_derivative": table.d2J_dd_dlam.value,
        "omega_from_J": table.omega_estimate,
        "omega_consistent": omega,
        **{f"vanishing_{k}": v for k, v in vanishing.items()},
    }
    ok = (
        abs(at_zero) <= 1e-10
        and abs(odd) <= 1e-10
        and abs(table.d2J_dd_dlam.value - EXPECTED_MIXED_DERIVATIVE) <= 1e-2
        and abs(table.omega_estimate - omega) / omega <= 0.02
        and all(abs(v) <= 1e-6 for v in vanishing.values())
    )
    return measured, bool(ok)


def amplitude_law(ctx: Context) -> tuple[dict, bool]:
    fit = fit_amplitude_law(ctx.onset_branch(), ctx.coefficients(), max_relative_offset=ONSET_RANGE[1] * 1.02)
    measured = fit.model_dump()
    return measured, abs(fit.exponent - 0.5) <= 0.05 and fit.relative_error <= 0.05 and fit.all_positive


def energy_expansion(ctx: Context) -> tuple[dict, bool]:
    fit = verify_energy_expansion(ctx.onset_branch(), ctx.coefficients(), max_relative_offset=ONSET_RANGE[1] * 1.02)
    measured = fit.model_dump()
    return measured, fit.all_positive and abs(fit.exponent - 2.0) <= 0.1 and fit.relative_error <= 0.05


def vortex_census_check(ctx: Context) -> tuple[dict, bool]:
    measured, ok = {}, True
    for k in (1, 2):
        branch = ctx.near_branch(k)
        point = branch.point_at(critical_width(k) + 0.2)
        d, h = point.width, point.field.domain.h
        vortices = point.vortices.entries
        expected_y = [d * (2 * j + 1) / (2 * k) for j in range(k)]
        measured[f"k{k}_count"] = len(vortices)
        measured[f"k{k}_degrees"] = [v.degree for v in vortices]
        measured[f"k{k}_positions"] = [[v.x, v.y] for v in vortices]
        ok &= len(vortices) == k
        if len(vortices) == k:
            ok &= all(abs(v.x) <= 2 * h and abs(v.y - y) <= 2 * h for v, y in zip(vortices, expected_y))
            ok &= all(v.degree is not None and abs(v.degree) == 1 for v in vortices)
            ok &= all(vortices[j].degree == -vortices[j + 1].degree for j in range(k - 1))
    return measured, bool(ok)


def tiling_symmetry(ctx: Context) -> tuple[dict, bool]:
    one = ctx.near_branch(1)
    r_defect = max(r_symmetry_defect(p.field) for p in one.points)
    two = ctx.near_branch(2)
    half = ctx.tiling_partner()
    report = verify_tiling(two, half)
    d2 = critical_width(2) + 0.2
    at_target = report.max_errors[int(np.argmin(np.abs(np.array(report.widths) - d2)))]
    measured = {"r_symmetry_defect": r_defect, "tiling_error": at_target, "tiling_max_error": report.max_error}
    return measured, r_defect <= 1e-8 and at_target <= 1e-6


def morse_staircase(ctx: Context) -> tuple[dict, bool]:
    def count(d: float) -> int:
        return morse_index(soliton_field(ctx.domain(d)))

    samples = np.arange(2.0, 12.0, 0.25) + 0.125
    counts = [count(float(d)) for d in samples]
    expected = [1 + sum(critical_width(j) < d for j in (1, 2)) for d in samples]
    jumps = []
    for lo, hi, a, b in zip(samples[:-1], samples[1:], counts[:-1], counts[1:]):
        if b > a:
            lo, hi = float(lo), float(hi)
            while hi - lo > 1e-3:
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if count(mid) == a else (lo, mid)
            jumps.append(0.5 * (lo + hi))
    targets = [critical_width(j) for j in (1, 2)]
    measured = {"counts": counts, "expected": expected, "jumps": jumps}
    ok = counts == expected and len(jumps) == 2 and all(abs(a - b) <= 0.02 for a, b in zip(jumps, targets))
    return measured, ok


def cross_method(ctx: Context) -> tuple[dict, bool]:
    d = critical_width(1) + 0.1
    dom = ctx.domain(d)
    reduced = branch_from_reduction(1, d, dom, ctx.settings.solver.fp_tol).full_field()
    guess = asymptotic_guess(1, d, dom, ctx.coefficients().lambda_consistent)
    newton = newton_iterate(guess, ctx.tol).field
    if reduced.coeffs[1].imag @ newton.coeffs[1].imag < 0:
        newton = newton.conjugate()
    diff = (reduced - newton).max_norm()
    return {"max_difference": diff}, diff <= 1e-6


CONVERGENCE_GRIDS = (401, 801, 1601)
MIN_ERROR_RATIO = 3.5
RESOLVED_ERROR = 1e-12


def at_resolution(ctx: Context, nx: int) -> Context:
    """A fresh context that differs from ``ctx`` only in nx."""
    if nx == ctx.nx:
        return ctx
    domain = ctx.settings.domain.model_copy(update={"nx": nx})
    return Context(ctx.settings.model_copy(update={"domain": domain}))


def _order(coarse: float, fine: float) -> float | None:
    if fine == 0.0 or coarse == 0.0:
        return None
    return math.log2(abs(coarse) / abs(fine))


def convergence_order(ctx: Context) -> tuple[dict, bool]:
    """Criteria 3 and 7 rerun at nx = 401, 801, 1601 and their observed orders.

    Criterion-3 errors are against closed forms; an integral already at
    roundoff on every grid counts as resolved. Criterion 7 has no exact
    limit at finite offsets, so its order comes from successive differences
    of the fitted onset coefficient and of the consistent reference.
    """
    contexts = [at_resolution(ctx, n) for n in CONVERGENCE_GRIDS]
    measured: dict = {"grids": list(CONVERGENCE_GRIDS)}
    ok = True

    integrals = [soliton_integrals(c)[0] for c in contexts]
    for name in integrals[0]:
        errors = [e[name] for e in integrals]
        resolved = max(errors) <= RESOLVED_ERROR
        ratio = errors[1] / errors[2] if errors[2] > 0 else math.inf
        measured[name] = {"errors": errors, "order": _order(errors[1], errors[2]), "resolved": resolved}
        ok &= resolved or ratio >= MIN_ERROR_RATIO

    fits = [energy_expansion(c)[0] for c in contexts]
    for name in ("onset_coefficient", "reference"):
        values = [f[name] for f in fits]
        coarse, fine = values[1] - values[0], values[2] - values[1]
        ratio = abs(coarse) / abs(fine) if fine != 0 else math.inf
        measured[f"energy_{name}"] = {"values": values, "order": _order(coarse, fine), "ratio": ratio}
        ok &= bool(np.isfinite(values).all()) and ratio >= MIN_ERROR_RATIO
    logger.info(
        "observed energy coefficient order %s",
        measured["energy_onset_coefficient"]["order"],
    )
    return measured, bool(ok)


CRITERIA: dict[int, tuple[str, Callable, str]] = {
    1: ("critical_widths", critical_widths, "one scan step (0.01)"),
    2: ("soliton_spectrum", soliton_spectrum, "5e-4 eigenvalue, 1e-3 eigenvector"),
    3: ("soliton_integrals", soliton_integrals, "1e-6"),
    4: ("coefficient_bounds", coefficient_bounds, "1e-8 slack"),
    5: ("bifurcation_function", bifurcation_function, "1e-10 / 1e-2 / 2% / 1e-6"),
    6: ("amplitude_law", amplitude_law, "exponent 0.5 +- 0.05, prefactor 5%"),
    7: ("energy_expansion", energy_expansion, "exponent 2.0 +- 0.1, coefficient 5%"),
    8: ("vortex_census", vortex_census_check, "2h in position, |degree| = 1"),
    9: ("tiling_symmetry", tiling_symmetry, "1e-8 symmetry, 1e-6 tiling"),
    10: ("morse_staircase", morse_staircase, "jumps within 0.02 of d_j"),
    11: ("cross_method", cross_method, "1e-6 max norm"),
    12: ("convergence_order", convergence_order, "criteria 3 and 7 error ratio >= 3.5 across nx = 401, 801, 1601"),
}


def run_criterion(number: int, ctx: Context) -> CriterionRecord:
    name, check, tolerance = CRITERIA[number]
    if number in CONVERGENCE_SENSITIVE and ctx.nx < FULL_RESOLUTION:
        return CriterionRecord(
            criterion=number,
            name=name,
            verdict=Verdict.SKIPPED,
            tolerance=tolerance,
            reason=f"tolerance presupposes nx >= {FULL_RESOLUTION}, got nx = {ctx.nx}",
        )
    started = time.perf_counter()
    try:
        measured, passed = check(ctx)
        verdict, reason = (Verdict.PASS if passed else Verdict.FAIL), None
    except VortexStripError as e:
        measured, verdict, reason = {}, Verdict.FAIL, str(e)
    runtime = time.perf_counter() - started
    logger.info("criterion %d %s: %s (%.1f s)", number, name, verdict.value, runtime)
    return CriterionRecord(
        criterion=number,
        name=name,
        verdict=verdict,
        measured=measured,
        tolerance=tolerance,
        runtime_s=runtime,
        reason=reason,
    )


def run(settings: Settings, writer: RecordWriter, criteria: list[int] | None = None) -> int:
    ctx = Context(settings)
    records = [run_criterion(n, ctx) for n in (criteria or sorted(CRITERIA))]
    writer.emit_all("verify", records)
    writer.close()
    failed = [r.criterion for r in records if r.verdict == Verdict.FAIL]
    if failed:
        logger.error("failed criteria: %s", failed)
        return 1
    return 0
