import logging
from concurrent.futures import ProcessPoolExecutor

import matplotlib.pyplot as plt
import numpy as np

from app.core.config import Settings
from app.core.deps import get_domain, scan_range
from app.core.records import RecordWriter
from app.models.enums import CellStatus, Verdict
from app.schemas.schemas import CriterionRecord, DerivativeRecord, JCellRecord
from app.services.analytic import compute_coefficients
from app.services.operators import discrete_critical_width
from app.services.reduction import (
    EXPECTED_MIXED_DERIVATIVE,
    JCell,
    JDerivativeTable,
    evaluate_J_cell,
    j_zero_set_scan,
    probe_J_derivatives,
)
from app.services.strip_core import StripDomain

logger = logging.getLogger(__name__)

MIXED_TOLERANCE = 1e-2
OMEGA_RELATIVE_TOLERANCE = 0.02
VANISHING_TOLERANCE = 1e-6
ANTISYMMETRY_TOLERANCE = 1e-10


def scan_cells(k: int, widths, lams, domain: StripDomain, tol: float, workers: int) -> list[JCell]:
    """J on the (d, λ) grid, row-major in d; order is independent of scheduling."""
    pairs = [(float(d), float(t)) for d in widths for t in lams]
    args = (
        [k] * len(pairs),
        [p[0] for p in pairs],
        [p[1] for p in pairs],
        [domain] * len(pairs),
        [tol] * len(pairs),
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate_J_cell, *args))
    return list(map(evaluate_J_cell, *args))


def antisymmetry_defect(cells: list[JCell]) -> float | None:
    """max |J(d, λ) + J(d, −λ)| over converged mirror pairs."""
    values = {(round(c.width, 12), round(c.lam, 12)): c.J for c in cells if c.status == CellStatus.CONVERGED}
    defects = [
        abs(j + values[(d, -t)])
        for (d, t), j in values.items()
        if t > 0 and (d, -t) in values
    ]
    return max(defects) if defects else None


def derivative_expectations(table: JDerivativeTable, omega_reference: float) -> dict[str, tuple[float, float]]:
    """Expected value and absolute tolerance per derivative."""
    third = omega_reference * table.critical_width
    return {
        "dJ_dd": (0.0, VANISHING_TOLERANCE),
        "dJ_dlam": (0.0, VANISHING_TOLERANCE),
        "d2J_dd2": (0.0, VANISHING_TOLERANCE),
        "d2J_dlam2": (0.0, VANISHING_TOLERANCE),
        "d2J_dd_dlam": (EXPECTED_MIXED_DERIVATIVE, MIXED_TOLERANCE),
        "d3J_dlam3": (third, OMEGA_RELATIVE_TOLERANCE * abs(third)),
    }


def derivative_records(table: JDerivativeTable, omega_reference: float) -> list[DerivativeRecord]:
    records = []
    for name, (expected, tolerance) in derivative_expectations(table, omega_reference).items():
        estimate = getattr(table, name)
        records.append(
            DerivativeRecord(
                name=name,
                **estimate.model_dump(),
                expected=expected,
                tolerance=tolerance,
                verdict=Verdict.PASS if abs(estimate.value - expected) <= tolerance else Verdict.FAIL,
            )
        )
    return records


def _check(name: str, measured: float | None, expected: float, tolerance: float, relative: bool = False) -> CriterionRecord:
    if measured is None:
        return CriterionRecord(criterion=5, name=name, verdict=Verdict.SKIPPED, reason="no converged data")
    error = abs(measured - expected) / (abs(expected) if relative else 1.0)
    return CriterionRecord(
        criterion=5,
        name=name,
        verdict=Verdict.PASS if error <= tolerance else Verdict.FAIL,
        measured={"value": measured, "expected": expected, "error": error},
        tolerance=f"{'relative ' if relative else ''}{tolerance:g}",
    )


def derivative_checks(table: JDerivativeTable, omega_reference: float) -> list[CriterionRecord]:
    checks = [
        _check("mixed_derivative", table.d2J_dd_dlam.value, EXPECTED_MIXED_DERIVATIVE, MIXED_TOLERANCE),
        _check("omega_from_J", table.omega_estimate, omega_reference, OMEGA_RELATIVE_TOLERANCE, relative=True),
    ]
    for name, value in table.vanishing().items():
        checks.append(_check(f"vanishing_{name}", value, 0.0, VANISHING_TOLERANCE))
    return checks


def _plot_surface(cells: list[JCell], widths, lams):
    grid = np.full((len(lams), len(widths)), np.nan)
    index = {(round(c.width, 12), round(c.lam, 12)): c for c in cells}
    for i, t in enumerate(lams):
        for j, d in enumerate(widths):
            c = index.get((round(float(d), 12), round(float(t), 12)))
            if c is not None and c.reduced_J is not None:
                grid[i, j] = c.reduced_J
    fig, ax = plt.subplots(figsize=(6, 4))
    if np.isnan(grid).all():
        ax.text(0.5, 0.5, "no converged cells", ha="center", transform=ax.transAxes)
        return fig
    filled = ax.contourf(widths, lams, grid, levels=21, cmap="RdBu_r")
    if np.nanmin(grid) < 0 < np.nanmax(grid):
        ax.contour(widths, lams, grid, levels=[0.0], colors="black")
    signs = j_zero_set_scan(cells)
    for sign, marker in ((1, "+"), (-1, "_")):
        chosen = [s for s in signs if s["sign"] == sign]
        ax.scatter([s["width"] for s in chosen], [s["lam"] for s in chosen], marker=marker, c="k", s=12, lw=0.6)
    fig.colorbar(filled, ax=ax, label="J / λ")
    ax.set_xlabel("d")
    ax.set_ylabel("λ")
    fig.tight_layout()
    return fig


def run(settings: Settings, writer: RecordWriter) -> int:
    scan, solver = settings.scan, settings.solver
    d_k = discrete_critical_width(scan.k, settings.domain.nx, settings.domain.half_length)
    domain = get_domain(settings, d_k)
    d_min = scan.d_min if scan.d_min is not None else d_k - 0.25
    d_max = scan.d_max if scan.d_max is not None else d_k + 0.25
    widths = scan_range(d_min, d_max, scan.j_d_step)
    positive = scan_range(scan.lambda_step, scan.lambda_max, scan.lambda_step)
    lams = np.concatenate([-positive[::-1], [0.0], positive])

    cells = scan_cells(scan.k, widths, lams, domain, solver.fp_tol, scan.workers)
    name = f"lyapunov_k{scan.k}"
    for c in cells:
        writer.emit(name, JCellRecord(k=scan.k, **c.model_dump()))
    diverged = sum(c.status == CellStatus.DIVERGED for c in cells)
    if diverged:
        logger.warning("%d of %d J cells diverged", diverged, len(cells))

    table = probe_J_derivatives(scan.k, domain, scan.probe_d_step, scan.probe_lambda_step, solver.fp_tol)
    coefficients = compute_coefficients(settings.domain.nx, settings.domain.half_length)
    writer.emit_all(f"{name}_derivatives", derivative_records(table, coefficients.omega_consistent))
    checks = derivative_checks(table, coefficients.omega_consistent)
    checks.append(
        _check("antisymmetry", antisymmetry_defect(cells), 0.0, ANTISYMMETRY_TOLERANCE)
    )
    writer.emit_all(f"{name}_checks", checks)

    if settings.output.plots:
        writer.write_svg(name, _plot_surface(cells, widths, lams))
    writer.close()
    return 1 if any(c.verdict == Verdict.FAIL for c in checks) else 0
