import logging

import matplotlib.pyplot as plt
import numpy as np

from app.core.config import Settings
from app.core.deps import get_domain
from app.core.errors import InsufficientDataError
from app.core.records import RecordWriter
from app.models.enums import BranchStatus
from app.schemas.schemas import BranchPointRecord, BranchSummary, FitRecord, VortexRecord
from app.services.analytic import compute_coefficients, critical_width
from app.services.continuation import (
    Branch,
    BranchPoint,
    PowerLawFit,
    continue_branch,
    fit_amplitude_law,
    verify_energy_expansion,
)
from app.services.strip_core import to_physical

logger = logging.getLogger(__name__)

VORTEX_MAP_POINTS = 201


def point_record(k: int, p: BranchPoint) -> BranchPointRecord:
    return BranchPointRecord(
        k=k,
        width=p.width,
        amplitude=p.amplitude,
        energy=p.energy,
        soliton_energy=p.soliton_energy,
        energy_deficit=p.energy_deficit,
        residual_norm=p.residual_norm,
        method=p.method,
        iterations=p.iterations,
        n_vortices=len(p.vortices),
        vortices=[VortexRecord(x=v.x, y=v.y, degree=v.degree, refined=v.refined) for v in p.vortices.entries],
        n_negative=p.n_negative,
    )


def fit_record(quantity: str, fit: PowerLawFit) -> FitRecord:
    return FitRecord(quantity=quantity, **fit.model_dump())


def amplitude_squared_slope(branch: Branch) -> float | None:
    """Slope of amplitude² against d − d_k; Λ²/d_k near onset."""
    if len(branch.points) < 2:
        return None
    offsets = branch.widths - branch.critical_width
    amps = np.array([p.amplitude for p in branch.points])
    slope, _ = np.polyfit(offsets, amps**2, 1)
    return float(slope)


def _plot_branch(branch: Branch):
    offsets = branch.widths - branch.critical_width
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(offsets, [p.amplitude**2 for p in branch.points], "o-", ms=3)
    ax1.set_ylabel("amplitude²")
    ax2.plot(offsets, [p.energy_deficit for p in branch.points], "o-", ms=3)
    ax2.set_ylabel("E(S₀) − E(Ψ)")
    ax2.set_xlabel(f"d − d_{branch.k}")
    fig.tight_layout()
    return fig


def _plot_vortex_map(point: BranchPoint):
    f = point.field
    grid = np.abs(to_physical(f, VORTEX_MAP_POINTS))
    window = np.abs(f.domain.x) <= 6.0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.imshow(
        grid[window].T,
        origin="lower",
        extent=(f.domain.x[window][0], f.domain.x[window][-1], 0.0, f.domain.width),
        aspect="auto",
        cmap="viridis",
    )
    for v in point.vortices.entries:
        glyph = "+" if (v.degree or 0) > 0 else "_"
        ax.plot(v.x, v.y, marker="o", color="white", ms=6)
        ax.annotate(glyph, (v.x, v.y), color="black", ha="center", va="center")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"|Ψ| at d = {point.width:.4f}")
    fig.tight_layout()
    return fig


def run(settings: Settings, writer: RecordWriter) -> int:
    scan, solver = settings.scan, settings.solver
    coefficients = compute_coefficients(settings.domain.nx, settings.domain.half_length)
    domain = get_domain(settings, critical_width(scan.k))
    branch = continue_branch(
        scan.k,
        scan.d_start_offset,
        scan.d_end_offset,
        scan.step,
        domain,
        lambda_coeff=coefficients.lambda_consistent,
        tol=solver.newton_tol,
        max_iter=solver.newton_max_iter,
    )
    name = f"branch_k{scan.k}"
    for p in branch.points:
        writer.emit(name, point_record(scan.k, p))

    for quantity, fit in (("amplitude", fit_amplitude_law), ("energy", verify_energy_expansion)):
        try:
            writer.emit(f"{name}_fits", fit_record(quantity, fit(branch, coefficients)))
        except InsufficientDataError as e:
            logger.warning("%s fit skipped: %s", quantity, e)

    writer.emit(
        f"{name}_summary",
        BranchSummary(
            k=branch.k,
            status=branch.status,
            critical_width=branch.critical_width,
            n_points=len(branch.points),
            last_good_width=branch.last_good_width,
            message=branch.message,
            amplitude_squared_slope=amplitude_squared_slope(branch),
        ),
    )
    if settings.output.plots and branch.points:
        writer.write_svg(name, _plot_branch(branch))
        writer.write_svg(f"{name}_vortices", _plot_vortex_map(branch.points[-1]))
    writer.close()

    if branch.status == BranchStatus.LOST:
        logger.error("branch k=%d lost after d=%s", branch.k, branch.last_good_width)
        return 3
    return 0
