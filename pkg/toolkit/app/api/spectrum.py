import logging
from concurrent.futures import ProcessPoolExecutor

import matplotlib.pyplot as plt
import numpy as np

from app.core.config import Settings
from app.core.deps import get_domain, scan_range
from app.core.records import RecordWriter
from app.models.enums import OperatorKind
from app.schemas.schemas import SpectrumRow
from app.services.analytic import critical_width
from app.services.operators import (
    assemble_Tk,
    assemble_strip_linearization,
    discrete_soliton,
    expected_soliton_morse_index,
    soliton_field,
    spectrum,
)
from app.services.strip_core import StripDomain

logger = logging.getLogger(__name__)


def spectrum_cell(k: int, domain: StripDomain, n_eigs: int, tol_zero: float) -> tuple[SpectrumRow, SpectrumRow]:
    """T_k and strip-linearization rows about the discrete soliton at one width."""
    psi0 = discrete_soliton(domain.nx, domain.half_length)
    tk = spectrum(assemble_Tk(psi0, k, domain.width, domain.x), n_eigs, tol_zero)
    strip = spectrum(assemble_strip_linearization(soliton_field(domain)), n_eigs, tol_zero)
    return (
        SpectrumRow(
            k=k,
            width=domain.width,
            operator=OperatorKind.TK,
            eigenvalues=tk.eigenvalues.tolist(),
            n_negative=tk.n_negative,
        ),
        SpectrumRow(
            k=k,
            width=domain.width,
            operator=OperatorKind.STRIP,
            eigenvalues=strip.eigenvalues.tolist(),
            n_negative=strip.n_negative,
            expected_n_negative=expected_soliton_morse_index(domain.width),
        ),
    )


def mark_crossings(rows: list[SpectrumRow]) -> list[SpectrumRow]:
    """Flag rows whose lowest eigenvalue has the opposite sign to the previous row."""
    marked = []
    for i, row in enumerate(rows):
        crossed = i > 0 and np.sign(row.eigenvalues[0]) != np.sign(rows[i - 1].eigenvalues[0])
        marked.append(row.model_copy(update={"zero_crossing": bool(crossed)}))
    return marked


def _plot(k: int, tk_rows: list[SpectrumRow], strip_rows: list[SpectrumRow]):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    widths = [r.width for r in tk_rows]
    ax1.plot(widths, [r.eigenvalues[0] for r in tk_rows], "k-")
    ax1.axhline(0.0, color="grey", lw=0.5)
    ax1.axvline(critical_width(k), color="tab:red", ls="--", lw=0.8)
    ax1.set_ylabel(f"lowest eigenvalue of T_{k}")
    ax2.step(widths, [r.n_negative for r in strip_rows], where="mid")
    ax2.set_xlabel("d")
    ax2.set_ylabel("n_negative (strip)")
    fig.tight_layout()
    return fig


def run(settings: Settings, writer: RecordWriter) -> int:
    scan, solver = settings.scan, settings.solver
    d_k = critical_width(scan.k)
    d_min = scan.d_min if scan.d_min is not None else d_k - 0.5
    d_max = scan.d_max if scan.d_max is not None else d_k + 0.5
    widths = scan_range(d_min, d_max, scan.d_step)
    domains = [get_domain(settings, float(d)) for d in widths]
    logger.info("spectrum scan k=%d over %d widths in [%.4f, %.4f]", scan.k, len(widths), d_min, d_max)

    args = ([scan.k] * len(domains), domains, [solver.n_eigs] * len(domains), [solver.tol_zero] * len(domains))
    if scan.workers > 1:
        with ProcessPoolExecutor(max_workers=scan.workers) as pool:
            results = list(pool.map(spectrum_cell, *args))
    else:
        results = list(map(spectrum_cell, *args))

    tk_rows = mark_crossings([r[0] for r in results])
    strip_rows = mark_crossings([r[1] for r in results])
    for row in tk_rows + strip_rows:
        writer.emit(f"spectrum_k{scan.k}", row)
    for row in tk_rows:
        if row.zero_crossing:
            logger.info("T_%d lowest eigenvalue changes sign at d=%.4f", scan.k, row.width)
    mismatched = [r.width for r in strip_rows if r.n_negative != r.expected_n_negative]
    if mismatched:
        logger.warning("strip n_negative differs from the staircase at %d widths", len(mismatched))

    if settings.output.plots:
        writer.write_svg(f"spectrum_k{scan.k}", _plot(scan.k, tk_rows, strip_rows))
    writer.close()
    return 0
