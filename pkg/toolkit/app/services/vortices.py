"""
Zeros of strip fields and their winding degrees.

Candidates come from a cell scan for simultaneous sign changes of Re Ψ and
Im Ψ; each is refined by a 2-D Newton iteration on (Re Ψ, Im Ψ) using a
spline in x and the exact cosine series in y. Degrees are counted
counterclockwise in the (x, y) plane, x to the right and y upward.
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from app.core.errors import DomainValidationError
from app.services.strip_core import (
    SectorField,
    Vortex,
    VortexSet,
    cosine_table,
    evaluate_at,
)

logger = logging.getLogger(__name__)

ISOLATION_FLOOR = 1e-3
WINDING_TOLERANCE = 0.2


class FieldEvaluator:
    """Ψ and its gradient at arbitrary points of the strip."""

    def __init__(self, f: SectorField):
        self.field = f
        self.domain = f.domain
        self._spline = CubicSpline(f.domain.x, f.coeffs, axis=1)
        self._dspline = self._spline.derivative()
        self._modes = np.pi * np.arange(f.domain.n_modes + 1) / f.domain.width

    def _check(self, x: np.ndarray) -> None:
        if np.any(np.abs(x) > self.domain.half_length):
            raise DomainValidationError("Evaluation point outside the truncated strip")

    def __call__(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        self._check(x)
        sectors = self._spline(x)
        return np.sum(sectors * cosine_table(self.domain, y).T, axis=0)

    def gradient(self, x: float, y: float) -> tuple[complex, complex]:
        self._check(np.array([x]))
        sectors = self._spline(x)
        dsectors = self._dspline(x)
        cos = np.cos(self._modes * y)
        sin = np.sin(self._modes * y)
        return complex(np.sum(dsectors * cos)), complex(-np.sum(sectors * self._modes * sin))


def _as_callable(f: SectorField | Callable) -> Callable:
    return FieldEvaluator(f) if isinstance(f, SectorField) else f


def _refine(evaluator: FieldEvaluator, x0: float, y0: float, tol: float, reach: float) -> tuple[float, float, bool]:
    """2-D Newton on (Re Ψ, Im Ψ); returns (x, y, converged)."""
    x, y = x0, y0
    for _ in range(30):
        value = complex(evaluator(x, y)[0])
        if abs(value) <= tol:
            return x, y, True
        dx, dy = evaluator.gradient(x, y)
        jac = np.array([[dx.real, dy.real], [dx.imag, dy.imag]])
        try:
            step = np.linalg.solve(jac, -np.array([value.real, value.imag]))
        except np.linalg.LinAlgError:
            return x0, y0, False
        x, y = x + step[0], y + step[1]
        if math.hypot(x - x0, y - y0) > reach or abs(x) > evaluator.domain.half_length:
            return x0, y0, False
    return x0, y0, False


def _contour(center: tuple[float, float], radius: float, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    return center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)


def _isolation_radius(domain, y: float, others: list[tuple[float, float]], x: float) -> float:
    r = min(0.5, 0.45 * y, 0.45 * (domain.width - y))
    for ox, oy in others:
        dist = math.hypot(ox - x, oy - y)
        if dist > 0:
            r = min(r, 0.45 * dist)
    return r


def find_zeros(
    f: SectorField,
    refine_tol: float = 1e-10,
    y_points: int | None = None,
    floor: float = ISOLATION_FLOOR,
) -> VortexSet:
    dom = f.domain
    if y_points is None:
        y_points = 4 * dom.ny_quad + 1
    y = np.linspace(0.0, dom.width, y_points)
    values = evaluate_at(f, y)
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.max(np.abs(values.imag)) <= 1e-12 * scale:
        logger.info("field is real: zero set is a nodal line, no point vortices")
        return VortexSet((), degenerate=True)

    re, im = values.real, values.imag

    def straddles(a: np.ndarray) -> np.ndarray:
        corners = np.stack([a[:-1, :-1], a[1:, :-1], a[:-1, 1:], a[1:, 1:]])
        return (corners.min(axis=0) <= 0.0) & (corners.max(axis=0) >= 0.0)

    cells = np.argwhere(straddles(re) & straddles(im))
    x = dom.x
    dx, dy = dom.h, y[1] - y[0]
    evaluator = FieldEvaluator(f)
    found: list[Vortex] = []
    for i, m in cells:
        xc, yc = 0.5 * (x[i] + x[i + 1]), 0.5 * (y[m] + y[m + 1])
        xr, yr, ok = _refine(evaluator, xc, yc, refine_tol, reach=3.0 * max(dx, dy))
        if not ok:
            logger.warning("zero refinement failed in cell (%d, %d); keeping coarse estimate", i, m)
        if not 0.0 < yr < dom.width:
            continue
        if any(math.hypot(v.x - xr, v.y - yr) <= max(dx, dy) for v in found):
            continue
        found.append(Vortex(float(xr), float(yr), None, ok))

    vortices = []
    points = [(v.x, v.y) for v in found]
    for v in found:
        r = _isolation_radius(dom, v.y, points, v.x)
        cx, cy = _contour((v.x, v.y), r, 64)
        if r <= 0 or np.min(np.abs(evaluator(cx, cy))) < floor:
            continue
        vortices.append(v)
    vortices.sort(key=lambda v: (v.y, v.x))
    logger.debug("found %d isolated zeros", len(vortices))
    return VortexSet(tuple(vortices))


def winding_number(
    f: SectorField | Callable,
    center: tuple[float, float],
    radius: float,
    n_points: int = 128,
) -> int:
    if n_points < 64:
        raise DomainValidationError(f"Contour needs at least 64 points, got {n_points}")
    if radius <= 0:
        raise DomainValidationError(f"Contour radius must be positive, got {radius}")
    if isinstance(f, SectorField):
        dom = f.domain
        if center[1] - radius <= 0 or center[1] + radius >= dom.width:
            raise DomainValidationError("Contour crosses the strip boundary", center=center, radius=radius)
    evaluate = _as_callable(f)
    cx, cy = _contour(center, radius, n_points)
    values = np.asarray(evaluate(cx, cy), dtype=complex)
    if np.min(np.abs(values)) == 0.0:
        raise DomainValidationError("Field vanishes on the contour", center=center, radius=radius)
    increments = np.angle(np.roll(values, -1) / values)
    turns = float(np.sum(increments) / (2.0 * np.pi))
    if abs(turns - round(turns)) > WINDING_TOLERANCE:
        raise DomainValidationError(
            f"Phase increment {turns:.3f} turns is not close to an integer",
            center=center,
            radius=radius,
        )
    return int(round(turns))


def vortex_census(f: SectorField, refine_tol: float = 1e-10) -> VortexSet:
    """Isolated zeros with degrees, each checked at two contour radii."""
    zeros_found = find_zeros(f, refine_tol)
    if zeros_found.degenerate:
        return zeros_found
    points = [(v.x, v.y) for v in zeros_found.entries]
    entries = []
    for v in zeros_found.entries:
        r = _isolation_radius(f.domain, v.y, points, v.x)
        degree = winding_number(f, (v.x, v.y), r)
        if winding_number(f, (v.x, v.y), 0.5 * r) != degree:
            logger.warning("degree at (%.4f, %.4f) depends on contour radius", v.x, v.y)
        entries.append(Vortex(v.x, v.y, degree, v.refined))
    return VortexSet(tuple(entries))
