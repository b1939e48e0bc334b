"""
Strip geometry and the cosine-sector field representation.

A field on ℝ × (0, d) is stored as Ψ(x, y) = Σ_{j=0..K} ψ_j(x) cos(πjy/d),
with the ψ_j sampled on a uniform x grid over [−L, L]. Nonlinear terms are
evaluated on ny_quad ≥ 4K midpoint y-nodes and projected back, which is
exact for the cubic nonlinearity of a K-band field.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from scipy import sparse

from app.core.errors import DomainValidationError

MIN_HALF_LENGTH = 10.0


# ── Domain ────────────────────────────────────────────────────────────────────
class StripDomain(BaseModel):
    model_config = ConfigDict(frozen=True)

    half_length: float
    width: float
    nx: int
    n_modes: int
    ny_quad: int

    @model_validator(mode="after")
    def check_invariants(self) -> "StripDomain":
        if self.nx < 3 or self.nx % 2 == 0:
            raise ValueError(f"nx must be odd and at least 3, got {self.nx}")
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be at least 1, got {self.n_modes}")
        if self.half_length < MIN_HALF_LENGTH:
            raise ValueError(
                f"half_length must be at least {MIN_HALF_LENGTH}, got {self.half_length}"
            )
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.ny_quad < 4 * self.n_modes:
            raise ValueError(
                f"ny_quad must be at least 4*n_modes = {4 * self.n_modes}, got {self.ny_quad}"
            )
        return self

    @property
    def h(self) -> float:
        return 2.0 * self.half_length / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return line_grid(self.nx, self.half_length)

    @property
    def center(self) -> int:
        return self.nx // 2

    @property
    def y_quad(self) -> np.ndarray:
        return (np.arange(self.ny_quad) + 0.5) * self.width / self.ny_quad

    @property
    def wavenumbers(self) -> np.ndarray:
        """(πj/d)² for j = 0..K."""
        return (np.pi * np.arange(self.n_modes + 1) / self.width) ** 2

    @property
    def sector_weights(self) -> np.ndarray:
        """Parseval weights of ∫_0^d cos²(πjy/d) dy: d for j = 0, d/2 otherwise."""
        w = np.full(self.n_modes + 1, self.width / 2.0)
        w[0] = self.width
        return w

    @property
    def projection_weights(self) -> np.ndarray:
        """Midpoint-rule weights turning y-samples into cosine coefficients."""
        p = np.full(self.n_modes + 1, 2.0 / self.ny_quad)
        p[0] = 1.0 / self.ny_quad
        return p

    def with_width(self, width: float) -> "StripDomain":
        return make_domain(self.half_length, width, self.nx, self.n_modes, self.ny_quad)

    def with_modes(self, n_modes: int) -> "StripDomain":
        return make_domain(self.half_length, self.width, self.nx, n_modes)


def make_domain(
    half_length: float,
    width: float,
    nx: int,
    n_modes: int,
    ny_quad: int | None = None,
) -> StripDomain:
    if ny_quad is None:
        ny_quad = 4 * max(int(n_modes), 1)
    try:
        return StripDomain(
            half_length=half_length,
            width=width,
            nx=nx,
            n_modes=n_modes,
            ny_quad=ny_quad,
        )
    except ValidationError as e:
        message = "; ".join(err["msg"] for err in e.errors())
        raise DomainValidationError(f"Invalid strip domain: {message}") from e


def line_grid(nx: int, half_length: float) -> np.ndarray:
    """Uniform grid on [−L, L] with x = 0 at the centre node."""
    if nx < 3 or nx % 2 == 0:
        raise DomainValidationError(f"nx must be odd and at least 3, got {nx}")
    if half_length < MIN_HALF_LENGTH:
        raise DomainValidationError(
            f"half_length must be at least {MIN_HALF_LENGTH}, got {half_length}"
        )
    x = np.linspace(-half_length, half_length, nx)
    x[nx // 2] = 0.0
    return x


def second_difference(nx: int, h: float) -> sparse.csr_matrix:
    """Three-point u'' with reflecting (homogeneous Neumann) ends; symmetric."""
    main = np.full(nx, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(nx - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


# ── Fields ────────────────────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class SectorField:
    domain: StripDomain
    coeffs: np.ndarray
    symmetric: bool = field(default=True, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        expected = (self.domain.n_modes + 1, self.domain.nx)
        if c.shape != expected:
            raise DomainValidationError(
                f"Sector coefficients must have shape {expected}, got {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def quadrature_values(self) -> np.ndarray:
        """Ψ on the (x, y_quad) nodes, shape (nx, ny_quad)."""
        return self.coeffs.T @ cosine_table(self.domain, self.domain.y_quad).T

    def sector(self, j: int) -> np.ndarray:
        return self.coeffs[j]

    def with_width(self, width: float) -> "SectorField":
        return SectorField(self.domain.with_width(width), self.coeffs, self.symmetric)

    def conjugate(self) -> "SectorField":
        return SectorField(self.domain, np.conj(self.coeffs), self.symmetric)

    def __add__(self, other: "SectorField") -> "SectorField":
        return SectorField(self.domain, self.coeffs + other.coeffs, self.symmetric)

    def __sub__(self, other: "SectorField") -> "SectorField":
        return SectorField(self.domain, self.coeffs - other.coeffs, self.symmetric)

    def scaled(self, c: complex) -> "SectorField":
        return SectorField(self.domain, c * self.coeffs, self.symmetric)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs)))


@dataclass(frozen=True)
class Vortex:
    x: float
    y: float
    degree: int | None = None
    refined: bool = True


@dataclass(frozen=True)
class VortexSet:
    entries: tuple[Vortex, ...] = ()
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def degrees(self) -> list[int | None]:
        return [v.degree for v in self.entries]


def zeros(domain: StripDomain) -> SectorField:
    return SectorField(domain, np.zeros((domain.n_modes + 1, domain.nx), dtype=complex))


def from_sectors(domain: StripDomain, sectors: dict[int, np.ndarray]) -> SectorField:
    """Field with the given sector profiles and every other sector zero."""
    coeffs = np.zeros((domain.n_modes + 1, domain.nx), dtype=complex)
    for j, profile in sectors.items():
        if not 0 <= j <= domain.n_modes:
            raise DomainValidationError(
                f"Sector {j} outside 0..{domain.n_modes}", sector=j
            )
        coeffs[j] = profile
    return SectorField(domain, coeffs)


def cosine_table(domain: StripDomain, y: np.ndarray) -> np.ndarray:
    """cos(πjy/d) for every y and j = 0..K, shape (len(y), K+1)."""
    j = np.arange(domain.n_modes + 1)
    return np.cos(np.pi * np.outer(np.asarray(y, dtype=float), j) / domain.width)


def evaluate_at(f: SectorField, y: np.ndarray) -> np.ndarray:
    """Cosine series on the x grid at arbitrary ordinates, shape (nx, len(y))."""
    return f.coeffs.T @ cosine_table(f.domain, y).T


def to_physical(f: SectorField, y_points: int) -> np.ndarray:
    if y_points < 2:
        raise DomainValidationError(f"y_points must be at least 2, got {y_points}")
    return evaluate_at(f, np.linspace(0.0, f.domain.width, y_points))


def project_sectors(values: np.ndarray, domain: StripDomain) -> np.ndarray:
    """Cosine coefficients (K+1, nx) of samples on the quadrature y-nodes."""
    table = cosine_table(domain, domain.y_quad)
    return (values @ table).T * domain.projection_weights[:, None]


def from_physical(grid: np.ndarray, domain: StripDomain) -> SectorField:
    values = np.asarray(grid)
    if values.shape != (domain.nx, domain.ny_quad):
        raise DomainValidationError(
            f"Physical grid must be sampled on ({domain.nx}, {domain.ny_quad}) "
            f"quadrature nodes, got {values.shape}"
        )
    return SectorField(domain, project_sectors(values, domain), symmetric=False)


# ── Symmetries ────────────────────────────────────────────────────────────────
def enforce_symmetry(f: SectorField) -> SectorField:
    c = f.coeffs
    reflected = c[:, ::-1]
    re = 0.5 * (c.real - reflected.real)
    im = 0.5 * (c.imag + reflected.imag)
    return SectorField(f.domain, re + 1j * im, symmetric=True)


def symmetry_defect(f: SectorField) -> float:
    return float(np.max(np.abs(f.coeffs - enforce_symmetry(f).coeffs)))


def reflect_conjugate(f: SectorField) -> SectorField:
    """R: Ψ(x, y) ↦ conj Ψ(x, d − y), i.e. ψ_j ↦ (−1)^j conj ψ_j."""
    signs = (-1.0) ** np.arange(f.domain.n_modes + 1)
    return SectorField(f.domain, signs[:, None] * np.conj(f.coeffs), f.symmetric)


def branch_class_mask(k: int, domain: StripDomain) -> np.ndarray | None:
    """Per-sector phase of the k-vortex class: 0 drops a sector, 1 keeps Re, 1j keeps Im.

    When k divides the quadrature size the k-tiled class (sectors mk only,
    real for even m, imaginary for odd m) is invariant under the discrete
    nonlinearity. Otherwise odd k keeps the R-invariant class and even k has
    no exact class.
    """
    j = np.arange(domain.n_modes + 1)
    if domain.ny_quad % k == 0:
        m, rem = np.divmod(j, k)
        return np.where(rem == 0, np.where(m % 2 == 0, 1.0 + 0j, 1j), 0j)
    if k % 2 == 1:
        return np.where(j % 2 == 0, 1.0 + 0j, 1j)
    return None


def impose_branch_class(f: SectorField, mask: np.ndarray | None) -> SectorField:
    if mask is None:
        return f
    phase = mask[:, None]
    return SectorField(f.domain, phase * (np.conj(phase) * f.coeffs).real, f.symmetric)


# ── Norms ─────────────────────────────────────────────────────────────────────
def sector_l2_norm_sq(f: SectorField) -> float:
    """‖Ψ‖² over ℝ × (0, d) from the sectors (Parseval)."""
    per_sector = np.sum(np.abs(f.coeffs) ** 2, axis=1) * f.domain.h
    return float(per_sector @ f.domain.sector_weights)


def physical_l2_norm_sq(f: SectorField) -> float:
    """‖Ψ‖² over ℝ × (0, d) by midpoint quadrature on the physical nodes."""
    dom = f.domain
    return float(np.sum(np.abs(f.quadrature_values) ** 2) * dom.h * dom.width / dom.ny_quad)


# ── Real packing ──────────────────────────────────────────────────────────────
def to_real_vector(f: SectorField) -> np.ndarray:
    """Stack (Re ψ_0, Im ψ_0, Re ψ_1, Im ψ_1, …) into one real vector."""
    c = f.coeffs
    return np.stack([c.real, c.imag], axis=1).reshape(-1)


def from_real_vector(domain: StripDomain, v: np.ndarray) -> SectorField:
    parts = np.asarray(v, dtype=float).reshape(domain.n_modes + 1, 2, domain.nx)
    return SectorField(domain, parts[:, 0] + 1j * parts[:, 1])
