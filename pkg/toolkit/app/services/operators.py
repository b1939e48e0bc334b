"""
Discretized linearizations about the soliton and about general strip fields.

Complex operators are stored as real 2×2-block systems acting on (Re, Im),
since ⟨ψ₀, ·⟩_ℂ ψ₀ is only ℝ-linear. Eigen-counts and Newton solves are
taken on the symmetry class (Re odd, Im even in x) through the orthonormal
bases returned by :func:`symmetry_basis`.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from app.core.errors import ConvergenceError, SingularSystemError
from app.models.enums import L0Sign, OperatorKind
from app.services.analytic import soliton
from app.services.strip_core import (
    SectorField,
    StripDomain,
    cosine_table,
    line_grid,
    second_difference,
)

logger = logging.getLogger(__name__)

DENSE_LIMIT = 1500
EIGEN_RESIDUAL_TOL = 1e-8


# ── Operator containers ───────────────────────────────────────────────────────
@dataclass(frozen=True, eq=False)
class LinearOperator1D:
    matrix: sparse.csr_matrix
    kind: OperatorKind
    h: float
    parities: tuple[str, ...]
    sector: int = 0
    width: float = math.inf

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def basis(self) -> sparse.csr_matrix:
        """Orthonormal basis of the symmetry class, one block per parity."""
        nx = self.size // len(self.parities)
        odd, even = symmetry_basis(nx)
        blocks = [odd if p == "odd" else even for p in self.parities]
        return sparse.block_diag(blocks, format="csr")

    def restricted(self) -> sparse.csr_matrix:
        p = self.basis()
        return (p.T @ self.matrix @ p).tocsr()

    def shifted(self, c: float) -> "LinearOperator1D":
        return LinearOperator1D(
            self.matrix + c * sparse.identity(self.size, format="csr"),
            self.kind,
            self.h,
            self.parities,
            self.sector,
            self.width,
        )

    def asymmetry(self) -> float:
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max()) if diff.nnz else 0.0


@dataclass(frozen=True, eq=False)
class StripLinearization(LinearOperator1D):
    """Parseval-symmetrized Jacobian of the sector residual.

    ``matrix`` is S = D^{1/2} J D^{-1/2} where J is the Jacobian of the
    unweighted sector residual and D the Parseval sector weights.
    """

    domain: StripDomain | None = None
    scale: np.ndarray | None = None

    @property
    def jacobian(self) -> sparse.csr_matrix:
        s = sparse.diags(self.scale)
        s_inv = sparse.diags(1.0 / self.scale)
        return (s_inv @ self.matrix @ s).tocsr()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve J δ = rhs on the symmetry class."""
        p = self.basis()
        reduced = (p.T @ self.matrix @ p).tocsc()
        z = splinalg.spsolve(reduced, p.T @ (self.scale * rhs))
        if not np.all(np.isfinite(z)):
            raise SingularSystemError(
                "Strip linearization is singular on the symmetry class",
                width=self.width,
            )
        return (p @ z) / self.scale


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_negative: int
    residuals: np.ndarray


# ── Symmetry class ────────────────────────────────────────────────────────────
@lru_cache(maxsize=16)
def symmetry_basis(nx: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Orthonormal bases of odd and even grid functions about the centre node."""
    c = nx // 2
    m = np.arange(1, c + 1)
    r = 1.0 / math.sqrt(2.0)
    odd = sparse.csr_matrix(
        (
            np.concatenate([np.full(c, r), np.full(c, -r)]),
            (np.concatenate([c + m, c - m]), np.concatenate([m - 1, m - 1])),
        ),
        shape=(nx, c),
    )
    even = sparse.csr_matrix(
        (
            np.concatenate([[1.0], np.full(c, r), np.full(c, r)]),
            (np.concatenate([[c], c + m, c - m]), np.concatenate([[0], m, m])),
        ),
        shape=(nx, c + 1),
    )
    return odd, even


# ── Assembly ──────────────────────────────────────────────────────────────────
def _minus_laplacian(x: np.ndarray) -> sparse.csr_matrix:
    return -second_difference(x.size, float(x[1] - x[0]))


def assemble_L0(sign: L0Sign | str, x: np.ndarray, profile: np.ndarray | None = None) -> LinearOperator1D:
    """L₀⁺ = −∂² − (1 − 3S₀²) or L₀⁻ = −∂² − (1 − S₀²).

    ``profile`` replaces the analytic soliton, e.g. by the discrete one.
    """
    sign = L0Sign(sign)
    s = soliton(x) if profile is None else np.asarray(profile)
    factor = 3.0 if sign == L0Sign.PLUS else 1.0
    matrix = _minus_laplacian(x) - sparse.diags(1.0 - factor * s**2)
    if sign == L0Sign.PLUS:
        return LinearOperator1D(matrix.tocsr(), OperatorKind.L0_PLUS, float(x[1] - x[0]), ("odd",))
    return LinearOperator1D(matrix.tocsr(), OperatorKind.L0_MINUS, float(x[1] - x[0]), ("even",))


def _potential_blocks(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise (pp, pq, qq) entries of −ψ(1 − |ψ|²) linearized at a + ib."""
    return -1.0 + 3.0 * a**2 + b**2, 2.0 * a * b, -1.0 + a**2 + 3.0 * b**2


def assemble_Tk(psi0: np.ndarray, k: int, width: float, x: np.ndarray) -> LinearOperator1D:
    psi0 = np.asarray(psi0, dtype=complex)
    lap = _minus_laplacian(x) + (math.pi * k / width) ** 2 * sparse.identity(x.size)
    pp, pq, qq = _potential_blocks(psi0.real, psi0.imag)
    matrix = sparse.bmat(
        [
            [lap + sparse.diags(pp), sparse.diags(pq)],
            [sparse.diags(pq), lap + sparse.diags(qq)],
        ],
        format="csr",
    )
    return LinearOperator1D(matrix, OperatorKind.TK, float(x[1] - x[0]), ("odd", "even"), k, width)


def assemble_strip_linearization(f: SectorField) -> StripLinearization:
    dom = f.domain
    nx, nk = dom.nx, dom.n_modes + 1
    x = dom.x
    values = f.quadrature_values
    pp, pq, qq = _potential_blocks(values.real, values.imag)

    table = cosine_table(dom, dom.y_quad)
    root_p = np.sqrt(dom.projection_weights)
    coupling = np.einsum("mj,ml,j,l->jlm", table, table, root_p, root_p)
    coupling = 0.5 * (coupling + coupling.transpose(1, 0, 2))
    blocks = {
        (0, 0): np.einsum("jlm,im->jli", coupling, pp),
        (0, 1): np.einsum("jlm,im->jli", coupling, pq),
        (1, 0): np.einsum("jlm,im->jli", coupling, pq),
        (1, 1): np.einsum("jlm,im->jli", coupling, qq),
    }

    j_idx, l_idx, i_idx = np.meshgrid(np.arange(nk), np.arange(nk), np.arange(nx), indexing="ij")
    rows, cols, data = [], [], []
    for (c_row, c_col), values_jli in blocks.items():
        rows.append(((2 * j_idx + c_row) * nx + i_idx).ravel())
        cols.append(((2 * l_idx + c_col) * nx + i_idx).ravel())
        data.append(values_jli.ravel())
    size = 2 * nk * nx
    coupling_matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )

    lap = _minus_laplacian(x)
    diagonal = sparse.block_diag(
        [lap + q * sparse.identity(nx) for q in np.repeat(dom.wavenumbers, 2)], format="csr"
    )
    matrix = (diagonal + coupling_matrix).tocsr()
    matrix.eliminate_zeros()

    scale = np.repeat(np.sqrt(dom.sector_weights / dom.width), 2 * nx)
    return StripLinearization(
        matrix,
        OperatorKind.STRIP,
        dom.h,
        ("odd", "even") * nk,
        -1,
        dom.width,
        domain=dom,
        scale=scale,
    )


# ── Eigen solves ──────────────────────────────────────────────────────────────
def _gershgorin_lower(a: sparse.spmatrix) -> float:
    a = a.tocsr()
    diag = a.diagonal()
    off = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def _sign_convention(vectors: np.ndarray) -> np.ndarray:
    for col in range(vectors.shape[1]):
        v = vectors[:, col]
        first = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v)))
        if first.size and v[first[0]] < 0:
            vectors[:, col] = -v
    return vectors


def spectrum(
    op: LinearOperator1D,
    n_eigs: int,
    tol_zero: float = 1e-6,
    restrict: bool = True,
) -> SpectrumResult:
    """Lowest ``n_eigs`` eigenpairs, L²(h)-normalized, first nonzero entry positive."""
    if n_eigs < 1:
        raise ValueError(f"n_eigs must be at least 1, got {n_eigs}")
    a = op.restricted() if restrict else op.matrix
    basis = op.basis() if restrict else None
    n = a.shape[0]
    n_eigs = min(n_eigs, n)

    if n <= DENSE_LIMIT:
        vals, vecs = linalg.eigh(a.toarray(), subset_by_index=[0, n_eigs - 1])
    else:
        sigma = _gershgorin_lower(a) - 0.05
        try:
            vals, vecs = splinalg.eigsh(a.tocsc(), k=n_eigs, sigma=sigma, which="LM")
        except splinalg.ArpackNoConvergence as e:
            raise ConvergenceError(
                f"Eigensolver did not converge for {op.kind.value} operator",
                converged=len(e.eigenvalues),
            ) from e
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    residuals = np.linalg.norm(a @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(residuals > EIGEN_RESIDUAL_TOL):
        raise ConvergenceError(
            f"Eigenpairs of {op.kind.value} operator exceed residual tolerance",
            residuals=residuals.tolist(),
        )

    full = basis @ vecs if basis is not None else vecs
    full = full / math.sqrt(op.h)
    full = _sign_convention(np.array(full))
    n_negative = int(np.sum(vals < -tol_zero))
    logger.debug("%s spectrum: %s", op.kind.value, np.array2string(vals, precision=6))
    return SpectrumResult(vals, full, n_negative, residuals)


# ── Discrete soliton and kernel ───────────────────────────────────────────────
@lru_cache(maxsize=8)
def discrete_soliton(nx: int, half_length: float) -> np.ndarray:
    """Odd solution of the discrete −u″ − u(1 − u²) = 0 closest to tanh(x/√2)."""
    x = line_grid(nx, half_length)
    lap = _minus_laplacian(x)
    odd, _ = symmetry_basis(nx)
    u = soliton(x)
    history = []
    for _ in range(30):
        residual = lap @ u - u * (1.0 - u**2)
        history.append(float(np.max(np.abs(residual))))
        jac = lap - sparse.diags(1.0 - 3.0 * u**2)
        step = odd @ splinalg.spsolve((odd.T @ jac @ odd).tocsc(), -(odd.T @ residual))
        u = u + step
        if np.max(np.abs(step)) < 1e-12:
            break
    else:
        raise ConvergenceError("Discrete soliton Newton did not converge", history=history)
    logger.debug("discrete soliton nx=%d residual history %s", nx, history)
    u.setflags(write=False)
    return u


@lru_cache(maxsize=8)
def _discrete_kernel(nx: int, half_length: float) -> tuple[float, np.ndarray]:
    x = line_grid(nx, half_length)
    op = assemble_L0(L0Sign.MINUS, x, discrete_soliton(nx, half_length))
    result = spectrum(op, 1)
    phi = result.eigenvectors[:, 0]
    phi = phi / phi[nx // 2]
    phi.setflags(write=False)
    return float(result.eigenvalues[0]), phi


def kernel_profile(nx: int, half_length: float) -> np.ndarray:
    """Discrete χ₀: lowest even eigenvector of L₀⁻ about the discrete soliton, φ(0) = 1."""
    return _discrete_kernel(nx, half_length)[1]


def lowest_l0_minus(nx: int, half_length: float) -> float:
    return _discrete_kernel(nx, half_length)[0]


def discrete_critical_width(k: int, nx: int, half_length: float) -> float:
    """Width at which the discrete T_k about the discrete soliton has a kernel."""
    mu = lowest_l0_minus(nx, half_length)
    return math.pi * k / math.sqrt(-mu)


def soliton_field(domain: StripDomain) -> SectorField:
    """The discrete soliton as a y-independent strip field."""
    coeffs = np.zeros((domain.n_modes + 1, domain.nx), dtype=complex)
    coeffs[0] = discrete_soliton(domain.nx, domain.half_length)
    return SectorField(domain, coeffs)


def morse_index(f: SectorField, n_eigs: int = 8, tol_zero: float = 1e-6) -> int:
    """Negative eigenvalues of the strip linearization on the symmetry class."""
    return spectrum(assemble_strip_linearization(f), n_eigs, tol_zero).n_negative


def expected_soliton_morse_index(width: float) -> int:
    """1 + #{j ≥ 1 : √2πj < d}."""
    return 1 + int(math.ceil(width / (math.sqrt(2.0) * math.pi)) - 1)
