from typing import Any

from pydantic import BaseModel

from app.models.enums import BranchStatus, CellStatus, OperatorKind, StepMethod, Verdict


# ── Coefficients ──────────────────────────────────────────────────────────────
class CoefficientRecord(BaseModel):
    resolution: str
    nx: int
    half_length: float
    omega: float
    lambda_coeff: float
    energy_coeff: float
    omega_consistent: float
    lambda_consistent: float
    energy_consistent: float
    int_chi0_sq: float
    int_chi0_4: float
    cross_term: float
    soliton_energy_density: float
    soliton_h_norm_sq: float
    int_s0_u_chi0_sq: float
    bounds: dict[str, bool]


class ConvergenceRecord(BaseModel):
    quantity: str
    coarse: float
    fine: float
    extrapolated: float
    change: float


# ── Spectrum ──────────────────────────────────────────────────────────────────
class SpectrumRow(BaseModel):
    k: int
    width: float
    operator: OperatorKind
    eigenvalues: list[float]
    n_negative: int
    expected_n_negative: int | None = None
    zero_crossing: bool = False


# ── Branch ────────────────────────────────────────────────────────────────────
class VortexRecord(BaseModel):
    x: float
    y: float
    degree: int | None = None
    refined: bool = True


class BranchPointRecord(BaseModel):
    k: int
    width: float
    amplitude: float
    energy: float
    soliton_energy: float
    energy_deficit: float
    residual_norm: float
    method: StepMethod
    iterations: int
    n_vortices: int
    vortices: list[VortexRecord]
    n_negative: int | None = None


class FitRecord(BaseModel):
    quantity: str
    n_points: int
    exponent: float
    prefactor: float
    onset_coefficient: float
    reference: float
    reference_closed_form: float
    relative_error: float
    all_positive: bool


class BranchSummary(BaseModel):
    k: int
    status: BranchStatus
    critical_width: float
    n_points: int
    last_good_width: float | None = None
    message: str | None = None
    amplitude_squared_slope: float | None = None


# ── Lyapunov–Schmidt ──────────────────────────────────────────────────────────
class JCellRecord(BaseModel):
    k: int
    width: float
    lam: float
    J: float | None = None
    reduced_J: float | None = None
    status: CellStatus
    iterations: int | None = None
    reason: str | None = None


class DerivativeRecord(BaseModel):
    name: str
    value: float
    error: float
    coarse: float
    fine: float
    expected: float | None = None
    tolerance: float | None = None
    verdict: Verdict = Verdict.SKIPPED


# ── Acceptance ────────────────────────────────────────────────────────────────
class CriterionRecord(BaseModel):
    criterion: int
    name: str
    verdict: Verdict
    measured: dict[str, Any] = {}
    tolerance: str | None = None
    runtime_s: float = 0.0
    reason: str | None = None
