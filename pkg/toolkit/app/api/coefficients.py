import logging

from app.core.config import Settings
from app.core.records import RecordWriter
from app.schemas.schemas import CoefficientRecord, ConvergenceRecord
from app.services.analytic import Coefficients, coefficient_convergence

logger = logging.getLogger(__name__)

CONVERGENCE_QUANTITIES = (
    "omega",
    "omega_consistent",
    "lambda_coeff",
    "energy_coeff",
    "int_chi0_4",
    "cross_term",
    "soliton_energy_density",
)


def coefficient_record(resolution: str, c: Coefficients) -> CoefficientRecord:
    return CoefficientRecord(resolution=resolution, bounds=c.bounds(), **c.model_dump())


def run(settings: Settings, writer: RecordWriter) -> int:
    coarse, fine, extrapolated = coefficient_convergence(
        settings.domain.nx, settings.domain.half_length
    )
    for resolution, c in (("coarse", coarse), ("fine", fine), ("extrapolated", extrapolated)):
        writer.emit("coefficients", coefficient_record(resolution, c))

    for name in CONVERGENCE_QUANTITIES:
        a, b, r = getattr(coarse, name), getattr(fine, name), getattr(extrapolated, name)
        writer.emit(
            "coefficients_convergence",
            ConvergenceRecord(quantity=name, coarse=a, fine=b, extrapolated=r, change=abs(b - a)),
        )

    failed = [name for name, ok in extrapolated.bounds().items() if not ok]
    if failed:
        logger.warning("coefficient bounds violated: %s", ", ".join(failed))
    logger.info(
        "omega=%.8f Lambda=%.8f E=%.8f (consistent: %.8f, %.8f, %.8f)",
        extrapolated.omega,
        extrapolated.lambda_coeff,
        extrapolated.energy_coeff,
        extrapolated.omega_consistent,
        extrapolated.lambda_consistent,
        extrapolated.energy_consistent,
    )
    writer.close()
    return 0
