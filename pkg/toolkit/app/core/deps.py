import numpy as np

from app.core.config import Settings
from app.core.errors import ConfigError
from app.core.records import RecordWriter
from app.services.strip_core import StripDomain, make_domain


def get_domain(settings: Settings, width: float, n_modes: int | None = None) -> StripDomain:
    dom = settings.domain
    return make_domain(
        dom.half_length,
        width,
        dom.nx,
        dom.n_modes if n_modes is None else n_modes,
        dom.ny_quad if n_modes is None else None,
    )


def get_writer(settings: Settings) -> RecordWriter:
    return RecordWriter(settings.output.out_dir, settings.resolved_config())


def scan_range(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive grid start, start + step, ... ≤ stop."""
    if step <= 0:
        raise ConfigError(f"Scan step must be positive, got {step}.")
    if stop < start:
        raise ConfigError(f"Empty scan range [{start}, {stop}].", start=start, stop=stop)
    n = int(np.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)
