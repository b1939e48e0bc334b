"""
Run configuration. Defaults live on the pydantic models below; a dotenv-style
file passed with ``--config`` and ``VORTEXSTRIP_*`` environment variables
override them, and explicit CLI flags override both.

File keys use the nested delimiter, e.g. ``DOMAIN__NX=801`` or
``SCAN__K=2``. Every file must declare ``SCHEMA_VERSION=1``.
"""

import pathlib

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator
from pydantic_settings import BaseSettings

from app.core.errors import ConfigError

SCHEMA_VERSION = 1
FORMAT_VERSION = 1


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    half_length: float = 20.0
    nx: int = 801
    n_modes: int = 8
    ny_quad: int | None = None


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    fp_tol: float = 1e-11
    fp_max_iter: int = 60
    tol_zero: float = 1e-6
    n_eigs: int = 6


class ScanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = 1
    d_start_offset: float = 0.05
    d_end_offset: float = 1.0
    step: float = 0.05
    d_min: float | None = None
    d_max: float | None = None
    d_step: float = 0.01
    lambda_max: float = 0.3
    lambda_step: float = 0.05
    probe_d_step: float = 0.05
    probe_lambda_step: float = 0.05
    j_d_step: float = 0.05
    workers: int = 4

    @field_validator("k")
    @classmethod
    def k_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("k must be a positive integer")
        return v


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "results"
    plots: bool = True


class Settings(BaseSettings):
    SCHEMA_VERSION: int = SCHEMA_VERSION
    domain: DomainConfig = DomainConfig()
    solver: SolverConfig = SolverConfig()
    scan: ScanConfig = ScanConfig()
    output: OutputConfig = OutputConfig()

    class Config:
        env_prefix = "VORTEXSTRIP_"
        env_nested_delimiter = "__"
        extra = "forbid"

    def resolved_config(self) -> dict:
        """JSON-safe snapshot embedded in every emitted file."""
        return {"format_version": FORMAT_VERSION, **self.model_dump(mode="json")}


def _nest(flat: dict[str, str]) -> dict:
    nested: dict = {}
    for key, value in flat.items():
        parts = key.strip().lower().split("__")
        if parts == ["schema_version"]:
            nested["SCHEMA_VERSION"] = value
            continue
        if len(parts) != 2:
            raise ConfigError(f"Unknown configuration key '{key}'.", key=key)
        nested.setdefault(parts[0], {})[parts[1]] = value
    return nested


def load_settings(
    config_path: str | pathlib.Path | None = None, overrides: dict | None = None
) -> Settings:
    """Build Settings from an optional config file plus flag overrides.

    ``overrides`` maps ``group`` to a dict of field values; ``None`` values
    are ignored so unset CLI flags never clobber file values.
    """
    data: dict = {}
    if config_path is not None:
        path = pathlib.Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file '{path}' does not exist.", path=str(path))
        flat = {k: v for k, v in dotenv_values(path).items() if v is not None}
        data = _nest(flat)
        version = data.get("SCHEMA_VERSION")
        if version is None:
            raise ConfigError("Config file must declare SCHEMA_VERSION.", path=str(path))
        if str(version).strip() != str(SCHEMA_VERSION):
            raise ConfigError(
                f"Unsupported SCHEMA_VERSION {version}; expected {SCHEMA_VERSION}.",
                path=str(path),
            )

    for group, values in (overrides or {}).items():
        for field, value in values.items():
            if value is not None:
                data.setdefault(group, {})[field] = value

    try:
        return Settings(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
