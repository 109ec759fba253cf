import json
import os
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

# Optional JSON file with NumericsConfig overrides, looked up next to the package.
DEFAULT_CONFIG_FILE = Path(__file__).resolve().parent.parent / "slext_config.json"
NUM_THREADS_ENV = "SLEXT_NUM_THREADS"

ODE_METHODS = ("RK45", "DOP853")


def _threads_from_env():
    raw = os.environ.get(NUM_THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class NumericsConfig(BaseModel):
    """Every tolerance used by the numerical kernel, with documented defaults."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    ode_method: str = "DOP853"
    seed_offset_factor: float = 1e-6

    quad_abs_tol: float = 1e-10
    quad_rel_tol: float = 1e-11
    quad_limit: int = 200

    extrapolation_levels: int = 20
    extrapolation_tol: float = 1e-9

    wronskian_tol: float = 1e-6
    probe_count: int = 64
    symmetry_rtol: float = 1e-10

    scan_step_fraction: float = 0.125
    scan_min_step_fraction: float = 1.0 / 1024.0
    root_rtol: float = 1e-10
    double_root_threshold: float = 1e-6
    residual_tol: float = 1e-8
    negative_scan_depth: float = 400.0

    separation_rtol: float = 1e-9
    nonneg_tol: float = 1e-9

    num_threads: int = Field(default_factory=_threads_from_env)
    show_progress: bool = False

    @field_validator(
        "ode_rtol", "ode_atol", "seed_offset_factor", "quad_abs_tol", "quad_rel_tol",
        "extrapolation_tol", "wronskian_tol", "symmetry_rtol", "scan_step_fraction",
        "scan_min_step_fraction", "root_rtol", "double_root_threshold", "residual_tol",
        "negative_scan_depth", "separation_rtol", "nonneg_tol",
    )
    @classmethod
    def _positive(cls, value):
        if not value > 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("quad_limit", "extrapolation_levels", "probe_count", "num_threads")
    @classmethod
    def _positive_int(cls, value):
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("ode_method")
    @classmethod
    def _known_method(cls, value):
        if value not in ODE_METHODS:
            raise ValueError(f"unsupported integrator {value!r}; choose from {ODE_METHODS}")
        return value

    def with_tol(self, tol):
        """Copy with the integrator and quadrature tolerances driven by a single knob."""
        return self.model_copy(update={
            "ode_rtol": tol,
            "quad_rel_tol": tol * 0.1,
            "residual_tol": max(self.residual_tol, tol * 100),
        })


_active_config = None


def load_numerics_config(path=None, **overrides):
    """
    Build a NumericsConfig from an optional JSON file plus keyword overrides.

    Args:
        path (str | Path | None): JSON file; falls back to DEFAULT_CONFIG_FILE when it exists
        **overrides: field values that win over the file

    Returns:
        NumericsConfig: validated configuration
    """
    data = {}
    source = Path(path) if path else DEFAULT_CONFIG_FILE
    if path and not source.exists():
        raise ConfigError(f"config file not found: {source}")
    if source.exists():
        try:
            with open(source, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read {source}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{source} must hold a JSON object")
        data = data.get("numerics", data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return NumericsConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def get_config():
    global _active_config
    if _active_config is None:
        _active_config = NumericsConfig()
    return _active_config


def set_config(config):
    global _active_config
    if config is not None and not isinstance(config, NumericsConfig):
        raise ConfigError("set_config expects a NumericsConfig")
    _active_config = config


def resolve(config):
    return config if config is not None else get_config()
