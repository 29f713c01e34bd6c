"""
Run configuration schema and user settings.

Run configurations are JSON files validated with pydantic before anything is
computed. User-level defaults (worker count, output directory) are stored in
~/.config/rbsim/settings.json.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as SchemaError, model_validator

from .errors import ConfigError, ValidationError
from .gate_impl import GateKind
from .noise import NoiseKind, NoiseModel, model_for_gamma0

WORKERS_ENV = "RBSIM_WORKERS"


class Experiment(str, Enum):
    CURVE = "curve"
    FCOEF = "fcoef"
    FIT = "fit"
    COMPARE = "compare"
    VALIDATE = "validate"
    FIGURE1 = "figure1"
    FIGURE2 = "figure2"
    SM_VALIDATION = "sm_validation"
    ONE_OVER_F = "one_over_f"


class Method(str, Enum):
    AUTO = "auto"
    PLME = "plme"
    COARSE = "coarse"
    COARSE_RENORMALIZED = "coarse_renormalized"
    MC = "mc"
    MARKOV = "markov"
    QUASISTATIC = "quasistatic"
    SEQUENCE_AVERAGED = "sequence_averaged"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NoiseSpec(_Section):
    kind: NoiseKind
    sigma: float = Field(0.0, ge=0)
    tau_c: Optional[float] = Field(None, gt=0)
    gamma: float = Field(0.0, ge=0)
    lam: float = Field(0.0, ge=0)
    omega_l: float = Field(0.0, ge=0)
    omega_h: float = Field(0.0, ge=0)
    gamma0: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_model(self) -> "NoiseSpec":
        # ValidationError is a ValueError, so pydantic reports it as a schema error
        self.to_model()
        return self

    def to_model(self) -> NoiseModel:
        tau_c = math.inf if self.tau_c is None else self.tau_c
        if self.kind is NoiseKind.OU and self.tau_c is None:
            raise ValidationError("OU noise needs tau_c")
        if self.gamma0 is not None:
            return model_for_gamma0(
                self.kind, self.gamma0, tau_c=tau_c, omega_l=self.omega_l, omega_h=self.omega_h
            )
        return NoiseModel(
            self.kind,
            sigma=self.sigma,
            tau_c=tau_c,
            gamma=self.gamma,
            lam=self.lam,
            omega_l=self.omega_l,
            omega_h=self.omega_h,
        )


class LengthRange(_Section):
    start: int = Field(1, ge=1)
    stop: int = Field(100, ge=1)
    step: int = Field(1, ge=1)


class LengthGeomspace(_Section):
    geomspace: Tuple[int, int, int]


LengthSpec = Union[List[int], LengthRange, LengthGeomspace]


def resolve_lengths(spec: LengthSpec) -> np.ndarray:
    """Explicit list, inclusive range, or log-spaced integers (deduplicated)."""
    if isinstance(spec, LengthRange):
        m = np.arange(spec.start, spec.stop + 1, spec.step)
    elif isinstance(spec, LengthGeomspace):
        lo, hi, num = spec.geomspace
        if not 1 <= lo < hi or num < 2:
            raise ConfigError(f"bad geomspace {spec.geomspace}")
        m = np.unique(np.round(np.geomspace(lo, hi, num)).astype(np.int64))
    else:
        m = np.asarray(spec, dtype=np.int64)
    if m.size == 0 or np.any(m < 1) or np.any(np.diff(m) <= 0):
        raise ConfigError("lengths must be a non-empty strictly increasing list of positive integers")
    return m


class McSettings(_Section):
    n_sequences: int = Field(2000, ge=1)
    n_noise_per_sequence: int = Field(20, ge=1)
    substeps_per_gate: int = Field(64, ge=8)
    perfect_first_gate: bool = True
    audit: bool = False
    n_realizations: int = Field(2000, ge=2)


FULL_SCALE_SEQUENCES = 20000
FULL_SCALE_NOISE = 100


class FitSettings(_Section):
    enabled: bool = False
    tail_fraction: float = Field(0.4, gt=0, le=1)
    window: Optional[Tuple[int, int]] = None


class ThresholdSettings(_Section):
    coarse: float = Field(0.05, gt=0)
    weak: float = Field(0.01, gt=0)


class Figure1Settings(_Section):
    gamma0: float = Field(2.5e-3, gt=0)
    tau_c_min: float = Field(0.03, gt=0)
    tau_c_max: float = Field(30.0, gt=0)
    n_points: int = Field(13, ge=2)
    implementations: List[GateKind] = [GateKind.ZSX, GateKind.U3, GateKind.INSTANT]

    @model_validator(mode="after")
    def _check_range(self) -> "Figure1Settings":
        if self.tau_c_max <= self.tau_c_min:
            raise ValueError("figure1 needs tau_c_min < tau_c_max")
        return self


class Figure2Settings(_Section):
    gamma0: float = Field(6.125e-4, gt=0)
    tau_c_values: List[float] = [30.0, 100.0, 300.0]
    lengths: LengthSpec = Field(default_factory=lambda: LengthGeomspace(geomspace=(1, 2000, 64)))
    implementation: GateKind = GateKind.ZSX
    # in units of tau_c
    slope_window: Tuple[float, float] = (1.0, 3.0)

    @model_validator(mode="after")
    def _check_slope_window(self) -> "Figure2Settings":
        if not 0 < self.slope_window[0] < self.slope_window[1]:
            raise ValueError(f"figure2 slope_window must satisfy 0 < lo < hi, got {self.slope_window}")
        return self


class SmValidationSettings(_Section):
    sigma: float = Field(0.05, ge=0)
    tau_c_values: List[float] = [0.5, 2.0, 30.0, 100.0]
    lam: float = Field(0.15, ge=0)
    omega_h: float = Field(1e4, gt=0)
    omega_l_values: List[float] = [1e-4, 1.0]
    first_gate_comparison: bool = True
    zero_noise_panel: bool = True


class OneOverFSettings(_Section):
    lam: float = Field(0.15, ge=0)
    omega_h: float = Field(1e4, gt=0)
    omega_l_values: List[float] = [1e-4, 1e-2, 1.0]
    include_mc: bool = False


class RunConfig(_Section):
    experiment: Experiment = Experiment.CURVE
    noise: Optional[NoiseSpec] = None
    implementation: GateKind = GateKind.ZSX
    lengths: LengthSpec = Field(default_factory=LengthRange)
    method: Method = Method.AUTO
    compare_methods: List[Method] = [Method.PLME, Method.COARSE]
    mc: McSettings = Field(default_factory=McSettings)
    fit: FitSettings = Field(default_factory=FitSettings)
    thresholds: ThresholdSettings = Field(default_factory=ThresholdSettings)
    quad_points: int = Field(32, ge=8)
    figure1: Figure1Settings = Field(default_factory=Figure1Settings)
    figure2: Figure2Settings = Field(default_factory=Figure2Settings)
    sm_validation: SmValidationSettings = Field(default_factory=SmValidationSettings)
    one_over_f: OneOverFSettings = Field(default_factory=OneOverFSettings)
    input_curve: Optional[str] = None
    output_path: str = "rbsim-out"
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_experiment_inputs(self) -> "RunConfig":
        if self.experiment in (Experiment.CURVE, Experiment.COMPARE) and self.noise is None:
            raise ValueError(f"experiment '{self.experiment.value}' needs a noise section")
        if self.experiment is Experiment.FIT and not self.input_curve:
            raise ValueError("experiment 'fit' needs input_curve")
        if len(set(self.compare_methods)) < 2:
            raise ValueError("compare needs at least two distinct methods")
        try:
            resolve_lengths(self.lengths)
            resolve_lengths(self.figure2.lengths)
        except ConfigError as e:
            raise ValueError(str(e)) from e
        return self

    def noise_model(self) -> NoiseModel:
        if self.noise is None:
            raise ConfigError("configuration has no noise section")
        return self.noise.to_model()

    def resolved_lengths(self) -> np.ndarray:
        return resolve_lengths(self.lengths)


def config_from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except SchemaError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"configuration {path} must be a JSON object")
    return config_from_dict(data)


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON form, output location excluded."""
    payload = config.model_dump(mode="json", exclude={"output_path"})
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# User settings
# ---------------------------------------------------------------------------

@dataclass
class Settings:
    workers: Optional[int] = None
    output_dir: Optional[str] = None


def _config_dir() -> Path:
    d = Path.home() / ".config" / "rbsim"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _settings_path() -> Path:
    return _config_dir() / "settings.json"


def load_settings() -> Settings:
    """Load settings from JSON file. Returns default Settings if the file is missing or invalid."""
    path = _settings_path()
    if not path.exists():
        return Settings()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        workers = data.get("workers")
        return Settings(
            workers=int(workers) if workers is not None else None,
            output_dir=data.get("output_dir"),
        )
    except (json.JSONDecodeError, OSError, TypeError, ValueError):
        return Settings()


def save_settings(settings: Settings) -> None:
    path = _settings_path()
    data = {}
    if settings.workers:
        data["workers"] = settings.workers
    if settings.output_dir:
        data["output_dir"] = settings.output_dir
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)


def resolve_workers(cli_value: Optional[int] = None, settings: Optional[Settings] = None) -> int:
    """--workers, then RBSIM_WORKERS, then the settings file, then 1."""
    if cli_value is not None:
        value = cli_value
    elif os.environ.get(WORKERS_ENV):
        raw = os.environ[WORKERS_ENV]
        try:
            value = int(raw)
        except ValueError as e:
            raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from e
    else:
        settings = settings if settings is not None else load_settings()
        value = settings.workers or 1
    if value < 1:
        raise ConfigError(f"worker count must be >= 1, got {value}")
    return value
