"""RunConfig: the validated description of one lab run.

A run is described by a human-editable INI file (sections of `key = value`)
or by the equivalent JSON document. Command-line overrides use dotted keys,
`--set cocycle.lambda_sq=30`; a bare key is accepted when exactly one
section defines it.
"""
import configparser
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator

from config.settings import current_config
from errors import ConfigError

logger = logging.getLogger(__name__)

WORKING_EPSILON = 2.0 ** -52

AUTO = "auto"


def _auto_to_none(value):
    if isinstance(value, str) and value.strip().lower() in ("", AUTO, "none"):
        return None
    return value


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PotentialSettings(_Section):
    kind: Literal["cosine", "tabulated", "constant"] = "cosine"
    amplitude: float = Field(1.0, gt=0)
    table_path: Optional[str] = None
    constant: float = 0.0
    normalize: bool = True

    auto_none = field_validator("table_path", mode="before")(_auto_to_none)


class CocycleSettings(_Section):
    lambda_sq: float = Field(30.0, gt=0)
    omega: str = "(sqrt(5)-1)/4" # a literal number or an expression
    tau: float = Field(1.0, ge=1.0)
    n_max: int = Field(100_000, ge=2)

    @field_validator("omega", mode="before")
    @classmethod
    def _omega_text(cls, value):
        if isinstance(value, (int, float)):
            return repr(float(value))
        return value


class EnergySettings(_Section):
    mode: Literal["single", "sweep", "edge"] = "single"
    values: List[float] = Field(default_factory=lambda: [-2.0])
    bracket_lo: float = -1.0
    bracket_hi: float = 1.0
    E0: Optional[float] = None
    schedule_points: int = Field(12, ge=3)
    schedule_ratio: float = Field(0.5, gt=0, lt=1)
    schedule_start: Optional[float] = None # g in E_j = E0 - g * ratio**j; auto from gap_floor

    split_lists = field_validator("values", mode="before")(_split_list)
    auto_none = field_validator("E0", "schedule_start", mode="before")(_auto_to_none)


class GridSettings(_Section):
    base_points: int = 4096
    refine_depth: int = Field(6, ge=0)
    window_points: int = Field(257, ge=65)

    @field_validator("base_points")
    @classmethod
    def _power_of_two(cls, value):
        if value < 16 or value & (value - 1):
            raise ValueError("base_points must be a power of two >= 16")
        return value


class ToleranceSettings(_Section):
    tol_psi: Optional[float] = Field(None, gt=0) # auto: 1e-9 * lambda_sq
    tol_deriv: float = Field(1e-8, gt=0)
    gap_floor: Optional[float] = Field(None, gt=0) # auto: 1e3 * working epsilon
    edge_tol: float = Field(1e-12, gt=0)
    quad_C: float = Field(10.0, gt=1)
    quad_residual: float = Field(0.05, gt=0)
    dd_threshold: float = Field(1e-11, gt=0)

    auto_none = field_validator("tol_psi", "gap_floor", mode="before")(_auto_to_none)


class HorizonSettings(_Section):
    T0: int = Field(64, ge=1)
    T_max: int = Field(current_config.DEFAULT_T_MAX, ge=1)
    seed_policy: Literal["cone", "band"] = "cone"
    confinement: Literal["cone", "band"] = "cone"


class LadderSettings(_Section):
    max_level: int = Field(1, ge=0, le=2)
    m_choice: Literal["lower", "admissible"] = "lower"
    c1_samples: int = Field(1000, ge=0)
    c1_energy: float = -5.0
    box_points: int = Field(257, ge=3)
    step_cap: int = Field(1_000_000, ge=1)


class OutputSettings(_Section):
    dir: str = current_config.OUTPUT_DIR
    formats: List[Literal["csv", "json", "xlsx"]] = Field(default_factory=lambda: ["csv", "json"])

    split_lists = field_validator("formats", mode="before")(_split_list)


class RunSettings(_Section):
    threads: Union[int, Literal["auto"]] = AUTO
    precision: Literal["f64", "dd"] = "f64"
    seed: int = 12345
    lyapunov_samples: int = Field(100_000, ge=1)
    burn_in: int = Field(1000, ge=0)
    check_orbits: int = Field(1000, ge=1)
    check_probes: int = Field(100, ge=1)
    strict: bool = False
    inject_fault: Literal["none", "fibre"] = "none"

    @field_validator("threads")
    @classmethod
    def _positive_threads(cls, value):
        if isinstance(value, int) and value < 1:
            raise ValueError("threads must be >= 1 or 'auto'")
        return value


class RunConfig(_Section):
    potential: PotentialSettings = Field(default_factory=PotentialSettings)
    cocycle: CocycleSettings = Field(default_factory=CocycleSettings)
    energy: EnergySettings = Field(default_factory=EnergySettings)
    grid: GridSettings = Field(default_factory=GridSettings)
    tolerances: ToleranceSettings = Field(default_factory=ToleranceSettings)
    horizon: HorizonSettings = Field(default_factory=HorizonSettings)
    ladder: LadderSettings = Field(default_factory=LadderSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    run: RunSettings = Field(default_factory=RunSettings)

    # `auto` values are resolved on access and never written back,
    # so to_dict()/to_ini() reproduce what the user wrote.

    def resolved_tol_psi(self) -> float:
        if self.tolerances.tol_psi is not None:
            return self.tolerances.tol_psi
        return 1e-9 * self.cocycle.lambda_sq

    def resolved_gap_floor(self) -> float:
        if self.tolerances.gap_floor is not None:
            return self.tolerances.gap_floor
        return 1e3 * WORKING_EPSILON

    def resolved_threads(self) -> int:
        threads = current_config.THREADS if current_config.THREADS is not None else self.run.threads
        if isinstance(threads, str):
            if threads.strip().lower() == AUTO:
                return os.cpu_count() or 1
            try:
                threads = int(threads)
            except ValueError:
                raise ConfigError(f"COCYCLE_LAB_THREADS must be an integer or 'auto', got '{threads}'")
        if threads < 1:
            raise ConfigError(f"thread count must be positive, got {threads}")
        return threads

    def resolved_schedule_start(self) -> float:
        if self.energy.schedule_start is not None:
            return self.energy.schedule_start
        # smallest scheduled gap sits 1e3 above the resolvable floor
        last = self.energy.schedule_ratio ** (self.energy.schedule_points - 1)
        return 1e3 * self.resolved_gap_floor() / last

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_ini(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                lines.append(f"{key} = {_ini_value(value)}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; the identity of a run."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _ini_value(value: Any) -> str:
    if value is None:
        return AUTO
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_ini_value(v) for v in value)
    return str(value)


def _read_ini(text: str) -> Dict[str, Dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str # keys are case sensitive (E0, T_max, quad_C)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Malformed INI config: {e}")
    return {section: dict(parser[section]) for section in parser.sections()}


def _apply_override(raw: Dict[str, Dict[str, Any]], assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"Override '{assignment}' is not of the form key=value")
    key, value = assignment.split("=", 1)
    key, value = key.strip(), value.strip()
    if "." in key:
        section, field = key.split(".", 1)
    else:
        owners = [name for name, model in RunConfig.model_fields.items()
                  if key in model.annotation.model_fields]
        if len(owners) != 1:
            raise ConfigError(f"Override key '{key}' is ambiguous or unknown; use section.key")
        section, field = owners[0], key
    if section not in RunConfig.model_fields:
        raise ConfigError(f"Unknown config section '{section}'")
    raw.setdefault(section, {})[field] = value


def build_run_config(raw: Dict[str, Dict[str, Any]], overrides: Sequence[str] = ()) -> RunConfig:
    raw = {section: dict(values) for section, values in raw.items()}
    for assignment in overrides:
        _apply_override(raw, assignment)
    try:
        return RunConfig.model_validate(raw)
    except PydanticValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid run configuration: {problems}")


def load_run_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    """Loads an INI or JSON config file and applies `--set` overrides.

    Args:
        path (Optional[str]): Config file; None means all defaults.
        overrides (Sequence[str]): `section.key=value` assignments, applied in order.

    Returns:
        RunConfig: The validated configuration.
    """
    raw: Dict[str, Dict[str, Any]] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        with open(path, encoding="utf-8") as f:
            text = f.read()
        if path.lower().endswith(".json"):
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Malformed JSON config {path}: {e}")
        else:
            raw = _read_ini(text)
        logger.info(f"Loaded run config from {path}")
    return build_run_config(raw, overrides)
