"""Experiment configuration and result models."""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, Optional, Tuple

import pandas as pd
from dotenv import dotenv_values

import config
from models.manifold import ManifoldSpec
from models.posterior import CLASSIFICATION, REGRESSION
from utils.errors import ConfigurationError

SPECTRAL = "spectral"
FIELD = "field"
CONTRACTION = "contraction"
LAPLACIAN = "laplacian"

EXPERIMENT_KINDS = (SPECTRAL, FIELD, CONTRACTION, LAPLACIAN)
_KIND_ALIASES = {"laplacian_pointwise": LAPLACIAN}

CAPPED = "capped"
PAPER = "paper"


def _parse_bool(raw: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_float(raw: str) -> float:
    val = raw.strip().lower()
    if val in ("inf", "+inf", "infinity"):
        return math.inf
    return float(val)


def _parse_int(raw: str) -> int:
    val = float(raw.strip())
    if not val.is_integer():
        raise ValueError(f"not an integer: {raw!r}")
    return int(val)


def _parse_int_list(raw: str) -> Tuple[int, ...]:
    return tuple(_parse_int(tok) for tok in raw.split(",") if tok.strip())


def _parse_float_list(raw: str) -> Tuple[float, ...]:
    return tuple(_parse_float(tok) for tok in raw.split(",") if tok.strip())


def _parse_str(raw: str) -> str:
    return raw.strip()


# config-file key -> (ExperimentConfig attribute, parser)
CONFIG_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "experiment.kind": ("kind", _parse_str),
    "manifold.kind": ("manifold_kind", _parse_str),
    "manifold.m": ("m", _parse_int),
    "model.s": ("s", _parse_float),
    "model.beta": ("beta", _parse_float),
    "model.delta": ("delta", _parse_float),
    "model.sigma2": ("sigma2", _parse_float),
    "model.task": ("task", _parse_str),
    "model.link": ("link", _parse_str),
    "model.truth": ("truth", _parse_str),
    "model.truth_coefficients": ("truth_coefficients", _parse_float_list),
    "model.prior_scale": ("prior_scale", _parse_float),
    "model.rigor": ("rigor", _parse_str),
    "schedule.mode": ("schedule_mode", _parse_str),
    "schedule.gamma": ("gamma", _parse_float),
    "schedule.n_max_points": ("n_max_points", _parse_int),
    "schedule.zeta_constant": ("zeta_constant", _parse_float),
    "schedule.k_constant": ("k_constant", _parse_float),
    "schedule.n_constant": ("n_constant", _parse_float),
    "grid.values": ("grid_values", _parse_int_list),
    "grid.reference_size": ("reference_size", _parse_int),
    "mc.replicas": ("replicas", _parse_int),
    "mc.chains": ("chains", _parse_int),
    "mc.iters": ("iters", _parse_int),
    "mc.burn_in": ("burn_in", _parse_int),
    "mc.thin": ("thin", _parse_int),
    "mc.beta_pcn": ("beta_pcn", _parse_float),
    "mc.n_mc": ("n_mc", _parse_int),
    "spectral.n_eigs": ("n_eigs", _parse_int),
    "spectral.inject_exact": ("inject_exact", _parse_bool),
    "field.k_continuum": ("k_continuum", _parse_int),
    "field.k_override": ("k_override", _parse_int),
    "labels.randomize": ("randomize_labels", _parse_bool),
    "solver.tol": ("solver_tol", _parse_float),
    "solver.maxiter": ("solver_maxiter", _parse_int),
    "seed": ("seed", _parse_int),
    "output.dir": ("output_dir", _parse_str),
    "parallel.n_jobs": ("n_jobs", _parse_int),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one experiment run."""
    kind: str
    grid_values: Tuple[int, ...]
    manifold_kind: str = "flat_torus"
    m: int = 2
    s: float = 3.5
    beta: float = 2.5
    delta: float = 0.5
    sigma2: float = config.SIGMA2
    task: str = REGRESSION
    link: str = "logistic"
    truth: str = "smooth_low_frequency"
    truth_coefficients: Tuple[float, ...] = ()
    prior_scale: float = config.PRIOR_SCALE
    rigor: str = "paper"
    schedule_mode: str = CAPPED
    gamma: float = 1.5
    n_max_points: int = 16000
    zeta_constant: float = config.ZETA_CONSTANT
    k_constant: float = config.K_CONSTANT
    n_constant: float = config.N_CONSTANT
    reference_size: int = config.REFERENCE_GRID_SIZE
    replicas: int = 1
    chains: int = 1
    iters: int = 20000
    burn_in: int = 5000
    thin: int = 10
    beta_pcn: float = config.PCN_BETA
    n_mc: int = 200
    n_eigs: int = 10
    inject_exact: bool = False
    k_continuum: int = 0  # 0: chosen by the tail rule
    k_override: int = 0  # 0: schedule value
    randomize_labels: bool = False
    solver_tol: float = config.EIGEN_TOL
    solver_maxiter: int = config.EIGEN_MAXITER
    seed: int = 0
    output_dir: str = ""
    n_jobs: int = config.N_JOBS

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        if kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"Unknown experiment kind: {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "grid_values", tuple(int(v) for v in self.grid_values))
        object.__setattr__(self, "truth_coefficients", tuple(float(v) for v in self.truth_coefficients))
        spec = ManifoldSpec(self.manifold_kind, self.m)
        object.__setattr__(self, "manifold_kind", spec.kind)

        if not self.grid_values:
            raise ConfigurationError("grid.values must list at least one value")
        if any(b <= a for a, b in zip(self.grid_values, self.grid_values[1:])):
            raise ConfigurationError(f"grid.values must be strictly increasing: {self.grid_values}")
        if min(self.grid_values) < 1:
            raise ConfigurationError("grid.values must be positive")
        if self.replicas < 1:
            raise ConfigurationError(f"mc.replicas must be >= 1, got {self.replicas}")
        if self.chains < 1:
            raise ConfigurationError(f"mc.chains must be >= 1, got {self.chains}")
        if self.schedule_mode not in (CAPPED, PAPER):
            raise ConfigurationError(f"schedule.mode must be 'paper' or 'capped', got {self.schedule_mode!r}")
        if self.schedule_mode == CAPPED and not self.gamma > 0:
            raise ConfigurationError(f"Capped schedule requires gamma > 0, got {self.gamma}")
        if self.n_max_points < 2:
            raise ConfigurationError("schedule.n_max_points must be >= 2")
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigurationError(f"Unknown task: {self.task!r}")
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if not self.sigma2 > 0:
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not 0 < self.beta_pcn <= 1:
            raise ConfigurationError(f"mc.beta_pcn must lie in (0, 1], got {self.beta_pcn}")
        if self.iters < 1 or self.burn_in < 0 or self.burn_in >= self.iters or self.thin < 1:
            raise ConfigurationError("Need iters >= 1, 0 <= burn_in < iters and thin >= 1")
        if self.n_mc < 2:
            raise ConfigurationError("mc.n_mc must be >= 2")
        if self.n_eigs < 1 or self.k_continuum < 0 or self.k_override < 0:
            raise ConfigurationError("Mode counts must be nonnegative (n_eigs >= 1)")
        if self.reference_size < 1:
            raise ConfigurationError("grid.reference_size must be >= 1")
        if not 0 < self.solver_tol <= 1e-4:
            raise ConfigurationError(f"solver.tol must lie in (0, 1e-4], got {self.solver_tol}")
        for name in ("zeta_constant", "k_constant", "n_constant", "prior_scale"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")

    @property
    def manifold(self) -> ManifoldSpec:
        return ManifoldSpec(self.manifold_kind, self.m)

    @property
    def run_name(self) -> str:
        return self.output_dir or f"{self.kind}-seed{self.seed}"

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """Parse a key=value config file."""
        try:
            raw = dotenv_values(path)
        except OSError as e:
            raise ConfigurationError(f"Cannot read config file {path}: {e}")
        if not raw:
            raise ConfigurationError(f"Config file {path} is empty or missing")
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: Dict[str, Optional[str]]) -> "ExperimentConfig":
        """Build a config from config-file keys (values as strings)."""
        kwargs: Dict[str, Any] = {}
        for key, value in raw.items():
            if key not in CONFIG_KEYS:
                raise ConfigurationError(f"Unknown config key: {key}")
            attr, parser = CONFIG_KEYS[key]
            if value is None:
                raise ConfigurationError(f"Config key {key} has no value")
            try:
                kwargs[attr] = parser(value)
            except ValueError as e:
                raise ConfigurationError(f"Invalid value for {key}: {value!r} ({e})")
        for required in ("kind", "grid_values"):
            if required not in kwargs:
                key = next(k for k, (a, _) in CONFIG_KEYS.items() if a == required)
                raise ConfigurationError(f"Missing required config key: {key}")
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["grid_values"] = list(self.grid_values)
        out["truth_coefficients"] = list(self.truth_coefficients)
        if math.isinf(self.beta):
            out["beta"] = "inf"
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        if kwargs.get("beta") == "inf":
            kwargs["beta"] = math.inf
        return cls(**kwargs)


@dataclass(frozen=True)
class SlopeFit:
    """Ordinary least-squares fit of log y against log x."""
    slope: float
    intercept: float
    stderr: float
    n_points: int
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    """Rows, slope fit and manifest of a finished experiment."""
    config: ExperimentConfig
    rows: pd.DataFrame
    slope: Optional[SlopeFit]
    manifest: Dict[str, Any] = field(default_factory=dict)
    detail: Optional[pd.DataFrame] = None
    metric: str = ""
    x_column: str = "grid_value"
    reference_slope: Optional[float] = None
    slope_flag: str = ""
    output_dir: Optional[str] = None

    @property
    def n_rows(self) -> int:
        return int(len(self.rows))

    def replica_medians(self, column: Optional[str] = None) -> pd.Series:
        """Median of a metric column per grid value."""
        column = column or self.metric
        return self.rows.groupby("grid_value")[column].median().sort_index()

    def slope_payload(self) -> dict:
        payload = {
            "metric": self.metric,
            "x": self.x_column,
            "reference_slope": self.reference_slope,
            "schedule_mode": self.config.schedule_mode if self.config.kind == CONTRACTION else None,
        }
        if self.slope is None:
            payload.update({"slope": None, "flag": self.slope_flag or "insufficient_points"})
        else:
            payload.update(self.slope.to_dict())
            payload["flag"] = self.slope_flag
        return payload
