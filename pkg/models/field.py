"""Prior parameters, schedules and random-field sample models."""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from utils.errors import ConfigurationError, DimensionError, RangeError

PAPER_RIGOR = "paper"
FLAT_RIGOR = "flat"


def minimum_smoothness(m: int, rigor: str = PAPER_RIGOR) -> float:
    """Lower bound (exclusive) on s for the given rigor mode."""
    if rigor == PAPER_RIGOR:
        return 1.5 * m - 0.5
    if rigor == FLAT_RIGOR:
        return float(m)
    raise ConfigurationError(f"Unknown rigor mode: {rigor!r}")


def check_smoothness(m: int, s: float, rigor: str = PAPER_RIGOR, manifold_kind: str = "") -> None:
    """Raise RangeError when s is outside the admissible range."""
    if rigor == FLAT_RIGOR and manifold_kind and manifold_kind != "flat_torus":
        raise ConfigurationError("Flat rigor mode is only available on the flat torus")
    bound = minimum_smoothness(m, rigor)
    if not s > bound:
        raise RangeError(f"s={s} must exceed {bound:g} in {rigor} mode (m={m})")


@dataclass(frozen=True)
class PriorParams:
    """Parameters of the truncated graph Matern prior.

    W_n = prior_scale * sum_{i<=k} (1 + lambda_i)^(-s/2) xi_i psi_i
    """
    s: float
    k: int
    zeta: float
    m: int
    prior_scale: float = 1.0
    rigor: str = PAPER_RIGOR
    provenance: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"Truncation k must be >= 1, got {self.k}")
        if not self.prior_scale > 0:
            raise ConfigurationError(f"prior_scale must be positive, got {self.prior_scale}")
        check_smoothness(self.m, self.s, self.rigor)

    def coefficient_scales(self, eigenvalues: np.ndarray) -> np.ndarray:
        """Standard deviations prior_scale * (1 + lambda)^(-s/2)."""
        lam = np.asarray(eigenvalues, dtype=float)
        return self.prior_scale * (1.0 + lam) ** (-0.5 * self.s)

    def coefficient_variances(self, eigenvalues: np.ndarray) -> np.ndarray:
        return self.coefficient_scales(eigenvalues) ** 2

    def check_against(self, n_available: int) -> None:
        if self.k > n_available:
            raise DimensionError(
                f"Truncation k={self.k} exceeds the {n_available} available eigenpairs"
            )


@dataclass(frozen=True)
class ScheduleResult:
    """Evaluated parameter scalings.

    `exponents` holds the power of N (or n) and of log N (or log n) for each
    scaled quantity, e.g. exponents["zeta"] = (-1/(m+4+delta), p_m/2).
    """
    m: int
    s: float
    delta: float
    mode: str
    value: float
    alpha_s: float
    p_m: float
    case: str
    exponents: Dict[str, tuple]
    zeta: Optional[float] = None
    k: Optional[int] = None
    k_real: Optional[float] = None
    N_n: Optional[float] = None
    log_N_n: Optional[float] = None
    rigor: str = PAPER_RIGOR
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "s": self.s,
            "delta": self.delta,
            "mode": self.mode,
            "value": self.value,
            "alpha_s": self.alpha_s,
            "p_m": self.p_m,
            "case": self.case,
            "exponents": {key: list(val) for key, val in self.exponents.items()},
            "zeta": self.zeta,
            "k": self.k,
            "N_n": self.N_n if self.N_n is None or math.isfinite(self.N_n) else "inf",
            "log_N_n": self.log_N_n,
            "rigor": self.rigor,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class FieldSample:
    """A realization of the discrete or continuum field with its coefficients."""
    values: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    s: float
    n_modes: int
    kind: str  # 'discrete' or 'continuum'
    prior_scale: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Field values must be finite")

    @property
    def size(self) -> int:
        return int(np.asarray(self.values).shape[0])


@dataclass(frozen=True)
class DiscrepancyEstimate:
    """Monte Carlo estimate of E sup |W_n - W^M|^2 over the reference grid."""
    mean: float
    stderr: float
    n_mc: int
    k: int
    K: int
    grid_size: int
    rho: float
    samples: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "mc_mean": self.mean,
            "mc_stderr": self.stderr,
            "n_mc": self.n_mc,
            "k": self.k,
            "K": self.K,
            "grid_size": self.grid_size,
            "rho_hat": self.rho,
        }
