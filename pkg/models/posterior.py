"""Labeled data, link functions and posterior result models."""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from utils.errors import ConfigurationError, DimensionError, DomainError

REGRESSION = "regression"
CLASSIFICATION = "classification"

EXACT_GAUSSIAN = "exact_gaussian"
MCMC_CHAIN = "mcmc_chain"


@dataclass(frozen=True)
class LabeledData:
    """Labeled subset of a point cloud.

    `indices` point into the cloud; y holds reals for regression and {0, 1}
    for classification.
    """
    indices: np.ndarray
    y: np.ndarray
    task: str = REGRESSION
    sigma2: Optional[float] = None
    N: Optional[int] = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if idx.shape != y.shape:
            raise DimensionError(f"{idx.size} indices but {y.size} labels")
        if np.unique(idx).size != idx.size:
            raise DomainError("Labeled indices must be distinct")
        if idx.size and idx.min() < 0:
            raise DomainError("Labeled indices must be nonnegative")
        if self.N is not None and idx.size and idx.max() >= self.N:
            raise DomainError(f"Labeled index {idx.max()} out of range for N={self.N}")
        if self.task == REGRESSION:
            if self.sigma2 is None or not self.sigma2 > 0:
                raise ConfigurationError(f"Regression needs sigma2 > 0, got {self.sigma2}")
        elif self.task == CLASSIFICATION:
            if not np.all((y == 0.0) | (y == 1.0)):
                raise DomainError("Classification labels must be 0 or 1")
        else:
            raise ConfigurationError(f"Unknown task: {self.task!r}")
        idx.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class LinkFunction:
    """Monotone map from the latent field to a probability."""
    name: str
    forward: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    inverse: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    derivative: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    log_forward: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    log_complement: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def log_likelihood(self, latent: np.ndarray, y: np.ndarray) -> float:
        """Bernoulli log-likelihood sum y log F(w) + (1-y) log(1-F(w))."""
        return float(np.sum(y * self.log_forward(latent) + (1.0 - y) * self.log_complement(latent)))


@dataclass(frozen=True)
class PosteriorResult:
    """Exact Gaussian posterior or thinned pCN chain over KL coefficients.

    `basis` is the (N, k) eigenvector matrix the coefficients refer to and
    `f_hat` the posterior-mean field on the cloud (probability scale for
    classification).
    """
    kind: str
    task: str
    basis: np.ndarray = field(repr=False)
    f_hat: np.ndarray = field(repr=False)
    mean: Optional[np.ndarray] = field(default=None, repr=False)
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    chain: Optional[np.ndarray] = field(default=None, repr=False)
    acceptance_rate: Optional[float] = None
    n_iter: int = 0
    burn_in: int = 0
    thin: int = 1
    beta_pcn: Optional[float] = None
    seed: Optional[int] = None
    link: Optional[LinkFunction] = field(default=None, repr=False)
    diagnostics: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (EXACT_GAUSSIAN, MCMC_CHAIN):
            raise ConfigurationError(f"Unknown posterior kind: {self.kind!r}")
        if self.acceptance_rate is not None and not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError(f"Acceptance rate outside [0, 1]: {self.acceptance_rate}")
        if not np.all(np.isfinite(self.f_hat)):
            raise ValueError("Posterior mean field is not finite")

    @property
    def k(self) -> int:
        return int(self.basis.shape[1])

    @property
    def n_samples(self) -> int:
        return 0 if self.chain is None else int(self.chain.shape[0])

    def to_field_scale(self, latent: np.ndarray) -> np.ndarray:
        """Map latent values to the scale f lives on (identity for regression)."""
        if self.task == CLASSIFICATION and self.link is not None:
            return self.link.forward(latent)
        return latent

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "task": self.task,
            "k": self.k,
            "n_samples": self.n_samples,
            "acceptance_rate": self.acceptance_rate,
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "beta_pcn": self.beta_pcn,
            "seed": self.seed,
            "link": self.link.name if self.link is not None else None,
        }
        out.update({k: v for k, v in self.diagnostics.items() if np.isscalar(v)})
        return out
