"""Eigensystem, alignment and spectral-report data models."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.manifold import ContinuumSpectrum
from utils.errors import DimensionError

L2_EMPIRICAL = "L2(mu_N)"


@dataclass(frozen=True)
class EigenSystem:
    """k smallest eigenpairs of a graph Laplacian.

    Eigenvectors are columns of an (N, k) matrix scaled so that
    (1/N) * sum_j psi_i(X_j)^2 = 1.
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    tol: float = 0.0
    seed: Optional[int] = None
    normalization: str = L2_EMPIRICAL

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[1] != vals.shape[0]:
            raise DimensionError(
                f"Eigenvector matrix {vecs.shape} does not match {vals.shape[0]} eigenvalues"
            )
        for name, arr in (("eigenvalues", vals), ("eigenvectors", vecs),
                          ("residuals", np.asarray(self.residuals, dtype=float))):
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def N(self) -> int:
        return int(self.eigenvectors.shape[0])

    def truncate(self, k: int) -> "EigenSystem":
        """First k eigenpairs."""
        if k > self.k:
            raise DimensionError(f"Requested {k} eigenpairs but only {self.k} are available")
        return EigenSystem(
            eigenvalues=self.eigenvalues[:k],
            eigenvectors=self.eigenvectors[:, :k],
            residuals=self.residuals[:k],
            tol=self.tol,
            seed=self.seed,
            normalization=self.normalization,
        )


@dataclass(frozen=True)
class AlignedEigenSystem:
    """A discrete eigensystem paired with a rotated continuum basis.

    Inside every continuum multiplet the continuum eigenfunctions are replaced
    by their best orthogonal rotation onto the discrete block. `rotations`
    maps the tuple of cluster indices to its rotation matrix R, so the rotated
    basis is Phi[:, idx] @ R.
    """
    discrete: EigenSystem
    continuum: ContinuumSpectrum
    continuum_values: np.ndarray = field(repr=False)  # rotated basis at the cloud, (N, p)
    rotations: Dict[Tuple[int, ...], np.ndarray] = field(repr=False)
    clusters: Tuple[Tuple[int, ...], ...]
    subspace_distances: Dict[Tuple[int, ...], float]
    cluster_tol: Tuple[float, float] = (1e-6, 1e-9)
    warnings: List[str] = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return self.discrete.N

    @property
    def p(self) -> int:
        """Number of compared indices, min(k, K)."""
        return int(self.continuum_values.shape[1])

    def rotate(self, values: np.ndarray) -> np.ndarray:
        """Apply the multiplet rotations to raw continuum evaluations (n, K')."""
        out = np.array(values, dtype=float, copy=True)
        for idx, rot in self.rotations.items():
            cols = list(idx)
            if max(cols) >= out.shape[1]:
                continue
            out[:, cols] = values[:, cols] @ rot
        return out

    def continuum_at(self, points: np.ndarray, n_modes: Optional[int] = None) -> np.ndarray:
        """Rotated continuum eigenfunctions evaluated at arbitrary points."""
        n_modes = self.p if n_modes is None else int(n_modes)
        if n_modes > self.continuum.K:
            raise DimensionError(
                f"Requested {n_modes} continuum modes but the spectrum holds {self.continuum.K}"
            )
        # a multiplet cut by n_modes is rotated whole, then sliced
        needed = n_modes
        for idx in self.rotations:
            if min(idx) < n_modes:
                needed = max(needed, max(idx) + 1)
        raw = self.continuum.evaluate(points, np.arange(needed))
        return self.rotate(raw)[:, :n_modes]


@dataclass(frozen=True)
class TransportResult:
    """Nearest-neighbour transport of query points onto a point cloud."""
    indices: np.ndarray
    distances: np.ndarray = field(repr=False)
    rho: float

    @property
    def n_queries(self) -> int:
        return int(self.indices.shape[0])

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        """Piecewise-constant extension: the value of the assigned cloud point."""
        values = np.asarray(values)
        return values[self.indices]


@dataclass
class SpectralReport:
    """Per-index discrete-vs-continuum errors and reference envelopes."""
    continuum_eigenvalues: np.ndarray
    discrete_eigenvalues: np.ndarray
    eig_abs_error: np.ndarray
    eig_rel_error: np.ndarray
    efun_l2_error: np.ndarray
    efun_sup_error: np.ndarray
    efun_sup_norm: np.ndarray
    eig_envelope: np.ndarray
    efun_envelope: np.ndarray
    rho: float
    zeta: float
    warnings: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.eig_abs_error.shape[0])

    def mean_relative_error(self, first: int = 2, last: int = 6) -> float:
        """Mean relative eigenvalue error over 1-based indices first..last that exist."""
        rel = self.eig_rel_error[first - 1:last]
        if rel.size == 0:
            return float("nan")
        return float(np.mean(rel))

    def to_frame(self) -> pd.DataFrame:
        n = len(self)
        return pd.DataFrame({
            "index": np.arange(1, n + 1),
            "lambda_continuum": self.continuum_eigenvalues,
            "lambda_discrete": self.discrete_eigenvalues,
            "eig_abs_error": self.eig_abs_error,
            "eig_rel_error": self.eig_rel_error,
            "efun_l2_error": self.efun_l2_error,
            "efun_sup_error": self.efun_sup_error,
            "efun_sup_norm": self.efun_sup_norm,
            "eig_envelope": self.eig_envelope,
            "efun_envelope": self.efun_envelope,
        })
