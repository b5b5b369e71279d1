"""Manifold, point-cloud and continuum-spectrum data models."""
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from utils.errors import ConfigurationError, DimensionError

SPHERE = "sphere"
FLAT_TORUS = "flat_torus"

_KIND_ALIASES = {
    "sphere": SPHERE,
    "s2": SPHERE,
    "flat_torus": FLAT_TORUS,
    "torus": FLAT_TORUS,
}

SUPPORTED_DIMS = {
    SPHERE: (2,),
    FLAT_TORUS: (2, 3, 4, 5),
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ManifoldSpec:
    """A unit-volume homogeneous manifold: the round sphere or a flat torus.

    The torus is the quotient of the unit cube [0,1)^m. The sphere is
    rescaled so its surface area is 1, hence radius (4*pi)^(-1/2) for m = 2
    and Laplace-Beltrami eigenvalues carry a factor r^-2.
    """
    kind: str
    m: int

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).strip().lower())
        if kind is None:
            raise ConfigurationError(f"Unknown manifold kind: {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        try:
            m = int(self.m)
        except (TypeError, ValueError):
            raise ConfigurationError(f"Intrinsic dimension must be an integer, got {self.m!r}")
        if m not in SUPPORTED_DIMS[kind]:
            raise ConfigurationError(
                f"Unsupported manifold: {kind} with m={m} "
                f"(supported m: {list(SUPPORTED_DIMS[kind])})"
            )
        object.__setattr__(self, "m", m)

    @property
    def d(self) -> int:
        """Ambient dimension."""
        return self.m + 1 if self.kind == SPHERE else self.m

    @property
    def radius(self) -> float:
        """Sphere radius giving unit surface area (nan for the torus)."""
        if self.kind == SPHERE:
            return 1.0 / math.sqrt(4.0 * math.pi)
        return float("nan")

    @property
    def is_periodic(self) -> bool:
        return self.kind == FLAT_TORUS

    @property
    def volume(self) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"manifold": self.kind, "m": self.m, "d": self.d}


@dataclass(frozen=True)
class PointCloud:
    """N points in ambient coordinates sampled from a manifold."""
    points: np.ndarray
    manifold: ManifoldSpec
    seed: Optional[int] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != self.manifold.d:
            raise DimensionError(
                f"Points must have shape (N, {self.manifold.d}), got {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise DimensionError("Point coordinates must be finite")
        object.__setattr__(self, "points", _freeze(pts))

    @property
    def N(self) -> int:
        return int(self.points.shape[0])

    def head(self, n: int) -> np.ndarray:
        """Coordinates of the first n points."""
        return self.points[:n]


@dataclass(frozen=True)
class ContinuumSpectrum:
    """First K Laplace-Beltrami eigenpairs of a manifold.

    Eigenfunctions are L2(mu)-normalized for the uniform probability measure,
    so the first one is the constant 1. `modes` holds a per-index descriptor
    ((l, m) on the sphere, (k-vector, 'cos'|'sin') on the torus).
    """
    manifold: ManifoldSpec
    eigenvalues: np.ndarray
    modes: Tuple
    sup_norms: np.ndarray
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False, compare=False)
    clusters: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _freeze(self.eigenvalues))
        object.__setattr__(self, "sup_norms", _freeze(self.sup_norms))
        if not self.clusters:
            object.__setattr__(self, "clusters", multiplet_clusters(self.eigenvalues))

    @property
    def K(self) -> int:
        return int(self.eigenvalues.shape[0])

    def __len__(self) -> int:
        return self.K

    def evaluate(self, points: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluate eigenfunctions at points; returns an (n_points, n_indices) matrix."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if indices is None:
            indices = np.arange(self.K)
        indices = np.asarray(indices, dtype=int)
        if indices.size and (indices.min() < 0 or indices.max() >= self.K):
            raise DimensionError(f"Eigenfunction index out of range for K={self.K}")
        return self.evaluator(pts, indices)


def multiplet_clusters(
    eigenvalues: np.ndarray,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
) -> Tuple[Tuple[int, ...], ...]:
    """Group consecutive (sorted) eigenvalues whose gap is within tolerance.

    Two neighbours belong to the same cluster when
    lambda[i+1] - lambda[i] <= rel_tol * lambda[i] + abs_tol.
    """
    vals = np.asarray(eigenvalues, dtype=float)
    if vals.size == 0:
        return ()
    clusters: List[Tuple[int, ...]] = []
    current = [0]
    for i in range(1, vals.size):
        if vals[i] - vals[i - 1] <= rel_tol * abs(vals[i - 1]) + abs_tol:
            current.append(i)
        else:
            clusters.append(tuple(current))
            current = [i]
    clusters.append(tuple(current))
    return tuple(clusters)


@dataclass(frozen=True)
class TruthFunction:
    """Ground-truth latent function w0 with known regularity.

    `laplacian` evaluates (-Delta) w0 when it is known in closed form.
    """
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    beta: float
    tag: str
    laplacian: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    coefficients: Optional[Tuple[float, ...]] = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.evaluator(pts), dtype=float)

    @property
    def is_smooth(self) -> bool:
        return math.isinf(self.beta)
