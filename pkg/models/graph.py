"""Similarity-graph and graph-Laplacian data models."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from models.manifold import ManifoldSpec


@dataclass(frozen=True)
class SimilarityGraph:
    """Epsilon-neighbourhood kernel matrix H.

    H[i, j] = c when |X_i - X_j| < zeta and i != j, else 0, with
    c = 2(m+2) / (N * nu_m * zeta^(m+2)).
    """
    N: int
    zeta: float
    m: int
    matrix: sparse.csr_matrix = field(repr=False, compare=False)
    kernel_constant: float
    manifold: Optional[ManifoldSpec] = None
    strategy: str = "cell"

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def n_edges(self) -> int:
        return self.nnz // 2

    def mean_degree(self) -> float:
        """Average number of neighbours per point."""
        if self.N == 0:
            return 0.0
        return self.nnz / self.N


@dataclass(frozen=True)
class SparseLaplacian:
    """Unnormalized graph Laplacian D - H."""
    matrix: sparse.csr_matrix = field(repr=False, compare=False)
    N: int
    graph: SimilarityGraph = field(repr=False, compare=False)
    n_components: int
    degrees: np.ndarray = field(repr=False, compare=False)

    @property
    def is_connected(self) -> bool:
        return self.n_components == 1


@dataclass(frozen=True)
class PointwiseErrorReport:
    """Pointwise error of the graph Laplacian against the continuum operator."""
    sup_error: float
    mean_error: float
    zeta: float
    N: int
    scale: float = 0.0  # sup |(-Delta) f| over the cloud

    def to_dict(self) -> dict:
        return {
            "sup_error": self.sup_error,
            "mean_error": self.mean_error,
            "zeta": self.zeta,
            "N": self.N,
            "scale": self.scale,
        }
