"""Graph-Laplacian eigenpairs and their comparison with the continuum spectrum."""
import logging
import math
from typing import Optional

import numpy as np
from scipy import linalg, spatial
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

import config
from analysis.geometry import chord_to_geodesic, reference_grid
from models.graph import SparseLaplacian
from models.manifold import ContinuumSpectrum, PointCloud, multiplet_clusters
from models.spectrum import AlignedEigenSystem, EigenSystem, SpectralReport, TransportResult
from utils.errors import (
    AlignmentError,
    ConfigurationError,
    DimensionError,
    DomainError,
    SolverError,
    StructureError,
)
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

# Below this size (or when k is close to N) the dense symmetric solver is used.
DENSE_LIMIT = 64
CLUSTER_REL_TOL = 1e-6
CLUSTER_ABS_TOL = 1e-9


def _residual_norms(matrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    if vectors is None or np.size(vectors) == 0:
        return np.empty(0)
    return np.linalg.norm(matrix @ vectors - vectors * values, axis=0)


def smallest_eigenpairs(
    lap: SparseLaplacian,
    k: int,
    tol: Optional[float] = None,
    seed: int = 0,
    maxiter: Optional[int] = None,
) -> EigenSystem:
    """Compute the k smallest eigenpairs of a connected graph Laplacian.

    Uses ARPACK in shift-invert mode around a small negative shift with a
    seeded start vector. Eigenvectors are scaled to unit L2(mu_N) norm, the
    first one is the exact constant 1, and every other eigenvector has its
    largest-magnitude entry positive.

    Args:
        lap: Graph Laplacian
        k: Number of eigenpairs (1 <= k < N)
        tol: Residual tolerance in (0, 1e-4] (default from config)
        seed: Seed of the start vector
        maxiter: ARPACK iteration cap (default from config)

    Returns:
        EigenSystem sorted ascending

    Raises:
        StructureError: the graph is disconnected
        SolverError: no convergence, or a residual above tol * (1 + lambda) * |psi|
    """
    tol = config.EIGEN_TOL if tol is None else float(tol)
    maxiter = config.EIGEN_MAXITER if maxiter is None else int(maxiter)
    N = lap.N
    if k < 1 or k >= N:
        raise DimensionError(f"Need 1 <= k < N, got k={k}, N={N}")
    if not 0 < tol <= 1e-4:
        raise ConfigurationError(f"Solver tolerance must lie in (0, 1e-4], got {tol}")
    if not lap.is_connected:
        raise StructureError(
            f"Graph has {lap.n_components} connected components; zeta is below the connectivity threshold"
        )

    A = lap.matrix
    if N <= DENSE_LIMIT or k >= N - 1:
        vals, vecs = linalg.eigh(A.toarray(), subset_by_index=[0, k - 1])
    else:
        v0 = make_rng(seed).standard_normal(N)
        sigma = -1e-3 * max(float(np.mean(lap.degrees)), 1e-12)
        try:
            vals, vecs = eigsh(A.tocsc(), k=k, sigma=sigma, which="LM", v0=v0, tol=0, maxiter=maxiter)
        except ArpackNoConvergence as e:
            residuals = _residual_norms(A, e.eigenvalues, e.eigenvectors)
            raise SolverError(
                f"Eigensolver did not converge: {len(e.eigenvalues)} of {k} pairs within {maxiter} iterations",
                residuals=residuals,
            )
        except ArpackError as e:
            raise SolverError(f"Eigensolver failed: {e}")

    order = np.argsort(vals, kind="stable")
    vals = np.maximum(vals[order], 0.0)
    vecs = np.array(vecs[:, order], dtype=float)

    # the null space of a connected graph Laplacian is exactly the constants
    vals[0] = 0.0
    vecs[:, 0] = 1.0
    norms = np.linalg.norm(vecs, axis=0)
    vecs *= math.sqrt(N) / norms
    for j in range(1, k):
        pivot = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[pivot, j] < 0:
            vecs[:, j] *= -1.0

    residuals = _residual_norms(A, vals, vecs)
    bound = tol * (1.0 + vals) * math.sqrt(N)
    bad = np.nonzero(residuals > bound)[0]
    if bad.size:
        raise SolverError(
            f"Residual bound violated for eigenpairs {[int(b) + 1 for b in bad]} "
            f"(max ratio {float(np.max(residuals[bad] / bound[bad])):.3g})",
            residuals=residuals,
        )
    return EigenSystem(eigenvalues=vals, eigenvectors=vecs, residuals=residuals, tol=tol, seed=seed)


def exact_eigensystem(continuum: ContinuumSpectrum, cloud: PointCloud, k: int) -> EigenSystem:
    """Eigensystem made of continuum eigenpairs evaluated at the cloud.

    Used as a self-test substitute for the discrete solver.
    """
    if k > continuum.K:
        raise DimensionError(f"Requested {k} modes but the spectrum holds {continuum.K}")
    vecs = continuum.evaluate(cloud.points, np.arange(k))
    return EigenSystem(
        eigenvalues=continuum.eigenvalues[:k],
        eigenvectors=vecs,
        residuals=np.zeros(k),
        tol=0.0,
        normalization="continuum",
    )


def nn_transport(cloud: PointCloud, queries: np.ndarray) -> TransportResult:
    """Assign each query point to its nearest cloud point.

    Distances are geodesic; the nearest point in ambient (minimum-image on
    the torus) distance is also nearest geodesically.
    """
    if cloud.N == 0:
        raise DomainError("Cannot transport onto an empty cloud")
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    if cloud.manifold.is_periodic:
        tree = spatial.cKDTree(np.mod(cloud.points, 1.0), boxsize=1.0)
        q = np.mod(q, 1.0)
    else:
        tree = spatial.cKDTree(cloud.points)
    dist, idx = tree.query(q, k=1)
    dist = chord_to_geodesic(cloud.manifold, np.atleast_1d(dist))
    idx = np.atleast_1d(idx).astype(np.int64)
    return TransportResult(indices=idx, distances=dist, rho=float(dist.max()) if dist.size else 0.0)


def estimate_rho(cloud: PointCloud, grid_size: Optional[int] = None) -> TransportResult:
    """Transport the deterministic reference grid onto the cloud."""
    return nn_transport(cloud, reference_grid(cloud.manifold, grid_size))


def subspace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors onto span(A), span(B)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"Subspaces live in different dimensions: {A.shape[0]} vs {B.shape[0]}")
    theta = linalg.subspace_angles(A, B)
    extra = abs(A.shape[1] - B.shape[1])
    return float(math.sqrt(2.0 * np.sum(np.sin(theta) ** 2) + extra))


def align_spectra(
    discrete: EigenSystem,
    continuum: ContinuumSpectrum,
    cloud: PointCloud,
    cluster_tol: Optional[float] = None,
) -> AlignedEigenSystem:
    """Rotate the continuum basis onto the discrete one inside each multiplet.

    Continuum eigenvalues are grouped when their gap is at most
    cluster_tol * lambda + 1e-9. Inside a cluster the evaluated continuum
    block Phi is replaced by Phi R with R = U W^T from the SVD of Phi^T V
    (orthogonal Procrustes). Clusters cut by min(k, K) are compared on the
    overlap and reported as warnings.
    """
    if discrete.N != cloud.N:
        raise AlignmentError(f"Eigensystem has {discrete.N} points but the cloud has {cloud.N}")
    rel_tol = CLUSTER_REL_TOL if cluster_tol is None else float(cluster_tol)
    p = min(discrete.k, continuum.K)
    phi = continuum.evaluate(cloud.points, np.arange(p))
    V = discrete.eigenvectors[:, :p]
    clusters = multiplet_clusters(continuum.eigenvalues, rel_tol, CLUSTER_ABS_TOL)

    rotated = phi.copy()
    rotations = {}
    distances = {}
    warnings = []
    for cluster in clusters:
        overlap = [i for i in cluster if i < p]
        if not overlap:
            break
        if len(overlap) < len(cluster):
            msg = (
                f"Multiplet {cluster[0] + 1}..{cluster[-1] + 1} truncated at index {p}; "
                f"comparing {len(overlap)} of {len(cluster)} modes"
            )
            logger.warning(msg)
            warnings.append(msg)
        block = phi[:, overlap]
        target = V[:, overlap]
        U, _, Wt = np.linalg.svd(block.T @ target)
        R = U @ Wt
        rotated[:, overlap] = block @ R
        key = tuple(overlap)
        rotations[key] = R
        distances[key] = subspace_distance(target, block)

    return AlignedEigenSystem(
        discrete=discrete,
        continuum=continuum,
        continuum_values=rotated,
        rotations=rotations,
        clusters=tuple(c for c in clusters if c[0] < p),
        subspace_distances=distances,
        cluster_tol=(rel_tol, CLUSTER_ABS_TOL),
        warnings=warnings,
    )


def eigenvalue_envelope(eigenvalues: np.ndarray, rho: float, zeta: float) -> np.ndarray:
    """lambda (rho/zeta + zeta sqrt(lambda))."""
    lam = np.asarray(eigenvalues, dtype=float)
    return lam * (rho / zeta + zeta * np.sqrt(lam))


def eigenfunction_envelope(eigenvalues: np.ndarray, m: int, rho: float, zeta: float) -> np.ndarray:
    """lambda_i^(m+1) i^(3/2) sqrt(rho/zeta + zeta sqrt(lambda_i)) for 1-based i."""
    lam = np.asarray(eigenvalues, dtype=float)
    idx = np.arange(1, lam.size + 1, dtype=float)
    return lam ** (m + 1) * idx ** 1.5 * np.sqrt(rho / zeta + zeta * np.sqrt(lam))


def spectral_report(
    aligned: AlignedEigenSystem,
    cloud: PointCloud,
    zeta: float,
    rho: float,
) -> SpectralReport:
    """Per-index eigenvalue and aligned eigenfunction errors with envelopes."""
    if aligned.n_points != cloud.N:
        raise AlignmentError("Aligned eigensystem does not belong to this cloud")
    p = aligned.p
    lam_c = aligned.continuum.eigenvalues[:p]
    lam_d = aligned.discrete.eigenvalues[:p]
    abs_err = np.abs(lam_d - lam_c)
    rel_err = np.where(lam_c > 0, abs_err / np.where(lam_c > 0, lam_c, 1.0), abs_err)

    diff = aligned.discrete.eigenvectors[:, :p] - aligned.continuum_values
    l2_err = np.sqrt(np.mean(diff * diff, axis=0))
    sup_err = np.max(np.abs(diff), axis=0)
    sup_norm = np.max(np.abs(aligned.discrete.eigenvectors[:, :p]), axis=0)

    return SpectralReport(
        continuum_eigenvalues=lam_c.copy(),
        discrete_eigenvalues=lam_d.copy(),
        eig_abs_error=abs_err,
        eig_rel_error=rel_err,
        efun_l2_error=l2_err,
        efun_sup_error=sup_err,
        efun_sup_norm=sup_norm,
        eig_envelope=eigenvalue_envelope(lam_c, rho, zeta),
        efun_envelope=eigenfunction_envelope(lam_c, aligned.continuum.manifold.m, rho, zeta),
        rho=float(rho),
        zeta=float(zeta),
        warnings=list(aligned.warnings),
    )
