"""Truncated graph Matern prior, the continuum field and their coupled discrepancy."""
import logging
import math
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

import config
from analysis.geometry import analytic_spectrum, reference_grid
from analysis.spectral import nn_transport
from models.field import DiscrepancyEstimate, FieldSample, PriorParams
from models.manifold import ContinuumSpectrum, ManifoldSpec, PointCloud
from models.spectrum import AlignedEigenSystem, EigenSystem
from utils.errors import AlignmentError, ConfigurationError, DimensionError
from utils.seeding import make_rng, derive_seed

logger = logging.getLogger(__name__)

_DRAW_BATCH = 32


def _resolve_xi(xi: Optional[np.ndarray], n_modes: int, seed: Optional[int]) -> np.ndarray:
    if xi is None:
        if seed is None:
            raise ConfigurationError("Provide either xi or a seed")
        return make_rng(seed).standard_normal(n_modes)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] < n_modes:
        raise DimensionError(f"xi has {xi.shape[0]} entries but {n_modes} modes are used")
    return xi


def sample_discrete_field(
    eig: EigenSystem,
    params: PriorParams,
    xi: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
) -> FieldSample:
    """W_n = tau * sum_{i<=k} (1 + lambda_i)^(-s/2) xi_i psi_i on the cloud.

    Args:
        eig: Discrete eigensystem with at least params.k pairs
        params: Prior parameters
        xi: Standard normal coefficients (length >= k); drawn from seed if omitted
        seed: Seed for xi

    Raises:
        DimensionError: k exceeds the eigensystem
    """
    params.check_against(eig.k)
    k = params.k
    xi = _resolve_xi(xi, k, seed)
    coeffs = params.coefficient_scales(eig.eigenvalues[:k]) * xi[:k]
    values = eig.eigenvectors[:, :k] @ coeffs
    return FieldSample(
        values=values,
        xi=xi.copy(),
        s=params.s,
        n_modes=k,
        kind="discrete",
        prior_scale=params.prior_scale,
    )


def sample_continuum_field(
    spectrum: ContinuumSpectrum,
    s: float,
    K: int,
    points: np.ndarray,
    xi: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
    prior_scale: float = 1.0,
    aligned: Optional[AlignedEigenSystem] = None,
) -> FieldSample:
    """W^M(x) = tau * sum_{i<=K} (1 + lambda_i)^(-s/2) xi_i psi_i(x) at query points.

    When `aligned` is given its rotated continuum basis is used, so that mode
    i pairs with discrete mode i.

    Raises:
        ConfigurationError: K beyond the spectrum table
    """
    if K < 1 or K > spectrum.K:
        raise ConfigurationError(f"K={K} outside the spectrum table of {spectrum.K} modes")
    xi = _resolve_xi(xi, K, seed)
    if aligned is not None:
        basis = aligned.continuum_at(points, K)
    else:
        basis = spectrum.evaluate(points, np.arange(K))
    scales = prior_scale * (1.0 + spectrum.eigenvalues[:K]) ** (-0.5 * s)
    values = basis @ (scales * xi[:K])
    return FieldSample(
        values=values,
        xi=xi.copy(),
        s=float(s),
        n_modes=K,
        kind="continuum",
        prior_scale=prior_scale,
    )


def tail_proxy(spectrum: ContinuumSpectrum, s: float, K: int) -> float:
    """sum_{i>K} (1 + lambda_i)^(-s/2) sup|psi_i| over the rest of the table."""
    lam = spectrum.eigenvalues[K:]
    return float(np.sum((1.0 + lam) ** (-0.5 * s) * spectrum.sup_norms[K:]))


def default_truncation(
    manifold: ManifoldSpec,
    s: float,
    tol: Optional[float] = None,
    max_modes: Optional[int] = None,
) -> int:
    """Smallest K whose sup-norm tail proxy is below tol.

    The proxy is summed over the available mode table; if no K reaches tol
    the full table is returned with a warning.
    """
    tol = config.CONTINUUM_TAIL_TOL if tol is None else tol
    size = min(max_modes or config.MODE_TABLE_SIZE, config.MODE_TABLE_SIZE)
    spectrum = analytic_spectrum(manifold, size)
    terms = (1.0 + spectrum.eigenvalues) ** (-0.5 * s) * spectrum.sup_norms
    # tails[K] = sum of terms with index >= K (0-based)
    tails = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    below = np.nonzero(tails[1:] < tol)[0]
    if below.size == 0 or below[0] + 1 >= size:
        logger.warning(
            "Tail tolerance %.3g not reached within %d modes (s=%.3g); using the full table",
            tol, size, s,
        )
        return size
    return int(below[0] + 1)


def field_rate_envelope(k: int, s: float, m: int, rho: float, zeta: float) -> float:
    """k^((-2s+3m-1)/m) + rho/zeta + zeta."""
    return float(k ** ((-2.0 * s + 3.0 * m - 1.0) / m) + rho / zeta + zeta)


def _discrepancy_batch(
    seeds: np.ndarray,
    n_draw: int,
    disc_grid: np.ndarray,
    disc_scales: np.ndarray,
    cont_grid: np.ndarray,
    cont_scales: np.ndarray,
) -> np.ndarray:
    k, K = disc_scales.size, cont_scales.size
    xis = np.stack([make_rng(int(sd)).standard_normal(n_draw) for sd in seeds])
    w_disc = disc_grid @ (disc_scales * xis[:, :k]).T
    w_cont = cont_grid @ (cont_scales * xis[:, :K]).T
    diff = w_disc - w_cont
    return np.max(diff * diff, axis=0)


def coupled_discrepancy(
    aligned: AlignedEigenSystem,
    cloud: PointCloud,
    params: PriorParams,
    K: int,
    n_mc: int,
    seed: int,
    grid_size: Optional[int] = None,
    n_jobs: int = 1,
) -> DiscrepancyEstimate:
    """Monte Carlo estimate of E sup_x |W_n(T x) - W^M(x)|^2.

    Both fields share one coefficient stream xi of length max(k, K): discrete
    mode i and aligned continuum mode i use xi_i. W_n is extended from the
    cloud to the reference grid by nearest-neighbour transport; the supremum
    is a max over the grid. Draw r uses the seed derive_seed(seed, r), so the
    estimate does not depend on batching or n_jobs.

    Raises:
        AlignmentError: the eigensystem was not aligned on this cloud
    """
    if not isinstance(aligned, AlignedEigenSystem):
        raise AlignmentError("coupled_discrepancy needs an eigensystem aligned with align_spectra")
    if aligned.n_points != cloud.N:
        raise AlignmentError(f"Aligned eigensystem has {aligned.n_points} points, cloud has {cloud.N}")
    if aligned.continuum.manifold != cloud.manifold:
        raise AlignmentError("Continuum spectrum belongs to a different manifold")
    if n_mc < 2:
        raise ConfigurationError(f"Need n_mc >= 2, got {n_mc}")
    k = params.k
    params.check_against(aligned.discrete.k)
    if K < 1 or K > aligned.continuum.K:
        raise ConfigurationError(f"K={K} outside the spectrum table of {aligned.continuum.K} modes")

    grid = reference_grid(cloud.manifold, grid_size)
    transport = nn_transport(cloud, grid)
    disc_grid = aligned.discrete.eigenvectors[transport.indices, :k]
    cont_grid = aligned.continuum_at(grid, K)
    disc_scales = params.coefficient_scales(aligned.discrete.eigenvalues[:k])
    cont_scales = params.coefficient_scales(aligned.continuum.eigenvalues[:K])
    n_draw = max(k, K)

    seeds = np.array([derive_seed(seed, r) for r in range(n_mc)], dtype=np.uint64)
    batches = [seeds[i:i + _DRAW_BATCH] for i in range(0, n_mc, _DRAW_BATCH)]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_discrepancy_batch)(b, n_draw, disc_grid, disc_scales, cont_grid, cont_scales)
        for b in batches
    )
    samples = np.concatenate(parts)
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n_mc))
    return DiscrepancyEstimate(
        mean=mean,
        stderr=stderr,
        n_mc=n_mc,
        k=k,
        K=K,
        grid_size=int(grid.shape[0]),
        rho=transport.rho,
        samples=samples,
    )
