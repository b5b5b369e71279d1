"""Point-cloud sampling, distances, analytic spectra and ground-truth functions."""
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, lpmv

import config
from models.manifold import (
    FLAT_TORUS,
    SPHERE,
    ContinuumSpectrum,
    ManifoldSpec,
    PointCloud,
    TruthFunction,
)
from utils.errors import ConfigurationError, DomainError, UnsupportedError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

ON_MANIFOLD_TOL = 1e-8

# Fixed coefficients of the smooth truth on the first nine eigenfunctions.
SMOOTH_TRUTH_COEFFICIENTS = (0.0, 1.0, 0.5, -0.5, 0.25, 0.3, -0.2, 0.15, 0.1)

SMOOTH_LOW_FREQUENCY = "smooth_low_frequency"
LACUNARY = "lacunary"
LACUNARY_TAIL = 1e-8


def sample_uniform(manifold: ManifoldSpec, N: int, seed: int) -> PointCloud:
    """Draw N i.i.d. uniform points.

    Sphere points are normalized standard Gaussians scaled to the unit-area
    radius; torus points are independent uniforms on [0, 1)^m.

    Args:
        manifold: Target manifold
        N: Number of points (>= 1)
        seed: 64-bit seed; equal seeds give bit-identical clouds

    Returns:
        PointCloud of shape (N, d)
    """
    if N < 1:
        raise ConfigurationError(f"Need at least one point, got N={N}")
    rng = make_rng(seed)
    if manifold.kind == SPHERE:
        g = rng.standard_normal((N, manifold.d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        points = manifold.radius * g / norms
    else:
        points = rng.random((N, manifold.m))
    return PointCloud(points=points, manifold=manifold, seed=int(seed))


def _check_on_manifold(manifold: ManifoldSpec, pts: np.ndarray) -> None:
    if pts.shape[-1] != manifold.d:
        raise DomainError(f"Expected {manifold.d} coordinates, got {pts.shape[-1]}")
    if manifold.kind == SPHERE:
        norms = np.linalg.norm(pts, axis=-1)
        if np.any(np.abs(norms - manifold.radius) > ON_MANIFOLD_TOL):
            raise DomainError(f"Point off the sphere of radius {manifold.radius:.6f}")
    else:
        if np.any(pts < -ON_MANIFOLD_TOL) or np.any(pts >= 1.0 + ON_MANIFOLD_TOL):
            raise DomainError("Torus coordinates must lie in [0, 1)")


def wrapped_difference(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-image difference on the unit torus, componentwise in [-1/2, 1/2]."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return diff - np.round(diff)


def geodesic_distance(manifold: ManifoldSpec, x: np.ndarray, y: np.ndarray):
    """Intrinsic distance between points (broadcasts over leading axes).

    On the sphere the chord form 2r*arcsin(|x-y|/(2r)) of the great-circle
    distance is used; it is exact at x = y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_on_manifold(manifold, x)
    _check_on_manifold(manifold, y)
    if manifold.kind == SPHERE:
        r = manifold.radius
        chord = np.linalg.norm(x - y, axis=-1)
        dist = 2.0 * r * np.arcsin(np.clip(chord / (2.0 * r), 0.0, 1.0))
    else:
        dist = np.linalg.norm(wrapped_difference(x, y), axis=-1)
    if np.ndim(dist) == 0:
        return float(dist)
    return dist


def chord_to_geodesic(manifold: ManifoldSpec, chord: np.ndarray) -> np.ndarray:
    """Convert ambient (or minimum-image) distances to intrinsic ones."""
    chord = np.asarray(chord, dtype=float)
    if manifold.kind == SPHERE:
        r = manifold.radius
        return 2.0 * r * np.arcsin(np.clip(chord / (2.0 * r), 0.0, 1.0))
    return chord


# ---- analytic spectra ----

def _sphere_modes(K: int):
    modes = []
    l = 0
    while len(modes) < K:
        for mm in range(-l, l + 1):
            modes.append((l, mm))
        l += 1
    return modes[:K]


def _torus_modes(m: int, K: int):
    """Canonical Fourier modes ordered by |k|^2, then descending lexicographic k.

    Each nonzero canonical k (first nonzero entry positive) contributes a
    cosine and a sine mode.
    """
    ball = math.pi ** (m / 2) / math.gamma(m / 2 + 1)
    radius = int(math.ceil((K / ball) ** (1.0 / m))) + 1
    while True:
        axis = np.arange(-radius, radius + 1)
        grid = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
        sq = np.sum(grid * grid, axis=1)
        grid, sq = grid[sq <= radius * radius], sq[sq <= radius * radius]

        nonzero = grid != 0
        first = np.argmax(nonzero, axis=1)
        lead = grid[np.arange(len(grid)), first]
        canonical = (sq == 0) | (lead > 0)
        grid, sq = grid[canonical], sq[canonical]

        count = 1 + 2 * int(np.sum(sq > 0))
        if count >= K:
            break
        radius += 1

    # lexsort: last key is primary; negate k for descending lexicographic order
    keys = [-grid[:, j] for j in range(m - 1, -1, -1)] + [sq]
    order = np.lexsort(keys)
    modes = []
    for idx in order:
        kvec = tuple(int(v) for v in grid[idx])
        if sq[idx] == 0:
            modes.append((kvec, "const"))
        else:
            modes.append((kvec, "cos"))
            modes.append((kvec, "sin"))
        if len(modes) >= K:
            break
    return modes[:K]


def _sphere_angles(points: np.ndarray, radius: float):
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    cos_theta = np.clip(z / radius, -1.0, 1.0)
    phi = np.arctan2(y, x)
    return cos_theta, phi


def _make_sphere_evaluator(modes, radius: float):
    ls = np.array([l for l, _ in modes], dtype=int)
    ms = np.array([mm for _, mm in modes], dtype=int)

    def evaluate(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
        cos_theta, phi = _sphere_angles(points, radius)
        out = np.empty((points.shape[0], len(indices)))
        for col, i in enumerate(indices):
            l, mm = int(ls[i]), int(ms[i])
            am = abs(mm)
            # sqrt(4 pi) * Y_lm so that the L2(mu) norm under uniform measure is 1
            norm = math.sqrt((2 * l + 1) * math.exp(gammaln(l - am + 1) - gammaln(l + am + 1)))
            legendre = lpmv(am, l, cos_theta)
            if mm == 0:
                out[:, col] = norm * legendre
            elif mm > 0:
                out[:, col] = math.sqrt(2.0) * norm * legendre * np.cos(am * phi)
            else:
                out[:, col] = math.sqrt(2.0) * norm * legendre * np.sin(am * phi)
        return out

    return evaluate


def _make_torus_evaluator(modes):
    kmat = np.array([k for k, _ in modes], dtype=float)
    kinds = [kind for _, kind in modes]
    is_const = np.array([kind == "const" for kind in kinds])
    is_sin = np.array([kind == "sin" for kind in kinds])

    def evaluate(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
        phase = 2.0 * math.pi * points @ kmat[indices].T
        out = np.where(is_sin[indices], np.sin(phase), np.cos(phase)) * math.sqrt(2.0)
        out[:, is_const[indices]] = 1.0
        return out

    return evaluate


def analytic_spectrum(manifold: ManifoldSpec, K: int) -> ContinuumSpectrum:
    """First K Laplace-Beltrami eigenpairs in a deterministic basis.

    Sphere: real spherical harmonics ordered by (l, m = -l..l), eigenvalues
    l(l+1)/r^2. Torus: 1, then sqrt(2)cos / sqrt(2)sin(2 pi k.x) pairs ordered
    by |k|^2 and descending lexicographic k, eigenvalues 4 pi^2 |k|^2.

    Raises:
        ConfigurationError: K < 1 or K beyond the mode table
    """
    if K < 1:
        raise ConfigurationError(f"Need K >= 1, got {K}")
    if K > config.MODE_TABLE_SIZE:
        raise ConfigurationError(
            f"K={K} exceeds the continuum mode table ({config.MODE_TABLE_SIZE} modes)"
        )
    if manifold.kind == SPHERE:
        modes = _sphere_modes(K)
        r = manifold.radius
        eigenvalues = np.array([l * (l + 1) / (r * r) for l, _ in modes], dtype=float)
        sup_norms = np.array([math.sqrt(2 * l + 1) for l, _ in modes], dtype=float)
        evaluator = _make_sphere_evaluator(modes, r)
    else:
        modes = _torus_modes(manifold.m, K)
        eigenvalues = np.array(
            [4.0 * math.pi ** 2 * sum(v * v for v in k) for k, _ in modes], dtype=float
        )
        sup_norms = np.array([1.0 if kind == "const" else math.sqrt(2.0) for _, kind in modes])
        evaluator = _make_torus_evaluator(modes)
    return ContinuumSpectrum(
        manifold=manifold,
        eigenvalues=eigenvalues,
        modes=tuple(modes),
        sup_norms=sup_norms,
        evaluator=evaluator,
    )


def weyl_ratios(spectrum: ContinuumSpectrum) -> np.ndarray:
    """lambda_i / i^(2/m) for 1-based indices i >= 2."""
    m = spectrum.manifold.m
    idx = np.arange(2, spectrum.K + 1, dtype=float)
    return spectrum.eigenvalues[1:] / idx ** (2.0 / m)


def reference_grid(manifold: ManifoldSpec, size: Optional[int] = None) -> np.ndarray:
    """Deterministic quasi-uniform point set used for sup-norm estimates.

    Torus: regular lattice of cell centres with round(size^(1/m)) points per
    axis. Sphere: Fibonacci lattice of `size` points.
    """
    size = int(size or config.REFERENCE_GRID_SIZE)
    if size < 1:
        raise ConfigurationError(f"Reference grid size must be positive, got {size}")
    if manifold.kind == FLAT_TORUS:
        per_axis = max(1, int(round(size ** (1.0 / manifold.m))))
        axis = (np.arange(per_axis) + 0.5) / per_axis
        mesh = np.meshgrid(*([axis] * manifold.m), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, manifold.m)
    i = np.arange(size, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / size
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * np.arange(size)
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    unit = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return manifold.radius * unit


# ---- ground truths ----

def lacunary_terms(beta: float) -> int:
    """Smallest J with 2^(-beta J) < 1e-8."""
    return int(math.floor(math.log2(1.0 / LACUNARY_TAIL) / beta)) + 1


def make_truth(
    manifold: ManifoldSpec,
    recipe: str,
    beta: Optional[float] = None,
    coefficients: Optional[Sequence[float]] = None,
) -> TruthFunction:
    """Build a ground-truth latent function with known regularity.

    Args:
        manifold: Manifold the truth lives on
        recipe: 'smooth_low_frequency' or 'lacunary'
        beta: Hoelder regularity of the lacunary series (> 0)
        coefficients: Optional coefficients (at most 9) on the first
            eigenfunctions for the smooth recipe

    Returns:
        TruthFunction whose `laplacian` evaluates (-Delta) w0
    """
    recipe = recipe.strip().lower()
    if recipe in (SMOOTH_LOW_FREQUENCY, "smooth"):
        coeffs = np.asarray(
            SMOOTH_TRUTH_COEFFICIENTS if coefficients is None or len(coefficients) == 0
            else coefficients,
            dtype=float,
        )
        if coeffs.size > 9:
            raise ConfigurationError("Smooth truth uses at most 9 eigenfunctions")
        spectrum = analytic_spectrum(manifold, coeffs.size)
        weighted = spectrum.eigenvalues * coeffs

        def evaluate(points: np.ndarray) -> np.ndarray:
            return spectrum.evaluate(points) @ coeffs

        def laplacian(points: np.ndarray) -> np.ndarray:
            return spectrum.evaluate(points) @ weighted

        return TruthFunction(
            evaluator=evaluate,
            beta=math.inf,
            tag=SMOOTH_LOW_FREQUENCY,
            laplacian=laplacian,
            coefficients=tuple(float(c) for c in coeffs),
        )

    if recipe == LACUNARY:
        if manifold.kind != FLAT_TORUS:
            raise UnsupportedError("Lacunary truth is only defined on the flat torus")
        if beta is None or not beta > 0 or math.isinf(beta):
            raise ConfigurationError(f"Lacunary truth needs finite beta > 0, got {beta}")
        J = lacunary_terms(beta)
        freqs = 2.0 ** np.arange(J + 1)
        amps = freqs ** (-beta)
        curvature = amps * (2.0 * math.pi * freqs) ** 2

        def evaluate(points: np.ndarray) -> np.ndarray:
            return np.cos(2.0 * math.pi * np.outer(points[:, 0], freqs)) @ amps

        def laplacian(points: np.ndarray) -> np.ndarray:
            return np.cos(2.0 * math.pi * np.outer(points[:, 0], freqs)) @ curvature

        return TruthFunction(
            evaluator=evaluate,
            beta=float(beta),
            tag=f"{LACUNARY}(beta={beta:g})",
            laplacian=laplacian,
        )

    raise ConfigurationError(f"Unknown truth recipe: {recipe!r}")
