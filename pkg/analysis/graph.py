"""Epsilon-neighbourhood similarity graphs and the unnormalized graph Laplacian."""
import itertools
import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse, spatial
from scipy.sparse import csgraph
from scipy.special import gamma

import config
from models.graph import PointwiseErrorReport, SimilarityGraph, SparseLaplacian
from models.manifold import PointCloud, TruthFunction
from utils.errors import ConfigurationError, DimensionError, ResourceError

logger = logging.getLogger(__name__)

STRATEGIES = ("cell", "kdtree", "brute")
_BRUTE_BLOCK = 1024
_BRUTE_CELLS = 4_000_000  # distance entries per block


def unit_ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m, pi^(m/2) / Gamma(m/2 + 1)."""
    return float(math.pi ** (m / 2.0) / gamma(m / 2.0 + 1.0))


def kernel_constant(N: int, m: int, zeta: float) -> float:
    """Edge weight c = 2(m+2) / (N nu_m zeta^(m+2))."""
    return 2.0 * (m + 2) / (N * unit_ball_volume(m) * zeta ** (m + 2))


def expected_nnz(N: int, m: int, zeta: float) -> float:
    """Expected number of stored entries of H for a uniform cloud."""
    return N * (N - 1) * min(1.0, unit_ball_volume(m) * zeta ** m)


def _squared_distances(points: np.ndarray, i: np.ndarray, j: np.ndarray, periodic: bool) -> np.ndarray:
    diff = points[i] - points[j]
    if periodic:
        diff -= np.round(diff)
    return np.einsum("ij,ij->i", diff, diff)


def _brute_force_pairs(points: np.ndarray, zeta: float, periodic: bool) -> Tuple[np.ndarray, np.ndarray]:
    """All pairs i < j with distance < zeta by blocked O(N^2) comparison."""
    n = points.shape[0]
    zeta2 = zeta * zeta
    block = max(1, min(_BRUTE_BLOCK, _BRUTE_CELLS // max(n, 1)))
    rows, cols = [], []
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        if periodic:
            diff -= np.round(diff)
        d2 = np.einsum("abk,abk->ab", diff, diff)
        a, b = np.nonzero(d2 < zeta2)
        a += start
        keep = a < b
        rows.append(a[keep])
        cols.append(b[keep])
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64)


def _kdtree_pairs(points: np.ndarray, zeta: float, periodic: bool) -> Tuple[np.ndarray, np.ndarray]:
    if periodic:
        tree = spatial.cKDTree(np.mod(points, 1.0), boxsize=1.0)
    else:
        tree = spatial.cKDTree(points)
    pairs = tree.query_pairs(zeta, output_type="ndarray").astype(np.int64)
    if pairs.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    i, j = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
    # query_pairs includes distance == zeta
    keep = _squared_distances(points, i, j, periodic) < zeta * zeta
    return i[keep], j[keep]


def _half_offsets(d: int):
    """Offsets in {-1,0,1}^d that are zero or lexicographically positive."""
    for off in itertools.product((-1, 0, 1), repeat=d):
        nz = [v for v in off if v != 0]
        if not nz or nz[0] > 0:
            yield np.array(off, dtype=np.int64)


def _cell_list_pairs(points: np.ndarray, zeta: float, periodic: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-radius pairs from a uniform grid of cells with side >= zeta.

    Each point is compared with the points of its own cell and of the
    half of the neighbouring cells whose offset is lexicographically
    positive, so every unordered cell pair is visited once.
    """
    n, d = points.shape
    if periodic:
        n_per_axis = int(math.floor(1.0 / zeta))
        if n_per_axis < 3:
            return _brute_force_pairs(points, zeta, periodic)
        dims = np.full(d, n_per_axis, dtype=np.int64)
        cells = np.floor(np.mod(points, 1.0) * n_per_axis).astype(np.int64) % n_per_axis
    else:
        origin = points.min(axis=0)
        cells = np.floor((points - origin) / zeta).astype(np.int64) + 1
        dims = cells.max(axis=0) + 2

    keys = np.ravel_multi_index(cells.T, dims)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq, starts, counts = np.unique(sorted_keys, return_index=True, return_counts=True)

    zeta2 = zeta * zeta
    rows, cols = [], []
    all_idx = np.arange(n, dtype=np.int64)
    for off in _half_offsets(d):
        target = cells + off
        if periodic:
            target %= dims
        nb_keys = np.ravel_multi_index(target.T, dims)
        pos = np.searchsorted(uniq, nb_keys)
        pos_c = np.minimum(pos, len(uniq) - 1)
        found = uniq[pos_c] == nb_keys
        if not np.any(found):
            continue
        src = all_idx[found]
        cnt = counts[pos_c[found]]
        st = starts[pos_c[found]]
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(src, cnt)
        # position within each neighbour cell's run of sorted points
        offsets = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        j = order[np.repeat(st, cnt) + offsets]
        if not off.any():
            keep = i < j
            i, j = i[keep], j[keep]
        close = _squared_distances(points, i, j, periodic) < zeta2
        i, j = i[close], j[close]
        rows.append(np.minimum(i, j))
        cols.append(np.maximum(i, j))
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


_PAIR_FINDERS = {
    "cell": _cell_list_pairs,
    "kdtree": _kdtree_pairs,
    "brute": _brute_force_pairs,
}


def neighbor_pairs(cloud: PointCloud, zeta: float, strategy: str = "cell") -> Tuple[np.ndarray, np.ndarray]:
    """Sorted unique pairs (i < j) with distance < zeta.

    Distances are ambient Euclidean, minimum-image on the torus.
    """
    if strategy not in _PAIR_FINDERS:
        raise ConfigurationError(f"Unknown neighbour search strategy: {strategy!r}")
    i, j = _PAIR_FINDERS[strategy](cloud.points, zeta, cloud.manifold.is_periodic)
    order = np.lexsort((j, i))
    return i[order], j[order]


def build_similarity(
    cloud: PointCloud,
    zeta: float,
    strategy: str = "cell",
    max_nnz: Optional[int] = None,
) -> SimilarityGraph:
    """Build H with H_ij = c for |X_i - X_j| < zeta, i != j.

    Args:
        cloud: Point cloud
        zeta: Connectivity radius (> 0, and < 1/2 on the torus)
        strategy: 'cell' (default), 'kdtree' or 'brute'
        max_nnz: Memory budget on stored entries (default from config)

    Raises:
        ConfigurationError: zeta out of range
        ResourceError: expected number of entries above the budget
    """
    if not zeta > 0 or not math.isfinite(zeta):
        raise ConfigurationError(f"Connectivity zeta must be positive and finite, got {zeta}")
    if cloud.manifold.is_periodic and zeta >= 0.5:
        raise ConfigurationError(f"Torus connectivity must be < 1/2, got {zeta}")
    N, m = cloud.N, cloud.manifold.m
    budget = config.MAX_GRAPH_NNZ if max_nnz is None else max_nnz
    estimate = expected_nnz(N, m, zeta)
    if estimate > budget:
        raise ResourceError(
            f"Similarity graph would hold ~{estimate:.3g} entries (budget {budget:.3g}); "
            f"reduce zeta={zeta:g} or N={N}"
        )

    c = kernel_constant(N, m, zeta)
    i, j = neighbor_pairs(cloud, zeta, strategy)
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    data = np.full(rows.shape[0], c)
    H = sparse.coo_matrix((data, (rows, cols)), shape=(N, N)).tocsr()
    H.sort_indices()
    logger.debug("Built graph N=%d zeta=%.4g edges=%d (%s)", N, zeta, i.size, strategy)
    return SimilarityGraph(
        N=N,
        zeta=float(zeta),
        m=m,
        matrix=H,
        kernel_constant=c,
        manifold=cloud.manifold,
        strategy=strategy,
    )


def laplacian(graph: SimilarityGraph) -> SparseLaplacian:
    """Delta = D - H with the connected-component count."""
    H = graph.matrix
    degrees = np.asarray(H.sum(axis=1)).ravel()
    L = (sparse.diags(degrees) - H).tocsr()
    L.sort_indices()
    n_components, _ = csgraph.connected_components(H, directed=False)
    return SparseLaplacian(
        matrix=L,
        N=graph.N,
        graph=graph,
        n_components=int(n_components),
        degrees=degrees,
    )


def dirichlet_energy(lap: SparseLaplacian, v: np.ndarray) -> float:
    """Quadratic form v^T Delta v = 1/2 sum_ij H_ij (v_i - v_j)^2."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != lap.N:
        raise DimensionError(f"Vector of length {v.shape[0]} for a Laplacian of size {lap.N}")
    value = float(v @ (lap.matrix @ v))
    # PSD; negative values are rounding
    return max(value, 0.0)


def pointwise_laplacian_error(
    lap: SparseLaplacian,
    cloud: PointCloud,
    f: TruthFunction,
    delta_f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> PointwiseErrorReport:
    """Compare Delta_N f with the continuum (-Delta) f over the cloud.

    Args:
        lap: Graph Laplacian built on `cloud`
        cloud: Point cloud
        f: Smooth truth
        delta_f: Evaluator of (-Delta) f; defaults to f.laplacian

    Returns:
        PointwiseErrorReport with sup and mean absolute errors
    """
    if cloud.N != lap.N:
        raise DimensionError(f"Cloud has {cloud.N} points but the Laplacian has size {lap.N}")
    delta_f = delta_f or f.laplacian
    if delta_f is None:
        raise ConfigurationError(f"No analytic Laplacian available for truth {f.tag}")
    values = f(cloud.points)
    discrete = lap.matrix @ values
    continuum = np.asarray(delta_f(cloud.points), dtype=float)
    err = np.abs(discrete - continuum)
    return PointwiseErrorReport(
        sup_error=float(err.max()) if err.size else 0.0,
        mean_error=float(err.mean()) if err.size else 0.0,
        zeta=lap.graph.zeta,
        N=lap.N,
        scale=float(np.abs(continuum).max()) if continuum.size else 0.0,
    )
