"""File-based persistence for clouds, graphs, eigensystems, chains and experiment results."""
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

import config
from models.field import FieldSample
from models.graph import SimilarityGraph, SparseLaplacian
from models.manifold import ManifoldSpec, PointCloud
from models.posterior import PosteriorResult
from models.spectrum import EigenSystem
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _json_default(obj: Any):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, datetime):
        return obj.isoformat()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


class ResultStore:
    """Writes run artifacts under one directory.

    Every file is written to `<name>.tmp` first and moved into place with
    os.replace, so readers never see a partial file.
    """

    def __init__(self, base_dir: str = ""):
        """Initialize the store.

        Args:
            base_dir: Target directory. Relative paths are placed under
                config.OUTPUT_ROOT; empty string uses OUTPUT_ROOT itself.
        """
        if not base_dir:
            base_dir = config.OUTPUT_ROOT
        elif not os.path.isabs(base_dir):
            base_dir = os.path.join(config.OUTPUT_ROOT, base_dir)
        self.base_dir = base_dir

    def path(self, name: str) -> str:
        return os.path.join(self.base_dir, name)

    def _atomic_write(self, name: str, writer) -> str:
        target = self.path(name)
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        tmp_file = target + ".tmp"
        try:
            writer(tmp_file)
            os.replace(tmp_file, target)
        except (IOError, OSError) as e:
            logger.error("Failed to write %s: %s", target, e)
            if os.path.exists(tmp_file):
                os.remove(tmp_file)
            raise
        return target

    # ---- generic writers ----

    def write_json(self, name: str, data: Dict[str, Any]) -> str:
        def writer(tmp):
            with open(tmp, "w") as f:
                json.dump(data, f, indent=2, default=_json_default)
        return self._atomic_write(name, writer)

    def write_frame(self, name: str, frame: pd.DataFrame) -> str:
        return self._atomic_write(
            name, lambda tmp: frame.to_csv(tmp, index=False, float_format=FLOAT_FORMAT)
        )

    def write_binary(self, name: str, matrix: np.ndarray) -> str:
        """Raw column-major float64 dump."""
        data = np.asarray(matrix, dtype="<f8")
        return self._atomic_write(name, lambda tmp: data.ravel(order="F").tofile(tmp))

    # ---- domain objects ----

    def save_cloud(self, cloud: PointCloud, name: str = "cloud") -> str:
        cols = [f"x{i + 1}" for i in range(cloud.manifold.d)]
        path = self.write_frame(f"{name}.csv", pd.DataFrame(cloud.points, columns=cols))
        self.write_json(f"{name}.json", {
            "manifold": cloud.manifold.kind,
            "m": cloud.manifold.m,
            "d": cloud.manifold.d,
            "N": cloud.N,
            "seed": cloud.seed,
        })
        return path

    def save_graph(self, graph: SimilarityGraph, name: str = "graph", lap: Optional[SparseLaplacian] = None) -> str:
        """Write the graph as (i, j, value) triplets plus a JSON header.

        Without a Laplacian only the upper triangle of the symmetric H is
        stored; the header's ``storage`` field says which layout was used.
        """
        if lap is not None:
            coo = lap.matrix.tocoo()
            storage = "full"
            n_components = lap.n_components
        else:
            coo = sparse.triu(graph.matrix, k=1).tocoo()
            storage = "upper_triangle"
            n_components, _ = csgraph.connected_components(graph.matrix, directed=False)
        frame = pd.DataFrame({"i": coo.row, "j": coo.col, "value": coo.data})
        path = self.write_frame(f"{name}.csv", frame)
        header = {
            "N": graph.N,
            "zeta": graph.zeta,
            "m": graph.m,
            "c": graph.kernel_constant,
            "nnz": graph.nnz,
            "strategy": graph.strategy,
            "matrix": "laplacian" if lap is not None else "similarity",
            "storage": storage,
            "components": int(n_components),
        }
        self.write_json(f"{name}.json", header)
        return path

    def save_eigensystem(self, eig: EigenSystem, name: str = "eig") -> str:
        frame = pd.DataFrame({
            "index": np.arange(1, eig.k + 1),
            "eigenvalue": eig.eigenvalues,
            "residual": eig.residuals,
        })
        path = self.write_frame(f"{name}_values.csv", frame)
        self.write_binary(f"{name}_vectors.f64", eig.eigenvectors)
        self.write_json(f"{name}.json", {
            "N": eig.N,
            "k": eig.k,
            "normalization": eig.normalization,
            "tol": eig.tol,
            "seed": eig.seed,
            "layout": "column-major float64 little-endian",
        })
        return path

    def save_field(self, sample: FieldSample, points: np.ndarray, name: str = "field") -> str:
        pts = np.atleast_2d(points)
        frame = pd.DataFrame(pts, columns=[f"x{i + 1}" for i in range(pts.shape[1])])
        frame.insert(0, "index", np.arange(pts.shape[0]))
        frame["value"] = sample.values
        path = self.write_frame(f"{name}.csv", frame)
        self.write_frame(f"{name}_xi.csv", pd.DataFrame({"xi": sample.xi}))
        self.write_json(f"{name}.json", {
            "kind": sample.kind,
            "s": sample.s,
            "n_modes": sample.n_modes,
            "prior_scale": sample.prior_scale,
        })
        return path

    def save_posterior(self, result: PosteriorResult, name: str = "posterior") -> str:
        frame = pd.DataFrame({"index": np.arange(result.f_hat.size), "f_hat": result.f_hat})
        path = self.write_frame(f"{name}_fhat.csv", frame)
        if result.mean is not None:
            coef = pd.DataFrame({"coefficient": np.arange(1, result.k + 1), "mean": result.mean})
            if result.cov is not None:
                coef["sd"] = np.sqrt(np.diag(result.cov))
            self.write_frame(f"{name}_coefficients.csv", coef)
        if result.chain is not None:
            self.write_binary(f"{name}_chain.f64", result.chain)
        meta = result.summary()
        if result.chain is not None:
            meta["chain_shape"] = list(result.chain.shape)
        self.write_json(f"{name}.json", meta)
        return path

    def save_experiment(self, rows: pd.DataFrame, manifest: Dict[str, Any], slope: Dict[str, Any],
                        detail: Optional[pd.DataFrame] = None) -> str:
        """Write rows.csv, manifest.json, slope.json (and detail.csv)."""
        self.write_frame("rows.csv", rows)
        if detail is not None and len(detail):
            self.write_frame("detail.csv", detail)
        self.write_json("slope.json", slope)
        self.write_json("manifest.json", manifest)
        return self.base_dir


def load_cloud(csv_path: str) -> PointCloud:
    """Load a cloud written by ResultStore.save_cloud."""
    meta_path = os.path.splitext(csv_path)[0] + ".json"
    try:
        with open(meta_path, "r") as f:
            meta = json.load(f)
        frame = pd.read_csv(csv_path, float_precision="round_trip")
    except (json.JSONDecodeError, IOError) as e:
        raise ConfigurationError(f"Failed to load point cloud {csv_path}: {e}")
    manifold = ManifoldSpec(meta["manifold"], meta["m"])
    return PointCloud(points=frame.to_numpy(dtype=float), manifold=manifold, seed=meta.get("seed"))


def load_eigensystem(prefix: str) -> EigenSystem:
    """Load an eigensystem written by ResultStore.save_eigensystem (path without suffix)."""
    try:
        with open(prefix + ".json", "r") as f:
            meta = json.load(f)
        frame = pd.read_csv(prefix + "_values.csv", float_precision="round_trip")
        flat = np.fromfile(prefix + "_vectors.f64", dtype="<f8")
    except (json.JSONDecodeError, IOError) as e:
        raise ConfigurationError(f"Failed to load eigensystem {prefix}: {e}")
    vectors = flat.reshape((meta["N"], meta["k"]), order="F")
    return EigenSystem(
        eigenvalues=frame["eigenvalue"].to_numpy(),
        eigenvectors=vectors,
        residuals=frame["residual"].to_numpy(),
        tol=meta.get("tol", 0.0),
        seed=meta.get("seed"),
        normalization=meta.get("normalization", "L2(mu_N)"),
    )
