"""Experiment orchestration: grid x replica task sets, row assembly and slope fits."""
import logging
import math
import platform
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy
from joblib import Parallel, delayed

import config
from analysis.geometry import analytic_spectrum, make_truth, sample_uniform
from analysis.graph import build_similarity, laplacian, pointwise_laplacian_error
from analysis.links import get_link
from analysis.posterior import (
    contraction_mass,
    empirical_norm,
    generate_labels,
    graph_tikhonov_estimate,
    hellinger_rash,
    regression_posterior_exact,
    run_pcn_chains,
)
from analysis.randomfield import coupled_discrepancy, default_truncation, field_rate_envelope
from analysis.rates import fit_loglog_slope
from analysis.schedule import (
    GIVEN_N,
    GIVEN_n,
    capped_sample_size,
    contraction_rate,
    minimax_exponent,
    schedule,
)
from analysis.spectral import (
    align_spectra,
    estimate_rho,
    exact_eigensystem,
    smallest_eigenpairs,
    spectral_report,
)
from models.experiment import (
    CAPPED,
    CONTRACTION,
    FIELD,
    LAPLACIAN,
    PAPER,
    SPECTRAL,
    ExperimentConfig,
    ExperimentResult,
)
from models.field import PriorParams, check_smoothness
from models.posterior import CLASSIFICATION, REGRESSION
from reporting.notifier import RunNotifier
from utils.errors import DomainError, GraphPriorError, ResourceError
from utils.persistence import ResultStore
from utils.seeding import Stage, derive_seed

logger = logging.getLogger(__name__)

TAIL_RADII = (2, 4, 8)
NONDETERMINISTIC_COLUMNS = ["wall_time_s"]
SOLVER_COLUMNS = {
    SPECTRAL: ["mean_rel_eig_err_2_6", "lambda2_rel_err", "max_efun_l2_err",
               "max_efun_sup_err", "max_subspace_distance"],
    FIELD: ["mc_mean", "mc_stderr"],
    CONTRACTION: ["error_n", "error_l2", "tail_mass_2", "tail_mass_4", "tail_mass_8",
                  "tikhonov_error_n", "hellinger", "misclassification"],
    LAPLACIAN: [],
}
METRICS = {
    SPECTRAL: ("mean_rel_eig_err_2_6", "grid_value"),
    FIELD: ("mc_mean", "grid_value"),
    CONTRACTION: ("error_n", "grid_value"),
    LAPLACIAN: ("sup_error", "zeta"),
}


@contextmanager
def stage(name: str, grid_value: int, replica: int):
    """Attach (grid value, replica, stage) to errors raised inside the block."""
    try:
        yield
    except GraphPriorError as e:
        if "stage" not in e.context:
            e.with_context(grid_value=grid_value, replica=replica, stage=name)
        raise


def _scheduled_graph(cfg: ExperimentConfig, N: int, replica: int, grid_value: int):
    """Cloud, schedule and Laplacian for one task."""
    manifold = cfg.manifold
    cloud_seed = derive_seed(cfg.seed, Stage.CLOUD, grid_value, replica)
    with stage("sample", grid_value, replica):
        cloud = sample_uniform(manifold, N, cloud_seed)
    with stage("schedule", grid_value, replica):
        sched = schedule(
            cfg.m, cfg.s, cfg.delta, GIVEN_N, N,
            rigor=cfg.rigor,
            zeta_constant=cfg.zeta_constant,
            k_constant=cfg.k_constant,
            n_constant=cfg.n_constant,
        )
    with stage("graph", grid_value, replica):
        lap = laplacian(build_similarity(cloud, sched.zeta))
    return cloud, sched, lap, cloud_seed


def _eigensystem(cfg: ExperimentConfig, lap, cloud, continuum, k: int, grid_value: int, replica: int):
    solver_seed = derive_seed(cfg.seed, Stage.SOLVER, grid_value, replica)
    with stage("eigensolve", grid_value, replica):
        if cfg.inject_exact:
            return exact_eigensystem(continuum, cloud, k)
        return smallest_eigenpairs(lap, k, tol=cfg.solver_tol, seed=solver_seed, maxiter=cfg.solver_maxiter)


def spectral_task(cfg: ExperimentConfig, N: int, replica: int) -> Tuple[Dict, Optional[pd.DataFrame]]:
    """One spectral-convergence measurement."""
    start = time.perf_counter()
    cloud, sched, lap, cloud_seed = _scheduled_graph(cfg, N, replica, N)
    k = min(cfg.n_eigs, N - 1)
    continuum = analytic_spectrum(cloud.manifold, k)
    eig = _eigensystem(cfg, lap, cloud, continuum, k, N, replica)
    with stage("align", N, replica):
        transport = estimate_rho(cloud, cfg.reference_size)
        aligned = align_spectra(eig, continuum, cloud)
        report = spectral_report(aligned, cloud, sched.zeta, transport.rho)

    row = {
        "grid_value": N,
        "replica": replica,
        "N": N,
        "zeta": sched.zeta,
        "k": k,
        "k_source": "n_eigs",
        "rho_hat": transport.rho,
        "mean_rel_eig_err_2_6": report.mean_relative_error(2, 6),
        "lambda2_rel_err": float(report.eig_rel_error[1]) if len(report) > 1 else float("nan"),
        "max_efun_l2_err": float(np.max(report.efun_l2_error)),
        "max_efun_sup_err": float(np.max(report.efun_sup_error)),
        "max_subspace_distance": max(aligned.subspace_distances.values(), default=0.0),
        "envelope": float(np.mean(report.eig_envelope[1:6] / report.continuum_eigenvalues[1:6]))
        if len(report) > 1 else float("nan"),
        "alignment_warnings": len(report.warnings),
        "cloud_seed": str(cloud_seed),
        "wall_time_s": time.perf_counter() - start,
    }
    detail = report.to_frame()
    detail.insert(0, "replica", replica)
    detail.insert(0, "grid_value", N)
    return row, detail


def field_task(cfg: ExperimentConfig, N: int, replica: int) -> Tuple[Dict, Optional[pd.DataFrame]]:
    """One coupled-discrepancy measurement; xi draws depend on the replica only."""
    start = time.perf_counter()
    cloud, sched, lap, cloud_seed = _scheduled_graph(cfg, N, replica, N)
    k = min(cfg.k_override or sched.k, N - 1)
    K = cfg.k_continuum or default_truncation(cloud.manifold, cfg.s)
    continuum = analytic_spectrum(cloud.manifold, max(k, K))
    eig = _eigensystem(cfg, lap, cloud, continuum, k, N, replica)
    field_seed = derive_seed(cfg.seed, Stage.FIELD, replica)
    with stage("field", N, replica):
        params = PriorParams(
            s=cfg.s, k=k, zeta=sched.zeta, m=cfg.m,
            prior_scale=cfg.prior_scale, rigor=cfg.rigor, provenance=sched.case,
        )
        aligned = align_spectra(eig, continuum, cloud)
        est = coupled_discrepancy(
            aligned, cloud, params, K, cfg.n_mc, field_seed, grid_size=cfg.reference_size,
        )
    row = {
        "grid_value": N,
        "replica": replica,
        "N": N,
        "zeta": sched.zeta,
        "k": k,
        "K": K,
        "rho_hat": est.rho,
        "mc_mean": est.mean,
        "mc_stderr": est.stderr,
        "n_mc": est.n_mc,
        "envelope": field_rate_envelope(k, cfg.s, cfg.m, est.rho, sched.zeta),
        "cloud_seed": str(cloud_seed),
        "field_seed": str(field_seed),
        "wall_time_s": time.perf_counter() - start,
    }
    return row, None


def contraction_points(cfg: ExperimentConfig, n: int) -> int:
    """Unlabeled sample size for n labels under the configured schedule mode."""
    if cfg.schedule_mode == CAPPED:
        return capped_sample_size(n, cfg.gamma, cfg.n_max_points, cfg.n_constant)
    sched = schedule(
        cfg.m, cfg.s, cfg.delta, GIVEN_n, n,
        rigor=cfg.rigor, n_constant=cfg.n_constant,
    )
    if not math.isfinite(sched.N_n) or sched.N_n > cfg.n_max_points:
        raise ResourceError(
            f"Paper schedule needs N_n ~ 10^{sched.log_N_n / math.log(10):.1f} points for n={n} "
            f"(limit {cfg.n_max_points}); use schedule.mode=capped"
        )
    return int(max(n, math.ceil(sched.N_n)))


def contraction_task(cfg: ExperimentConfig, n: int, replica: int) -> Tuple[Dict, Optional[pd.DataFrame]]:
    """One posterior-contraction measurement with n labels."""
    start = time.perf_counter()
    N = contraction_points(cfg, n)
    cloud, sched, lap, cloud_seed = _scheduled_graph(cfg, N, replica, n)
    k = min(cfg.k_override or sched.k, N - 1)
    continuum = analytic_spectrum(cloud.manifold, k) if cfg.inject_exact else None
    eig = _eigensystem(cfg, lap, cloud, continuum, k, n, replica)

    with stage("labels", n, replica):
        truth = make_truth(cloud.manifold, cfg.truth, beta=cfg.beta, coefficients=cfg.truth_coefficients)
        link = get_link(cfg.link) if cfg.task == CLASSIFICATION else None
        data, f0 = generate_labels(
            cloud, truth, n, cfg.task,
            seed=derive_seed(cfg.seed, Stage.LABELS, n, replica),
            sigma2=cfg.sigma2, link=link, randomize=cfg.randomize_labels,
        )
    params = PriorParams(
        s=cfg.s, k=k, zeta=sched.zeta, m=cfg.m,
        prior_scale=cfg.prior_scale, rigor=cfg.rigor, provenance=sched.case,
    )
    with stage("posterior", n, replica):
        if cfg.task == REGRESSION:
            post = regression_posterior_exact(eig, params, data)
        else:
            post = run_pcn_chains(
                eig, params, data, link,
                n_chains=cfg.chains,
                seed=derive_seed(cfg.seed, Stage.MCMC, n, replica),
                n_iter=cfg.iters, burn_in=cfg.burn_in, thin=cfg.thin, beta_pcn=cfg.beta_pcn,
            )

    idx = data.indices
    # the reference rate is undefined below two labels
    eps_n = contraction_rate(n, cfg.s, truth.beta, cfg.m) if n >= 2 else float("nan")
    with stage("metrics", n, replica):
        diff = post.f_hat - f0
        row = {
            "grid_value": n,
            "replica": replica,
            "n": n,
            "N": N,
            "zeta": sched.zeta,
            "k": k,
            "error_n": empirical_norm(post.f_hat, f0, idx),
            "error_l2": float(math.sqrt(np.mean(diff * diff))),
            "eps_n": eps_n,
        }
        draw_seed = derive_seed(cfg.seed, Stage.POSTERIOR_DRAWS, n, replica)
        for r in TAIL_RADII:
            if math.isnan(eps_n):
                row[f"tail_mass_{r}"] = float("nan")
            else:
                row[f"tail_mass_{r}"] = contraction_mass(
                    post, f0, r * eps_n, idx, n_draws=config.POSTERIOR_DRAWS, seed=draw_seed,
                )
        if cfg.task == REGRESSION:
            reg = cfg.sigma2 / (cfg.prior_scale ** 2 * N)
            f_tik = graph_tikhonov_estimate(eig, data, cfg.s, reg, k=k)
            row["tikhonov_error_n"] = empirical_norm(f_tik, f0, idx)
            row["acceptance_rate"] = float("nan")
            row["hellinger"] = float("nan")
            row["hellinger_prior"] = float("nan")
            row["misclassification"] = float("nan")
        else:
            prior_mean = np.full_like(f0, float(link.forward(0.0)))
            row["tikhonov_error_n"] = float("nan")
            row["acceptance_rate"] = post.acceptance_rate
            row["hellinger"] = hellinger_rash(post.f_hat, f0, idx)
            row["hellinger_prior"] = hellinger_rash(prior_mean, f0, idx)
            predicted = (post.f_hat[idx] >= 0.5).astype(float)
            row["misclassification"] = float(np.mean(predicted != data.y))
    row["schedule_mode"] = cfg.schedule_mode
    row["cloud_seed"] = str(cloud_seed)
    row["wall_time_s"] = time.perf_counter() - start
    return row, None


def laplacian_task(cfg: ExperimentConfig, N: int, replica: int) -> Tuple[Dict, Optional[pd.DataFrame]]:
    """Pointwise error of the graph Laplacian on a smooth truth."""
    start = time.perf_counter()
    cloud, sched, lap, cloud_seed = _scheduled_graph(cfg, N, replica, N)
    with stage("pointwise", N, replica):
        coefficients = cfg.truth_coefficients or (0.0, 1.0)
        truth = make_truth(cloud.manifold, cfg.truth, beta=cfg.beta, coefficients=coefficients)
        report = pointwise_laplacian_error(lap, cloud, truth)
    row = {
        "grid_value": N,
        "replica": replica,
        "N": N,
        "zeta": sched.zeta,
        "sup_error": report.sup_error,
        "mean_error": report.mean_error,
        "scale": report.scale,
        "envelope": sched.zeta,
        "components": lap.n_components,
        "cloud_seed": str(cloud_seed),
        "wall_time_s": time.perf_counter() - start,
    }
    return row, None


TASKS: Dict[str, Callable] = {
    SPECTRAL: spectral_task,
    FIELD: field_task,
    CONTRACTION: contraction_task,
    LAPLACIAN: laplacian_task,
}


def fit_median_slope(rows: pd.DataFrame, metric: str, x_column: str):
    """Slope of log(replica-median metric) against log x; (fit, flag)."""
    grouped = rows.groupby("grid_value")
    x = grouped[x_column].median().to_numpy(dtype=float)
    y = grouped[metric].median().to_numpy(dtype=float)
    if np.unique(x).size < 3:
        return None, "fewer_than_3_grid_points"
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        return None, "nonpositive_metric"
    try:
        return fit_loglog_slope(x, y), ""
    except DomainError as e:
        return None, f"fit_failed: {e}"


class ExperimentRunner:
    """Runs one configured experiment and writes its artifacts."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        store: Optional[ResultStore] = None,
        notifier: Optional[RunNotifier] = None,
        write: bool = True,
    ):
        """Initialize the runner.

        Args:
            cfg: Experiment configuration
            store: Output store (defaults to OUTPUT_ROOT/<output.dir>)
            notifier: Console notifier (a quiet one when omitted)
            write: Write rows.csv / manifest.json / slope.json
        """
        self.cfg = cfg
        self.store = store or ResultStore(cfg.run_name)
        self.notifier = notifier
        self.write = write

    def tasks(self) -> List[Tuple[int, int]]:
        return [(g, r) for g in self.cfg.grid_values for r in range(self.cfg.replicas)]

    def run(self) -> ExperimentResult:
        dispatch = {
            SPECTRAL: self.run_spectral,
            FIELD: self.run_field,
            CONTRACTION: self.run_contraction,
            LAPLACIAN: self.run_laplacian_pointwise,
        }
        return dispatch[self.cfg.kind]()

    def run_spectral(self) -> ExperimentResult:
        return self._run(SPECTRAL)

    def run_field(self) -> ExperimentResult:
        return self._run(FIELD)

    def run_contraction(self) -> ExperimentResult:
        cfg = self.cfg
        if cfg.task == CLASSIFICATION:
            get_link(cfg.link)
        if cfg.schedule_mode == PAPER:
            # refuse before any allocation
            for n in cfg.grid_values:
                contraction_points(cfg, n)
        return self._run(CONTRACTION)

    def run_laplacian_pointwise(self) -> ExperimentResult:
        return self._run(LAPLACIAN)

    def _validate(self, kind: str) -> None:
        cfg = self.cfg
        if cfg.kind != kind:
            raise GraphPriorError(f"Runner configured for {cfg.kind}, asked to run {kind}")
        check_smoothness(cfg.m, cfg.s, cfg.rigor, cfg.manifold.kind)

    def _run(self, kind: str) -> ExperimentResult:
        self._validate(kind)
        cfg = self.cfg
        tasks = self.tasks()
        if self.notifier:
            self.notifier.notify_start(cfg, len(tasks))
        started = datetime.now(timezone.utc)
        t0 = time.perf_counter()

        task_fn = TASKS[kind]
        outputs = Parallel(n_jobs=cfg.n_jobs)(delayed(task_fn)(cfg, g, r) for g, r in tasks)
        row_list, details = [], []
        for (g, r), (row, detail) in zip(tasks, outputs):
            row_list.append(row)
            if detail is not None:
                details.append(detail)
            if self.notifier:
                self.notifier.notify_task(g, r, row.get("wall_time_s", 0.0))

        rows = pd.DataFrame(row_list).sort_values(["grid_value", "replica"], kind="stable")
        rows = rows.reset_index(drop=True)
        detail = pd.concat(details, ignore_index=True) if details else None

        metric, x_column = METRICS[kind]
        slope, flag = fit_median_slope(rows, metric, x_column)
        if kind == CONTRACTION:
            reference = minimax_exponent(cfg.beta, cfg.m)
        else:
            envelope_fit, _ = fit_median_slope(rows, "envelope", x_column)
            reference = envelope_fit.slope if envelope_fit is not None else None

        wall = time.perf_counter() - t0
        manifest = self._manifest(kind, tasks, started, wall, len(rows))
        result = ExperimentResult(
            config=cfg,
            rows=rows,
            slope=slope,
            manifest=manifest,
            detail=detail,
            metric=metric,
            x_column=x_column,
            reference_slope=reference,
            slope_flag=flag,
        )
        if slope is None:
            logger.info("No slope fitted for %s: %s", kind, flag)
        if self.write:
            result.output_dir = self.store.save_experiment(rows, manifest, result.slope_payload(), detail)
            logger.info("Wrote %d rows to %s", len(rows), result.output_dir)
        if self.notifier:
            self.notifier.print_result(result)
        return result

    def _manifest(self, kind: str, tasks, started: datetime, wall: float, n_rows: int) -> Dict:
        cfg = self.cfg
        seeds = []
        for g, r in tasks:
            entry = {
                "grid_value": g,
                "replica": r,
                "cloud": str(derive_seed(cfg.seed, Stage.CLOUD, g, r)),
                "solver": str(derive_seed(cfg.seed, Stage.SOLVER, g, r)),
            }
            if kind == FIELD:
                entry["field"] = str(derive_seed(cfg.seed, Stage.FIELD, r))
            if kind == CONTRACTION:
                entry["labels"] = str(derive_seed(cfg.seed, Stage.LABELS, g, r))
                entry["mcmc"] = str(derive_seed(cfg.seed, Stage.MCMC, g, r))
                entry["posterior_draws"] = str(derive_seed(cfg.seed, Stage.POSTERIOR_DRAWS, g, r))
            seeds.append(entry)
        return {
            "library": "graphprior",
            "version": config.VERSION,
            "experiment": kind,
            "config": cfg.to_dict(),
            "schedule_mode": cfg.schedule_mode if kind == CONTRACTION else "given_N",
            "seeds": {"master": cfg.seed, "derivation": "SeedSequence(master, spawn_key=(stage, ...))",
                      "tasks": seeds},
            "defaults": {
                "max_graph_nnz": config.MAX_GRAPH_NNZ,
                "mode_table_size": config.MODE_TABLE_SIZE,
                "continuum_tail_tol": config.CONTINUUM_TAIL_TOL,
                "posterior_draws": config.POSTERIOR_DRAWS,
                "pcn_target_acceptance": config.PCN_TARGET_ACCEPTANCE,
            },
            "n_rows": n_rows,
            "started_at": started.isoformat(),
            "wall_time_s": wall,
            "nondeterministic_columns": NONDETERMINISTIC_COLUMNS,
            "solver_tolerance_columns": SOLVER_COLUMNS[kind],
            "platform": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
            },
        }


def run_experiment(
    cfg: ExperimentConfig,
    store: Optional[ResultStore] = None,
    notifier: Optional[RunNotifier] = None,
    write: bool = True,
) -> ExperimentResult:
    """Convenience wrapper around ExperimentRunner.run."""
    return ExperimentRunner(cfg, store=store, notifier=notifier, write=write).run()
