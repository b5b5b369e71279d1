"""Command-line entry point for graph-prior sampling, inference and experiments."""
import argparse
import logging
import sys
import traceback
from typing import List, Optional

import pandas as pd
from rich.logging import RichHandler

import config
from analysis.geometry import make_truth, sample_uniform
from analysis.graph import build_similarity, laplacian
from analysis.links import get_link
from analysis.posterior import (
    empirical_norm,
    generate_labels,
    regression_posterior_exact,
    run_pcn_chains,
)
from analysis.randomfield import sample_discrete_field
from analysis.rates import fit_loglog_slope
from analysis.schedule import GIVEN_N, schedule
from analysis.spectral import smallest_eigenpairs
from experiments.runner import ExperimentRunner
from models.experiment import EXPERIMENT_KINDS, ExperimentConfig
from models.field import PriorParams
from models.manifold import ManifoldSpec, PointCloud
from models.posterior import CLASSIFICATION, REGRESSION
from reporting.notifier import RunNotifier
from utils.errors import ConfigurationError, GraphPriorError
from utils.persistence import ResultStore, load_cloud
from utils.seeding import Stage, derive_seed

logger = logging.getLogger("graphprior")


def setup_logging(level: str) -> None:
    logging.basicConfig(
        format="%(message)s",
        datefmt="[%X]",
        level=getattr(logging, level.upper(), logging.INFO),
        handlers=[RichHandler(rich_tracebacks=False, show_path=False)],
    )


def _add_cloud_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cloud", default="", help="Point cloud CSV written by 'sample'")
    parser.add_argument("--manifold", default="flat_torus", help="sphere | flat_torus")
    parser.add_argument("--m", type=int, default=2, help="Intrinsic dimension")
    parser.add_argument("--N", type=int, default=2000, help="Number of points")
    parser.add_argument("--seed", type=int, default=0)


def _add_graph_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--zeta", type=float, default=None, help="Connectivity radius (schedule value if omitted)")
    parser.add_argument("--s", type=float, default=3.5, help="Prior smoothness")
    parser.add_argument("--delta", type=float, default=0.5)
    parser.add_argument("--rigor", default="paper", help="paper | flat")
    parser.add_argument("--zeta-constant", type=float, default=config.ZETA_CONSTANT)
    parser.add_argument("--k-constant", type=float, default=config.K_CONSTANT)
    parser.add_argument("--strategy", default="cell", help="cell | kdtree | brute")


def _resolve_cloud(args) -> PointCloud:
    if args.cloud:
        return load_cloud(args.cloud)
    manifold = ManifoldSpec(args.manifold, args.m)
    return sample_uniform(manifold, args.N, derive_seed(args.seed, Stage.CLOUD, args.N, 0))


def _resolve_schedule(args, cloud: PointCloud):
    return schedule(
        cloud.manifold.m, args.s, args.delta, GIVEN_N, cloud.N,
        rigor=args.rigor, zeta_constant=args.zeta_constant, k_constant=args.k_constant,
    )


def _build_laplacian(args, cloud: PointCloud):
    sched = _resolve_schedule(args, cloud)
    zeta = args.zeta if args.zeta is not None else sched.zeta
    graph = build_similarity(cloud, zeta, strategy=args.strategy)
    return graph, laplacian(graph), sched, zeta


def cmd_sample(args, notifier: RunNotifier) -> int:
    cloud = _resolve_cloud(args)
    path = ResultStore(args.out).save_cloud(cloud)
    notifier.notify_status(f"Sampled {cloud.N} points on {cloud.manifold.kind} -> {path}", style="green")
    return 0


def cmd_graph(args, notifier: RunNotifier) -> int:
    cloud = _resolve_cloud(args)
    graph, lap, _, zeta = _build_laplacian(args, cloud)
    path = ResultStore(args.out).save_graph(graph, lap=lap)
    notifier.notify_status(
        f"Graph N={graph.N} zeta={zeta:.4g}: {graph.n_edges} edges, mean degree {graph.mean_degree():.1f}, "
        f"{lap.n_components} component(s) -> {path}",
        style="green",
    )
    return 0


def cmd_eig(args, notifier: RunNotifier) -> int:
    cloud = _resolve_cloud(args)
    _, lap, _, _ = _build_laplacian(args, cloud)
    eig = smallest_eigenpairs(
        lap, args.k, tol=args.tol, seed=derive_seed(args.seed, Stage.SOLVER, cloud.N, 0),
    )
    path = ResultStore(args.out).save_eigensystem(eig)
    values = ", ".join(f"{v:.4g}" for v in eig.eigenvalues[: min(eig.k, 8)])
    notifier.notify_status(f"Smallest eigenvalues: {values} -> {path}", style="green")
    return 0


def cmd_prior_sample(args, notifier: RunNotifier) -> int:
    cloud = _resolve_cloud(args)
    _, lap, sched, zeta = _build_laplacian(args, cloud)
    k = min(args.k or sched.k, cloud.N - 1)
    eig = smallest_eigenpairs(lap, k, seed=derive_seed(args.seed, Stage.SOLVER, cloud.N, 0))
    params = PriorParams(
        s=args.s, k=k, zeta=zeta, m=cloud.manifold.m,
        prior_scale=args.prior_scale, rigor=args.rigor, provenance=sched.case,
    )
    sample = sample_discrete_field(eig, params, seed=derive_seed(args.seed, Stage.FIELD, 0))
    path = ResultStore(args.out).save_field(sample, cloud.points)
    notifier.notify_status(f"Prior sample with k={k} modes -> {path}", style="green")
    return 0


def cmd_posterior(args, notifier: RunNotifier) -> int:
    cloud = _resolve_cloud(args)
    _, lap, sched, zeta = _build_laplacian(args, cloud)
    k = min(args.k or sched.k, cloud.N - 1)
    eig = smallest_eigenpairs(lap, k, seed=derive_seed(args.seed, Stage.SOLVER, cloud.N, 0))
    params = PriorParams(
        s=args.s, k=k, zeta=zeta, m=cloud.manifold.m,
        prior_scale=args.prior_scale, rigor=args.rigor, provenance=sched.case,
    )
    coefficients = tuple(float(v) for v in args.truth_coefficients.split(",") if v.strip())
    truth = make_truth(cloud.manifold, args.truth, beta=args.beta, coefficients=coefficients or None)
    link = get_link(args.link) if args.task == CLASSIFICATION else None
    data, f0 = generate_labels(
        cloud, truth, args.n, args.task,
        seed=derive_seed(args.seed, Stage.LABELS, args.n, 0),
        sigma2=args.sigma2, link=link,
    )
    if args.task == REGRESSION:
        result = regression_posterior_exact(eig, params, data)
    else:
        result = run_pcn_chains(
            eig, params, data, link,
            n_chains=args.chains, seed=derive_seed(args.seed, Stage.MCMC, args.n, 0),
            n_iter=args.iters, burn_in=args.burn_in, thin=args.thin,
        )
    path = ResultStore(args.out).save_posterior(result)
    error = empirical_norm(result.f_hat, f0, data.indices)
    notifier.notify_status(f"Posterior ({result.kind}) error_n={error:.4g} -> {path}", style="green")
    return 0


def cmd_experiment(args, notifier: RunNotifier) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if cfg.kind != args.kind and not (args.kind == "laplacian_pointwise" and cfg.kind == "laplacian"):
        raise ConfigurationError(f"Config {args.config} describes a {cfg.kind} experiment, not {args.kind}")
    if args.output_dir or args.n_jobs:
        overrides = cfg.to_dict()
        if args.output_dir:
            overrides["output_dir"] = args.output_dir
        if args.n_jobs:
            overrides["n_jobs"] = args.n_jobs
        cfg = ExperimentConfig.from_dict(overrides)
    ExperimentRunner(cfg, notifier=notifier).run()
    return 0


def cmd_report_slope(args, notifier: RunNotifier) -> int:
    try:
        rows = pd.read_csv(args.rows)
    except (IOError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"Cannot read rows file {args.rows}: {e}")
    for column in (args.metric, args.x):
        if column not in rows.columns:
            raise ConfigurationError(f"Column {column!r} not in {args.rows}")
    grouped = rows.groupby(args.x)[args.metric].median()
    fit = fit_loglog_slope(grouped.index.to_numpy(dtype=float), grouped.to_numpy(dtype=float))
    notifier.notify_status(
        f"slope={fit.slope:.4f} (95% CI {fit.ci_low:.4f} .. {fit.ci_high:.4f}, {fit.n_points} points)",
        style="bold green",
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphprior", description=__doc__)
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    parser.add_argument("--quiet", action="store_true", help="Suppress per-task status lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="Sample a uniform point cloud")
    _add_cloud_args(p)
    p.add_argument("--out", default="cloud")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("graph", help="Build the similarity graph and Laplacian")
    _add_cloud_args(p)
    _add_graph_args(p)
    p.add_argument("--out", default="graph")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("eig", help="Smallest Laplacian eigenpairs")
    _add_cloud_args(p)
    _add_graph_args(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--tol", type=float, default=config.EIGEN_TOL)
    p.add_argument("--out", default="eig")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("prior-sample", help="Draw one graph-prior field")
    _add_cloud_args(p)
    _add_graph_args(p)
    p.add_argument("--k", type=int, default=0, help="Number of modes (schedule value if 0)")
    p.add_argument("--prior-scale", type=float, default=config.PRIOR_SCALE)
    p.add_argument("--out", default="prior")
    p.set_defaults(func=cmd_prior_sample)

    p = sub.add_parser("posterior", help="Infer from labels generated by a truth function")
    _add_cloud_args(p)
    _add_graph_args(p)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--prior-scale", type=float, default=config.PRIOR_SCALE)
    p.add_argument("--task", default=REGRESSION, choices=[REGRESSION, CLASSIFICATION])
    p.add_argument("--n", type=int, default=100, help="Number of labels")
    p.add_argument("--sigma2", type=float, default=config.SIGMA2)
    p.add_argument("--link", default="logistic")
    p.add_argument("--truth", default="smooth_low_frequency")
    p.add_argument("--truth-coefficients", default="")
    p.add_argument("--beta", type=float, default=2.5)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=5000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--out", default="posterior")
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("experiment", help="Run an experiment suite from a config file")
    p.add_argument("kind", choices=list(EXPERIMENT_KINDS) + ["laplacian_pointwise"])
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default="")
    p.add_argument("--n-jobs", type=int, default=0)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="Post-process experiment rows")
    report = p.add_subparsers(dest="report_command", required=True)
    r = report.add_parser("slope", help="Log-log slope of replica medians")
    r.add_argument("--rows", required=True)
    r.add_argument("--metric", required=True)
    r.add_argument("--x", default="grid_value")
    r.set_defaults(func=cmd_report_slope)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    notifier = RunNotifier(quiet=args.quiet)
    try:
        return args.func(args, notifier)
    except GraphPriorError as e:
        notifier.notify_error(e)
        logger.debug("Traceback:\n%s", traceback.format_exc())
        return e.exit_code
    except KeyboardInterrupt:
        print("\nInterrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
