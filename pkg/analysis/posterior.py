"""Posterior inference over KL coefficients and contraction metrics."""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

import config
from models.field import PriorParams
from models.manifold import PointCloud, TruthFunction
from models.posterior import (
    CLASSIFICATION,
    EXACT_GAUSSIAN,
    MCMC_CHAIN,
    REGRESSION,
    LabeledData,
    LinkFunction,
    PosteriorResult,
)
from models.spectrum import EigenSystem
from utils.errors import (
    ConfigurationError,
    DimensionError,
    DomainError,
    NumericalError,
    TaskMismatchError,
)
from utils.seeding import Stage, derive_seed, make_rng

logger = logging.getLogger(__name__)

ADAPTATION_EXPONENT = 0.6
MIN_PCN_BETA = 1e-4
_FIELD_BATCH = 256


def _design(eig: EigenSystem, params: PriorParams, data: LabeledData) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Basis (N, k), labeled rows B (n, k) and prior variances (k,)."""
    params.check_against(eig.k)
    if data.n and data.indices.max() >= eig.N:
        raise DomainError(f"Labeled index {data.indices.max()} out of range for N={eig.N}")
    k = params.k
    basis = eig.eigenvectors[:, :k]
    B = basis[data.indices]
    variances = params.coefficient_variances(eig.eigenvalues[:k])
    return basis, B, variances


def generate_labels(
    cloud: PointCloud,
    truth: TruthFunction,
    n: int,
    task: str,
    seed: int,
    sigma2: Optional[float] = None,
    link: Optional[LinkFunction] = None,
    randomize: bool = False,
) -> Tuple[LabeledData, np.ndarray]:
    """Label n cloud points from the truth.

    Regression: Y = w0(X) + N(0, sigma2). Classification: Y ~ Bernoulli(F(w0(X))).
    The labeled points are the first n of the cloud unless `randomize`.

    Returns:
        (LabeledData, f0 on the cloud): f0 is w0 for regression, F(w0) for
        classification
    """
    if not 0 <= n <= cloud.N:
        raise DomainError(f"Cannot label {n} of {cloud.N} points")
    rng = make_rng(seed)
    if randomize:
        indices = np.sort(rng.choice(cloud.N, size=n, replace=False))
    else:
        indices = np.arange(n)
    w0 = truth(cloud.points)
    if task == REGRESSION:
        if sigma2 is None or not sigma2 > 0:
            raise ConfigurationError(f"Regression needs sigma2 > 0, got {sigma2}")
        y = w0[indices] + math.sqrt(sigma2) * rng.standard_normal(n)
        return LabeledData(indices=indices, y=y, task=task, sigma2=sigma2, N=cloud.N), w0
    if task == CLASSIFICATION:
        if link is None:
            raise ConfigurationError("Classification needs a link function")
        f0 = link.forward(w0)
        y = (rng.random(n) < f0[indices]).astype(float)
        return LabeledData(indices=indices, y=y, task=task, N=cloud.N), f0
    raise ConfigurationError(f"Unknown task: {task!r}")


def regression_posterior_exact(eig: EigenSystem, params: PriorParams, data: LabeledData) -> PosteriorResult:
    """Conjugate Gaussian posterior of the coefficients for regression.

    Precision P = D^-1 + B^T B / sigma2 with D the prior variances, mean
    P^-1 B^T y / sigma2, and f_hat = Psi mean.

    Raises:
        TaskMismatchError: classification data
        NumericalError: the precision is not positive definite
    """
    if data.task != REGRESSION:
        raise TaskMismatchError("Exact posterior is only available for regression data")
    basis, B, variances = _design(eig, params, data)
    precision = np.diag(1.0 / variances) + (B.T @ B) / data.sigma2
    try:
        factor = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Posterior precision is not positive definite: {e}")
    mean = linalg.cho_solve(factor, B.T @ data.y / data.sigma2)
    cov = linalg.cho_solve(factor, np.eye(params.k))
    cov = 0.5 * (cov + cov.T)
    return PosteriorResult(
        kind=EXACT_GAUSSIAN,
        task=REGRESSION,
        basis=basis,
        f_hat=basis @ mean,
        mean=mean,
        cov=cov,
        diagnostics={"n_labels": data.n, "trace_cov": float(np.trace(cov))},
    )


def acceptance_probability(log_lik_proposed: float, log_lik_current: float) -> float:
    """min(1, exp(l' - l))."""
    log_alpha = log_lik_proposed - log_lik_current
    if log_alpha >= 0:
        return 1.0
    return math.exp(log_alpha)


def _log_likelihood_fn(B: np.ndarray, data: LabeledData, link: Optional[LinkFunction]):
    y = data.y
    if data.task == REGRESSION:
        inv2s = 0.5 / data.sigma2

        def loglik(a: np.ndarray) -> float:
            r = y - B @ a
            return float(-inv2s * (r @ r))
    else:
        if link is None:
            raise ConfigurationError("Classification needs a link function")

        def loglik(a: np.ndarray) -> float:
            return link.log_likelihood(B @ a, y)
    return loglik


def _posterior_mean_field(basis: np.ndarray, chain: np.ndarray, task: str, link: Optional[LinkFunction]) -> np.ndarray:
    if task == REGRESSION or link is None:
        return basis @ chain.mean(axis=0)
    total = np.zeros(basis.shape[0])
    for start in range(0, chain.shape[0], _FIELD_BATCH):
        latent = basis @ chain[start:start + _FIELD_BATCH].T
        total += link.forward(latent).sum(axis=1)
    return total / chain.shape[0]


def pcn_sample(
    eig: EigenSystem,
    params: PriorParams,
    data: LabeledData,
    link: Optional[LinkFunction] = None,
    n_iter: int = 20000,
    burn_in: int = 5000,
    thin: int = 10,
    beta_pcn: Optional[float] = None,
    seed: int = 0,
    adapt: bool = True,
) -> PosteriorResult:
    """Preconditioned Crank-Nicolson chain over the KL coefficients.

    Proposal a' = sqrt(1 - beta^2) a + beta rho with rho drawn from the prior,
    accepted with probability min(1, exp(l(a') - l(a))). During burn-in log
    beta follows a Robbins-Monro update towards the target acceptance; the
    step is frozen afterwards. The returned chain holds every `thin`-th
    post-burn-in state.

    Raises:
        NumericalError: non-finite log-likelihood (carries the iteration)
    """
    beta_pcn = config.PCN_BETA if beta_pcn is None else float(beta_pcn)
    if not 0 < beta_pcn <= 1:
        raise ConfigurationError(f"pCN step must lie in (0, 1], got {beta_pcn}")
    if n_iter < 1 or not 0 <= burn_in < n_iter or thin < 1:
        raise ConfigurationError("Need n_iter >= 1, 0 <= burn_in < n_iter and thin >= 1")
    basis, B, variances = _design(eig, params, data)
    scales = np.sqrt(variances)
    loglik = _log_likelihood_fn(B, data, link if data.task == CLASSIFICATION else None)
    rng = make_rng(seed)
    k = params.k

    a = np.zeros(k)
    current = loglik(a)
    if not math.isfinite(current):
        raise NumericalError("Non-finite log-likelihood at the initial state", iteration=0)
    log_beta = math.log(beta_pcn)
    target = config.PCN_TARGET_ACCEPTANCE
    kept: List[np.ndarray] = []
    accepted = 0

    for t in range(n_iter):
        beta = math.exp(log_beta)
        proposal = math.sqrt(1.0 - beta * beta) * a + beta * scales * rng.standard_normal(k)
        proposed = loglik(proposal)
        if not math.isfinite(proposed):
            raise NumericalError("Non-finite log-likelihood", iteration=t)
        accept = rng.random() < acceptance_probability(proposed, current)
        if accept:
            a, current = proposal, proposed
        if t < burn_in:
            if adapt:
                log_beta += (float(accept) - target) / (t + 1) ** ADAPTATION_EXPONENT
                log_beta = min(0.0, max(math.log(MIN_PCN_BETA), log_beta))
        else:
            accepted += int(accept)
            if (t - burn_in) % thin == 0:
                kept.append(a.copy())

    chain = np.array(kept)
    rate = accepted / (n_iter - burn_in)
    warnings = []
    low, high = config.PCN_ACCEPTANCE_BAND
    if not low <= rate <= high:
        msg = f"pCN acceptance rate {rate:.3f} outside [{low}, {high}] (beta={math.exp(log_beta):.3g})"
        logger.warning(msg)
        warnings.append(msg)

    link_used = link if data.task == CLASSIFICATION else None
    return PosteriorResult(
        kind=MCMC_CHAIN,
        task=data.task,
        basis=basis,
        f_hat=_posterior_mean_field(basis, chain, data.task, link_used),
        mean=chain.mean(axis=0),
        cov=np.atleast_2d(np.cov(chain.T)) if chain.shape[0] > 1 else None,
        chain=chain,
        acceptance_rate=rate,
        n_iter=n_iter,
        burn_in=burn_in,
        thin=thin,
        beta_pcn=math.exp(log_beta),
        seed=seed,
        link=link_used,
        diagnostics={
            "acceptance_rate": rate,
            "initial_beta": beta_pcn,
            "final_beta": math.exp(log_beta),
            "warnings": warnings,
        },
    )


def gelman_rubin(chains: List[np.ndarray]) -> np.ndarray:
    """Potential scale reduction factor per coefficient (nan for one chain)."""
    n = min(c.shape[0] for c in chains)
    if len(chains) < 2 or n < 2:
        return np.full(chains[0].shape[1], np.nan)
    stacked = np.stack([c[:n] for c in chains])
    within = stacked.var(axis=1, ddof=1).mean(axis=0)
    between = n * stacked.mean(axis=1).var(axis=0, ddof=1)
    pooled = (n - 1) / n * within + between / n
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(pooled / within)


def run_pcn_chains(
    eig: EigenSystem,
    params: PriorParams,
    data: LabeledData,
    link: Optional[LinkFunction] = None,
    n_chains: int = 1,
    seed: int = 0,
    n_jobs: int = 1,
    **kwargs,
) -> PosteriorResult:
    """Run independent pCN chains and pool their draws.

    Chain c uses the seed derive_seed(seed, CHAIN, c); R-hat per coefficient
    is stored in diagnostics['rhat'].
    """
    if n_chains < 1:
        raise ConfigurationError(f"Need at least one chain, got {n_chains}")
    results = Parallel(n_jobs=n_jobs)(
        delayed(pcn_sample)(eig, params, data, link, seed=derive_seed(seed, Stage.CHAIN, c), **kwargs)
        for c in range(n_chains)
    )
    if n_chains == 1:
        return results[0]
    chains = [r.chain for r in results]
    pooled = np.concatenate(chains)
    rhat = gelman_rubin(chains)
    first = results[0]
    rate = float(np.mean([r.acceptance_rate for r in results]))
    warnings = [w for r in results for w in r.diagnostics.get("warnings", [])]
    return PosteriorResult(
        kind=MCMC_CHAIN,
        task=first.task,
        basis=first.basis,
        f_hat=_posterior_mean_field(first.basis, pooled, first.task, first.link),
        mean=pooled.mean(axis=0),
        cov=np.atleast_2d(np.cov(pooled.T)),
        chain=pooled,
        acceptance_rate=rate,
        n_iter=first.n_iter,
        burn_in=first.burn_in,
        thin=first.thin,
        beta_pcn=float(np.mean([r.beta_pcn for r in results])),
        seed=seed,
        link=first.link,
        diagnostics={
            "acceptance_rate": rate,
            "n_chains": n_chains,
            "rhat": rhat,
            "max_rhat": float(np.nanmax(rhat)) if np.any(np.isfinite(rhat)) else float("nan"),
            "warnings": warnings,
        },
    )


def empirical_norm(f: np.ndarray, g: np.ndarray, indices: np.ndarray) -> float:
    """sqrt((1/n) sum over labeled indices of (f - g)^2)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise DomainError("Empirical norm over an empty index set")
    if f.shape != g.shape:
        raise DimensionError(f"Vectors of lengths {f.shape} and {g.shape}")
    diff = f[idx] - g[idx]
    return float(math.sqrt(np.mean(diff * diff)))


def posterior_coefficient_draws(result: PosteriorResult, n_draws: Optional[int] = None, seed: int = 0) -> np.ndarray:
    """Coefficient samples: Gaussian draws for the exact posterior, the chain otherwise."""
    if result.kind == MCMC_CHAIN:
        return result.chain
    n_draws = config.POSTERIOR_DRAWS if n_draws is None else int(n_draws)
    chol = linalg.cholesky(result.cov, lower=True)
    z = make_rng(seed).standard_normal((n_draws, result.k))
    return result.mean + z @ chol.T


def posterior_distances(
    result: PosteriorResult,
    f0_values: np.ndarray,
    indices: np.ndarray,
    n_draws: Optional[int] = None,
    seed: int = 0,
) -> np.ndarray:
    """||f - f0||_n for every posterior sample f (probability scale for classification)."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise DomainError("Empirical norm over an empty index set")
    f0 = np.asarray(f0_values, dtype=float)
    if f0.shape[0] != result.basis.shape[0]:
        raise DimensionError(f"f0 has {f0.shape[0]} values for {result.basis.shape[0]} points")
    draws = posterior_coefficient_draws(result, n_draws, seed)
    fields = result.to_field_scale(result.basis[idx] @ draws.T)
    diff = fields - f0[idx][:, None]
    return np.sqrt(np.mean(diff * diff, axis=0))


def contraction_mass(
    result: PosteriorResult,
    f0_values: np.ndarray,
    radius: float,
    indices: np.ndarray,
    n_draws: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Fraction of posterior samples with ||f - f0||_n >= radius.

    Raises:
        DomainError: radius <= 0
    """
    if not radius > 0:
        raise DomainError(f"Radius must be positive, got {radius}")
    dist = posterior_distances(result, f0_values, indices, n_draws, seed)
    return float(np.mean(dist >= radius))


def hellinger_rash(f: np.ndarray, g: np.ndarray, indices: Optional[np.ndarray] = None) -> float:
    """Root average squared Hellinger distance between Bernoulli(f) and Bernoulli(g).

    Raises:
        DomainError: a probability at 0 or 1 (or outside)
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    g = np.asarray(g, dtype=float).reshape(-1)
    if indices is not None:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        f, g = f[idx], g[idx]
    if f.shape != g.shape:
        raise DimensionError(f"Vectors of lengths {f.size} and {g.size}")
    if f.size == 0:
        raise DomainError("Hellinger distance over an empty index set")
    for name, p in (("f", f), ("g", g)):
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise DomainError(f"{name} must lie strictly inside (0, 1)")
    terms = (np.sqrt(f) - np.sqrt(g)) ** 2 + (np.sqrt(1.0 - f) - np.sqrt(1.0 - g)) ** 2
    return float(math.sqrt(np.mean(terms)))


def graph_tikhonov_estimate(eig: EigenSystem, data: LabeledData, s: float, reg: float, k: Optional[int] = None) -> np.ndarray:
    """Minimizer of sum |Y_i - f(X_i)|^2 + reg f^T Delta^s f over span(psi_1..psi_k).

    With f = Psi a and unit L2(mu_N) eigenvectors the penalty is
    reg * N * sum lambda_i^s a_i^2.
    """
    if not reg > 0:
        raise ConfigurationError(f"Regularization must be positive, got {reg}")
    k = eig.k if k is None else int(k)
    if k > eig.k:
        raise DimensionError(f"Requested {k} eigenpairs but only {eig.k} are available")
    basis = eig.eigenvectors[:, :k]
    B = basis[data.indices]
    penalty = reg * eig.N * np.maximum(eig.eigenvalues[:k], 0.0) ** s
    lhs = B.T @ B + np.diag(penalty)
    try:
        coef = linalg.solve(lhs, B.T @ data.y, assume_a="pos")
    except linalg.LinAlgError as e:
        raise NumericalError(f"Tikhonov system is singular: {e}")
    return basis @ coef
