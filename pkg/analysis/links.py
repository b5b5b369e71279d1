"""Link functions mapping the latent field to class probabilities."""
import numpy as np
from scipy.special import expit, log_expit, logit
from scipy.stats import norm

from models.posterior import LinkFunction
from utils.errors import UnsupportedError


def _logistic_derivative(x: np.ndarray) -> np.ndarray:
    p = expit(x)
    return p * (1.0 - p)


def logistic() -> LinkFunction:
    """Logistic link 1 / (1 + exp(-x))."""
    return LinkFunction(
        name="logistic",
        forward=expit,
        inverse=logit,
        derivative=_logistic_derivative,
        log_forward=log_expit,
        log_complement=lambda x: log_expit(-np.asarray(x, dtype=float)),
    )


def probit() -> LinkFunction:
    """Standard normal CDF link."""
    return LinkFunction(
        name="probit",
        forward=norm.cdf,
        inverse=norm.ppf,
        derivative=norm.pdf,
        log_forward=norm.logcdf,
        log_complement=norm.logsf,
    )


_LINKS = {
    "logistic": logistic,
    "logit": logistic,
    "probit": probit,
}


def get_link(name: str) -> LinkFunction:
    """Resolve a link by name."""
    factory = _LINKS.get(name.strip().lower())
    if factory is None:
        raise UnsupportedError(f"Unknown link function: {name!r} (choose from {sorted(set(_LINKS))})")
    return factory()


def link_ratio(link: LinkFunction, grid: np.ndarray) -> np.ndarray:
    """F'(x) / (F(x)(1 - F(x))) on a grid; identically 1 for the logistic link."""
    x = np.asarray(grid, dtype=float)
    p = link.forward(x)
    return link.derivative(x) / (p * (1.0 - p))
