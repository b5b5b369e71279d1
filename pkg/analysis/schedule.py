"""Parameter scalings for connectivity, truncation and unlabeled sample size."""
import logging
import math
from typing import Dict

from models.field import FLAT_RIGOR, PAPER_RIGOR, ScheduleResult, check_smoothness
from utils.errors import ConfigurationError, DomainError, RangeError

logger = logging.getLogger(__name__)

GIVEN_N = "given_N"
GIVEN_n = "given_n"


def p_exponent(m: int) -> float:
    """p_m = 3/4 for m = 2, else 1/m."""
    return 0.75 if m == 2 else 1.0 / m


def alpha_s(m: int, s: float) -> float:
    """(6m+6)/(2s-3m+1) for s <= (9m+5)/2, else 1."""
    if s <= 4.5 * m + 2.5:
        return (6.0 * m + 6.0) / (2.0 * s - 3.0 * m + 1.0)
    return 1.0


def schedule_exponents(m: int, s: float, delta: float) -> Dict[str, tuple]:
    """(power, log-power) pairs of zeta(N), k(N) and N(n)."""
    p_m = p_exponent(m)
    a = alpha_s(m, s)
    tail = 4.0 * s - 6.0 * m + 2.0
    if m <= 4:
        q = m + 4.0 + delta
        return {
            "zeta": (-1.0 / q, p_m / 2.0),
            "k": (m / (q * (2.0 * s - 3.0 * m + 1.0) * a), -m * p_m / (tail * a)),
            "N": (q * a, q * p_m / 2.0),
        }
    return {
        "zeta": (-1.0 / (2.0 * m), p_m / 2.0),
        "k": (1.0 / (tail * a), -m * p_m / (tail * a)),
        "N": (2.0 * m * a, m * p_m),
    }


def _case_tag(m: int, s: float) -> str:
    dim = "m<=4" if m <= 4 else "m>=5"
    srange = "s<=(9m+5)/2" if s <= 4.5 * m + 2.5 else "s>(9m+5)/2"
    return f"{dim},{srange}"


def _scaled(constant: float, value: float, exps: tuple) -> float:
    """constant * value^a * (log value)^b computed in log space; inf on overflow."""
    power, log_power = exps
    log_value = math.log(value)
    log_out = math.log(constant) + power * log_value + log_power * math.log(log_value)
    try:
        return math.exp(log_out)
    except OverflowError:
        return math.inf


def schedule(
    m: int,
    s: float,
    delta: float,
    mode: str,
    value: float,
    rigor: str = PAPER_RIGOR,
    zeta_constant: float = 1.0,
    k_constant: float = 1.0,
    n_constant: float = 1.0,
) -> ScheduleResult:
    """Evaluate the connectivity / truncation / sample-size scalings.

    Args:
        m: Intrinsic dimension
        s: Prior smoothness
        delta: Slack exponent (> 0)
        mode: 'given_N' (returns zeta and k) or 'given_n' (returns N_n)
        value: N or n (> 1)
        rigor: 'paper' requires s > 3m/2 - 1/2, 'flat' requires s > m
        zeta_constant, k_constant, n_constant: Proportionality constants

    Raises:
        RangeError: s outside the admissible range
    """
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta}")
    check_smoothness(m, s, rigor)
    flags = []
    if 2.0 * s - 3.0 * m + 1.0 <= 0:
        raise RangeError(
            f"No scaling is defined for s={s} <= (3m-1)/2 (m={m}); "
            f"flat mode only relaxes the prior-range check"
        )
    if rigor == FLAT_RIGOR:
        flags.append("flat_mode_uses_standard_schedule")
    if not value > 1:
        raise DomainError(f"Schedule needs a sample size > 1, got {value}")
    for name, const in (("zeta", zeta_constant), ("k", k_constant), ("N", n_constant)):
        if not const > 0:
            raise ConfigurationError(f"{name} constant must be positive, got {const}")

    exps = schedule_exponents(m, s, delta)
    common = dict(
        m=m,
        s=float(s),
        delta=float(delta),
        mode=mode,
        value=float(value),
        alpha_s=alpha_s(m, s),
        p_m=p_exponent(m),
        case=_case_tag(m, s),
        exponents=exps,
        rigor=rigor,
        flags=tuple(flags),
    )
    if mode == GIVEN_N:
        zeta = _scaled(zeta_constant, value, exps["zeta"])
        k_real = _scaled(k_constant, value, exps["k"])
        k = int(min(max(1, round(k_real)), int(value) - 1))
        return ScheduleResult(zeta=zeta, k=k, k_real=k_real, **common)
    if mode == GIVEN_n:
        power, log_power = exps["N"]
        log_N = math.log(n_constant) + power * math.log(value) + log_power * math.log(math.log(value))
        try:
            N_n = math.exp(log_N)
        except OverflowError:
            N_n = math.inf
        return ScheduleResult(N_n=N_n, log_N_n=log_N, **common)
    raise ConfigurationError(f"Unknown schedule mode: {mode!r}")


def satisfies_scaling_constraints(result: ScheduleResult) -> Dict[str, bool]:
    """Check the growth constraints on the exponents of N.

    zeta >~ N^(-1/(m+4+delta)), k <~ N^((1-delta)/m) and zeta k^(2/m) <~ 1.
    Equal powers count as satisfied when the log-powers comply.
    """
    m, delta = result.m, result.delta
    z_pow, z_log = result.exponents["zeta"]
    k_pow, k_log = result.exponents["k"]
    floor = -1.0 / (m + 4.0 + delta)
    ceiling = (1.0 - delta) / m
    prod_pow = z_pow + 2.0 * k_pow / m
    prod_log = z_log + 2.0 * k_log / m
    eps = 1e-12
    return {
        "zeta_lower": z_pow > floor + eps or (abs(z_pow - floor) <= eps and z_log >= 0),
        "k_upper": k_pow < ceiling - eps or (abs(k_pow - ceiling) <= eps and k_log <= 0),
        "zeta_k_product": prod_pow < -eps or (abs(prod_pow) <= eps and prod_log <= 0),
    }


def capped_sample_size(n: int, gamma: float, n_max: int, constant: float = 1.0) -> int:
    """N = min(constant * n^gamma, N_max), rounded to an integer >= n."""
    if not gamma > 0:
        raise ConfigurationError(f"Capped schedule requires gamma > 0, got {gamma}")
    raw = constant * float(n) ** gamma
    return int(max(n, min(round(raw), n_max)))


def contraction_rate(n: int, s: float, beta: float, m: int) -> float:
    """Reference rate n^(-r/(2s)) (log n)^(r/(4s-2m)) with r = min(s - m/2, beta)."""
    if n < 2:
        raise DomainError(f"Contraction rate needs n >= 2, got {n}")
    r = min(s - m / 2.0, beta)
    return float(n ** (-r / (2.0 * s)) * math.log(n) ** (r / (4.0 * s - 2.0 * m)))


def minimax_exponent(beta: float, m: int) -> float:
    """Exponent -beta/(2 beta + m) of the minimax rate (-1/2 for infinite beta)."""
    if math.isinf(beta):
        return -0.5
    return -beta / (2.0 * beta + m)
