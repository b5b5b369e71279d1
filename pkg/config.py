"""Configuration settings for graph-prior experiments."""
import os
from dotenv import load_dotenv

load_dotenv()

VERSION = "0.1.0"


def get_env_int(name: str, default: str) -> int:
    """Safely get an integer environment variable."""
    val = os.getenv(name, default).strip()
    if not val:
        return int(default)
    try:
        return int(float(val))
    except ValueError:
        print(f"[WARN] Invalid integer for {name}: '{val}'. Using default: {default}")
        return int(float(default))


def get_env_float(name: str, default: str) -> float:
    """Safely get a float environment variable."""
    val = os.getenv(name, default).strip()
    if not val:
        return float(default)
    try:
        return float(val)
    except ValueError:
        print(f"[WARN] Invalid float for {name}: '{val}'. Using default: {default}")
        return float(default)


def get_env_bool(name: str, default: str) -> bool:
    """Read a true/false environment variable."""
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


# Output
# Root directory for per-run result folders (config files may name a subdirectory)
OUTPUT_ROOT = os.getenv("GRAPHPRIOR_OUTPUT_ROOT", "results").strip() or "results"
LOG_LEVEL = os.getenv("GRAPHPRIOR_LOG_LEVEL", "INFO").strip().upper() or "INFO"

# Resource limits
MAX_GRAPH_NNZ = get_env_int("GRAPHPRIOR_MAX_GRAPH_NNZ", "200000000")  # stored entries of H
MODE_TABLE_SIZE = get_env_int("GRAPHPRIOR_MODE_TABLE_SIZE", "4096")  # continuum eigenpairs available
REFERENCE_GRID_SIZE = get_env_int("GRAPHPRIOR_REFERENCE_GRID_SIZE", "100000")

# Eigensolver
EIGEN_TOL = get_env_float("GRAPHPRIOR_EIGEN_TOL", "1e-10")
EIGEN_MAXITER = get_env_int("GRAPHPRIOR_EIGEN_MAXITER", "10000")

# Model defaults
SIGMA2 = get_env_float("GRAPHPRIOR_SIGMA2", "0.01")  # regression noise variance (known)
PRIOR_SCALE = get_env_float("GRAPHPRIOR_PRIOR_SCALE", "1.0")
CONTINUUM_TAIL_TOL = get_env_float("GRAPHPRIOR_CONTINUUM_TAIL_TOL", "1e-3")

# Proportionality constants of the asymptotic schedules
ZETA_CONSTANT = get_env_float("GRAPHPRIOR_ZETA_CONSTANT", "1.0")
K_CONSTANT = get_env_float("GRAPHPRIOR_K_CONSTANT", "1.0")
N_CONSTANT = get_env_float("GRAPHPRIOR_N_CONSTANT", "1.0")

# pCN sampler
PCN_BETA = get_env_float("GRAPHPRIOR_PCN_BETA", "0.2")
PCN_TARGET_ACCEPTANCE = get_env_float("GRAPHPRIOR_PCN_TARGET_ACCEPTANCE", "0.25")
PCN_ACCEPTANCE_BAND = (0.05, 0.6)

# Monte Carlo
POSTERIOR_DRAWS = get_env_int("GRAPHPRIOR_POSTERIOR_DRAWS", "2000")
N_JOBS = get_env_int("GRAPHPRIOR_N_JOBS", "1")
