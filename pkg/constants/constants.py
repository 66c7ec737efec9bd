"""Consolidated constants for the MCML toolkit."""

import os
from dotenv import load_dotenv

# Load optional logging settings from a .env file next to the project root
load_dotenv(os.path.join(os.path.dirname(__file__), '..', '.env'))

# ============================================================================
# APPLICATION CONSTANTS
# ============================================================================

# Logging only; nothing below changes a computed value
LOG_LEVEL = os.getenv("MCML_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("MCML_LOG_FILE") or None
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# CLI exit codes
EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_ESTIMATION_ERROR = 3

# ============================================================================
# OPTIMISER DEFAULTS
# ============================================================================

# Tolerance on the sup-norm of the 1/n-scaled score
DEFAULT_GRAD_TOL = 1e-8
DEFAULT_MAX_ITER = 100
DEFAULT_STEP_HALVING_MAX = 30
# Newton step (sup-norm) below which a small score counts as converged
DEFAULT_STEP_TOL = 1e-4
# ||theta||_inf above this means the maximiser escaped to infinity
DEFAULT_DIVERGENCE_BOUND = 50.0
# Relative slack when comparing objective values during step halving
VALUE_DECREASE_SLACK = 1e-12

# ============================================================================
# NUMERICAL CONSTANTS
# ============================================================================

EIGEN_FLOOR = 1e-12
SYMMETRY_RTOL = 1e-10
# Largest lattice (sites) for which the support is enumerated
MAX_SUPPORT_SITES = 20

# ============================================================================
# EXPERIMENT DEFAULTS
# ============================================================================

DEFAULT_LEVEL = 0.95
DEFAULT_N = 10_000
DEFAULT_M = 10_000
DEFAULT_REPLICATIONS = 1000
DEFAULT_WORKERS = 1
# More excluded replications than this flags the report invalid
MAX_EXCLUDED_FRACTION = 0.01
SEED_UPPER_BOUND = 2 ** 64

# Stream roles for (seed, replication, role) keyed generators
ROLE_DATA = 0
ROLE_MC = 1
ROLE_JOINT_MC = 2

# ============================================================================
# MODEL / FILE FORMAT KEYS
# ============================================================================

MODEL_KIND_TOY = 'toy'
MODEL_KIND_AUTOLOGISTIC = 'autologistic'
MODEL_KIND_FINITE = 'finite'

INSTRUMENTAL_MODEL_AT = 'model_at'
INSTRUMENTAL_UNIFORM = 'uniform'

NORMING_EXACT = 'exact'
NORMING_MC = 'mc'

RESPONSE_PREFIX = 'y'
COVARIATE_PREFIX = 'x'

REPORT_KIND_FIT = 'fit'
REPORT_KIND_COVERAGE = 'coverage'
REPORT_KIND_PSI_SWEEP = 'psi-sweep'
REPORT_KIND_COMPARE_SCHEMES = 'compare-schemes'
RECORDS_CSV_SUFFIX = '.records.csv'
