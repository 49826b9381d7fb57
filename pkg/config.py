"""
Configuration Module for GraphROM
=================================
Contains all constants, tolerances, presets, and column names used throughout the package.
"""

# =========================
# App Configuration
# =========================
BRAND_NAME = "GraphROM"
BRAND_TAGLINE = "Non-local calculus on graphs and reduced-order model discovery"

# =========================
# Numerical Tolerances
# =========================
MOMENT_RESIDUAL_TOL = 1e-9      # absolute residual of the rescaled moment system
RANK_TOL_FACTOR = 1.0           # multiplies max(d, q) * eps * sigma_max
STENCIL_WEIGHT_LIMIT = 1e3     # max |a| before a stencil is regrown by conditioning
ERROR_FLOOR = 1e-12             # errors below this are dropped before slope fits
MIN_STUDY_MESHES = 4            # successive halvings required for a slope fit
ZERO_DERIVATIVE_TOL = 1e-9      # |D| below this (relative) marks a dead Taylor column
TIE_RADIUS_SLACK = 1e-12        # relative slack on KD-tree ball queries
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50

# =========================
# Capacity
# =========================
MAX_POINT_COUNT = 2_000_000
KDTREE_MIN_POINTS = 512         # below this, brute-force sorting is used

# =========================
# Randomness
# =========================
DEFAULT_SEED = 20240607
POLY_COEF_LOW = -1.0
POLY_COEF_HIGH = 1.0

# =========================
# Column Names
# =========================
COORD_PREFIX = "x"
ROLE_COL = "role"
ROLE_TRAIN = "train"
ROLE_TEST = "test"
TIME_COL = "t"
TRAJECTORY_COL = "trajectory"
PHI_MEAN_COL = "phi_mean"
PSI_COL = "Psi"
MOBILITY_COL = "mobility"
LAMBDA_COL = "lambda"

# =========================
# Allen-Cahn Defaults
# =========================
AC_DOMAIN_LENGTH = 1.0
AC_GRID_NODES = 128
AC_TIME_STEP = 1e-2
AC_STEPS = 386                  # 387 stored states per trajectory
AC_DEFAULT_MOBILITY = 1e-3
AC_DEFAULT_LAMBDA = 1.0
AC_IC_MODES = 4                 # cosine modes in the random initial condition
AC_IC_AMPLITUDE = 0.4
AC_ROM_STENCIL_ORDER = 2        # accuracy order for d Psi / d phi_mean

# "paper16" trajectory preset: 4 mobilities x 2 gradient coefficients x 2 seeded initial conditions
PRESET_MOBILITIES = [1e-3, 2e-3, 5e-3, 1e-2]
PRESET_LAMBDAS = [0.5, 1.0]
PRESET_IC_COUNT = 2

# =========================
# Regression Defaults
# =========================
DEFAULT_RIDGE_LAMBDA = 1e-17
ROM_LOSS_FLOOR = 1e-6          # relative to the target RMS; smaller losses are solver noise
DEFAULT_LOSS_WEIGHTS = {"l1": 0.0, "l2": 1.0, "linf": 0.0}

# =========================
# Output File Names
# =========================
EFFECTIVE_CONFIG_FILE = "effective_config.json"
MANIFEST_FILE = "manifest.json"
TRAJECTORY_BUNDLE_FILE = "trajectories.parquet"
CONFIG_SCHEMA_FILE = "config_schema.json"
STENCIL_FILE = "stencils.json"
OPERATOR_FILE = "operator.csv"
ERROR_STUDY_FILE = "errors.csv"
SLOPES_FILE = "slopes.json"
STEPWISE_FILE = "stepwise.json"
LOSS_CURVE_FILE = "loss_curve.csv"
BASELINE_FILE = "gaussian_baseline.csv"

# =========================
# Exit Codes
# =========================
EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
