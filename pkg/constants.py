import math

# ============================================================================
# NUMERIC TOLERANCES
# ============================================================================

HS_RELATIVE_TOL = 1e-12          # hs_norm² vs Σ column norms²
OPERATOR_NORM_SLACK = 1e-10      # realized ‖B‖ ≤ 1 + slack
UNIT_NORM_TOL = 1e-12            # net points and net vectors
JACOBI_OFFDIAG_TOL = 1e-12       # off(G)_F < tol · ‖G‖_F
JACOBI_MAX_SWEEPS = 100

# Power iteration defaults
POWER_TOL = 1e-10
POWER_MAX_ITER = 10000
POWER_ROUNDOFF = 1e-14          # quotient changes below this are round-off

# Desk-scale guards
FULL_SVD_GUARD = 2000            # min(rows, cols) for the Jacobi solver
SPHERE_NET_MAX_DIM = 14
LEVEL_NET_MAX_COUNT = 10 ** 6

# ============================================================================
# DEFAULT ABSOLUTE CONSTANTS (the theory only asserts their existence)
# ============================================================================

DEFAULT_C0_GAUSS = 0.5           # Gaussian concentration exp(-c0 t² / L²)
DEFAULT_C_MOMENTS = 1.0 / 8.0    # moments-to-tails 2m·exp(-c t²)
DEFAULT_C0_EPS = 1.0             # C0(eps) of the final column split
DEFAULT_C_SPARSE = 0.25          # c of the sparse vector budget
DEFAULT_MOMENT_EPS = 0.5         # eps of the (4+eps)-th moment

# Σ_{k≥1} 2^(1-k/2) = 2(√2 + 1), the dyadic tail of the conditional expectation bound
CONDITIONAL_EXP_CONSTANT = 1.0 + 2.0 * (math.sqrt(2.0) + 1.0)

# ============================================================================
# SPHERE NET CONSTRUCTION
# ============================================================================

NET_CLOUD_SIZE = 20000           # random cloud for greedy farthest-point
NET_CLOUD_SIZE_HIGH_DIM = 60000  # used once n > 4
NET_RADIUS_FACTOR = 0.8          # greedy covers the cloud at 0.8·eps
NET_AUDIT_POINTS = 1000
NET_AUDIT_CHUNK = 1000          # audit points per distance block

# ============================================================================
# RNG STREAMS
# ============================================================================

# Sub-stream tags for derive_seed(trial_seed, tag) inside one trial
STREAM_A = 1
STREAM_B = 2
STREAM_POWER = 3
STREAM_SIGNS = 4
STREAM_GAUSS = 5
STREAM_VECTOR = 6

# Indices at or above this offset seed the fixed per-dims factors, never a trial
FACTOR_SEED_OFFSET = 2 ** 40

# ============================================================================
# REPORT FORMAT
# ============================================================================

REPORT_COLUMNS = ['experiment', 'm', 'n', 'N', 'trial', 'seed', 'measured', 'normalizer', 'ratio']
FLOAT_FORMAT = '%.17g'
QUANTILE_GRID = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99]

# Exit codes of the CLI
EXIT_PASS = 0
EXIT_CEILING = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
