import math

# ==============================================================================
# DISCRETIZATION
# ==============================================================================
DEFAULT_STEPS = 400                      # Bridge grid nodes for T=1
SUBGRID_POINTS = 8                       # Quadrature points per bridge-grid interval
RK4_MAX_STEP = 1e-3                      # Max RK4 step for the fundamental matrix ODE
FUNDAMENTAL_MIN_SUBSTEPS = 16

# ==============================================================================
# NUMERICAL TOLERANCES
# ==============================================================================
PD_TOLERANCE = 1e-10                     # Smallest eigenvalue > PD_TOLERANCE * trace / d
DELTA_MIN_FACTOR = 1e-12                 # Endpoint expansion when T - s < DELTA_MIN_FACTOR * T
SYMMETRY_TOLERANCE = 1e-12               # max |a - a'| accepted at integrator steps
ENDPOINT_MATCH_TOLERANCE = 1e-10         # |a~(T) - a(T, v)| counted as a mismatch above this
LOG_CLAMP = 700.0                        # exp() argument clamp for reweighting factors

# ==============================================================================
# MONTE CARLO DEFAULTS
# ==============================================================================
DEFAULT_CHUNK_SIZE = 500                 # Paths per worker chunk
KL_MIN_ESS_FRACTION = 0.01               # KL scan warns below 1% reference ESS
DENSITY_MIN_PER_BIN = 10                 # Expected samples per bandwidth window

# ==============================================================================
# TUNER DEFAULTS
# ==============================================================================
TUNER_ALPHA0 = 0.1
TUNER_GAMMA = 10.0
FD_RELATIVE_STEP = 1e-4                  # fd_step = FD_RELATIVE_STEP * (1 + |theta|)

# ==============================================================================
# ORACLE DEFAULTS
# ==============================================================================
ORACLE_EPSILON_FACTOR = 0.02             # eps = factor * sqrt(T) * ||sigma(T, v)||
ORACLE_MAX_DIM = 2
ORACLE_BATCH = 20000                     # Forward paths per rejection round

# ==============================================================================
# SINE EXAMPLE (b(x) = beta1 - beta2 sin(8x))
# ==============================================================================
SINE_EXAMPLE = {
    "beta1": 2.0,
    "beta2": 2.0,
    "frequency": 8.0,
    "sigma": 0.5,
    "u": 0.0,
    "v": math.pi / 2,
    "T": 1.0,
    "theta_tuned": 1.36,
}
