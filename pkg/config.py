import os
from dotenv import load_dotenv

load_dotenv()

# Truncation of the infinite photon-number sums
TAIL_EPSILON = float(os.getenv("WFH_SIM_TAIL_EPSILON", "1e-12"))
HARD_CAP = int(os.getenv("WFH_SIM_HARD_CAP", "256"))

# Working width of the exact interference kernel (bits, sign included)
KERNEL_INT_BITS = 128

# Distribution entries below this are dropped from mapping views
SPARSE_FLOOR = 1e-300
NORMALIZATION_TOLERANCE = 1e-9

# Classical-field model: real grid step and support window (in standard deviations)
CLASSICAL_GRID_STEP = 0.25
CLASSICAL_WINDOW_SIGMAS = 10.0

# Symmetric eigensolver
JACOBI_MAX_DIMENSION = 64
JACOBI_TOLERANCE = 1e-13
JACOBI_MAX_SWEEPS = 100

# Transition analysis
RESIDUAL_SUPPORT_THRESHOLD = 1e-12
TRANSITION_THRESHOLD = 6.7e-6  # S_classical level that defines alpha_sq_min
FIT_LOWER_CUT = 4.0  # only |alpha|^2 >= this enters the exponential fit
SCALING_ALPHA_SQ_GRID = [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0]

# Nonclassicality tests
MAX_OUTCOME = 6  # j, k, l in [0, 6]
BOOTSTRAP_RESAMPLES = 10

# Pulse binning
MIN_PULSE_RECORDS = 100
SMOOTHING_WINDOW = 3
PEAK_MIN_PROMINENCE = 0.01  # fraction of the tallest smoothed histogram bin

# Output formatting
SIGNIFICANT_DIGITS = 12

# Measured source and detector parameters plus the best-agreement mode overlap
PRESETS = {
    "table1": {
        "lambda_mag": 0.797,
        "eta_h": 0.395,
        "eta_c": 0.274,
        "eta_d": 0.352,
        "mode_overlap": 0.82,
    },
}

# Worker pool size for grid evaluations; empty means "available parallelism"
WFH_SIM_JOBS = os.getenv("WFH_SIM_JOBS", "")
DEFAULT_SEED = int(os.getenv("WFH_SIM_SEED", "12345"))
