from typing import Dict
from enum import IntEnum, Enum
import math

class DataModelType(Enum):
    GAUSSIAN_SHIFT = "gaussian_shift"
    GAUSSIAN_MIXTURE = "gaussian_mixture"
    EMPIRICAL = "empirical"

class Architecture(Enum):
    PER_TIME_AFFINE = "per_time_affine"
    TIME_MLP = "time_mlp"

class LossNorm(Enum):
    H = "h" # Plain l2 over coefficients
    CM = "cm" # Cameron-Martin weighted, sum a^2 / C_ell

class Optimizer(Enum):
    SGD = "sgd"
    ADAMW = "adamw"

class MeasuredKind(Enum):
    EXACT = "exact" # Affine recursion oracle
    FITTED = "fitted" # Diagonal Gaussian fit to generated samples

class CheckStatus(Enum):
    PASS = "pass"
    FAIL = "fail"
    UNDEFINED = "undefined"

class Purpose(IntEnum):
    """
    Purpose component of the RNG stream key, never shared across purposes
    """
    PRIOR = 0
    DATA = 1
    FORWARD = 2
    TRAIN_PAIRS = 3
    TRAIN_INIT = 4
    GENERATE = 5
    VERIFY = 6
    H1 = 7
    SPECTRUM = 8
    TRAIN_SHUFFLE = 9

class ExitCode(IntEnum):
    SUCCESS = 0
    CHECK_FAILURE = 1
    CONFIG_ERROR = 2
    IO_ERROR = 3

FOUR_PI = 4 * math.pi

# Defaults for the run config
DEFAULT_SEED = 221
DEFAULT_KAPPA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_BAND_LIMIT = 8
DEFAULT_T = 8.0
DEFAULT_M = 160
DEFAULT_OUT_DIR = "out"

# Acceptance settings for the diagnostics
MAX_VERIFIED_STEP = 0.2
ORTHONORMALITY_TOL = 1e-10
SCORE_IDENTITY_TOL = 1e-10
MC_NUM_SE = 4.0
SPECTRUM_CI_LEVEL = 0.99
KL_CONTRACTION_TIMES = [0.5, 1.0, 2.0, 4.0, 8.0]
FD_STEP = 1e-3
LOSS_RATIO_TOL = 1.25 # Learned loss over Bayes loss
H1_ABS_TOL = 1e-6

# Chunk size for batched generation, does not affect the output
GENERATION_CHUNK = 512

# CSV headers
GRID_FIELD_COLUMNS = ["theta", "phi", "value"]
COEFF_FIELD_COLUMNS = ["ell", "m", "value"]
SPECTRUM_COLUMNS = ["ell", "C"]
SPECTRUM_REPORT_COLUMNS = ["ell", "C_true", "C_hat", "ci_lo", "ci_hi"]
TRAJECTORY_COLUMNS = ["sample_id", "t", "ell", "m", "value"]
LOSS_HISTORY_COLUMNS = ["epoch", "loss"]

# File names inside the output directory
CHECKPOINT_FILE = "model.json"
LOSS_HISTORY_FILE = "loss_history.csv"
REPORT_FILE = "report.json"
BOUND_REPORT_FILE = "bound_report.txt"
SPECTRUM_REPORT_FILE = "spectrum.csv"
FORWARD_DUMP_FILE = "forward.csv"
PATH_DUMP_FILE = "paths.csv"

SAMPLE_FILE_PREFIX: Dict[str, str] = {
    "prior": "prior",
    "generate": "generated",
}
