import os

from dotenv import find_dotenv, load_dotenv

from cavity_perturb.logger import get_logger

logger = get_logger("cavity_perturb.config")

_dotenv_path = find_dotenv(usecwd=True)
if _dotenv_path:
    load_dotenv(_dotenv_path)
    logger.info("Loaded environment variables from %s", _dotenv_path)


def _env(name, default=None):
    v = os.getenv(name)
    return v if v is not None else default


# Hermite-Gauss capability
MAX_HERMITE_ORDER = int(_env("CAVITY_PERTURB_MAX_HERMITE_ORDER", "12"))
MAX_MOMENT_ORDER = int(_env("CAVITY_PERTURB_MAX_MOMENT_ORDER", "4"))

# Membrane validity
TILT_WARNING_THRESHOLD = float(_env("CAVITY_PERTURB_TILT_WARNING", "5e-3"))  # rad

# Eigen-solver acceptance
RESIDUAL_TOLERANCE = float(_env("CAVITY_PERTURB_RESIDUAL_TOLERANCE", "1e-10"))
DEGENERACY_TOLERANCE = float(_env("CAVITY_PERTURB_DEGENERACY_TOLERANCE", "1e-9"))

# Branch tracking
OVERLAP_THRESHOLD = float(_env("CAVITY_PERTURB_OVERLAP_THRESHOLD", "0.5"))
AMBIGUITY_MARGIN = float(_env("CAVITY_PERTURB_AMBIGUITY_MARGIN", "0.05"))
MAX_REFINEMENT_DEPTH = int(_env("CAVITY_PERTURB_MAX_REFINEMENT_DEPTH", "12"))
CONTINUATION_OVERLAP = float(_env("CAVITY_PERTURB_CONTINUATION_OVERLAP", "0.9"))
MAX_CONTINUATION_HALVINGS = int(_env("CAVITY_PERTURB_MAX_CONTINUATION_HALVINGS", "30"))

# Derivative fits
FIT_WINDOW_FRACTION = float(_env("CAVITY_PERTURB_FIT_WINDOW_FRACTION", "0.02"))  # of the wavelength
MIN_FIT_SAMPLES = int(_env("CAVITY_PERTURB_MIN_FIT_SAMPLES", "9"))
RESAMPLE_POINTS = int(_env("CAVITY_PERTURB_RESAMPLE_POINTS", "17"))
CROSSING_WINDOW_FACTOR = float(_env("CAVITY_PERTURB_CROSSING_WINDOW_FACTOR", "0.15"))

# Avoided-crossing acceptance
CROSSING_GAP_FRACTION = float(_env("CAVITY_PERTURB_CROSSING_GAP_FRACTION", "0.5"))  # of the bare family spacing
MODE_CONTENT_THRESHOLD = float(_env("CAVITY_PERTURB_MODE_CONTENT_THRESHOLD", "0.25"))
PAIRING_OVERLAP = float(_env("CAVITY_PERTURB_PAIRING_OVERLAP", "0.8"))

# Executor settings
THREADS_ENV = "CAVITY_PERTURB_THREADS"


def resolve_threads(value: int | None = None) -> int:
    """Explicit value, else CAVITY_PERTURB_THREADS, else the CPU count."""
    if value is not None:
        if value < 1:
            raise ValueError(f"thread count must be positive, got {value}")
        return value
    env_value = _env(THREADS_ENV)
    if env_value:
        threads = int(env_value)
        if threads < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {threads}")
        return threads
    return os.cpu_count() or 1
