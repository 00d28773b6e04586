"""Static extended Kalman filter for generalized linear models."""

__version__ = "0.1.0"

from .models import GAUSSIAN_MODEL, LOGISTIC_MODEL, GlmModel  # noqa: E402
from .filters import EkfConfig, FilterState, Truncation, ekf_step, run_trajectory  # noqa: E402
from .datagen import DataProcess, ObservationStream, theta_star_preset  # noqa: E402
from .config import load_config, parse_config  # noqa: E402
from .harness import run_experiment  # noqa: E402
