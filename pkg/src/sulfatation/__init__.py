"""Two-scale reaction-diffusion simulation of sulfate attack on concrete sewer pipes."""

__version__ = "0.1.0"

from .config import RunConfig, default_config, load_config  # noqa: E402
from .coupled import CoupledState, initial_state, integrate  # noqa: E402
from .postprocess import front_position, kink_metrics, ph_profile  # noqa: E402

__all__ = [
    "CoupledState",
    "RunConfig",
    "default_config",
    "front_position",
    "initial_state",
    "integrate",
    "kink_metrics",
    "load_config",
    "ph_profile",
]
