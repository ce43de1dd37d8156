"""Path-following control workbench for a scale ground vehicle."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    ControlCommand,
    IntegrationDivergedError,
    VehicleParams,
    VehicleState,
    alpha_hold,
    motor_torque,
    step,
    wrap_angle,
)
from .paths import (  # noqa: F401
    ErrorState,
    ReferencePath,
    ReferencePoint,
    build_path,
    error_state,
    reference_point,
)
