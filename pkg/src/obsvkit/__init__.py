"""Numerical observability analysis of vision- and lidar-aided inertial navigation."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    GRAVITY,
    PZ_MIN,
    ImuInput,
    accel_field,
    camera_observe,
    drift_field,
    feature_in_imu,
    full_field,
    gyro_field,
    lidar_observe,
)
from .errors import (  # noqa: E402
    ChartExitError,
    CheiralityError,
    HypothesisViolation,
    InvalidConfig,
    JacobianDomainError,
    ObsvkitError,
)
from .lie import InputSchedule, Segment, flow, flow_jacobian, lie_bracket, lie_derivative, numeric_jacobian  # noqa: E402
from .observability import (  # noqa: E402
    analytic_lins_rows,
    analytic_vins_rows,
    build_observability_matrix,
    constraint_matrix,
    projection_identity_residual,
    nullspace,
    structural_blocks,
    theoretical_null_basis,
    verify_theorems,
)
from .ocvins import coordinate_transfer_check, n4, verify_brackets, verify_flow_invariance  # noqa: E402
from .scenario import Scenario, perturb, sample_scenario  # noqa: E402
from .state import State, cgr_rotation, jac_s_wrt_theta, jac_theta_wrt_s, skew  # noqa: E402

__all__ = [
    "ChartExitError",
    "CheiralityError",
    "GRAVITY",
    "HypothesisViolation",
    "ImuInput",
    "InputSchedule",
    "InvalidConfig",
    "JacobianDomainError",
    "ObsvkitError",
    "PZ_MIN",
    "Scenario",
    "Segment",
    "State",
    "accel_field",
    "analytic_lins_rows",
    "analytic_vins_rows",
    "build_observability_matrix",
    "camera_observe",
    "cgr_rotation",
    "constraint_matrix",
    "coordinate_transfer_check",
    "drift_field",
    "feature_in_imu",
    "flow",
    "flow_jacobian",
    "full_field",
    "gyro_field",
    "jac_s_wrt_theta",
    "jac_theta_wrt_s",
    "lidar_observe",
    "lie_bracket",
    "lie_derivative",
    "n4",
    "nullspace",
    "numeric_jacobian",
    "perturb",
    "projection_identity_residual",
    "sample_scenario",
    "skew",
    "structural_blocks",
    "theoretical_null_basis",
    "verify_brackets",
    "verify_flow_invariance",
    "verify_theorems",
    "__version__",
]
