"""Left-trivialized linearization of moving-base multibody dynamics."""

from .derivatives import IdJacobians, dXv_dH, did_dH, did_dr, did_ds, did_dv, id_jacobians
from .dynamics import (
    GRAVITY,
    DynamicsWorkspace,
    ExtendedTorque,
    bias_vector,
    consistent_base_acceleration,
    eidamb,
    forward_dynamics,
    immamb,
    inverse_dynamics,
    mass_matrix,
)
from .findiff import ErrorReport, FdConfig, error_metrics, fd_forward_dynamics_jacobians, parametric_study, run_validation
from .linearization import LinearizationMatrices, input_matrix, linearize, state_matrix
from .model import (
    JointType,
    ModelError,
    ModelParseError,
    MultibodyModel,
    SystemState,
    build_test_system,
    dump_model,
    load_model,
    random_model,
    random_state,
    randomize_parameters,
)
from .spatial import Pose, se3_exp, se3_log

__version__ = "0.1.0"
