"""Physics-augmented neural network models for transversely isotropic magneto-active composites."""

from .errors import ConfigurationError, ContractViolation, InvalidDeformationError, SingularTensorError
from .materials import MU0, OracleModel, OracleParams, derived_fields
from .pann import PANNModel, model_predict
from .training import TrainConfig, multi_restart_select, r2_table, train_two_stage

__version__ = "0.1.0"

__all__ = [
    "MU0",
    "ConfigurationError",
    "ContractViolation",
    "InvalidDeformationError",
    "SingularTensorError",
    "OracleModel",
    "OracleParams",
    "PANNModel",
    "TrainConfig",
    "derived_fields",
    "model_predict",
    "multi_restart_select",
    "r2_table",
    "train_two_stage",
]
