"""Conditional density estimation with flows of tree-based CDF transforms."""
import os

# numba's default threading layer probes for TBB/OpenMP; workqueue is always present
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .exceptions import (ConfigError, CTFlowError, DataError, InvalidSplitError,  # noqa: E402
                         ModelFormatError, ModelVersionError, OutOfDomainError)
from .data import Dataset, NormalizationSpec, fit_normalizer, load_table, simulate_task  # noqa: E402
from .flow import Flow, PhaseSpec, TrainConfig, train_flow  # noqa: E402
from .rotation import RotationEnsemble, fit_rotation_ensemble, load_model, make_rotations  # noqa: E402
from .estimator import ConditionalTreeFlow, CubeScaler  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ConditionalTreeFlow", "CubeScaler", "Dataset", "NormalizationSpec", "fit_normalizer",
    "load_table", "simulate_task", "Flow", "PhaseSpec", "TrainConfig", "train_flow",
    "RotationEnsemble", "fit_rotation_ensemble", "load_model", "make_rotations",
    "CTFlowError", "ConfigError", "DataError", "InvalidSplitError", "ModelFormatError",
    "ModelVersionError", "OutOfDomainError",
]
