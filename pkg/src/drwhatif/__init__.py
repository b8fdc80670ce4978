"""What-if engine for 2-D dimensionality reductions.

Fit a reduction (PCA or a small autoencoder) on tabular data, then project
hypothetical feature edits forward into the plane, drag planar positions
backward into feature space under equality/box constraints, and derive
prolines and feasibility maps that make the reduced axes readable.
"""

from .autoencoder import AutoencoderModel, gradient_check, train
from .backend import AutoencoderBackend, BackwardResult, PcaBackend, make_backend
from .constraints import ConstraintSet, FeatureConstraint
from .dataset import Dataset, FeatureStats, all_stats, feature_stats, load_csv
from .errors import ConstraintError, DataError, EngineError, ModelError, SessionError
from .feasibility import FeasibilityMap, PositionCheck, check_position, compute_map
from .pca import (
    Layout,
    PcaModel,
    backward_unconstrained,
    fit_pca,
    forward_project,
    project_all,
    project_point,
)
from .prolines import Proline, ProjectionMark, build_all_prolines, build_proline, projection_marks
from .qp import QpProblem, QpSolution, solve
from .session import DragResult, Session

__version__ = "0.1.0"

__all__ = [
    "AutoencoderBackend",
    "AutoencoderModel",
    "BackwardResult",
    "ConstraintError",
    "ConstraintSet",
    "DataError",
    "Dataset",
    "DragResult",
    "EngineError",
    "FeasibilityMap",
    "FeatureConstraint",
    "FeatureStats",
    "Layout",
    "ModelError",
    "PcaBackend",
    "PcaModel",
    "PositionCheck",
    "Proline",
    "ProjectionMark",
    "QpProblem",
    "QpSolution",
    "Session",
    "SessionError",
    "all_stats",
    "backward_unconstrained",
    "build_all_prolines",
    "build_proline",
    "check_position",
    "compute_map",
    "feature_stats",
    "fit_pca",
    "forward_project",
    "gradient_check",
    "load_csv",
    "make_backend",
    "project_all",
    "project_point",
    "projection_marks",
    "solve",
    "train",
]
