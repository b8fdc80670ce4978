"""Backend abstraction: one interface over the linear and autoencoder
reductions so sessions, prolines and feasibility maps share a single code
path.

A backend maps feature vectors to planar positions (project), turns feature
edits into planar moves (forward) and planar moves back into feature edits
(backward). The linear backward solve goes through the box/equality QP; the
autoencoder backward is a decode followed by an evaluative constraint check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qp
from .autoencoder import AutoencoderModel
from .constraints import ConstraintSet
from .dataset import Dataset
from .errors import ModelError
from .pca import Layout, PcaModel, backward_unconstrained, forward_project, project_point


@dataclass
class BackwardResult:
    """Outcome of one backward projection against a constraint set."""

    delta_x: np.ndarray
    requested: np.ndarray  # target position
    achieved: np.ndarray  # position actually reachable
    residual: float  # |achieved - requested|
    status: str  # qp.OPTIMAL / qp.INFEASIBLE / qp.ITERATION_LIMIT
    binding: list[int] = field(default_factory=list)
    violated: list[int] = field(default_factory=list)  # constraint-breaking features
    kkt_violation: float = 0.0


class PcaBackend:
    kind = "pca"

    def __init__(self, model: PcaModel):
        self.model = model

    @property
    def d(self) -> int:
        return self.model.d

    def project_point(self, x: np.ndarray) -> np.ndarray:
        return project_point(self.model, x)

    def layout(self, ds: Dataset) -> Layout:
        return Layout.from_positions(project_point(self.model, ds.values))

    def forward_delta(self, x: np.ndarray, delta_x: np.ndarray) -> np.ndarray:
        # linear: independent of the base point
        return forward_project(self.model, delta_x)

    def project_feature_sweep(self, base: np.ndarray, i: int, values: np.ndarray) -> np.ndarray:
        """Positions of `base` with feature i swept over `values`. Linear in
        the feature, so this is a rank-1 update of the base position."""
        base = np.asarray(base, dtype=float)
        base_pos = self.project_point(base)
        row = self.model.components[i]
        if self.model.standardize:
            row = row / self.model.scale[i]
        return base_pos + np.outer(np.asarray(values, dtype=float) - base[i], row)

    def backward(
        self,
        x: np.ndarray,
        position: np.ndarray,
        target: np.ndarray,
        constraints: ConstraintSet | None = None,
        ridge: float = qp._DEFAULT_RIDGE,
    ) -> BackwardResult:
        """Constrained least-squares lift of the move `target - position`.

        The QP runs in standardized delta units when the model was fit with
        standardization, which keeps the unconstrained limit identical to
        `backward_unconstrained`.
        """
        position = np.asarray(position, dtype=float)
        target = np.asarray(target, dtype=float)
        delta_y = target - position
        scale = self.model.scale if self.model.standardize else None

        if constraints is None or constraints.is_empty():
            delta_x = backward_unconstrained(self.model, delta_y)
            achieved = position + delta_y
            return BackwardResult(
                delta_x=delta_x,
                requested=target,
                achieved=achieved,
                residual=0.0,
                status=qp.OPTIMAL,
            )

        problem = constraints.to_qp(self.model.components, delta_y, x, scale=scale)
        sol = qp.solve(problem)
        delta_u = sol.delta_x
        delta_x = delta_u * scale if scale is not None else delta_u
        achieved = position + delta_u @ self.model.components
        return BackwardResult(
            delta_x=delta_x,
            requested=target,
            achieved=achieved,
            residual=sol.residual,
            status=sol.status,
            binding=sol.binding,
            kkt_violation=sol.kkt_violation,
        )


class AutoencoderBackend:
    kind = "autoencoder"

    def __init__(self, model: AutoencoderModel):
        self.model = model

    @property
    def d(self) -> int:
        return self.model.d

    def project_point(self, x: np.ndarray) -> np.ndarray:
        return self.model.encode(x)

    def layout(self, ds: Dataset) -> Layout:
        return Layout.from_positions(self.model.encode(ds.values))

    def forward_delta(self, x: np.ndarray, delta_x: np.ndarray) -> np.ndarray:
        return self.model.encode(np.asarray(x, dtype=float) + delta_x) - self.model.encode(x)

    def project_feature_sweep(self, base: np.ndarray, i: int, values: np.ndarray) -> np.ndarray:
        base = np.asarray(base, dtype=float)
        pts = np.tile(base, (len(values), 1))
        pts[:, i] = values
        return self.model.encode(pts)

    def backward(
        self,
        x: np.ndarray,
        position: np.ndarray,
        target: np.ndarray,
        constraints: ConstraintSet | None = None,
        ridge: float = qp._DEFAULT_RIDGE,
    ) -> BackwardResult:
        """Decode the target directly; constraints are checked on the decoded
        point, never re-optimized (decoders are not exact inverses, so the
        achieved position is the re-encoded decode)."""
        x = np.asarray(x, dtype=float)
        target = np.asarray(target, dtype=float)
        new_x = self.model.decode(target)
        achieved = self.model.encode(new_x)
        violated = [] if constraints is None else constraints.violations(new_x)
        return BackwardResult(
            delta_x=new_x - x,
            requested=target,
            achieved=achieved,
            residual=float(np.linalg.norm(achieved - target)),
            status=qp.OPTIMAL,
            binding=list(violated),
            violated=list(violated),
        )


Backend = PcaBackend | AutoencoderBackend


def make_backend(model) -> Backend:
    if isinstance(model, PcaModel):
        return PcaBackend(model)
    if isinstance(model, AutoencoderModel):
        return AutoencoderBackend(model)
    raise ModelError(f"unsupported model type {type(model).__name__}", code="bad_model")
