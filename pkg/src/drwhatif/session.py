"""Session-level what-if state: a selected point, its edited feature
vector, active constraints, and the drag/edit/reset operations that tie
forward and backward projection together.

A session is single-writer: mutating calls are serialized by the caller
(the HTTP layer holds one lock per session). Reads between mutations are
safe. Snapshots of (working point, position) are kept in a bounded ring so
an edit history can be replayed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .backend import Backend, BackwardResult
from .constraints import ConstraintSet
from .dataset import Dataset, all_stats
from .errors import SessionError

HISTORY_CAP = 1024
DEFAULT_NEIGHBOR_K = 5
# Residual fraction of the plane width below which a drag target counts as
# reached exactly.
FEASIBLE_RESIDUAL_FRACTION = 1e-4


@dataclass
class DragResult:
    """What one drag attempt did: requested vs achieved, and why."""

    requested: np.ndarray
    achieved: np.ndarray
    delta_x: np.ndarray
    status: str
    residual: float
    violated_features: list[int] = field(default_factory=list)
    stale: bool = False
    moved: bool = False
    last_feasible: np.ndarray | None = None


class Session:
    def __init__(self, dataset: Dataset, backend: Backend, neighbor_k: int = DEFAULT_NEIGHBOR_K):
        if backend.d != dataset.d:
            raise SessionError(
                f"backend expects {backend.d} features, dataset has {dataset.d}",
                code="dim_mismatch",
            )
        self.dataset = dataset
        self.backend = backend
        self.layout = backend.layout(dataset)
        self.stats = all_stats(dataset)
        self.neighbor_k = neighbor_k
        self.constraints = ConstraintSet(dataset.d)
        self.selected: int | None = None
        self.working_point: np.ndarray | None = None
        self.position: np.ndarray | None = None
        self.last_feasible: np.ndarray | None = None
        self.history: deque = deque(maxlen=HISTORY_CAP)
        self.last_sequence: int | None = None

    # -- selection ---------------------------------------------------------

    def select(self, row: int) -> None:
        if not 0 <= row < self.dataset.n:
            raise SessionError(f"row {row} out of range 0..{self.dataset.n - 1}", code="bad_row")
        self.selected = row
        self.working_point = self.dataset.values[row].copy()
        self.position = self.layout.positions[row].copy()
        self.last_feasible = self.position.copy()
        self.constraints = ConstraintSet(self.dataset.d)
        self.history.clear()
        self.last_sequence = None

    def _require_selection(self) -> None:
        if self.selected is None:
            raise SessionError("no point selected", code="no_selection")

    @property
    def pristine_point(self) -> np.ndarray:
        self._require_selection()
        return self.dataset.values[self.selected]

    @property
    def pristine_position(self) -> np.ndarray:
        self._require_selection()
        return self.layout.positions[self.selected]

    def _snapshot(self) -> None:
        self.history.append((self.working_point.copy(), self.position.copy()))

    # -- forward projection ------------------------------------------------

    def set_feature(self, i: int, value: float) -> np.ndarray:
        """Edit one feature of the working point; returns the new position."""
        self._require_selection()
        if not 0 <= i < self.dataset.d:
            raise SessionError(f"feature {i} out of range 0..{self.dataset.d - 1}", code="bad_index")
        if not math.isfinite(value):
            raise SessionError(f"feature value must be finite, got {value!r}", code="non_finite_value")
        self.working_point[i] = float(value)
        self.position = np.asarray(self.backend.project_point(self.working_point), dtype=float)
        if not self.constraints.violations(self.working_point):
            self.last_feasible = self.position.copy()
        self._snapshot()
        return self.position.copy()

    # -- backward projection -----------------------------------------------

    def drag_point(self, target, sequence: int | None = None) -> DragResult:
        """Move the selected point toward a planar target under the active
        constraints. Stale sequence numbers are answered but change nothing;
        an infeasible constraint set likewise leaves the state untouched."""
        self._require_selection()
        target = np.asarray(target, dtype=float)
        if target.shape != (2,) or not np.all(np.isfinite(target)):
            raise SessionError("drag target must be a finite planar point", code="bad_target")

        if sequence is not None:
            if self.last_sequence is not None and sequence <= self.last_sequence:
                return DragResult(
                    requested=target,
                    achieved=self.position.copy(),
                    delta_x=np.zeros(self.dataset.d),
                    status=qp.OPTIMAL,
                    residual=0.0,
                    stale=True,
                    last_feasible=None if self.last_feasible is None else self.last_feasible.copy(),
                )
            self.last_sequence = sequence

        result = self.backend.backward(
            self.working_point, self.position, target, self.constraints
        )
        violated = self._interpret_violations(result)
        moved = False
        if result.status == qp.OPTIMAL:
            self.working_point = self.working_point + result.delta_x
            self.position = np.asarray(result.achieved, dtype=float).copy()
            if not violated:
                self.last_feasible = self.position.copy()
            moved = True
            self._snapshot()
        return DragResult(
            requested=target,
            achieved=self.position.copy(),
            delta_x=result.delta_x,
            status=result.status,
            residual=result.residual,
            violated_features=violated,
            moved=moved,
            last_feasible=None if self.last_feasible is None else self.last_feasible.copy(),
        )

    def feasibility_tolerance(self) -> float:
        return FEASIBLE_RESIDUAL_FRACTION * max(self.layout.width, 1e-12)

    def _interpret_violations(self, result: BackwardResult) -> list[int]:
        """Features whose constraints keep the requested target out of reach."""
        if result.violated:
            return list(result.violated)  # evaluative path (autoencoder)
        if result.status == qp.INFEASIBLE:
            bad = self.constraints.contradictory_features()
            return bad if bad else self.constraints.constrained_features()
        if result.status == qp.OPTIMAL and result.residual > self.feasibility_tolerance():
            return [i for i in result.binding if not self.constraints.entries[i].is_empty()]
        return []

    # -- restore -------------------------------------------------------------

    def reset_point(self) -> np.ndarray:
        """Back to the dataset row and its original layout position."""
        self._require_selection()
        self.working_point = self.dataset.values[self.selected].copy()
        self.position = self.layout.positions[self.selected].copy()
        self.last_feasible = self.position.copy()
        self._snapshot()
        return self.position.copy()

    # -- queries -------------------------------------------------------------

    def positions(self) -> np.ndarray:
        """Current planar positions: the fitted layout with the selected
        point at its (possibly moved) working position."""
        pos = self.layout.positions.copy()
        if self.selected is not None:
            pos[self.selected] = self.position
        return pos

    def nearest_neighbors(self, k: int | None = None) -> list[tuple[int, float]]:
        """k nearest rows to the selected point in the plane, ascending;
        excludes the point itself, ties broken by row index."""
        self._require_selection()
        if k is None:
            k = self.neighbor_k
        n = self.dataset.n
        if not 1 <= k <= n - 1:
            raise SessionError(f"k={k} out of range 1..{n - 1}", code="bad_k")
        pos = self.positions()
        deltas = pos - self.position
        dists = np.hypot(deltas[:, 0], deltas[:, 1])
        order = sorted((float(dists[i]), i) for i in range(n) if i != self.selected)
        return [(i, dist) for dist, i in order[:k]]

    def set_constraints(self, cs: ConstraintSet) -> None:
        if cs.d != self.dataset.d:
            raise SessionError(
                f"constraint set covers {cs.d} features, dataset has {self.dataset.d}",
                code="dim_mismatch",
            )
        cs.validate()
        self.constraints = cs

    def replay_history(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Final state according to the snapshot ring (None when empty)."""
        if not self.history:
            return None
        wp, pos = self.history[-1]
        return wp.copy(), pos.copy()
