"""Feasibility maps: sample the projection plane on a regular grid and mark
which planar targets the selected point can reach under the active
constraints.

A cell is feasible when the constrained backward projection aimed at its
center comes back optimal with a residual below tolerance, evaluated from
the pristine working point. Cells are independent, so the mask is
deterministic regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp
from .session import Session

DEFAULT_RESOLUTION = (10, 10)
BBOX_EXPANSION = 0.05  # grid covers the layout bounding box grown by 5%

DIAG_UNSATISFIABLE = "constraints_unsatisfiable"


@dataclass
class PositionCheck:
    feasible: bool
    violated_features: list[int]
    residual: float
    status: str

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "violated_features": self.violated_features,
            "residual": self.residual,
            "status": self.status,
        }


@dataclass
class FeasibilityMap:
    origin: np.ndarray  # lower-left corner of the grid
    cell_size: np.ndarray  # (2,) > 0
    nx: int
    ny: int
    mask: np.ndarray  # (nx, ny) booleans, True = feasible
    tolerance: float
    diagnostic: str | None = None
    solver_calls: int = 0

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        return self.origin + (np.array([ix, iy]) + 0.5) * self.cell_size

    def to_json(self) -> dict:
        return {
            "origin": [float(self.origin[0]), float(self.origin[1])],
            "cell_size": [float(self.cell_size[0]), float(self.cell_size[1])],
            "nx": self.nx,
            "ny": self.ny,
            # flat row-major over the (nx, ny) mask: cell (ix, iy) at ix*ny + iy
            "mask": [bool(v) for v in self.mask.ravel(order="C")],
            "tolerance": self.tolerance,
            "diagnostic": self.diagnostic,
        }

    def to_pgm(self) -> str:
        """P2 text image, 0 = infeasible (black), 255 = feasible. Rows run
        top-down, so the first image row is the grid's highest y band."""
        lines = [f"P2", f"{self.nx} {self.ny}", "255"]
        for iy in range(self.ny - 1, -1, -1):
            lines.append(" ".join("255" if self.mask[ix, iy] else "0" for ix in range(self.nx)))
        return "\n".join(lines) + "\n"


def _grid(session: Session, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    pos = session.positions()
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    extent = hi - lo
    # degenerate layouts (single column / identical points) still need cells
    extent = np.where(extent > 0, extent, 1.0)
    pad = extent * (BBOX_EXPANSION / 2.0)
    origin = lo - pad
    cell = (extent * (1.0 + BBOX_EXPANSION)) / np.array([nx, ny])
    return origin, cell


def _evaluate(session: Session, target: np.ndarray, tol: float) -> PositionCheck:
    result = session.backend.backward(
        session.pristine_point, session.pristine_position, target, session.constraints
    )
    if result.violated:  # evaluative path (autoencoder)
        return PositionCheck(False, list(result.violated), result.residual, result.status)
    if result.status != qp.OPTIMAL:
        bad = session.constraints.contradictory_features()
        if not bad:
            bad = session.constraints.constrained_features()
        return PositionCheck(False, bad, result.residual, result.status)
    if result.residual > tol:
        binding = [i for i in result.binding if not session.constraints.entries[i].is_empty()]
        return PositionCheck(False, binding, result.residual, result.status)
    return PositionCheck(True, [], result.residual, result.status)


def compute_map(
    session: Session,
    resolution: tuple[int, int] = DEFAULT_RESOLUTION,
    tolerance: float | None = None,
) -> FeasibilityMap:
    """Evaluate every cell center with one backward-projection solve each
    (exactly nx*ny solver calls; no shortcut on contradictory constraints,
    which instead surface as an all-infeasible mask plus a diagnostic)."""
    session._require_selection()
    nx, ny = int(resolution[0]), int(resolution[1])
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be at least 1x1")
    tol = session.feasibility_tolerance() if tolerance is None else float(tolerance)
    origin, cell = _grid(session, nx, ny)

    mask = np.zeros((nx, ny), dtype=bool)
    any_unsatisfiable = False
    calls = 0
    for ix in range(nx):
        for iy in range(ny):
            center = origin + (np.array([ix, iy]) + 0.5) * cell
            check = _evaluate(session, center, tol)
            calls += 1
            mask[ix, iy] = check.feasible
            if check.status == qp.INFEASIBLE:
                any_unsatisfiable = True

    return FeasibilityMap(
        origin=origin,
        cell_size=cell,
        nx=nx,
        ny=ny,
        mask=mask,
        tolerance=tol,
        diagnostic=DIAG_UNSATISFIABLE if any_unsatisfiable else None,
        solver_calls=calls,
    )


def check_position(
    session: Session, target, tolerance: float | None = None
) -> PositionCheck:
    """Same feasibility test as compute_map, for one planar point."""
    session._require_selection()
    target = np.asarray(target, dtype=float)
    tol = session.feasibility_tolerance() if tolerance is None else float(tolerance)
    return _evaluate(session, target, tol)
