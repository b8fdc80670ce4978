"""Prolines: polylines of forward projections swept over one feature's
observed range, with mean / +-sigma decorations and live projection marks.

For a linear backend every proline is a straight segment whose length is
(max_i - min_i) * ||row i of E||; for the autoencoder backend prolines
curve with the learned manifold. Relevance is the planar arc length, so
longer prolines mean features with more positional influence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureStats
from .errors import SessionError
from .session import Session

DIRECTION_INCREASING = "increasing"
DIRECTION_DECREASING = "decreasing"
DIRECTION_UNCHANGED = "unchanged"
DIRECTION_VIOLATED = "violated"


@dataclass
class Proline:
    feature_index: int
    values: np.ndarray  # (m,) strictly increasing, covers [min_i, max_i]
    positions: np.ndarray  # (m, 2)
    mean_marker: np.ndarray  # projection at x_i = mean_i
    sigma_down: np.ndarray  # projection at mean_i - sigma_i (clipped to range)
    sigma_up: np.ndarray  # projection at mean_i + sigma_i (clipped to range)
    green: np.ndarray  # positions for values in [x_i, mean_i + sigma_i]
    red: np.ndarray  # positions for values in [mean_i - sigma_i, x_i]
    relevance: float  # planar arc length
    degenerate: bool = False  # constant feature: single-sample proline

    def to_json(self) -> dict:
        return {
            "feature": self.feature_index,
            "samples": [
                [float(v), float(p[0]), float(p[1])] for v, p in zip(self.values, self.positions)
            ],
            "mean": [float(self.mean_marker[0]), float(self.mean_marker[1])],
            "sigma": [
                [float(self.sigma_down[0]), float(self.sigma_down[1])],
                [float(self.sigma_up[0]), float(self.sigma_up[1])],
            ],
            "green": [[float(x), float(y)] for x, y in self.green],
            "red": [[float(x), float(y)] for x, y in self.red],
            "relevance": float(self.relevance),
            "degenerate": self.degenerate,
        }


@dataclass
class ProjectionMark:
    feature_index: int
    position: np.ndarray
    direction: str

    def to_json(self) -> dict:
        return {
            "feature": self.feature_index,
            "position": [float(self.position[0]), float(self.position[1])],
            "direction": self.direction,
        }


def default_step(stats: FeatureStats) -> float:
    """sigma_i / 8, falling back to range/64 for zero-variance contexts."""
    if stats.std > 0:
        return stats.std / 8.0
    return (stats.max - stats.min) / 64.0


def _resolve_step(step_policy, stats: FeatureStats) -> float:
    if step_policy is None or step_policy == "sigma8":
        return default_step(stats)
    if step_policy == "range64":
        return (stats.max - stats.min) / 64.0
    if callable(step_policy):
        return float(step_policy(stats))
    return float(step_policy)


def _sweep_values(lo: float, hi: float, step: float) -> np.ndarray:
    """min, min+step, ... with the final sample forced onto max."""
    if hi <= lo:
        return np.array([lo])
    if step <= 0 or not math.isfinite(step):
        return np.array([lo, hi])
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    vals = lo + step * np.arange(count)
    # keep strictly increasing with an exact max endpoint
    if hi - vals[-1] <= 1e-9 * (hi - lo):
        vals[-1] = hi
    else:
        vals = np.append(vals, hi)
    return vals


def _segment_values(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        return np.empty(0)
    if hi == lo:
        return np.array([lo])
    count = max(2, int(math.ceil((hi - lo) / step)) + 1 if step > 0 else 2)
    return np.linspace(lo, hi, count)


def _project_sweep(session: Session, base: np.ndarray, i: int, values: np.ndarray) -> np.ndarray:
    return np.asarray(session.backend.project_feature_sweep(base, i, values), dtype=float)


def arc_length(positions: np.ndarray) -> float:
    if len(positions) < 2:
        return 0.0
    seg = np.diff(positions, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def build_proline(
    session: Session,
    i: int,
    step: float | None = None,
    base_point: np.ndarray | None = None,
) -> Proline:
    """Sweep feature i over [min_i, max_i] from the working point (or an
    explicit base), projecting each substituted point with the backend."""
    session._require_selection()
    if not 0 <= i < session.dataset.d:
        raise SessionError(f"feature {i} out of range 0..{session.dataset.d - 1}", code="bad_index")
    stats = session.stats[i]
    base = session.working_point if base_point is None else np.asarray(base_point, dtype=float)
    if step is None:
        step = default_step(stats)

    degenerate = stats.std == 0.0
    values = np.array([stats.min]) if degenerate else _sweep_values(stats.min, stats.max, step)
    positions = _project_sweep(session, base, i, values)

    x_i = float(base[i])
    sig_lo = min(max(stats.mean - stats.std, stats.min), stats.max)
    sig_hi = min(max(stats.mean + stats.std, stats.min), stats.max)
    decor = _project_sweep(session, base, i, np.array([stats.mean, sig_lo, sig_hi]))
    mean_marker, sigma_down, sigma_up = decor[0], decor[1], decor[2]

    green_vals = _segment_values(min(max(x_i, stats.min), stats.max), sig_hi, step)
    red_vals = _segment_values(sig_lo, min(max(x_i, stats.min), stats.max), step)
    green = (
        _project_sweep(session, base, i, green_vals) if len(green_vals) else np.empty((0, 2))
    )
    red = _project_sweep(session, base, i, red_vals) if len(red_vals) else np.empty((0, 2))

    return Proline(
        feature_index=i,
        values=values,
        positions=positions,
        mean_marker=mean_marker,
        sigma_down=sigma_down,
        sigma_up=sigma_up,
        green=green,
        red=red,
        relevance=arc_length(positions),
        degenerate=degenerate,
    )


def build_all_prolines(
    session: Session,
    step_policy=None,
    order_by: str = "path_length",
) -> list[Proline]:
    """One proline per feature, sorted most relevant first (stable, ties by
    feature index). ``order_by="variance"`` ranks by feature variance
    instead of arc length."""
    session._require_selection()
    prolines = [
        build_proline(session, i, step=_resolve_step(step_policy, session.stats[i]))
        for i in range(session.dataset.d)
    ]
    if order_by == "variance":
        key = lambda p: -(session.stats[p.feature_index].std ** 2)
    elif order_by == "path_length":
        key = lambda p: -p.relevance
    else:
        raise SessionError(f"unknown proline ordering {order_by!r}", code="bad_order")
    return sorted(prolines, key=lambda p: (key(p), p.feature_index))


def _interpolate(proline: Proline, v: float) -> np.ndarray:
    values, positions = proline.values, proline.positions
    if len(values) == 1 or v <= values[0]:
        return positions[0].copy()
    if v >= values[-1]:
        return positions[-1].copy()
    j = int(np.searchsorted(values, v, side="right")) - 1
    j = min(j, len(values) - 2)
    t = (v - values[j]) / (values[j + 1] - values[j])
    return (1.0 - t) * positions[j] + t * positions[j + 1]


def projection_marks(session: Session, step_policy=None) -> list[ProjectionMark]:
    """Where each feature's current value sits on its proline.

    Prolines here are anchored at the pristine dataset row, so after a drag
    each mark moves along its own path instead of collapsing onto the
    dragged position. Direction compares the working value against the
    original row value; a broken lock or bound wins as "violated".
    """
    session._require_selection()
    base = session.pristine_point
    violated = set(session.constraints.violations(session.working_point))
    marks = []
    for i in range(session.dataset.d):
        proline = build_proline(
            session, i, step=_resolve_step(step_policy, session.stats[i]), base_point=base
        )
        v = float(session.working_point[i])
        orig = float(base[i])
        if i in violated:
            direction = DIRECTION_VIOLATED
        elif abs(v - orig) <= 1e-12 * max(1.0, abs(orig)):
            direction = DIRECTION_UNCHANGED
        elif v > orig:
            direction = DIRECTION_INCREASING
        else:
            direction = DIRECTION_DECREASING
        marks.append(ProjectionMark(i, _interpolate(proline, v), direction))
    return marks
