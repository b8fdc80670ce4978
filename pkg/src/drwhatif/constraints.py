"""Per-feature equality locks and box bounds, in absolute feature units.

A lock without an explicit value pins the feature to whatever value the
point has when the backward projection runs. Conversion to a QP happens in
delta units relative to the point being projected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError
from .qp import QpProblem

# How far a value may sit past a bound before it counts as a violation.
VIOLATION_TOL = 1e-8


@dataclass
class FeatureConstraint:
    locked: bool = False
    lock_value: float | None = None
    lower: float | None = None
    upper: float | None = None

    def is_empty(self) -> bool:
        return not self.locked and self.lower is None and self.upper is None


class ConstraintSet:
    """One FeatureConstraint per feature; empty entries cost nothing."""

    def __init__(self, d: int):
        self.entries = [FeatureConstraint() for _ in range(d)]

    @property
    def d(self) -> int:
        return len(self.entries)

    def is_empty(self) -> bool:
        return all(e.is_empty() for e in self.entries)

    def constrained_features(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if not e.is_empty()]

    def lock(self, i: int, value: float | None = None) -> "ConstraintSet":
        self.entries[i].locked = True
        self.entries[i].lock_value = None if value is None else float(value)
        return self

    def unlock(self, i: int) -> "ConstraintSet":
        self.entries[i].locked = False
        self.entries[i].lock_value = None
        return self

    def set_bounds(self, i: int, lower: float | None = None, upper: float | None = None) -> "ConstraintSet":
        self.entries[i].lower = None if lower is None else float(lower)
        self.entries[i].upper = None if upper is None else float(upper)
        return self

    def clear(self, i: int) -> "ConstraintSet":
        self.entries[i] = FeatureConstraint()
        return self

    def validate(self) -> None:
        for i, e in enumerate(self.entries):
            for name, v in (("lock_value", e.lock_value), ("lower", e.lower), ("upper", e.upper)):
                if v is not None and not math.isfinite(v):
                    raise ConstraintError(
                        f"{name} for feature {i} must be finite", code="non_finite_value"
                    )
            if e.lower is not None and e.upper is not None and e.lower > e.upper:
                raise ConstraintError(
                    f"feature {i}: lower bound {e.lower} exceeds upper bound {e.upper}",
                    code="malformed_bounds",
                )
            if e.locked and e.lock_value is not None:
                if e.lower is not None and e.lock_value < e.lower:
                    raise ConstraintError(
                        f"feature {i}: lock value {e.lock_value} below lower bound {e.lower}",
                        code="lock_outside_bounds",
                    )
                if e.upper is not None and e.lock_value > e.upper:
                    raise ConstraintError(
                        f"feature {i}: lock value {e.lock_value} above upper bound {e.upper}",
                        code="lock_outside_bounds",
                    )

    def contradictory_features(self) -> list[int]:
        """Features whose lock falls outside their own bounds."""
        out = []
        for i, e in enumerate(self.entries):
            if e.locked and e.lock_value is not None:
                if (e.lower is not None and e.lock_value < e.lower) or (
                    e.upper is not None and e.lock_value > e.upper
                ):
                    out.append(i)
        return out

    def violations(self, x: np.ndarray, tol: float = VIOLATION_TOL) -> list[int]:
        """Features of the point x that break their lock or bounds."""
        x = np.asarray(x, dtype=float)
        out = []
        for i, e in enumerate(self.entries):
            v = float(x[i])
            bad = False
            if e.locked and e.lock_value is not None and abs(v - e.lock_value) > tol:
                bad = True
            if e.lower is not None and v < e.lower - tol:
                bad = True
            if e.upper is not None and v > e.upper + tol:
                bad = True
            if bad:
                out.append(i)
        return out

    def to_qp(
        self,
        components: np.ndarray,
        delta_y: np.ndarray,
        x: np.ndarray,
        scale: np.ndarray | None = None,
        ridge: float | None = None,
    ) -> QpProblem:
        """Convert to a QP over delta units relative to the point x.

        Locks become elementary equality rows (dx_i = lock - x_i, or 0 for a
        lock at the current value); bounds become the box
        lower_i - x_i <= dx_i <= upper_i - x_i. With a standardized model the
        variable is dx/scale and bounds shrink accordingly.
        """
        d = self.d
        x = np.asarray(x, dtype=float)
        s = np.ones(d) if scale is None else np.asarray(scale, dtype=float)

        rows: list[np.ndarray] = []
        rhs: list[float] = []
        lower = np.full(d, -np.inf)
        upper = np.full(d, np.inf)
        for i, e in enumerate(self.entries):
            if e.locked:
                target_v = e.lock_value if e.lock_value is not None else float(x[i])
                row = np.zeros(d)
                row[i] = 1.0
                rows.append(row)
                rhs.append((target_v - float(x[i])) / s[i])
            if e.lower is not None:
                lower[i] = (e.lower - float(x[i])) / s[i]
            if e.upper is not None:
                upper[i] = (e.upper - float(x[i])) / s[i]

        kwargs = {} if ridge is None else {"ridge": ridge}
        return QpProblem(
            objective_matrix=components,
            target=np.asarray(delta_y, dtype=float),
            eq_matrix=np.array(rows) if rows else None,
            eq_rhs=np.array(rhs) if rows else None,
            lower=lower,
            upper=upper,
            **kwargs,
        )

    def to_json(self) -> dict:
        features = []
        for i, e in enumerate(self.entries):
            if e.is_empty():
                continue
            features.append(
                {
                    "feature": i,
                    "locked": e.locked,
                    "lock_value": e.lock_value,
                    "lower": e.lower,
                    "upper": e.upper,
                }
            )
        return {"d": self.d, "features": features}

    @classmethod
    def from_json(cls, obj: dict, d: int | None = None) -> "ConstraintSet":
        cs = cls(d if d is not None else int(obj["d"]))
        for f in obj.get("features", []):
            i = int(f["feature"])
            if not 0 <= i < cs.d:
                raise ConstraintError(f"constraint feature index {i} out of range", code="bad_index")
            e = cs.entries[i]
            e.locked = bool(f.get("locked", False))
            lv = f.get("lock_value")
            e.lock_value = None if lv is None else float(lv)
            lo = f.get("lower")
            e.lower = None if lo is None else float(lo)
            hi = f.get("upper")
            e.upper = None if hi is None else float(hi)
        return cs

    def copy(self) -> "ConstraintSet":
        return ConstraintSet.from_json(self.to_json())
