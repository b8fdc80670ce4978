"""Constrained backward-projection quadratic program.

    minimize   ||dx @ E - dy||^2 + ridge * ||dx||^2
    subject to C dx = d,   lb <= dx <= ub

The ridge term makes the Hessian strictly convex (E E^T alone is rank-2 in
d dimensions) and selects the minimum-norm minimizer, matching the
unconstrained lift dy @ E.T as ridge -> 0.

The solver is a dense dual active-set method (Goldfarb-Idnani scheme): it
starts from the unconstrained minimizer and adds violated constraints one
at a time, keeping dual feasibility. Equality rows are installed first and
never dropped. This needs no phase-1 feasible-point search, terminates in
finitely many active-set changes on small d, and reports an empty feasible
set as a byproduct.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, ModelError

_R_TOL = 1e-12  # multiplier-ratio guard
_DEFAULT_RIDGE = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class QpProblem:
    """One backward-projection solve in delta units."""

    objective_matrix: np.ndarray  # E, d x 2
    target: np.ndarray  # dy, length 2
    eq_matrix: np.ndarray | None = None  # C, k x d (k may be 0)
    eq_rhs: np.ndarray | None = None  # length k
    lower: np.ndarray | None = None  # length d, -inf allowed; None = unbounded
    upper: np.ndarray | None = None
    ridge: float = _DEFAULT_RIDGE

    def validate(self) -> None:
        E = np.asarray(self.objective_matrix, dtype=float)
        if E.ndim != 2 or E.shape[1] != 2:
            raise ModelError(f"objective matrix must be d x 2, got {E.shape}", code="bad_shape")
        d = E.shape[0]
        dy = np.asarray(self.target, dtype=float)
        if dy.shape != (2,):
            raise ModelError(f"target must have length 2, got {dy.shape}", code="bad_shape")
        if not np.all(np.isfinite(dy)) or not np.all(np.isfinite(E)):
            raise ModelError("objective data must be finite", code="non_finite_value")
        if not self.ridge > 0:
            raise ModelError("ridge must be > 0", code="bad_ridge")
        if self.eq_matrix is not None:
            C = np.asarray(self.eq_matrix, dtype=float)
            rhs = np.asarray(self.eq_rhs, dtype=float)
            if C.ndim != 2 or C.shape[1] != d or rhs.shape != (C.shape[0],):
                raise ModelError("equality constraint shapes are inconsistent", code="bad_shape")
            if not (np.all(np.isfinite(C)) and np.all(np.isfinite(rhs))):
                raise ModelError("equality constraints must be finite", code="non_finite_value")
        lo = self._bound(self.lower, d, -np.inf)
        hi = self._bound(self.upper, d, np.inf)
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            raise ConstraintError(
                f"lower bound exceeds upper bound at coordinate {int(bad[0])}",
                code="malformed_bounds",
            )

    @staticmethod
    def _bound(v, d: int, default: float) -> np.ndarray:
        if v is None:
            return np.full(d, default)
        arr = np.asarray(v, dtype=float)
        if arr.shape != (d,):
            raise ModelError(f"bound vector must have length {d}", code="bad_shape")
        if np.any(np.isnan(arr)):
            raise ModelError("bounds may be infinite but not NaN", code="non_finite_value")
        return arr


@dataclass
class QpSolution:
    delta_x: np.ndarray
    residual: float  # ||dx @ E - dy||
    status: str
    kkt_violation: float
    objective: float = 0.0
    iterations: int = 0
    binding: list[int] = field(default_factory=list)  # coordinates at a bound / locked


def _objective(E: np.ndarray, dy: np.ndarray, ridge: float, x: np.ndarray) -> tuple[float, float]:
    r = float(np.linalg.norm(E.T @ x - dy))
    return r, r * r + ridge * float(x @ x)


class _ActiveSet:
    """Dense working set: equality rows first, then added bound constraints."""

    def __init__(self, Ginv: np.ndarray):
        self.Ginv = Ginv
        self.normals: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.kind: list[str] = []  # "eq" | "ineq"
        self.keys: list[tuple] = []
        self.u: list[float] = []

    def step_direction(self, n_plus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gn = self.Ginv @ n_plus
        if not self.normals:
            return gn, np.zeros(0)
        N = np.column_stack(self.normals)
        B = self.Ginv @ N
        M = N.T @ B
        r = np.linalg.solve(M, B.T @ n_plus)
        z = gn - B @ r
        return z, r

    def drop(self, idx: int) -> None:
        for lst in (self.normals, self.rhs, self.kind, self.keys, self.u):
            del lst[idx]

    def add(self, normal: np.ndarray, rhs: float, kind: str, key: tuple, mult: float) -> None:
        self.normals.append(normal)
        self.rhs.append(rhs)
        self.kind.append(kind)
        self.keys.append(key)
        self.u.append(mult)


def solve(problem: QpProblem) -> QpSolution:
    """Solve the backward-projection QP. Deterministic; raises only on
    malformed input, never on infeasibility (reported via status)."""
    problem.validate()
    E = np.asarray(problem.objective_matrix, dtype=float)
    dy = np.asarray(problem.target, dtype=float)
    d = E.shape[0]
    ridge = float(problem.ridge)
    lo = QpProblem._bound(problem.lower, d, -np.inf)
    hi = QpProblem._bound(problem.upper, d, np.inf)

    G = 2.0 * (E @ E.T + ridge * np.eye(d))
    a = -2.0 * (E @ dy)
    Ginv = np.linalg.inv(G)

    x = -Ginv @ a
    active = _ActiveSet(Ginv)
    max_updates = 10 * d
    updates = 0

    def finish(status: str) -> QpSolution:
        xf = x
        if status == OPTIMAL:
            # Re-solve the KKT system of the identified active set so the
            # incremental multiplier updates (amplified by the ridge-dominated
            # conditioning of G) do not leak into the reported solution.
            xf = _polish(G, a, active, xf)
        residual, obj = _objective(E, dy, ridge, xf)
        kkt = _kkt_violation(G, a, active, xf, problem, lo, hi)
        binding = _binding_coordinates(active)
        return QpSolution(
            delta_x=xf.copy(),
            residual=residual,
            status=status,
            kkt_violation=kkt,
            objective=obj,
            iterations=updates,
            binding=binding,
        )

    # Equality rows: installed first, never dropped. Only equalities are
    # active here, so steps are unguarded full steps.
    if problem.eq_matrix is not None and len(problem.eq_rhs):
        C = np.asarray(problem.eq_matrix, dtype=float)
        rhs_eq = np.asarray(problem.eq_rhs, dtype=float)
        for i in range(C.shape[0]):
            n_plus = C[i]
            b_plus = float(rhs_eq[i])
            z, r = active.step_direction(n_plus)
            gn_scale = max(1.0, float(np.linalg.norm(active.Ginv @ n_plus)))
            if np.linalg.norm(z) <= 1e-10 * gn_scale:
                # linearly dependent row: consistent -> redundant, else empty set
                gap = b_plus - float(n_plus @ x)
                if abs(gap) <= 1e-9 * max(1.0, abs(b_plus)):
                    continue
                return finish(INFEASIBLE)
            t = (b_plus - float(n_plus @ x)) / float(n_plus @ z)
            x = x + t * z
            new_u = [uj - t * rj for uj, rj in zip(active.u, r)]
            active.u = new_u
            active.add(n_plus, b_plus, "eq", ("eq", i), t)
            updates += 1
            if updates > max_updates:
                return finish(ITERATION_LIMIT)

    # Box rows as n^T x >= b: (e_i, lo_i) and (-e_i, -hi_i).
    box_normals: list[np.ndarray] = []
    box_rhs: list[float] = []
    box_keys: list[tuple] = []
    for i in range(d):
        if np.isfinite(lo[i]):
            n = np.zeros(d)
            n[i] = 1.0
            box_normals.append(n)
            box_rhs.append(float(lo[i]))
            box_keys.append(("lo", i))
        if np.isfinite(hi[i]):
            n = np.zeros(d)
            n[i] = -1.0
            box_normals.append(n)
            box_rhs.append(float(-hi[i]))
            box_keys.append(("hi", i))

    while True:
        worst = -np.inf
        worst_j = -1
        for j, (n, b, key) in enumerate(zip(box_normals, box_rhs, box_keys)):
            if key in active.keys:
                continue
            viol = b - float(n @ x)
            if viol > worst:
                worst = viol
                worst_j = j
        if worst_j < 0:
            return finish(OPTIMAL)
        if worst <= 1e-10 * max(1.0, abs(box_rhs[worst_j])):
            return finish(OPTIMAL)

        n_plus = box_normals[worst_j]
        b_plus = box_rhs[worst_j]
        key_plus = box_keys[worst_j]
        u_plus = 0.0
        while True:
            z, r = active.step_direction(n_plus)
            gn_scale = max(1.0, float(np.linalg.norm(active.Ginv @ n_plus)))
            z_zero = np.linalg.norm(z) <= 1e-10 * gn_scale

            t1 = np.inf
            k1 = -1
            for idx, kind in enumerate(active.kind):
                if kind != "ineq" or idx >= len(r):
                    continue
                if r[idx] > _R_TOL:
                    cand = active.u[idx] / r[idx]
                    if cand < t1:
                        t1 = cand
                        k1 = idx
            if z_zero:
                t2 = np.inf
            else:
                t2 = (b_plus - float(n_plus @ x)) / float(n_plus @ z)

            if not np.isfinite(min(t1, t2)):
                return finish(INFEASIBLE)

            if t2 <= t1:
                x = x + t2 * z
                active.u = [uj - t2 * rj for uj, rj in zip(active.u, r)]
                u_plus += t2
                active.add(n_plus, b_plus, "ineq", key_plus, u_plus)
                updates += 1
                if updates > max_updates:
                    return finish(ITERATION_LIMIT)
                break
            # partial step: drop the blocking constraint, keep trying to add
            if not z_zero:
                x = x + t1 * z
            active.u = [uj - t1 * rj for uj, rj in zip(active.u, r)]
            u_plus += t1
            active.drop(k1)
            updates += 1
            if updates > max_updates:
                return finish(ITERATION_LIMIT)


def _polish(G: np.ndarray, a: np.ndarray, active: _ActiveSet, x: np.ndarray) -> np.ndarray:
    """Exact solve of the equality-constrained QP fixed by the active set.

    Updates the active multipliers in place and returns the refined point.
    """
    d = G.shape[0]
    q = len(active.normals)
    if q == 0:
        return x
    N = np.column_stack(active.normals)
    b = np.array(active.rhs, dtype=float)
    kkt = np.zeros((d + q, d + q))
    kkt[:d, :d] = G
    kkt[:d, d:] = -N
    kkt[d:, :d] = N.T
    rhs = np.concatenate([-a, b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return x
    active.u = [float(v) for v in sol[d:]]
    return sol[:d]


def _binding_coordinates(active: _ActiveSet) -> list[int]:
    coords: set[int] = set()
    for key, n in zip(active.keys, active.normals):
        if key[0] in ("lo", "hi"):
            coords.add(int(key[1]))
        else:  # equality row: every touched coordinate counts as bound
            coords.update(int(i) for i in np.flatnonzero(n != 0.0))
    return sorted(coords)


def _kkt_violation(
    G: np.ndarray,
    a: np.ndarray,
    active: _ActiveSet,
    x: np.ndarray,
    problem: QpProblem,
    lo: np.ndarray,
    hi: np.ndarray,
) -> float:
    grad = G @ x + a
    for n, u in zip(active.normals, active.u):
        grad = grad - u * n
    station = float(np.max(np.abs(grad))) if grad.size else 0.0

    primal = 0.0
    if problem.eq_matrix is not None and len(problem.eq_rhs):
        C = np.asarray(problem.eq_matrix, dtype=float)
        rhs = np.asarray(problem.eq_rhs, dtype=float)
        primal = float(np.max(np.abs(C @ x - rhs)))
    box = float(np.max(np.maximum(np.maximum(lo - x, x - hi), 0.0)))

    dual = 0.0
    comp = 0.0
    for n, b, kind, u in zip(active.normals, active.rhs, active.kind, active.u):
        if kind == "ineq":
            dual = max(dual, -u)
            comp = max(comp, abs(u * (float(n @ x) - b)))
    return max(station, primal, box, dual, comp)
