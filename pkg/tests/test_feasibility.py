import numpy as np
import pytest

from drwhatif import ConstraintSet, fit_pca, make_backend
from drwhatif.feasibility import check_position, compute_map
from drwhatif.session import Session
from conftest import design_dataset


def _half_plane_session():
    """Identity-embedded axes (d=3) with a lower bound pinning feature 0 at
    its current value: reachable targets form the right half-plane."""
    ds = design_dataset([2.0, 1.0, 0.1])
    s = Session(ds, make_backend(fit_pca(ds)))
    s.select(0)  # row 0 = (-2, -1, -0.1), position (-2, -1)
    cs = ConstraintSet(3)
    cs.set_bounds(0, lower=float(s.working_point[0]))
    s.set_constraints(cs)
    return s


def test_empty_constraints_all_feasible(identity_session):
    fmap = compute_map(identity_session, (10, 10))
    assert fmap.mask.all()
    assert fmap.diagnostic is None
    assert fmap.nx == fmap.ny == 10


def test_half_plane_matches_analytic_oracle():
    s = _half_plane_session()
    boundary_x = s.position[0]  # constraint pins the point's x-coordinate
    fmap = compute_map(s, (10, 10))
    for ix in range(10):
        for iy in range(10):
            cx, cy = fmap.cell_center(ix, iy)
            if abs(cx - boundary_x) < fmap.cell_size[0]:
                continue  # within one cell of the boundary: not asserted
            assert fmap.mask[ix, iy] == (cx > boundary_x), (ix, iy, cx, boundary_x)


def test_all_locked_only_current_cell_feasible(identity_session):
    s = identity_session
    cs = ConstraintSet(3)
    for i in range(3):
        cs.lock(i)
    s.set_constraints(cs)
    fmap = compute_map(s, (10, 10))
    feasible_cells = np.argwhere(fmap.mask)
    assert len(feasible_cells) <= 1
    if len(feasible_cells) == 1:
        ix, iy = feasible_cells[0]
        center = fmap.cell_center(int(ix), int(iy))
        # the feasible cell is the one containing the current position
        assert np.all(np.abs(center - s.position) <= fmap.cell_size / 2 + 1e-12)


def test_grid_covers_expanded_bbox(identity_session):
    fmap = compute_map(identity_session, (8, 6))
    pos = identity_session.positions()
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    span = hi - lo
    assert np.all(fmap.origin <= lo - 0.024 * span)
    top = fmap.origin + fmap.cell_size * np.array([8, 6])
    assert np.all(top >= hi + 0.024 * span)
    assert np.all(fmap.cell_size > 0)


def test_check_position_current_point_no_constraints(identity_session):
    check = check_position(identity_session, identity_session.position)
    assert check.feasible
    assert check.violated_features == []


def test_check_position_half_plane():
    s = _half_plane_session()
    inside = s.position + np.array([0.5, 0.2])
    outside = s.position + np.array([-0.5, 0.2])
    assert check_position(s, inside).feasible
    bad = check_position(s, outside)
    assert not bad.feasible
    assert bad.violated_features == [0]


def test_check_position_all_locked_current(identity_session):
    s = identity_session
    cs = ConstraintSet(3)
    for i in range(3):
        cs.lock(i)
    s.set_constraints(cs)
    check = check_position(s, s.position)
    assert check.feasible
    assert check.violated_features == []


def test_mask_consistent_with_check_position():
    s = _half_plane_session()
    fmap = compute_map(s, (7, 5))
    for ix in range(7):
        for iy in range(5):
            check = check_position(s, fmap.cell_center(ix, iy))
            assert check.feasible == bool(fmap.mask[ix, iy])


def test_monotone_refinement_against_half_plane():
    s = _half_plane_session()
    boundary_x = s.position[0]
    for res in ((10, 10), (20, 20)):
        fmap = compute_map(s, res)
        for ix in range(res[0]):
            lo_x = fmap.origin[0] + ix * fmap.cell_size[0]
            hi_x = lo_x + fmap.cell_size[0]
            if hi_x < boundary_x - 1e-9:  # cell strictly infeasible side
                assert not fmap.mask[ix, :].any()
            if lo_x > boundary_x + 1e-9:  # cell strictly feasible side
                assert fmap.mask[ix, :].all()


def test_exactly_one_solver_call_per_cell(identity_session, monkeypatch):
    calls = {"n": 0}
    backend = identity_session.backend
    original = backend.backward

    def counting(*args, **kwargs):
        calls["n"] += 1
        return original(*args, **kwargs)

    monkeypatch.setattr(backend, "backward", counting)
    fmap = compute_map(identity_session, (6, 7))
    assert calls["n"] == 42
    assert fmap.solver_calls == 42


def test_contradictory_constraints_flagged_not_raised(identity_session):
    s = identity_session
    cs = ConstraintSet(3)
    cs.lock(0, float(s.working_point[0]) + 1.0)
    cs.entries[0].upper = float(s.working_point[0])  # bypasses validation
    s.constraints = cs
    fmap = compute_map(s, (4, 4))
    assert not fmap.mask.any()
    assert fmap.diagnostic == "constraints_unsatisfiable"
    assert fmap.solver_calls == 16


def test_evaluated_from_pristine_point():
    s = _half_plane_session()
    fmap_before = compute_map(s, (6, 6))
    # move the working point; cells still evaluate from the pristine row
    s.set_feature(1, float(s.working_point[1]) + 0.4)
    fmap_after = compute_map(s, (6, 6), tolerance=fmap_before.tolerance)
    # grids share geometry here because positions() bbox is dominated by
    # the other rows
    if np.allclose(fmap_before.origin, fmap_after.origin) and np.allclose(
        fmap_before.cell_size, fmap_after.cell_size
    ):
        assert np.array_equal(fmap_before.mask, fmap_after.mask)


def test_pgm_output_format(identity_session):
    fmap = compute_map(identity_session, (4, 3))
    pgm = fmap.to_pgm()
    lines = pgm.splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "4 3"
    assert lines[2] == "255"
    assert len(lines) == 3 + 3
    assert all(tok in ("0", "255") for row in lines[3:] for tok in row.split())
