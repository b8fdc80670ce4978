import numpy as np
import pytest

from drwhatif import (
    ConstraintSet,
    Dataset,
    fit_pca,
    make_backend,
    project_point,
    load_csv,
)
from drwhatif.prolines import (
    build_all_prolines,
    build_proline,
    projection_marks,
)
from drwhatif.session import Session
from conftest import design_dataset, make_oecd_csv


def _session(ds, row=0):
    s = Session(ds, make_backend(fit_pca(ds)))
    s.select(row)
    return s


def _collinearity_residual(positions):
    if len(positions) < 3:
        return 0.0
    p0, p1 = positions[0], positions[-1]
    chord = p1 - p0
    norm = np.linalg.norm(chord)
    if norm == 0:
        return float(np.linalg.norm(positions - p0, axis=1).max())
    # perpendicular distance of every sample to the chord line
    rel = positions - p0
    cross = rel[:, 0] * chord[1] - rel[:, 1] * chord[0]
    return float(np.abs(cross).max() / norm)


def test_zero_loading_feature_constant_position(identity_session):
    # feature 2 varies but has zero loading on both axes
    pl = build_proline(identity_session, 2)
    assert len(pl.values) > 1
    assert np.abs(pl.positions - pl.positions[0]).max() < 1e-12
    assert pl.relevance == pytest.approx(0.0, abs=1e-12)


def test_canonical_axis_five_samples():
    # feature 0 spans [0, 1] exactly; step 0.25 gives 5 collinear samples
    ds = design_dataset([0.5, 0.3, 0.05], levels={0: (0.0, 1.0)})
    s = _session(ds)
    pl = build_proline(s, 0, step=0.25)
    assert len(pl.values) == 5
    assert np.allclose(pl.values, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert _collinearity_residual(pl.positions) < 1e-12
    span = pl.positions[-1] - pl.positions[0]
    assert np.allclose(span, [1.0, 0.0], atol=1e-12)  # unit horizontal segment


def test_endpoint_oracle_oecd():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds, row=3)
    model = s.backend.model
    for i in (0, 4, 7):
        pl = build_proline(s, i)
        st = s.stats[i]
        for v, got in ((st.min, pl.positions[0]), (st.max, pl.positions[-1])):
            wp = s.working_point.copy()
            wp[i] = v
            assert np.abs(got - project_point(model, wp)).max() < 1e-10


def test_degenerate_constant_feature_flagged():
    values = np.array([[1.0, 2.0, 7.0], [2.0, 1.0, 7.0], [3.0, 4.0, 7.0], [0.0, 3.0, 7.0]])
    ds = Dataset(list("abcd"), ["x", "y", "const"], values)
    s = _session(ds)
    pl = build_proline(s, 2)
    assert pl.degenerate
    assert len(pl.values) == 1
    assert pl.relevance == 0.0


def test_samples_cover_range_and_increase():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds)
    for i in range(ds.d):
        pl = build_proline(s, i)
        st = s.stats[i]
        assert pl.values[0] == st.min
        assert pl.values[-1] == st.max
        assert np.all(np.diff(pl.values) > 0)


def test_linear_collinearity():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds, row=10)
    for pl in build_all_prolines(s):
        assert _collinearity_residual(pl.positions) < 1e-8


def test_relevance_analytic_for_linear_backend():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds)
    E = s.backend.model.components
    for pl in build_all_prolines(s):
        st = s.stats[pl.feature_index]
        analytic = (st.max - st.min) * float(np.linalg.norm(E[pl.feature_index]))
        assert pl.relevance == pytest.approx(analytic, abs=1e-8)


def test_all_constant_dataset_zero_relevance():
    # rank-0 data cannot be fit by the linear backend, so the degenerate
    # case runs through an (untrained) autoencoder backend instead
    from drwhatif import train

    values = np.full((4, 2), [1.0, 2.0])
    ds = Dataset(list("abcd"), ["x", "y"], values)
    model = train(ds, [2, 4, 2, 4, 2], epochs=0, batch=2, seed=0)
    s = Session(ds, make_backend(model))
    s.select(0)
    pls = build_all_prolines(s)
    assert all(pl.relevance == 0.0 for pl in pls)
    assert all(pl.degenerate for pl in pls)


def test_top_proline_dominant_range(identity_session):
    # ranges/loadings make feature 0 dominate
    pls = build_all_prolines(identity_session)
    assert pls[0].feature_index == 0
    assert pls[0].relevance >= pls[1].relevance >= pls[2].relevance


def test_sort_stable_with_ties():
    ds = design_dataset([1.0, 1.0, 0.01])  # identical spread on features 0, 1
    s = _session(ds)
    pls = build_all_prolines(s)
    relevances = [pl.relevance for pl in pls]
    assert relevances == sorted(relevances, reverse=True)
    tied = [pl.feature_index for pl in pls if abs(pl.relevance - relevances[0]) < 1e-12]
    assert tied == sorted(tied)  # ties broken by feature index


def test_order_by_variance():
    ds = design_dataset([0.5, 2.0, 0.05])
    s = _session(ds)
    pls = build_all_prolines(s, order_by="variance")
    assert pls[0].feature_index == 1


def test_sampling_refinement_shared_values():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds)
    st = s.stats[2]
    coarse = build_proline(s, 2, step=st.std / 4)
    fine = build_proline(s, 2, step=st.std / 8)
    fine_map = {v: p for v, p in zip(fine.values, fine.positions)}
    for v, p in zip(coarse.values, coarse.positions):
        if v in fine_map:
            assert np.array_equal(fine_map[v], p)
    # endpoints always shared
    assert np.array_equal(coarse.positions[0], fine.positions[0])
    assert np.array_equal(coarse.positions[-1], fine.positions[-1])


def test_green_red_segments_on_the_same_line():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds, row=7)
    for pl in build_all_prolines(s):
        both = np.vstack([seg for seg in (pl.green, pl.red, pl.positions) if len(seg)])
        assert _collinearity_residual(both) < 1e-8


def test_green_red_cover_sigma_band():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds, row=2)
    i = 1
    st = s.stats[i]
    pl = build_proline(s, i)
    x_i = float(s.working_point[i])
    sig_hi = min(st.mean + st.std, st.max)
    sig_lo = max(st.mean - st.std, st.min)
    model = s.backend.model
    wp = s.working_point.copy()
    if x_i <= sig_hi:
        wp[i] = sig_hi
        assert np.abs(pl.green[-1] - project_point(model, wp)).max() < 1e-10
    if sig_lo <= x_i:
        wp[i] = sig_lo
        assert np.abs(pl.red[0] - project_point(model, wp)).max() < 1e-10


# --- projection marks ---------------------------------------------------------


def test_marks_pristine_identity_state(identity_session):
    s = identity_session
    marks = projection_marks(s)
    assert all(m.direction == "unchanged" for m in marks)
    for m in marks:
        assert np.abs(m.position - s.position).max() < 1e-9


def test_marks_after_unconstrained_drag(identity_session):
    s = identity_session
    # keeps the edited values inside the observed ranges (marks live on the
    # proline, which covers [min_i, max_i])
    dy = np.array([0.5, 0.3])
    start = s.position.copy()
    s.drag_point(s.position + dy)
    marks = {m.feature_index: m for m in projection_marks(s)}
    # features 0 and 1 move by their own planar component, feature 2 is flat
    assert np.allclose(marks[0].position - start, [dy[0], 0.0], atol=1e-9)
    assert np.allclose(marks[1].position - start, [0.0, dy[1]], atol=1e-9)
    assert marks[0].direction == "increasing"
    assert marks[1].direction == "increasing"
    assert marks[2].direction == "unchanged"
    assert np.allclose(marks[2].position, start, atol=1e-9)


def test_marks_violated_wins(identity_session):
    s = identity_session
    cs = ConstraintSet(3)
    upper = float(s.working_point[0]) + 0.5
    cs.set_bounds(0, upper=upper)
    s.set_constraints(cs)
    s.set_feature(0, upper + 0.2)  # forward edits ignore constraints
    marks = {m.feature_index: m for m in projection_marks(s)}
    assert marks[0].direction == "violated"
    # oracle: the constraint evaluator flags exactly feature 0
    assert s.constraints.violations(s.working_point) == [0]


def test_mark_interpolation_error_bound():
    ds = load_csv(make_oecd_csv(), id_column="name")
    s = _session(ds, row=6)
    s.drag_point(s.position + np.array([0.5, 0.5]))
    model = s.backend.model
    for m in projection_marks(s):
        pl = build_proline(s, m.feature_index, base_point=s.pristine_point)
        max_gap = float(np.linalg.norm(np.diff(pl.positions, axis=0), axis=1).max())
        wp = s.pristine_point.copy()
        v = float(np.clip(s.working_point[m.feature_index], pl.values[0], pl.values[-1]))
        wp[m.feature_index] = v
        exact = project_point(model, wp)
        assert np.linalg.norm(m.position - exact) <= max_gap + 1e-12
