import numpy as np
import pytest

from drwhatif import (
    Dataset,
    ModelError,
    PcaModel,
    backward_unconstrained,
    fit_pca,
    forward_project,
    load_csv,
    project_all,
    project_point,
)
from conftest import make_oecd_csv, random_orthonormal_pair


def _dataset(values):
    values = np.asarray(values, dtype=float)
    return Dataset(
        [f"r{i}" for i in range(len(values))],
        [f"f{j}" for j in range(values.shape[1])],
        values,
    )


def test_axis_aligned_variance():
    ds = _dataset([[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    model = fit_pca(ds)
    assert np.allclose(np.abs(model.components[:, 0]), [1.0, 0.0, 0.0], atol=1e-12)
    assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-15)


def test_perfect_correlation():
    ds = _dataset([[1, 1], [-1, -1], [2, 2], [-2, -2]])
    model = fit_pca(ds)
    expected = np.array([1.0, 1.0]) / np.sqrt(2.0)
    assert np.allclose(model.components[:, 0], expected, atol=1e-12)  # sign-fixed positive


def test_random_matrix_matches_svd_oracle():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((10, 4))
    ds = _dataset(X)
    model = fit_pca(ds)
    # independent oracle: SVD of the centered data (different route than eigh)
    Xc = X - X.mean(axis=0)
    _, svals, Vt = np.linalg.svd(Xc, full_matrices=False)
    for k in range(2):
        v = Vt[k]
        err = min(np.abs(model.components[:, k] - v).max(), np.abs(model.components[:, k] + v).max())
        assert err < 1e-8
        assert model.explained_variance[k] == pytest.approx(svals[k] ** 2 / len(X), rel=1e-10)


def test_orthonormal_invariant():
    rng = np.random.default_rng(5)
    for _ in range(10):
        ds = _dataset(rng.standard_normal((12, 6)))
        model = fit_pca(ds)
        gram = model.components.T @ model.components
        assert np.abs(gram - np.eye(2)).max() < 1e-10
        assert model.explained_variance[0] >= model.explained_variance[1] >= 0


def test_degenerate_covariance_rejected():
    ds = _dataset([[2.0, 3.0], [2.0, 3.0], [2.0, 3.0]])
    with pytest.raises(ModelError) as err:
        fit_pca(ds)
    assert "degenerate covariance" in err.value.detail


def test_standardize_rejects_constant_feature():
    ds = _dataset([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    with pytest.raises(ModelError) as err:
        fit_pca(ds, standardize=True)
    assert err.value.code == "constant_feature"


def test_eigenvalue_tie_flag():
    # exactly isotropic 2-D square: tied eigenvalues
    ds = _dataset([[1, 0], [-1, 0], [0, 1], [0, -1]])
    model = fit_pca(ds)
    assert model.degenerate_axes


# --- project_all ------------------------------------------------------------


def test_projection_of_mean_is_origin():
    rng = np.random.default_rng(2)
    base = rng.standard_normal(4)
    ds = _dataset(np.tile(base, (6, 1)) + np.outer(rng.standard_normal(6), rng.standard_normal(4)))
    model = fit_pca(ds)
    assert np.allclose(project_point(model, ds.values.mean(axis=0)), [0.0, 0.0], atol=1e-12)


def test_identity_embedded_projection(identity_ds):
    model = fit_pca(identity_ds)
    layout = project_all(model, identity_ds)
    mean = identity_ds.values.mean(axis=0)
    expected = identity_ds.values[:, :2] - mean[:2]
    assert np.abs(layout.positions - expected).max() < 1e-12
    assert layout.width == pytest.approx(4.0)


def test_oecd_matrix_product_oracle():
    ds = load_csv(make_oecd_csv(), id_column="name")
    model = fit_pca(ds)
    layout = project_all(model, ds)
    oracle = (ds.values - ds.values.mean(axis=0)) @ model.components
    assert np.abs(layout.positions - oracle).max() < 1e-10


# --- forward / backward -------------------------------------------------------


def test_forward_zero_change(identity_ds):
    model = fit_pca(identity_ds)
    assert np.array_equal(forward_project(model, np.zeros(3)), np.zeros(2))


def test_forward_canonical(identity_ds):
    model = fit_pca(identity_ds)
    dy = forward_project(model, np.array([0.7, -0.3, 123.0]))
    assert np.allclose(dy, [0.7, -0.3], atol=1e-12)


def test_forward_matches_matrix_product_oracle():
    rng = np.random.default_rng(21)
    E = random_orthonormal_pair(6, rng)
    model = PcaModel(mean=np.zeros(6), components=E, explained_variance=np.array([2.0, 1.0]))
    for _ in range(20):
        dx = rng.standard_normal(6)
        assert np.abs(forward_project(model, dx) - dx @ E).max() < 1e-12


def test_backward_zero(identity_ds):
    model = fit_pca(identity_ds)
    assert np.array_equal(backward_unconstrained(model, np.zeros(2)), np.zeros(3))


def test_backward_canonical_lift(identity_ds):
    model = fit_pca(identity_ds)
    dx = backward_unconstrained(model, np.array([0.4, -1.2]))
    assert np.allclose(dx, [0.4, -1.2, 0.0], atol=1e-12)


def test_backward_forward_round_trip():
    rng = np.random.default_rng(31)
    E = random_orthonormal_pair(7, rng)
    model = PcaModel(mean=np.zeros(7), components=E, explained_variance=np.array([2.0, 1.0]))
    for _ in range(100):
        dy = rng.standard_normal(2) * 3
        back = backward_unconstrained(model, dy)
        assert np.abs(forward_project(model, back) - dy).max() < 1e-12


# --- invariants ---------------------------------------------------------------


def test_linearity():
    rng = np.random.default_rng(41)
    ds = _dataset(rng.standard_normal((15, 5)))
    model = fit_pca(ds)
    for _ in range(25):
        a, b = rng.standard_normal(2)
        dx1, dx2 = rng.standard_normal(5), rng.standard_normal(5)
        lhs = forward_project(model, a * dx1 + b * dx2)
        rhs = a * forward_project(model, dx1) + b * forward_project(model, dx2)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_min_norm_against_random_competitors():
    rng = np.random.default_rng(51)
    E = random_orthonormal_pair(5, rng)
    model = PcaModel(mean=np.zeros(5), components=E, explained_variance=np.array([2.0, 1.0]))
    # null-space basis to generate feasible competitors dx' with dx'E = dy
    null = np.linalg.svd(E.T)[2][2:]
    for _ in range(10):
        dy = rng.standard_normal(2)
        dx = backward_unconstrained(model, dy)
        competitors = dx + rng.standard_normal((1000, null.shape[0])) @ null
        assert np.all(np.linalg.norm(dx) <= np.linalg.norm(competitors, axis=1) + 1e-9)


def test_projection_consistency():
    rng = np.random.default_rng(61)
    ds = _dataset(rng.standard_normal((20, 6)))
    model = fit_pca(ds)
    layout = project_all(model, ds)
    k = 7
    dx = rng.standard_normal(6)
    reprojected = project_point(model, ds.values[k] + dx)
    assert np.abs(reprojected - (layout.positions[k] + forward_project(model, dx))).max() < 1e-10


def test_standardized_round_trip_and_consistency():
    rng = np.random.default_rng(71)
    ds = _dataset(rng.standard_normal((25, 4)) * np.array([1.0, 10.0, 0.1, 5.0]))
    model = fit_pca(ds, standardize=True)
    gram = model.components.T @ model.components
    assert np.abs(gram - np.eye(2)).max() < 1e-10
    dy = rng.standard_normal(2)
    dx = backward_unconstrained(model, dy)
    assert np.abs(forward_project(model, dx) - dy).max() < 1e-10
    # projection consistency holds in standardized space too
    layout = project_all(model, ds)
    reprojected = project_point(model, ds.values[3] + dx)
    assert np.abs(reprojected - (layout.positions[3] + dy)).max() < 1e-10


def test_model_serialization_round_trip():
    rng = np.random.default_rng(81)
    ds = _dataset(rng.standard_normal((10, 4)))
    for standardize in (False, True):
        model = fit_pca(ds, standardize=standardize)
        again = PcaModel.from_json(model.to_json())
        assert np.array_equal(again.components, model.components)
        assert np.array_equal(again.mean, model.mean)
        x = rng.standard_normal(4)
        assert np.array_equal(project_point(again, x), project_point(model, x))


def test_sign_convention_largest_entry_positive():
    rng = np.random.default_rng(91)
    for _ in range(20):
        ds = _dataset(rng.standard_normal((9, 5)))
        model = fit_pca(ds)
        for k in range(2):
            col = model.components[:, k]
            assert col[np.argmax(np.abs(col))] > 0
