import io

import numpy as np
import pytest

from drwhatif import Dataset, fit_pca, make_backend, train
from drwhatif.session import Session

# Feature columns for the OECD-style CSV fixture: one name column plus
# eight numeric development indices, 34 rows.
OECD_FEATURES = [
    "Education",
    "Income",
    "Health",
    "Housing",
    "Environment",
    "Safety",
    "WorkLifeBalance",
    "StudentSkills",
]


def make_oecd_csv(seed: int = 12) -> str:
    rng = np.random.default_rng(seed)
    scale = np.array([10.0, 20000.0, 5.0, 8.0, 15.0, 4.0, 12.0, 60.0])
    center = np.array([75.0, 30000.0, 70.0, 60.0, 55.0, 85.0, 50.0, 480.0])
    rows = []
    for i in range(34):
        values = center + scale * rng.standard_normal(8)
        cells = ",".join(f"{v:.6f}" for v in values)
        rows.append(f"country{i + 1:02d},{cells}")
    return "name," + ",".join(OECD_FEATURES) + "\n" + "\n".join(rows) + "\n"


def design_dataset(spreads, levels=None, n_copies: int = 1) -> Dataset:
    """Orthogonal sign-design dataset: every +-combination of the given
    per-feature spreads, so the empirical covariance is exactly diagonal
    with variances spreads**2 and the fitted axes are exactly canonical."""
    d = len(spreads)
    rows = []
    for mask in range(2**d):
        row = [spreads[j] if (mask >> j) & 1 else -spreads[j] for j in range(d)]
        rows.append(row)
    values = np.array(rows * n_copies, dtype=float)
    if levels is not None:  # shift chosen features to asymmetric levels
        for j, (lo, hi) in levels.items():
            col = values[:, j]
            values[:, j] = np.where(col > 0, hi, lo)
    ids = [f"p{i}" for i in range(len(values))]
    names = [f"f{j}" for j in range(d)]
    return Dataset(ids, names, values)


@pytest.fixture(scope="session")
def oecd_csv() -> str:
    return make_oecd_csv()


@pytest.fixture(scope="session")
def identity_ds() -> Dataset:
    # variances 4 > 1 > 0.01: principal axes are exactly the first two
    # canonical directions, feature 2 has spread but zero loading
    return design_dataset([2.0, 1.0, 0.1])


@pytest.fixture()
def identity_session(identity_ds) -> Session:
    model = fit_pca(identity_ds)
    session = Session(identity_ds, make_backend(model))
    session.select(0)
    return session


def curve_dataset(n: int = 200, seed: int = 42) -> Dataset:
    """1-D curve embedded in 5-D with mild noise: the autoencoder fixture."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n)
    X = np.stack(
        [t, np.sin(2 * np.pi * t), 0.5 * np.cos(2 * np.pi * t), t**2, 1.0 - t], axis=1
    )
    X = X + rng.normal(0.0, 0.01, X.shape)
    return Dataset([f"r{i}" for i in range(n)], [f"f{j}" for j in range(5)], X)


@pytest.fixture(scope="session")
def curve_ds() -> Dataset:
    return curve_dataset()


@pytest.fixture(scope="session")
def curve_autoencoder(curve_ds):
    # pinned training fixture shared across tests; see calibration notes in
    # test_autoencoder
    return train(curve_ds, [5, 8, 2, 8, 5], epochs=500, batch=32, learning_rate=0.05, seed=3)


def random_orthonormal_pair(d: int, rng) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q[:, :2]
