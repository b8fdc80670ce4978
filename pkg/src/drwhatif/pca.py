"""PCA to two dimensions plus the linear forward/backward projection maps.

The planar change caused by a feature edit dx is dy = dx @ E, and the
minimum-norm lift of a planar move dy back into feature space is
dx = dy @ E.T. Both are exposed here as pure functions of the fitted model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ModelError

# Relative gap under which the top two eigenvalues count as tied.
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    """First two principal axes of a dataset.

    ``components`` is d x 2 with orthonormal columns e0, e1. When
    ``standardize`` is set, ``scale`` holds the per-feature population std
    that was divided out before fitting, and all projection maps apply it.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    standardize: bool = False
    scale: np.ndarray | None = None
    degenerate_axes: bool = False

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def to_json(self) -> dict:
        return {
            "type": "pca",
            "mean": [float(v) for v in self.mean],
            # column-major: one list per principal component
            "components": [[float(v) for v in self.components[:, k]] for k in range(2)],
            "explained_variance": [float(v) for v in self.explained_variance],
            "standardize": self.standardize,
            "scale": None if self.scale is None else [float(v) for v in self.scale],
            "degenerate_axes": self.degenerate_axes,
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "PcaModel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if obj.get("type") != "pca":
            raise ModelError(f"not a pca model file: type={obj.get('type')!r}")
        # contiguous d x 2 so matmuls reproduce the freshly-fitted model bit
        # for bit (replay determinism)
        components = np.ascontiguousarray(np.array(obj["components"], dtype=float).T)
        scale = obj.get("scale")
        return cls(
            mean=np.array(obj["mean"], dtype=float),
            components=components,
            explained_variance=np.array(obj["explained_variance"], dtype=float),
            standardize=bool(obj.get("standardize", False)),
            scale=None if scale is None else np.array(scale, dtype=float),
            degenerate_axes=bool(obj.get("degenerate_axes", False)),
        )


@dataclass(frozen=True)
class Layout:
    """Planar positions of every dataset row plus the plane width."""

    positions: np.ndarray  # n x 2
    width: float = field(default=0.0)

    @staticmethod
    def from_positions(positions: np.ndarray) -> "Layout":
        positions = np.asarray(positions, dtype=float)
        width = float(positions[:, 0].max() - positions[:, 0].min()) if len(positions) else 0.0
        return Layout(positions=positions, width=width)

    def to_json(self) -> dict:
        return {
            "positions": [[float(x), float(y)] for x, y in self.positions],
            "width": self.width,
        }


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = components.copy()
    for k in range(out.shape[1]):
        j = int(np.argmax(np.abs(out[:, k])))
        if out[j, k] < 0:
            out[:, k] = -out[:, k]
    return out


def fit_pca(ds: Dataset, standardize: bool = False) -> PcaModel:
    """Fit the top-2 variance directions of the centered (optionally
    z-scored) data via a symmetric eigen-solve of the d x d covariance."""
    X = ds.values
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = None
    if standardize:
        scale = X.std(axis=0)  # population
        zero = np.flatnonzero(scale == 0.0)
        if zero.size:
            raise ModelError(
                f"cannot standardize constant feature {ds.feature_names[zero[0]]!r}",
                code="constant_feature",
            )
        Xc = Xc / scale

    cov = (Xc.T @ Xc) / ds.n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]

    data_span = float(np.max(np.abs(Xc))) if Xc.size else 0.0
    if eigvals[0] <= (1e-13 * max(1.0, data_span)) ** 2:
        raise ModelError("degenerate covariance: all rows identical", code="degenerate_covariance")

    components = _fix_signs(eigvecs[:, :2])
    tied = (eigvals[0] - eigvals[1]) <= _TIE_RTOL * eigvals[0]
    mean.setflags(write=False)
    components.setflags(write=False)
    ev = eigvals[:2].copy()
    ev.setflags(write=False)
    if scale is not None:
        scale = scale.copy()
        scale.setflags(write=False)
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=ev,
        standardize=standardize,
        scale=scale,
        degenerate_axes=bool(tied),
    )


def _check_dim(model: PcaModel, length: int, what: str) -> None:
    if length != model.d:
        raise ModelError(f"{what} has length {length}, model expects {model.d}", code="dim_mismatch")


def project_point(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Map one feature vector to its planar position."""
    x = np.asarray(x, dtype=float)
    _check_dim(model, x.shape[-1], "point")
    xc = x - model.mean
    if model.standardize:
        xc = xc / model.scale
    return xc @ model.components


def project_all(model: PcaModel, ds: Dataset) -> Layout:
    """Project every dataset row; recomputes the plane width."""
    _check_dim(model, ds.d, "dataset")
    return Layout.from_positions(project_point(model, ds.values))


def forward_project(model: PcaModel, delta_x: np.ndarray) -> np.ndarray:
    """Planar change for a feature change: dy = dx @ E (base-point free)."""
    delta_x = np.asarray(delta_x, dtype=float)
    _check_dim(model, delta_x.shape[-1], "delta_x")
    if not np.all(np.isfinite(delta_x)):
        raise ModelError("delta_x must be finite", code="non_finite_value")
    if model.standardize:
        delta_x = delta_x / model.scale
    return delta_x @ model.components


def backward_unconstrained(model: PcaModel, delta_y: np.ndarray) -> np.ndarray:
    """Minimum-norm feature change realizing a planar move: dx = dy @ E.T.

    With standardization active the lift is minimum-norm in z-score units
    and is rescaled back to raw feature units, so the forward/backward
    round trip still closes exactly.
    """
    delta_y = np.asarray(delta_y, dtype=float)
    if delta_y.shape[-1] != 2:
        raise ModelError(f"delta_y has length {delta_y.shape[-1]}, expected 2", code="dim_mismatch")
    if not np.all(np.isfinite(delta_y)):
        raise ModelError("delta_y must be finite", code="non_finite_value")
    delta_x = delta_y @ model.components.T
    if model.standardize:
        delta_x = delta_x * model.scale
    return delta_x
