"""Evaluation harness: synthetic Gaussian sweeps, wall-clock timing and the
neighborhood-correlation accuracy index.

Accuracy compares two layouts after a hypothetical edit: the interactive
shortcut (out-of-sample projection of the single edited point) against the
ground truth obtained by re-fitting the reduction on the modified data.
The index c_n = c_e * c_o multiplies neighborhood overlap by pairwise
order preservation.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .backend import PcaBackend
from .dataset import Dataset
from .pca import Layout, PcaModel, backward_unconstrained, fit_pca, forward_project, project_all
from .pca import _fix_signs
from .session import Session


@dataclass(frozen=True)
class NeighborhoodReport:
    c_e: float  # overlap fraction of the two neighbor sets
    c_o: float  # concordant-pair fraction among common neighbors
    c_n: float  # product index
    n: int


@dataclass
class SweepConfig:
    sample_counts: list[int] = field(default_factory=lambda: [100, 250, 500])
    dimension_counts: list[int] = field(default_factory=lambda: [10, 50, 100])
    fp_deltas: list[float] = field(default_factory=lambda: [1 / 8, 1 / 4, 1 / 2, 1.0])
    bp_deltas: list[float] = field(default_factory=lambda: [1 / 80, 1 / 40, 1 / 20, 1 / 10])
    bp_directions: int = 8
    iterations: int = 3
    seed: int = 0
    points_per_dataset: int = 10
    neighborhood_size: int = 10
    fixed_samples: int = 100  # sample count while sweeping dimensions
    fixed_dims: int = 10  # dimension count while sweeping samples
    timing_reps: int = 200
    proline_samples: int = 5  # forward projections per timed proline
    fmap_resolution: tuple[int, int] = (10, 10)  # 100 backward samples

    def validate(self) -> None:
        if min(self.sample_counts, default=0) < 2 or min(self.dimension_counts, default=0) < 2:
            raise ValueError("sample and dimension counts must be >= 2")
        if any(d <= 0 for d in self.fp_deltas) or any(d <= 0 for d in self.bp_deltas):
            raise ValueError("deltas must be positive")
        if self.iterations < 1 or self.points_per_dataset < 1:
            raise ValueError("iterations and points_per_dataset must be >= 1")

    def to_json(self) -> dict:
        return {
            "sample_counts": self.sample_counts,
            "dimension_counts": self.dimension_counts,
            "fp_deltas": self.fp_deltas,
            "bp_deltas": self.bp_deltas,
            "bp_directions": self.bp_directions,
            "iterations": self.iterations,
            "seed": self.seed,
            "points_per_dataset": self.points_per_dataset,
            "neighborhood_size": self.neighborhood_size,
            "fixed_samples": self.fixed_samples,
            "fixed_dims": self.fixed_dims,
            "timing_reps": self.timing_reps,
            "proline_samples": self.proline_samples,
            "fmap_resolution": list(self.fmap_resolution),
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "SweepConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        cfg = cls()
        for key, value in obj.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown sweep config key {key!r}")
            if key == "fmap_resolution":
                value = tuple(int(v) for v in value)
            setattr(cfg, key, value)
        cfg.validate()
        return cfg


# --- synthetic data ---------------------------------------------------------


def gaussian_covariance(d: int, seed) -> np.ndarray:
    """Random SPD covariance: orthogonal rotation of a diagonal with
    eigenvalues log-uniform in [0.25, 4]."""
    rng = np.random.default_rng([_seed_key(seed), 0])
    eigvals = np.exp(rng.uniform(np.log(0.25), np.log(4.0), size=d))
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))  # deterministic orientation
    return (Q * eigvals) @ Q.T


def _seed_key(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    raise ValueError("seed must be an integer")


def gen_gaussian(n: int, d: int, seed, cov: np.ndarray | None = None) -> Dataset:
    """Zero-mean multivariate normal sample, deterministic from the seed."""
    if n < 2 or d < 2:
        raise ValueError(f"need n >= 2 and d >= 2, got {n}x{d}")
    if cov is None:
        cov = gaussian_covariance(d, seed)
    eigvals, Q = np.linalg.eigh(cov)
    A = Q * np.sqrt(np.maximum(eigvals, 0.0))
    rng = np.random.default_rng([_seed_key(seed), 1])
    values = rng.standard_normal((n, d)) @ A.T
    return Dataset([f"g{i}" for i in range(n)], [f"x{j}" for j in range(d)], values)


# --- neighborhood correlation ------------------------------------------------


def _neighbor_order(layout: Layout, point: int) -> list[int]:
    pos = np.asarray(layout.positions, dtype=float)
    deltas = pos - pos[point]
    dists = np.hypot(deltas[:, 0], deltas[:, 1])
    return [i for _, i in sorted((float(dists[i]), i) for i in range(len(pos)) if i != point)]


def neighborhood_correlation(
    layout_a: Layout, layout_b: Layout, point: int, n: int
) -> NeighborhoodReport:
    """Compare the n nearest planar neighbors of one point in two layouts.

    c_e is the overlap fraction |A ∩ B| / n. c_o is the fraction of
    concordant ordered pairs among the common elements (both layouts rank u
    closer than v, or both rank it farther); with fewer than two common
    elements there is no order to break and c_o is 1.
    """
    rows = len(layout_a.positions)
    if len(layout_b.positions) != rows:
        raise ValueError("layouts must index the same rows")
    if not 1 <= n < rows:
        raise ValueError(f"neighborhood size {n} out of range 1..{rows - 1}")
    order_a = _neighbor_order(layout_a, point)[:n]
    order_b = _neighbor_order(layout_b, point)[:n]
    common = sorted(set(order_a) & set(order_b))
    c_e = len(common) / n

    if len(common) < 2:
        c_o = 1.0
    else:
        rank_a = {idx: r for r, idx in enumerate(order_a)}
        rank_b = {idx: r for r, idx in enumerate(order_b)}
        concordant = 0
        total = 0
        for ui in range(len(common)):
            for vi in range(ui + 1, len(common)):
                u, v = common[ui], common[vi]
                total += 1
                if (rank_a[u] - rank_a[v]) * (rank_b[u] - rank_b[v]) > 0:
                    concordant += 1
        c_o = concordant / total
    return NeighborhoodReport(c_e=c_e, c_o=c_o, c_n=c_e * c_o, n=n)


# --- single accuracy trials ---------------------------------------------------


def _refit_positions(X_mod: np.ndarray, reference: PcaModel) -> Layout:
    """Ground truth after an edit: re-fit on the modified matrix, align
    component signs to the reference so flips do not read as accuracy loss."""
    mean = X_mod.mean(axis=0)
    Xc = X_mod - mean
    cov = (Xc.T @ Xc) / X_mod.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    E = _fix_signs(eigvecs[:, order[:2]])
    for k in range(2):
        if float(E[:, k] @ reference.components[:, k]) < 0:
            E[:, k] = -E[:, k]
    return Layout.from_positions(Xc @ E)


def fp_accuracy_trial(
    X: np.ndarray,
    model: PcaModel,
    layout: Layout,
    point: int,
    feature: int,
    delta: float,
    n_neighbors: int,
) -> float:
    """c_n for one forward-projection edit: feature value bumped by delta."""
    shortcut = layout.positions.copy()
    dx = np.zeros(X.shape[1])
    dx[feature] = delta
    shortcut[point] = shortcut[point] + forward_project(model, dx)

    X_mod = X.copy()
    X_mod[point, feature] += delta
    truth = _refit_positions(X_mod, model)
    return neighborhood_correlation(
        Layout.from_positions(shortcut), truth, point, n_neighbors
    ).c_n


def bp_accuracy_trial(
    X: np.ndarray,
    model: PcaModel,
    layout: Layout,
    point: int,
    angle: float,
    delta: float,
    n_neighbors: int,
) -> float:
    """c_n for one unconstrained backward projection: planar move of length
    delta in the given direction."""
    dy = delta * np.array([np.cos(angle), np.sin(angle)])
    dx = backward_unconstrained(model, dy)

    shortcut = layout.positions.copy()
    shortcut[point] = shortcut[point] + dy

    X_mod = X.copy()
    X_mod[point] = X_mod[point] + dx
    truth = _refit_positions(X_mod, model)
    return neighborhood_correlation(
        Layout.from_positions(shortcut), truth, point, n_neighbors
    ).c_n


# --- sweep -------------------------------------------------------------------


@dataclass
class SweepCell:
    axis: str  # "samples" | "dims"
    axis_value: int
    delta: float | None  # fraction of sigma (fp) or plane width (bp)
    op: str  # "fp" | "bp" | "proline" | "fmap"
    mean_cn: float | None
    sd_cn: float | None
    mean_time_us: float
    sd_time_us: float
    trials: int

    def to_json(self) -> dict:
        return {
            "axis": self.axis,
            "axis_value": self.axis_value,
            "delta": self.delta,
            "op": self.op,
            "mean_cn": self.mean_cn,
            "sd_cn": self.sd_cn,
            "mean_time_us": self.mean_time_us,
            "sd_time_us": self.sd_time_us,
            "trials": self.trials,
        }


@dataclass
class SweepReport:
    cells: list[SweepCell]
    environment: dict
    config: SweepConfig

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["axis", "axis_value", "delta", "op", "mean_cn", "sd_cn", "mean_time_us", "sd_time_us", "trials"]
        )
        for c in self.cells:
            writer.writerow(
                [
                    c.axis,
                    c.axis_value,
                    "" if c.delta is None else repr(c.delta),
                    c.op,
                    "" if c.mean_cn is None else repr(c.mean_cn),
                    "" if c.sd_cn is None else repr(c.sd_cn),
                    repr(c.mean_time_us),
                    repr(c.sd_time_us),
                    c.trials,
                ]
            )
        return out.getvalue()

    def to_json(self) -> dict:
        return {
            "environment": self.environment,
            "config": self.config.to_json(),
            "cells": [c.to_json() for c in self.cells],
        }

    def mean_cn_by_delta(self, op: str, axis: str | None = None) -> dict[float, float]:
        """Trial-weighted mean c_n per delta, over matching cells."""
        sums: dict[float, float] = {}
        counts: dict[float, int] = {}
        for c in self.cells:
            if c.op != op or c.mean_cn is None or c.delta is None:
                continue
            if axis is not None and c.axis != axis:
                continue
            sums[c.delta] = sums.get(c.delta, 0.0) + c.mean_cn * c.trials
            counts[c.delta] = counts.get(c.delta, 0) + c.trials
        return {d: sums[d] / counts[d] for d in sorted(sums)}

    def cn_range_over_axis(self, op: str, axis: str, delta: float) -> float:
        values = [
            c.mean_cn
            for c in self.cells
            if c.op == op and c.axis == axis and c.delta == delta and c.mean_cn is not None
        ]
        return max(values) - min(values) if values else 0.0

    def timing(self, op: str, axis: str, axis_value: int) -> float:
        for c in self.cells:
            if c.op == op and c.axis == axis and c.axis_value == axis_value:
                return c.mean_time_us
        raise KeyError(f"no {op} timing cell for {axis}={axis_value}")


def _environment_fingerprint() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


def _time_op(fn, reps: int) -> tuple[float, float]:
    """Mean and sd wall time of fn() in microseconds (monotonic clock)."""
    samples = np.empty(reps)
    for r in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples[r] = (time.perf_counter_ns() - t0) / 1000.0
    return float(samples.mean()), float(samples.std())


def _accuracy_cells(
    cfg: SweepConfig, axis: str, axis_value: int, ds: Dataset, model: PcaModel, layout: Layout, rng
) -> list[SweepCell]:
    X = ds.values
    n, d = X.shape
    sigmas = X.std(axis=0)
    points = rng.choice(n, size=min(cfg.points_per_dataset, n), replace=False)

    cells = []
    for frac in cfg.fp_deltas:
        scores = []
        for _ in range(cfg.iterations):
            for p in points:
                for j in range(d):
                    scores.append(
                        fp_accuracy_trial(
                            X, model, layout, int(p), j, frac * sigmas[j], cfg.neighborhood_size
                        )
                    )
        arr = np.array(scores)
        cells.append(
            SweepCell(axis, axis_value, frac, "fp", float(arr.mean()), float(arr.std()), 0.0, 0.0, len(arr))
        )

    angles = 2.0 * np.pi * np.arange(cfg.bp_directions) / cfg.bp_directions
    for frac in cfg.bp_deltas:
        scores = []
        for _ in range(cfg.iterations):
            for p in points:
                for angle in angles:
                    scores.append(
                        bp_accuracy_trial(
                            X, model, layout, int(p), float(angle), frac * layout.width, cfg.neighborhood_size
                        )
                    )
        arr = np.array(scores)
        cells.append(
            SweepCell(axis, axis_value, frac, "bp", float(arr.mean()), float(arr.std()), 0.0, 0.0, len(arr))
        )
    return cells


def _timing_cells(
    cfg: SweepConfig, axis: str, axis_value: int, ds: Dataset, model: PcaModel, layout: Layout
) -> tuple[dict[str, tuple[float, float]], list[SweepCell]]:
    d = ds.d
    sigmas = ds.values.std(axis=0)

    state = {"j": 0}

    def fp_once():
        j = state["j"]
        dx = np.zeros(d)
        dx[j] = sigmas[j]
        forward_project(model, dx)
        state["j"] = (j + 1) % d

    dy = np.array([layout.width / 20.0, layout.width / 40.0])

    def bp_once():
        backward_unconstrained(model, dy)

    session = Session(ds, PcaBackend(model))
    session.select(0)
    step_for = [
        (session.stats[j].max - session.stats[j].min) / max(cfg.proline_samples - 1, 1)
        for j in range(d)
    ]

    from .prolines import build_proline  # local import to avoid a cycle

    def proline_once():
        # the interactive tool rebuilds one proline per feature, so the
        # timed unit is the full per-feature set at the coarse resolution
        for j in range(d):
            build_proline(session, j, step=step_for[j] if step_for[j] > 0 else None)

    from .constraints import ConstraintSet
    from .feasibility import compute_map

    fmap_session = Session(ds, PcaBackend(model))
    fmap_session.select(0)
    cs = ConstraintSet(d)
    cs.set_bounds(0, lower=float(ds.values[0, 0] - sigmas[0]))
    fmap_session.set_constraints(cs)

    def fmap_once():
        compute_map(fmap_session, cfg.fmap_resolution)

    fp_t = _time_op(fp_once, cfg.timing_reps)
    bp_t = _time_op(bp_once, cfg.timing_reps)
    pro_reps = max(cfg.timing_reps // 10, 5)
    fmap_reps = max(cfg.timing_reps // 40, 3)
    pro_t = _time_op(proline_once, pro_reps)
    fmap_t = _time_op(fmap_once, fmap_reps)

    extra = [
        SweepCell(axis, axis_value, None, "proline", None, None, pro_t[0], pro_t[1], pro_reps),
        SweepCell(axis, axis_value, None, "fmap", None, None, fmap_t[0], fmap_t[1], fmap_reps),
    ]
    return {"fp": fp_t, "bp": bp_t}, extra


def run_sweep(cfg: SweepConfig) -> SweepReport:
    """Accuracy and timing over the sample-count and dimension-count axes.

    Per-cell random streams are derived from (seed, axis, value), so cells
    are independent and any evaluation order gives identical c_n numbers.
    Timings are environment-dependent and recorded with a fingerprint.
    """
    cfg.validate()
    cells: list[SweepCell] = []
    axes = [
        ("samples", [(v, v, cfg.fixed_dims) for v in cfg.sample_counts]),
        ("dims", [(v, cfg.fixed_samples, v) for v in cfg.dimension_counts]),
    ]
    for axis_id, (axis, combos) in enumerate(axes):
        for axis_value, n, d in combos:
            cell_seed = [cfg.seed, axis_id, axis_value]
            ds = gen_gaussian(n, d, seed=cfg.seed * 1000003 + axis_id * 1009 + axis_value)
            model = fit_pca(ds)
            layout = project_all(model, ds)
            rng = np.random.default_rng(cell_seed)

            acc = _accuracy_cells(cfg, axis, axis_value, ds, model, layout, rng)
            core_t, extra = _timing_cells(cfg, axis, axis_value, ds, model, layout)
            for c in acc:
                mean_t, sd_t = core_t[c.op]
                c.mean_time_us = mean_t
                c.sd_time_us = sd_t
            cells.extend(acc)
            cells.extend(extra)

    return SweepReport(cells=cells, environment=_environment_fingerprint(), config=cfg)
