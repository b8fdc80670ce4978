"""Batch front door: fit models, run one-off forward/backward projections,
emit prolines and feasibility masks as data files, run sweeps, start the
HTTP service.

stdout carries data (JSON, CSV, PGM paths), stderr carries diagnostics as
one JSON object per failure. Exit codes: 0 success, 2 usage error,
3 data/contract error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import feasibility
from .analysis import SweepConfig, run_sweep
from .autoencoder import AutoencoderModel, train
from .backend import make_backend
from .constraints import ConstraintSet
from .dataset import Dataset, load_csv
from .errors import DataError, EngineError
from .pca import PcaModel, fit_pca, project_all
from .prolines import build_all_prolines
from .session import Session

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # machine-readable usage failures
        raise _UsageError(message)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _fail(code: str, detail: str) -> None:
    sys.stderr.write(json.dumps({"error": {"code": code, "detail": detail}}) + "\n")


def _read_file(path: str) -> bytes:
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}", code="file_not_found")
    with open(path, "rb") as fh:
        return fh.read()


def _load_dataset(path: str, id_column) -> Dataset:
    column = id_column if id_column is not None else 0
    if isinstance(column, str) and column.lstrip("-").isdigit():
        column = int(column)
    return load_csv(_read_file(path), id_column=column)


def _load_model(path: str):
    obj = json.loads(_read_file(path))
    kind = obj.get("type")
    if kind == "pca":
        return PcaModel.from_json(obj)
    if kind == "autoencoder":
        return AutoencoderModel.from_json(obj)
    raise DataError(f"unknown model type {kind!r} in {path}", code="bad_model_file")


def _resolve_point(ds: Dataset, token: str) -> int:
    if token in ds.row_ids:
        return ds.row_index(token)
    try:
        idx = int(token)
    except ValueError:
        raise DataError(f"unknown point {token!r}", code="unknown_row") from None
    if not 0 <= idx < ds.n:
        raise DataError(f"row index {idx} out of range 0..{ds.n - 1}", code="unknown_row")
    return idx


def _resolve_feature(ds: Dataset, token: str) -> int:
    if token in ds.feature_names:
        return ds.feature_index(token)
    try:
        idx = int(token)
    except ValueError:
        raise DataError(f"unknown feature {token!r}", code="unknown_feature") from None
    if not 0 <= idx < ds.d:
        raise DataError(f"feature index {idx} out of range 0..{ds.d - 1}", code="unknown_feature")
    return idx


def _session_for(args) -> tuple[Session, int]:
    ds = _load_dataset(args.data, getattr(args, "id_column", None))
    model = _load_model(args.model)
    session = Session(ds, make_backend(model))
    row = _resolve_point(ds, args.point)
    session.select(row)
    return session, row


def _apply_constraint_flags(session: Session, locks, bounds) -> None:
    ds = session.dataset
    cs = ConstraintSet(ds.d)
    for token in locks or []:
        if "=" in token:
            name, _, value = token.partition("=")
            cs.lock(_resolve_feature(ds, name), float(value))
        else:
            cs.lock(_resolve_feature(ds, token))
    for token in bounds or []:
        parts = token.split(":")
        if len(parts) != 3:
            raise DataError(f"bound must look like FEATURE:LO:HI, got {token!r}", code="bad_bound")
        name, lo, hi = parts
        cs.set_bounds(
            _resolve_feature(ds, name),
            lower=float(lo) if lo != "" else None,
            upper=float(hi) if hi != "" else None,
        )
    session.set_constraints(cs)


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise DataError(f"{what} must look like X,Y, got {text!r}", code="bad_pair")
    return float(parts[0]), float(parts[1])


# --- subcommand bodies ---------------------------------------------------


def _cmd_fit(args) -> int:
    ds = _load_dataset(args.input, args.id_column)
    backend = args.backend or "pca"
    if backend == "pca":
        model = fit_pca(ds, standardize=bool(args.standardize))
    elif backend in ("ae", "autoencoder"):
        if args.layers:
            layer_sizes = [int(t) for t in args.layers.split(",")]
        else:
            hidden = max(8, ds.d)
            layer_sizes = [ds.d, hidden, 2, hidden, ds.d]
        model = train(
            ds,
            layer_sizes,
            epochs=500 if args.epochs is None else int(args.epochs),
            batch=min(32, ds.n) if args.batch is None else int(args.batch),
            learning_rate=0.05 if args.learning_rate is None else float(args.learning_rate),
            seed=0 if args.seed is None else int(args.seed),
        )
    else:
        raise DataError(f"unknown backend {backend!r}", code="bad_backend")

    with open(args.out, "w") as fh:
        json.dump(model.to_json(), fh)
        fh.write("\n")

    layout_path = args.layout_out or (os.path.splitext(args.out)[0] + ".layout.csv")
    session = Session(ds, make_backend(model))
    lines = ["id,x,y"]
    for rid, (x, y) in zip(ds.row_ids, session.layout.positions):
        lines.append(f"{rid},{float(x)!r},{float(y)!r}")
    with open(layout_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    _emit(
        {
            "model": args.out,
            "layout": layout_path,
            "backend": "pca" if backend == "pca" else "autoencoder",
            "n": ds.n,
            "d": ds.d,
            "width": session.layout.width,
        }
    )
    return EXIT_OK


def _cmd_fp(args) -> int:
    session, _row = _session_for(args)
    ds = session.dataset
    base_position = session.position.copy()
    for token in args.assignments:
        if "=" not in token:
            raise DataError(f"expected FEATURE=VALUE, got {token!r}", code="bad_assignment")
        name, _, value = token.partition("=")
        session.set_feature(_resolve_feature(ds, name), float(value))
    _emit(
        {
            "point": args.point,
            "delta_y": [float(v) for v in (session.position - base_position)],
            "position": [float(v) for v in session.position],
            "values": [float(v) for v in session.working_point],
        }
    )
    return EXIT_OK


def _cmd_bp(args) -> int:
    session, _row = _session_for(args)
    _apply_constraint_flags(session, args.lock, args.bound)
    target = np.array(_parse_pair(args.to, "--to"))
    result = session.drag_point(target)
    _emit(
        {
            "point": args.point,
            "requested": [float(v) for v in result.requested],
            "achieved": [float(v) for v in result.achieved],
            "delta_x": [float(v) for v in result.delta_x],
            "values": [float(v) for v in session.working_point],
            "status": result.status,
            "residual": result.residual,
            "violated_features": result.violated_features,
        }
    )
    return EXIT_OK


def _cmd_prolines(args) -> int:
    session, _row = _session_for(args)
    order = args.order or "path_length"
    step_policy = float(args.step) if args.step is not None else None
    pls = build_all_prolines(session, step_policy=step_policy, order_by=order)
    if args.top is not None:
        pls = pls[: int(args.top)]
    _emit({"point": args.point, "prolines": [p.to_json() for p in pls]})
    return EXIT_OK


def _cmd_fmap(args) -> int:
    session, _row = _session_for(args)
    _apply_constraint_flags(session, args.lock, args.bound)
    nx, ny = (10, 10)
    if args.res is not None:
        rx, ry = _parse_pair(args.res, "--res")
        nx, ny = int(rx), int(ry)
    fmap = feasibility.compute_map(session, (nx, ny))
    with open(args.out, "w") as fh:
        fh.write(fmap.to_pgm())
    _emit({"point": args.point, "pgm": args.out, **fmap.to_json()})
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = SweepConfig.from_json(json.loads(_read_file(args.sweep))) if args.sweep else SweepConfig()
    report = run_sweep(cfg)
    csv_text = report.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
        _emit({"report": args.out, "cells": len(report.cells)})
    else:
        sys.stdout.write(csv_text)
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(report.to_json(), fh)
            fh.write("\n")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    listen = args.listen or "127.0.0.1:8000"
    host, _, port = listen.rpartition(":")
    config = ServiceConfig(
        max_dataset_bytes=int(float(args.max_dataset_mb or 10) * 1024 * 1024),
        cors_origins=args.cors or [],
    )
    uvicorn.run(create_app(config), host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


# --- argument plumbing ----------------------------------------------------


def _add_common_model_args(p: _Parser) -> None:
    p.add_argument("--model", required=True, help="model JSON produced by fit")
    p.add_argument("--data", required=True, help="dataset CSV the model was fit on")
    p.add_argument("--id-column", default=None, help="identifier column name or index (default first)")
    p.add_argument("--point", required=True, help="row id (or index) to operate on")
    p.add_argument("--config", default=None, help="JSON file with defaults for any flag")


def build_parser() -> _Parser:
    parser = _Parser(prog="drwhatif", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a reduction and write model + layout")
    p.add_argument("input", help="dataset CSV")
    p.add_argument("--backend", choices=["pca", "ae", "autoencoder"], default=None)
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--layout-out", default=None, help="layout CSV path (default <out>.layout.csv)")
    p.add_argument("--id-column", default=None)
    p.add_argument("--layers", default=None, help="autoencoder layer sizes, e.g. 8,4,2,4,8")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("fp", help="forward-project feature edits for one point")
    _add_common_model_args(p)
    p.add_argument("assignments", nargs="+", help="FEATURE=VALUE edits")
    p.set_defaults(func=_cmd_fp)

    p = sub.add_parser("bp", help="backward-project a planar target for one point")
    _add_common_model_args(p)
    p.add_argument("--to", required=True, help="target position X,Y")
    p.add_argument("--lock", action="append", default=None, help="FEATURE[=VALUE] equality lock")
    p.add_argument("--bound", action="append", default=None, help="FEATURE:LO:HI box bound")
    p.set_defaults(func=_cmd_bp)

    p = sub.add_parser("prolines", help="emit prolines JSON for one point")
    _add_common_model_args(p)
    p.add_argument("--top", type=int, default=None, help="keep only the k most relevant")
    p.add_argument("--step", type=float, default=None, help="absolute sweep step override")
    p.add_argument("--order", choices=["path_length", "variance"], default=None)
    p.set_defaults(func=_cmd_prolines)

    p = sub.add_parser("fmap", help="emit a feasibility mask as PGM + JSON")
    _add_common_model_args(p)
    p.add_argument("--res", default=None, help="grid resolution NX,NY (default 10,10)")
    p.add_argument("--lock", action="append", default=None)
    p.add_argument("--bound", action="append", default=None)
    p.add_argument("--out", required=True, help="PGM output path")
    p.set_defaults(func=_cmd_fmap)

    p = sub.add_parser("bench", help="run the model-analysis sweep")
    p.add_argument("--sweep", default=None, help="sweep config JSON")
    p.add_argument("--out", default=None, help="report CSV path (default stdout)")
    p.add_argument("--json-out", default=None, help="also write the JSON report here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--listen", default=None, help="HOST:PORT (default 127.0.0.1:8000)")
    p.add_argument("--cors", action="append", default=None, help="allowed UI origin (repeatable)")
    p.add_argument("--max-dataset-mb", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def _merge_config(args: argparse.Namespace) -> None:
    """Fill unset flags (None) from the --config JSON file; explicit flags win."""
    path = getattr(args, "config", None)
    if not path:
        return
    obj = json.loads(_read_file(path).decode("utf-8"))
    if not isinstance(obj, dict):
        raise DataError("config file must hold a JSON object", code="bad_config")
    for key, value in obj.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise DataError(f"unknown config key {key!r}", code="bad_config")
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _fail("usage", str(exc))
        return EXIT_USAGE
    try:
        _merge_config(args)
        return args.func(args)
    except EngineError as exc:
        _fail(exc.code, exc.detail)
        return EXIT_DATA
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _fail("bad_input", str(exc))
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        _fail("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
