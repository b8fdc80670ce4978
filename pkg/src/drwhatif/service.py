"""JSON-over-HTTP analytics server: datasets, sessions, projections,
prolines, feasibility maps.

State lives in memory only. Sessions are single-writer (one lock each);
requests across sessions run in parallel. Every response is a pure
function of (dataset, model, session history), so replaying a request log
reproduces the bytes — responses carry no timestamps. Drag requests are
idempotent per (session, sequence) and stale sequences are answered but
ignored state-wise.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import feasibility, prolines
from .autoencoder import train
from .backend import make_backend
from .constraints import ConstraintSet
from .dataset import Dataset, load_csv
from .errors import EngineError
from .pca import fit_pca
from .session import Session

API_PREFIX = "/v1"
SESSION_IDLE_SECONDS = 30 * 60
DRAG_CACHE_LIMIT = 128


@dataclass
class ServiceConfig:
    max_dataset_bytes: int = 10 * 1024 * 1024
    cors_origins: list[str] = field(default_factory=list)
    session_idle_seconds: float = SESSION_IDLE_SECONDS


class _SessionEntry:
    def __init__(self, session: Session, backend_kind: str, dataset_id: str):
        self.session = session
        self.backend_kind = backend_kind
        self.dataset_id = dataset_id
        self.lock = threading.Lock()
        self.created_at = time.monotonic()
        self.last_access = time.monotonic()
        self.drag_cache: dict[int, dict] = {}

    def cache_drag(self, sequence: int, body: dict) -> None:
        self.drag_cache[sequence] = body
        while len(self.drag_cache) > DRAG_CACHE_LIMIT:
            self.drag_cache.pop(next(iter(self.drag_cache)))


class _ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        self.status = status
        self.code = code
        self.detail = detail


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _stats_json(session: Session) -> list[dict]:
    return [
        {"name": name, **st.to_json()}
        for name, st in zip(session.dataset.feature_names, session.stats)
    ]


def _marks_json(session: Session) -> list[dict]:
    return [m.to_json() for m in prolines.projection_marks(session)]


def _point_state(session: Session) -> dict:
    return {
        "row": session.selected,
        "row_id": session.dataset.row_ids[session.selected],
        "values": _jsonable(session.working_point),
        "position": _jsonable(session.position),
        "pristine_values": _jsonable(session.pristine_point),
        "pristine_position": _jsonable(session.pristine_position),
    }


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="drwhatif", version="0.1.0")

    if config.cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=config.cors_origins,
            allow_methods=["*"],
            allow_headers=["*"],
        )

    datasets: dict[str, Dataset] = {}
    sessions: dict[str, _SessionEntry] = {}
    counters = {"dataset": 0, "session": 0}
    store_lock = threading.Lock()

    @app.exception_handler(_ApiError)
    async def api_error_handler(_req: Request, exc: _ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": {"code": exc.code, "detail": exc.detail}}
        )

    @app.exception_handler(EngineError)
    async def engine_error_handler(_req: Request, exc: EngineError):
        return JSONResponse(
            status_code=422, content={"error": {"code": exc.code, "detail": exc.detail}}
        )

    def _evict_idle() -> None:
        now = time.monotonic()
        with store_lock:
            stale = [
                sid
                for sid, entry in sessions.items()
                if now - entry.last_access > config.session_idle_seconds
            ]
            for sid in stale:
                del sessions[sid]

    def _dataset(dataset_id: str) -> Dataset:
        ds = datasets.get(dataset_id)
        if ds is None:
            raise _ApiError(404, "unknown_dataset", f"no dataset {dataset_id!r}")
        return ds

    def _entry(session_id: str) -> _SessionEntry:
        _evict_idle()
        entry = sessions.get(session_id)
        if entry is None:
            raise _ApiError(404, "unknown_session", f"no session {session_id!r}")
        entry.last_access = time.monotonic()
        return entry

    def _selected_entry(session_id: str) -> _SessionEntry:
        entry = _entry(session_id)
        if entry.session.selected is None:
            raise _ApiError(409, "no_selection", "select a point first")
        return entry

    async def _read_limited(request: Request) -> bytes:
        body = await request.body()
        if len(body) > config.max_dataset_bytes:
            raise _ApiError(
                413,
                "dataset_too_large",
                f"dataset exceeds {config.max_dataset_bytes} bytes",
            )
        return body

    # -- datasets -----------------------------------------------------------

    @app.post(API_PREFIX + "/datasets")
    async def create_dataset(request: Request, id_column: str | None = None):
        body = await _read_limited(request)
        if not body.strip():
            raise _ApiError(400, "empty_dataset", "request body is empty")
        column: str | int = 0 if id_column is None else id_column
        if isinstance(column, str) and column.lstrip("-").isdigit():
            column = int(column)
        try:
            ds = load_csv(body, id_column=column)
        except EngineError as exc:
            raise _ApiError(400, exc.code, exc.detail) from None
        with store_lock:
            counters["dataset"] += 1
            dataset_id = f"d{counters['dataset']}"
            datasets[dataset_id] = ds
        stats = [
            {"name": name, "mean": float(ds.values[:, j].mean()), "std": float(ds.values[:, j].std()),
             "min": float(ds.values[:, j].min()), "max": float(ds.values[:, j].max())}
            for j, name in enumerate(ds.feature_names)
        ]
        return {
            "dataset_id": dataset_id,
            "n": ds.n,
            "d": ds.d,
            "feature_names": ds.feature_names,
            "row_ids": ds.row_ids,
            "stats": stats,
        }

    # -- sessions -----------------------------------------------------------

    @app.post(API_PREFIX + "/sessions")
    def create_session(payload: dict):
        dataset_id = payload.get("dataset_id")
        if not dataset_id:
            raise _ApiError(400, "missing_dataset_id", "dataset_id is required")
        ds = _dataset(dataset_id)
        backend_kind = payload.get("backend", "pca")
        options = payload.get("options") or {}
        try:
            if backend_kind == "pca":
                model = fit_pca(ds, standardize=bool(options.get("standardize", False)))
            elif backend_kind == "autoencoder":
                layer_sizes = options.get("layer_sizes") or [ds.d, max(8, ds.d), 2, max(8, ds.d), ds.d]
                model = train(
                    ds,
                    [int(s) for s in layer_sizes],
                    epochs=int(options.get("epochs", 500)),
                    batch=int(options.get("batch", min(32, ds.n))),
                    learning_rate=float(options.get("learning_rate", 0.05)),
                    seed=int(options.get("seed", 0)),
                )
            else:
                raise _ApiError(400, "unknown_backend", f"backend must be pca or autoencoder, got {backend_kind!r}")
        except EngineError as exc:
            raise _ApiError(422, exc.code, exc.detail) from None
        session = Session(ds, make_backend(model), neighbor_k=int(options.get("neighbor_k", 5)))
        with store_lock:
            counters["session"] += 1
            session_id = f"s{counters['session']}"
            sessions[session_id] = _SessionEntry(session, backend_kind, dataset_id)
        return {
            "session_id": session_id,
            "backend": backend_kind,
            "dataset_id": dataset_id,
            "row_ids": ds.row_ids,
            "feature_names": ds.feature_names,
            "layout": session.layout.to_json(),
        }

    @app.post(API_PREFIX + "/sessions/{session_id}/select")
    def select_point(session_id: str, payload: dict):
        entry = _entry(session_id)
        row = payload.get("row")
        if row is None:
            raise _ApiError(400, "missing_row", "row index is required")
        with entry.lock:
            try:
                entry.session.select(int(row))
            except EngineError as exc:
                raise _ApiError(404, exc.code, exc.detail) from None
            bundle = [p.to_json() for p in prolines.build_all_prolines(entry.session)]
            return {
                **_point_state(entry.session),
                "stats": _stats_json(entry.session),
                "prolines": bundle,
            }

    @app.post(API_PREFIX + "/sessions/{session_id}/forward")
    def forward(session_id: str, payload: dict):
        entry = _selected_entry(session_id)
        session = entry.session
        feature = payload.get("feature")
        value = payload.get("value")
        if feature is None or value is None:
            raise _ApiError(400, "missing_field", "feature and value are required")
        if isinstance(feature, str):
            feature = session.dataset.feature_index(feature)
        with entry.lock:
            position = session.set_feature(int(feature), float(value))
            return {
                "position": _jsonable(position),
                "values": _jsonable(session.working_point),
                "marks": _marks_json(session),
            }

    @app.post(API_PREFIX + "/sessions/{session_id}/drag")
    def drag(session_id: str, payload: dict):
        entry = _selected_entry(session_id)
        session = entry.session
        target = payload.get("target")
        if target is None or len(target) != 2:
            raise _ApiError(400, "missing_field", "target [x, y] is required")
        sequence = payload.get("sequence")
        with entry.lock:
            if sequence is not None and int(sequence) in entry.drag_cache:
                return entry.drag_cache[int(sequence)]
            result = session.drag_point(
                np.array([float(target[0]), float(target[1])]),
                sequence=None if sequence is None else int(sequence),
            )
            body = {
                "requested": _jsonable(result.requested),
                "achieved": _jsonable(result.achieved),
                "delta_x": _jsonable(result.delta_x),
                "values": _jsonable(session.working_point),
                "status": result.status,
                "residual": result.residual,
                "violated_features": result.violated_features,
                "stale": result.stale,
                "last_feasible": _jsonable(result.last_feasible),
                "marks": _marks_json(session),
            }
            if sequence is not None and not result.stale:
                entry.cache_drag(int(sequence), body)
            return body

    @app.put(API_PREFIX + "/sessions/{session_id}/constraints")
    def set_constraints(session_id: str, payload: dict):
        entry = _selected_entry(session_id)
        session = entry.session
        with entry.lock:
            cs = ConstraintSet.from_json(payload, d=session.dataset.d)
            session.set_constraints(cs)
            check = feasibility.check_position(session, session.position)
            return {
                "constrained_features": cs.constrained_features(),
                "current_position": check.to_json(),
            }

    @app.get(API_PREFIX + "/sessions/{session_id}/feasibility_map")
    def feasibility_map(session_id: str, nx: int = 10, ny: int = 10):
        entry = _selected_entry(session_id)
        with entry.lock:
            fmap = feasibility.compute_map(entry.session, (nx, ny))
            return fmap.to_json()

    @app.get(API_PREFIX + "/sessions/{session_id}/neighbors")
    def neighbors(session_id: str, k: int | None = None):
        entry = _selected_entry(session_id)
        with entry.lock:
            pairs = entry.session.nearest_neighbors(k)
            return {
                "neighbors": [
                    {
                        "row": i,
                        "row_id": entry.session.dataset.row_ids[i],
                        "distance": dist,
                    }
                    for i, dist in pairs
                ]
            }

    @app.post(API_PREFIX + "/sessions/{session_id}/reset")
    def reset(session_id: str):
        entry = _selected_entry(session_id)
        session = entry.session
        with entry.lock:
            position = session.reset_point()
            return {
                "position": _jsonable(position),
                "values": _jsonable(session.working_point),
                "marks": _marks_json(session),
            }

    return app
