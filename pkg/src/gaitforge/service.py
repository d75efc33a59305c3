"""HTTP+JSON face of the synthesis pipeline.

A small FastAPI app exposing solve-on-demand, the loaded gait catalog,
and model parameters.  Solves are CPU-bound for seconds to minutes, so
the app runs them on a bounded worker pool: at most ``max_concurrency``
solves in flight, a bounded wait queue behind that, 429 once the queue
is full, and 504 if a request outlives ``solve_timeout`` (the solve
itself keeps its worker until it finishes; no partial state leaks).

All gait payloads are serialized by the catalog module's canonical
formatter, so the bytes returned here match the CLI's output for the
same data exactly.
"""

from __future__ import annotations

import concurrent.futures
import os
import threading
from dataclasses import replace

import anyio

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import catalog as cat
from . import frames as frames_mod
from .model import ModelParams
from .transcribe import CostMode, GaitSpec


class SolveRequest(BaseModel):
    """Body of POST /api/solve: the two style knobs plus optional overrides."""

    tl: float
    cost_mode: str
    v: int | None = None
    params_override: dict | None = None


class LabelRequest(BaseModel):
    """Body of POST /api/label: entry key plus the style word to attach.

    Defined at module scope: route annotations are evaluated against
    module globals, so a request model hidden in a closure would not
    resolve and the body would be misread as a query parameter.
    """

    tl: float
    cost_mode: str
    label: str


def _canonical_response(payload, status_code: int = 200) -> Response:
    return Response(
        content=cat.canonical_json(payload) + "\n",
        status_code=status_code,
        media_type="application/json",
    )


def _entry_summary(entry: cat.CatalogEntry) -> dict:
    d = {
        "tl": float(entry.tl),
        "cost_mode": entry.cost_mode.value,
        "status": entry.status,
    }
    if entry.gait is not None:
        d["t_f"] = float(entry.gait.t_f)
        d["J_star"] = float(entry.gait.J_star)
        if entry.gait.label is not None:
            d["label"] = str(entry.gait.label)
    return d


class _SolvePool:
    """Bounded pool + bounded queue for CPU-heavy solve requests."""

    def __init__(self, workers: int, queue_slots: int):
        self._executor = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
        self._capacity = workers + queue_slots
        self._inflight = 0
        self._lock = threading.Lock()

    def try_submit(self, fn, *args):
        with self._lock:
            if self._inflight >= self._capacity:
                return None
            self._inflight += 1

        def run():
            try:
                return fn(*args)
            finally:
                with self._lock:
                    self._inflight -= 1

        return self._executor.submit(run)


def create_app(
    catalog_path: str | os.PathLike | None = None,
    params: ModelParams | None = None,
    solve_timeout: float = 120.0,
    max_concurrency: int | None = None,
) -> FastAPI:
    """Build the service around one parameter set and an optional catalog.

    When ``catalog_path`` points at an existing catalog file it is loaded
    at startup and label edits are written back to it; otherwise the app
    starts with an empty in-memory catalog.  Successful solves are stored
    into the catalog (keyed by (tl, cost_mode)) so the interface's
    solve→label→list loop works without a prior sweep.
    """
    if max_concurrency is None:
        max_concurrency = min(os.cpu_count() or 1, 4)

    if catalog_path is not None and os.path.exists(catalog_path):
        state_catalog = cat.load(catalog_path)
        active_params = params if params is not None else state_catalog.params
    else:
        active_params = params if params is not None else ModelParams()
        state_catalog = cat.GaitCatalog(
            params=active_params, entries=(), grid={}, solver_opts={},
        )

    app = FastAPI(title="gaitforge", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.catalog = state_catalog
    app.state.catalog_path = os.fspath(catalog_path) if catalog_path is not None else None
    app.state.params = active_params
    app.state.solve_timeout = float(solve_timeout)
    pool = _SolvePool(workers=max_concurrency, queue_slots=max_concurrency)
    catalog_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _canonical_response(
            {"error": "malformed request", "detail": str(exc.errors())}, 400
        )

    def _store_entry(entry: cat.CatalogEntry) -> None:
        with catalog_lock:
            current = app.state.catalog
            key = cat._entry_key(entry.tl, entry.cost_mode)
            kept = tuple(
                e for e in current.entries
                if cat._entry_key(e.tl, e.cost_mode) != key
            )
            app.state.catalog = replace(current, entries=kept + (entry,))

    def _run_solve(req: SolveRequest):
        p = app.state.params
        if req.params_override:
            p = p.with_overrides(req.params_override)
        spec = GaitSpec(
            tl=req.tl,
            cost_mode=CostMode.from_name(req.cost_mode),
            v=req.v if req.v is not None else 25,
            params=p,
        )
        gait = cat.synthesize(spec)
        if not req.params_override:
            _store_entry(cat.CatalogEntry(
                tl=spec.tl, cost_mode=spec.cost_mode, gait=gait, status="verified",
            ))
        return gait

    @app.post("/api/solve")
    async def solve_endpoint(req_body: SolveRequest):
        try:
            future = pool.try_submit(_run_solve, req_body)
            if future is None:
                return _canonical_response(
                    {"error": "solver at capacity, retry later"}, 429
                )
            def wait():
                return future.result(timeout=app.state.solve_timeout)

            gait = await anyio.to_thread.run_sync(wait)
        except concurrent.futures.TimeoutError:
            return _canonical_response(
                {"error": "solve timed out",
                 "timeout_s": app.state.solve_timeout}, 504
            )
        except cat.SynthesisFailed as exc:
            return _canonical_response(
                {
                    "status": exc.status,
                    "failed_check": exc.failed_check,
                    "detail": exc.detail,
                    "violations": exc.violations(),
                },
                422,
            )
        except ValueError as exc:
            return _canonical_response(
                {"error": "malformed request", "detail": str(exc)}, 400
            )
        return _canonical_response({
            "gait": gait.to_dict(),
            "frames": frames_mod.frames_for_gait(gait),
        })

    @app.get("/api/catalog")
    async def catalog_endpoint():
        current = app.state.catalog
        return _canonical_response({
            "schema": cat.CATALOG_SCHEMA,
            "grid": current.grid,
            "entries": [_entry_summary(e) for e in current.entries],
        })

    @app.get("/api/gait/{key}")
    async def gait_endpoint(key: str):
        try:
            tl_text, mode_text = key.split(",", 1)
            tl = float(tl_text)
            mode = CostMode.from_name(mode_text)
        except ValueError as exc:
            return _canonical_response(
                {"error": "malformed request", "detail": str(exc)}, 400
            )
        entry = app.state.catalog.get(tl, mode)
        if entry is None or entry.gait is None:
            return _canonical_response(
                {"error": f"no verified gait for key {key!r}"}, 404
            )
        return _canonical_response({
            "gait": entry.gait.to_dict(),
            "frames": frames_mod.frames_for_gait(entry.gait),
        })

    @app.get("/api/params")
    async def params_endpoint():
        return _canonical_response(app.state.params.to_config_dict())

    @app.post("/api/label")
    async def label_endpoint(req_body: LabelRequest):
        with catalog_lock:
            try:
                updated = app.state.catalog.label(
                    req_body.tl, CostMode.from_name(req_body.cost_mode),
                    req_body.label,
                )
            except KeyError as exc:
                return _canonical_response({"error": str(exc)}, 404)
            except ValueError as exc:
                return _canonical_response(
                    {"error": "malformed request", "detail": str(exc)}, 400
                )
            app.state.catalog = updated
            if app.state.catalog_path is not None:
                cat.save(updated, app.state.catalog_path)
        entry = updated.get(req_body.tl, CostMode.from_name(req_body.cost_mode))
        return _canonical_response(_entry_summary(entry))

    return app


def serve(host: str = "127.0.0.1", port: int = 8080,
          catalog_path: str | None = None,
          solve_timeout: float = 120.0) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(catalog_path=catalog_path, solve_timeout=solve_timeout)
    uvicorn.run(app, host=host, port=port, log_level="warning")
