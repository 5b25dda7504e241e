"""Long-running HTTP analysis service.

Endpoints
---------
GET  /health            liveness probe
POST /detect            synchronous analysis, returns a DofReport
POST /jobs              queue an analysis, returns ``{"job_id": ...}`` (202)
GET  /jobs/{job_id}     job status, with the report once done

``/detect`` and ``/jobs`` accept either a JSON body ``{"path": "rel/or/abs"}``
resolved inside the configured root directory, a multipart form with an
``image`` file field, or a raw image body (``application/octet-stream``).
JSON bodies may also override ``num_scales``, ``min_scale``, ``max_scale``,
``sat_low``, ``sat_high``, ``min_response``, ``workers`` and ``downsample``.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from contextlib import asynccontextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse, Response

from .calibrate import FocusThreshold
from .errors import (
    CorruptImage,
    DofError,
    ImageFileNotFound,
    ImageTooLarge,
    InvalidImage,
    UnsupportedFormat,
)
from .image_io import GrayImage, decode_image, load_image
from .preprocess import StretchParams
from .report import AnalysisConfig, analyze
from .scale_space import ScaleGrid

log = logging.getLogger(__name__)

DEFAULT_MAX_PIXELS = 8192 * 8192


@dataclass
class ServiceConfig:
    root: Path
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    threshold: FocusThreshold | None = None
    max_concurrent: int = 8
    max_pixels: int = DEFAULT_MAX_PIXELS
    max_jobs: int = 256


class RequestError(Exception):
    def __init__(self, status: int, message: str, kind: str = "bad_request"):
        super().__init__(message)
        self.status = status
        self.kind = kind


def _error(status: int, kind: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"type": kind, "message": message}})


_OVERRIDES = {
    "num_scales", "min_scale", "max_scale", "sat_low", "sat_high",
    "min_response", "workers", "downsample",
}


def _apply_overrides(base: AnalysisConfig, body: dict) -> AnalysisConfig:
    unknown = set(body) - _OVERRIDES - {"path", "image_id"}
    if unknown:
        raise RequestError(400, f"unknown fields: {sorted(unknown)}")
    try:
        grid = ScaleGrid(
            int(body.get("num_scales", base.grid.n)),
            float(body.get("min_scale", base.grid.min_t)),
            float(body.get("max_scale", base.grid.max_t)),
        )
        stretch = StretchParams(
            float(body.get("sat_low", base.stretch.lower_fraction)),
            float(body.get("sat_high", base.stretch.upper_fraction)),
        )
        return replace(
            base,
            grid=grid,
            stretch=stretch,
            min_response=float(body.get("min_response", base.min_response)),
            workers=int(body.get("workers", base.workers)),
            downsample=int(body.get("downsample", base.downsample)),
        )
    except (TypeError, ValueError) as exc:
        raise RequestError(400, f"invalid parameter: {exc}") from exc


class DetectionService:
    """Request handling independent of the web framework; one per app."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.root = Path(config.root).resolve()
        self.slots = threading.BoundedSemaphore(config.max_concurrent)
        self._jobs: dict[str, dict] = {}
        self._jobs_lock = threading.Lock()
        self._job_pool = ThreadPoolExecutor(
            max_workers=config.max_concurrent, thread_name_prefix="dof-job"
        )

    def close(self) -> None:
        self._job_pool.shutdown(wait=False, cancel_futures=True)

    # -- input resolution --------------------------------------------------

    def resolve_path(self, raw) -> Path:
        if not isinstance(raw, str) or not raw:
            raise RequestError(400, "'path' must be a non-empty string")
        candidate = Path(raw)
        if not candidate.is_absolute():
            candidate = self.root / candidate
        resolved = candidate.resolve()
        if resolved != self.root and self.root not in resolved.parents:
            raise RequestError(400, f"path {raw!r} is outside the service root", "path_outside_root")
        return resolved

    async def read_input(self, request: Request) -> tuple[GrayImage, str, AnalysisConfig]:
        ctype = request.headers.get("content-type", "").split(";")[0].strip().lower()
        base = self.config.analysis
        if ctype == "application/json":
            try:
                body = json.loads(await request.body())
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise RequestError(400, f"malformed JSON: {exc}") from exc
            if not isinstance(body, dict) or "path" not in body:
                raise RequestError(400, "JSON body must be an object with a 'path' field")
            config = _apply_overrides(base, body)
            path = self.resolve_path(body["path"])
            img = await run_in_threadpool(self._decode, lambda: load_image(path, self.config.max_pixels))
            return img, str(body.get("image_id", body["path"])), config
        if ctype == "multipart/form-data":
            form = await request.form()
            upload = form.get("image")
            if upload is None or not hasattr(upload, "read"):
                raise RequestError(400, "multipart body needs an 'image' file field")
            data = await upload.read()
            name = upload.filename or "upload"
            img = await run_in_threadpool(self._decode, lambda: decode_image(data, name, self.config.max_pixels))
            return img, name, base
        if ctype in ("application/octet-stream", "image/png", "image/tiff", "image/x-portable-graymap"):
            data = await request.body()
            if not data:
                raise RequestError(400, "empty request body")
            name = request.query_params.get("image_id", "upload")
            img = await run_in_threadpool(self._decode, lambda: decode_image(data, name, self.config.max_pixels))
            return img, name, base
        raise RequestError(400, f"unsupported content type {ctype!r}")

    @staticmethod
    def _decode(fn) -> GrayImage:
        try:
            return fn()
        except ImageFileNotFound as exc:
            raise RequestError(404, str(exc), "not_found") from exc
        except ImageTooLarge as exc:
            raise RequestError(413, str(exc), "too_large") from exc
        except (UnsupportedFormat, CorruptImage, InvalidImage) as exc:
            raise RequestError(422, str(exc), "undecodable_image") from exc

    # -- execution ---------------------------------------------------------

    def run(self, img: GrayImage, image_id: str, config: AnalysisConfig, t_received: int) -> dict:
        threshold = self.config.threshold
        if threshold is not None and threshold.params_hash not in (None, config.params_hash):
            # per-request overrides invalidate the calibration
            threshold = None
        t_start = time.perf_counter_ns()
        report = analyze(img, image_id, config, threshold)
        t_end = time.perf_counter_ns()
        doc = report.to_dict()
        t_ready = time.perf_counter_ns()
        doc["service_overhead_ms"] = ((t_start - t_received) + (t_ready - t_end)) / 1e6
        return doc

    def submit_job(self, img: GrayImage, image_id: str, config: AnalysisConfig, t_received: int) -> str:
        with self._jobs_lock:
            active = sum(1 for j in self._jobs.values() if j["status"] in ("queued", "running"))
            if active >= self.config.max_jobs:
                raise RequestError(503, "job queue is full", "at_capacity")
            job_id = uuid.uuid4().hex
            self._jobs[job_id] = {"job_id": job_id, "status": "queued", "image_id": image_id}

        def work():
            self._set_job(job_id, status="running")
            try:
                doc = self.run(img, image_id, config, t_received)
            except Exception as exc:  # reported through the job record
                log.exception("job %s failed", job_id)
                self._set_job(job_id, status="failed", error=str(exc))
            else:
                self._set_job(job_id, status="done", report=doc)

        self._job_pool.submit(work)
        return job_id

    def _set_job(self, job_id: str, **fields) -> None:
        with self._jobs_lock:
            self._jobs[job_id].update(fields)

    def job(self, job_id: str) -> dict | None:
        with self._jobs_lock:
            rec = self._jobs.get(job_id)
            return dict(rec) if rec is not None else None


def create_app(config: ServiceConfig) -> FastAPI:
    service = DetectionService(config)

    @asynccontextmanager
    async def lifespan(app):
        yield
        service.close()

    app = FastAPI(title="dogfocus", version="0.1.0", lifespan=lifespan)
    app.state.service = service

    @app.middleware("http")
    async def stamp_receipt(request: Request, call_next):
        request.state.t_received = time.perf_counter_ns()
        return await call_next(request)

    @app.exception_handler(RequestError)
    async def request_error(request: Request, exc: RequestError):
        return _error(exc.status, exc.kind, str(exc))

    @app.exception_handler(DofError)
    async def pipeline_error(request: Request, exc: DofError):
        return _error(400, type(exc).__name__, str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/detect")
    async def detect(request: Request):
        img, image_id, cfg = await service.read_input(request)
        if not service.slots.acquire(blocking=False):
            raise RequestError(503, "service is at capacity", "at_capacity")
        try:
            doc = await run_in_threadpool(
                service.run, img, image_id, cfg, request.state.t_received
            )
        finally:
            service.slots.release()
        return Response(content=json.dumps(doc, sort_keys=True), media_type="application/json")

    @app.post("/jobs", status_code=202)
    async def submit(request: Request):
        img, image_id, cfg = await service.read_input(request)
        job_id = service.submit_job(img, image_id, cfg, request.state.t_received)
        return JSONResponse(status_code=202, content={"job_id": job_id, "status": "queued"})

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        rec = service.job(job_id)
        if rec is None:
            raise RequestError(404, f"unknown job {job_id}", "not_found")
        return rec

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
