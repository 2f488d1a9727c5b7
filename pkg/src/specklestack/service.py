"""HTTP service exposing the interactive ROI-training workflow.

Session model: upload an image, put regions of interest, read per-region
statistics, train, apply the filter k times (asynchronous job with a
polling endpoint), classify, and fetch metrics.  All numerics delegate to
the same core functions the CLI uses, so service results are bit-identical
to CLI results for identical inputs.

Within a session, mutating operations are serialized: while a train/apply
job runs, further mutations are rejected with 409.  Retraining atomically
invalidates the iterate cache and any classification.
"""
from __future__ import annotations

import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from .gmlc import GaussianClass, classify as gmlc_classify, fit_classes
from .images import (
    QuantizedImage,
    QuantizerSpec,
    quantize,
    read_f64_bytes,
    read_pgm_bytes,
    write_pgm_bytes,
)
from .metrics import UndefinedMetricError, beta_index, q_index_blocks
from .stackfilter import PositiveBooleanFunction, WindowShape, apply_stack_fast, pbf_to_text
from .training import RoiSet, region_mask, region_stats, resolve_ideal, train_from_rois


class ServiceError(Exception):
    def __init__(self, status: int, title: str, detail: str = ""):
        self.status = status
        self.title = title
        self.detail = detail


@dataclass
class Job:
    kind: str
    status: str = "running"  # running | done | error
    detail: str = ""
    started: float = field(default_factory=time.time)
    seconds: float | None = None


@dataclass
class Session:
    id: str
    original: np.ndarray
    quantized: QuantizedImage
    spec: QuantizerSpec
    rois: RoiSet | None = None
    pbf: PositiveBooleanFunction | None = None
    window: WindowShape = field(default_factory=WindowShape)
    iterates: dict[int, QuantizedImage] = field(default_factory=dict)
    classes: list[GaussianClass] | None = None
    labels: np.ndarray | None = None
    train_seconds: float | None = None
    job: Job | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _problem(status: int, title: str, detail: str = "") -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"title": title, "status": status, "detail": detail},
        media_type="application/problem+json",
    )


def _parse_image(payload: bytes) -> tuple[np.ndarray, QuantizedImage, QuantizerSpec]:
    """PGM is taken as already quantized; F64 floats get the default mapping."""
    if payload.startswith(b"P5"):
        qimg = read_pgm_bytes(payload)
        spec = QuantizerSpec(levels=qimg.levels, clip_pct=100.0, lo=0.0, hi=float(qimg.levels))
        return qimg.data.astype(np.float64), qimg, spec
    if payload.startswith(b"F64"):
        img = read_f64_bytes(payload)
        qimg, spec = quantize(img)
        return img, qimg, spec
    raise ServiceError(400, "unsupported image payload", "expected binary PGM (P5) or F64")


def _to_png(qimg: QuantizedImage) -> bytes:
    data = qimg.data
    if qimg.levels > 255:
        data = np.rint(data * (255.0 / qimg.levels)).astype(np.uint8)
    else:
        data = data.astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


LABEL_SHADES = np.array([30, 220, 120, 70, 170, 250, 90, 200], dtype=np.uint8)


def create_app() -> FastAPI:
    app = FastAPI(title="specklestack ROI service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return _problem(exc.status, exc.title, exc.detail)

    def get_session(sid: str) -> Session:
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise ServiceError(404, "unknown session", sid)
        return session

    def reject_if_busy(session: Session) -> None:
        if session.job is not None and session.job.status == "running":
            raise ServiceError(409, "session busy", f"{session.job.kind} in progress")

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        payload = await request.body()
        try:
            original, qimg, spec = _parse_image(payload)
        except ValueError as exc:
            raise ServiceError(400, "malformed image", str(exc))
        sid = uuid.uuid4().hex[:12]
        session = Session(id=sid, original=original, quantized=qimg, spec=spec)
        with registry_lock:
            sessions[sid] = session
        return {
            "id": sid,
            "width": qimg.width,
            "height": qimg.height,
            "levels": qimg.levels,
            "quantizer": {"lo": session.spec.lo, "hi": session.spec.hi, "clip_pct": session.spec.clip_pct},
        }

    @app.put("/sessions/{sid}/rois")
    def put_rois(sid: str, payload: dict):
        session = get_session(sid)
        with session.lock:
            reject_if_busy(session)
            try:
                rois = RoiSet.from_json(__import__("json").dumps(payload))
                if not rois.regions:
                    raise ValueError("RoiSet has no regions")
                for region in rois.regions:
                    region_mask(region, session.quantized.width, session.quantized.height)
            except (ValueError, KeyError, TypeError) as exc:
                raise ServiceError(422, "invalid RoiSet", str(exc))
            session.rois = rois
            # regions changed: trained state is stale
            session.pbf = None
            session.iterates = {}
            session.classes = None
            session.labels = None
        return {"regions": len(rois.regions)}

    @app.get("/sessions/{sid}/regions/stats")
    def get_region_stats(sid: str):
        session = get_session(sid)
        if session.rois is None:
            raise ServiceError(409, "no regions", "PUT rois first")
        out = []
        for region in session.rois.regions:
            stats = region_stats(session.quantized, region)
            out.append(
                {
                    "name": region.name,
                    "policy": region.policy,
                    "count": stats.count,
                    "mean": stats.mean,
                    "median": stats.median,
                    "q25": stats.q25,
                    "q75": stats.q75,
                    "suggested_ideal": resolve_ideal(
                        Region_like(region, "mean"), stats, session.quantized.levels
                    ),
                }
            )
        return {"regions": out}

    @app.post("/sessions/{sid}/train")
    def train(sid: str, window: str = Query("3x3")):
        session = get_session(sid)
        with session.lock:
            reject_if_busy(session)
            if session.rois is None or not session.rois.regions:
                raise ServiceError(409, "no regions", "PUT rois first")
            try:
                w, h = (int(p) for p in window.lower().split("x"))
                shape = WindowShape(w, h)
            except ValueError as exc:
                raise ServiceError(422, "invalid window", str(exc))
            t0 = time.perf_counter()
            pbf = train_from_rois(session.quantized, session.rois, shape)
            elapsed = time.perf_counter() - t0
            session.window = shape
            session.pbf = pbf
            session.iterates = {}
            session.classes = None
            session.labels = None
            session.train_seconds = elapsed
        return {
            "pbf": pbf_to_text(pbf),
            "terms": len(pbf.terms),
            "resolved": {r.name: r.resolved for r in session.rois.regions},
            "seconds": elapsed,
        }

    def run_apply_job(session: Session, k: int) -> None:
        try:
            t0 = time.perf_counter()
            have = max((i for i in session.iterates if i <= k), default=0)
            current = session.iterates.get(have, session.quantized)
            for i in range(have + 1, k + 1):
                current = apply_stack_fast(session.pbf, current)
                session.iterates[i] = current
            session.job.seconds = time.perf_counter() - t0
            session.job.status = "done"
        except Exception as exc:  # job failure surfaces through polling
            session.job.detail = str(exc)
            session.job.status = "error"

    @app.post("/sessions/{sid}/apply", status_code=202)
    def apply(sid: str, k: int = Query(1)):
        session = get_session(sid)
        with session.lock:
            reject_if_busy(session)
            if session.pbf is None:
                raise ServiceError(409, "not trained", "POST train first")
            if k < 1:
                raise ServiceError(422, "invalid iteration count", "k must be >= 1")
            if k in session.iterates:
                return {"status": "done", "k": k, "cached": True}
            session.job = Job(kind=f"apply k={k}")
            thread = threading.Thread(target=run_apply_job, args=(session, k), daemon=True)
            thread.start()
        return {"status": "running", "k": k, "cached": False}

    @app.get("/sessions/{sid}/job")
    def job_status(sid: str):
        session = get_session(sid)
        if session.job is None:
            return {"status": "idle"}
        return {
            "status": session.job.status,
            "kind": session.job.kind,
            "detail": session.job.detail,
            "seconds": session.job.seconds,
        }

    @app.get("/sessions/{sid}/result/{k}.png")
    def result_png(sid: str, k: int):
        session = get_session(sid)
        qimg = session.quantized if k == 0 else session.iterates.get(k)
        if qimg is None:
            raise ServiceError(404, "iterate not computed", f"k={k}")
        return Response(content=_to_png(qimg), media_type="image/png")

    @app.get("/sessions/{sid}/result/{k}.pgm")
    def result_pgm(sid: str, k: int):
        session = get_session(sid)
        qimg = session.quantized if k == 0 else session.iterates.get(k)
        if qimg is None:
            raise ServiceError(404, "iterate not computed", f"k={k}")
        return Response(content=write_pgm_bytes(qimg), media_type="application/octet-stream")

    @app.post("/sessions/{sid}/classify")
    def classify_endpoint(sid: str, k: int | None = Query(None)):
        session = get_session(sid)
        with session.lock:
            reject_if_busy(session)
            if session.rois is None:
                raise ServiceError(409, "no regions", "PUT rois first")
            if k is None:
                k = max(session.iterates, default=0)
            img = session.quantized if k == 0 else session.iterates.get(k)
            if img is None:
                raise ServiceError(409, "iterate not computed", f"apply k={k} first")
            masks = {
                i: region_mask(r, img.width, img.height)
                for i, r in enumerate(session.rois.regions)
            }
            if len(masks) < 2:
                raise ServiceError(422, "need at least 2 regions to classify")
            classes = fit_classes(img, masks)
            session.classes = classes
            session.labels = gmlc_classify(img, classes)
        return {
            "k": k,
            "classes": [
                {
                    "label": c.label,
                    "name": session.rois.regions[c.label].name,
                    "mean": c.mean,
                    "variance": c.variance,
                }
                for c in classes
            ],
        }

    @app.get("/sessions/{sid}/classification.png")
    def classification_png(sid: str):
        session = get_session(sid)
        if session.labels is None:
            raise ServiceError(404, "no classification", "POST classify first")
        shades = LABEL_SHADES[session.labels % len(LABEL_SHADES)]
        buf = io.BytesIO()
        Image.fromarray(shades, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/sessions/{sid}/metrics")
    def metrics_endpoint(sid: str, k: int | None = Query(None), block: int = Query(8)):
        session = get_session(sid)
        if k is None:
            k = max(session.iterates, default=0)
        img = session.quantized if k == 0 else session.iterates.get(k)
        if img is None:
            raise ServiceError(404, "iterate not computed", f"k={k}")
        reference = session.quantized.data.astype(float)
        filtered = img.data.astype(float)
        try:
            q, skipped = q_index_blocks(filtered, reference, block)
            valid = q[~np.isnan(q)]
            if valid.size == 0:
                raise UndefinedMetricError("all blocks degenerate")
            beta = beta_index(filtered, reference)
        except (UndefinedMetricError, ValueError) as exc:
            raise ServiceError(422, "metric undefined", str(exc))
        return {
            "k": k,
            "against": "original",
            "q": float(valid.mean()),
            "q_degenerate_blocks": int(skipped),
            "beta": beta,
        }

    return app


def Region_like(region, policy: str):
    """Copy of a region with a different policy (for the suggested default)."""
    from dataclasses import replace

    return replace(region, policy=policy, value=region.value if policy == "free" else region.value)


app = create_app()


def main():
    import uvicorn

    uvicorn.run("specklestack.service:app", host="127.0.0.1", port=8008)


if __name__ == "__main__":
    main()
