"""Read-only HTTP API over a loaded dataset, head, and backend.

Every explanation the service returns is produced by the same
:mod:`finercam.api` calls a library user would make, so responses are
byte-identical to direct use. Dataset and head state are immutable after
startup; external-backend calls serialize through the backend's own lock.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response

from . import api, tensor_store
from .head import similarity_profile_csv, weight_similarity_profile

CONFIG_ENV_VAR = "FINERCAM_CONFIG"


@dataclass
class ServiceConfig:
    manifest_path: str
    head_path: str
    backend_spec: str | None = None
    host: str = "127.0.0.1"
    port: int = 8321
    static_dir: str | None = None

    def validate(self) -> None:
        if not Path(self.manifest_path).is_file():
            raise FileNotFoundError(f"manifest not found: {self.manifest_path}")
        if not Path(self.head_path).is_file():
            raise FileNotFoundError(f"head sidecar not found: {self.head_path}")
        if self.static_dir is not None and not Path(self.static_dir).is_dir():
            raise FileNotFoundError(f"static asset dir not found: {self.static_dir}")


def load_service_config(path: str | Path) -> ServiceConfig:
    obj = json.loads(Path(path).read_text("utf-8"))
    known = {"manifest_path", "head_path", "backend_spec", "host", "port", "static_dir"}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"service config has unknown fields: {sorted(unknown)}")
    config = ServiceConfig(**obj)
    config.validate()
    return config


def config_from_env() -> ServiceConfig:
    path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        raise FileNotFoundError(f"{CONFIG_ENV_VAR} is not set and no config flags were given")
    return load_service_config(path)


def create_app(ctx: api.DatasetContext, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="finercam explorer", docs_url=None, redoc_url=None)
    manifest = ctx.manifest

    @app.get("/api/classes")
    def classes() -> list[str]:
        return manifest.classes

    @app.get("/api/samples")
    def samples(cls: str | None = Query(default=None, alias="class")):
        records = manifest.samples
        if cls is not None:
            try:
                class_id = int(cls)
            except ValueError:
                if cls not in manifest.classes:
                    raise HTTPException(status_code=404, detail=f"unknown class {cls!r}")
                class_id = manifest.classes.index(cls)
            if not 0 <= class_id < manifest.num_classes:
                raise HTTPException(status_code=404, detail=f"unknown class {cls!r}")
            records = [r for r in records if r.class_id == class_id]
        return [
            {
                "sample_id": r.sample_id,
                "class_id": r.class_id,
                "class_name": manifest.classes[r.class_id],
                "split": r.split,
                "bbox": list(r.bbox) if r.bbox else None,
            }
            for r in records
        ]

    @app.get("/api/image/{sample_id}")
    def image(sample_id: str) -> Response:
        try:
            rec = manifest.sample(sample_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")
        pixels = tensor_store.read_tensor(manifest.image_file(rec))
        from .colormap import encode_png

        return Response(content=encode_png(pixels), media_type="image/png")

    @app.post("/api/explain")
    async def explain(request: Request) -> JSONResponse:
        body = await request.json()
        try:
            req = api.ExplainRequest(**body)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if req.method == "score" and ctx.backend is None:
            raise HTTPException(status_code=409, detail="score method is disabled: no backend configured")
        try:
            result = api.run_explain(ctx, req)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return JSONResponse(result.to_payload())

    @app.post("/api/relative_drop")
    async def relative_drop(request: Request) -> JSONResponse:
        body = await request.json()
        try:
            req = api.RelativeDropRequest(**body)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if ctx.backend is None:
            raise HTTPException(status_code=409, detail="relative drop is disabled: no backend configured")
        try:
            payload = api.run_relative_drop(ctx, req)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return JSONResponse(payload)

    @app.get("/api/similarity")
    def similarity(format: str = "json"):
        profile = weight_similarity_profile(ctx.head)
        if format == "csv":
            return Response(content=similarity_profile_csv(profile), media_type="text/csv")
        return {
            "mean_by_rank": [float(v) for v in profile.mean_by_rank],
            "std_by_rank": [float(v) for v in profile.std_by_rank],
        }

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")
    return app


def build_app_from_config(config: ServiceConfig) -> FastAPI:
    config.validate()
    ctx = api.load_context(config.manifest_path, config.head_path, config.backend_spec)
    return create_app(ctx, static_dir=config.static_dir)


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = build_app_from_config(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
