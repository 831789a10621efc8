"""HTTP API over a run root, consumed by the CLI report and judging console.

Read-only except the verdict endpoint. Model checkpoints and latent tables
are lazily loaded and cached per run; decodes run against the immutable
cached model.
"""

from __future__ import annotations

import base64
import io
import threading
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .. import analysis, vae, visual
from ..errors import ContractError, LatentScoutError, NotFoundError, StateError
from .store import RunStore


class _RunCache:
    """Lazy, immutable per-run model and latent-table cache."""

    def __init__(self, store: RunStore):
        self.store = store
        self._models: dict[str, vae.TrainedVAE] = {}
        self._latents: dict[str, analysis.LatentTable] = {}
        self._lock = threading.Lock()

    def model(self, run_id: str) -> vae.TrainedVAE:
        with self._lock:
            if run_id not in self._models:
                path = self.store.run_dir(run_id) / "checkpoint.bin"
                if not path.exists():
                    raise NotFoundError(f"run {run_id} has no checkpoint")
                self._models[run_id] = vae.load_checkpoint(path)
            return self._models[run_id]

    def latents(self, run_id: str) -> analysis.LatentTable:
        with self._lock:
            if run_id not in self._latents:
                path = self.store.run_dir(run_id) / "latents.csv"
                if not path.exists():
                    raise NotFoundError(f"run {run_id} has no latent table")
                self._latents[run_id] = analysis.load_latent_table(path)
            return self._latents[run_id]


def _png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(
        np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    ).save(buf, format="PNG")
    return buf.getvalue()


def _b64_png(img: np.ndarray) -> str:
    return base64.b64encode(_png_bytes(img)).decode()


def create_app(run_root: str | Path, static_dir: str | Path | None = None
               ) -> FastAPI:
    store = RunStore(run_root)
    cache = _RunCache(store)
    app = FastAPI(title="latentscout")

    @app.exception_handler(NotFoundError)
    async def _nf(_req: Request, exc: NotFoundError):
        return JSONResponse({"error": str(exc)}, status_code=404)

    @app.exception_handler(StateError)
    async def _state(_req: Request, exc: StateError):
        return JSONResponse({"error": str(exc)}, status_code=409)

    @app.exception_handler(ContractError)
    async def _contract(_req: Request, exc: ContractError):
        return JSONResponse({"error": str(exc)}, status_code=422)

    @app.exception_handler(LatentScoutError)
    async def _other(_req: Request, exc: LatentScoutError):
        return JSONResponse({"error": str(exc)}, status_code=500)

    @app.exception_handler(RequestValidationError)
    async def _validation(_req: Request, exc: RequestValidationError):
        return JSONResponse({"error": str(exc)}, status_code=422)

    @app.get("/api/runs")
    def list_runs():
        return [asdict(m) for m in store.list_runs()]

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        manifest = store.get_run(run_id)
        scoreboard = store.scoreboard(run_id)
        verdicts = store.active_verdicts(run_id)
        return {
            "manifest": asdict(manifest),
            "scoreboard": [asdict(s) for s in scoreboard] if scoreboard else None,
            "verdicts": {str(d): asdict(v) for d, v in verdicts.items()},
        }

    def _check_dim(run_id: str, j: int) -> int:
        manifest = store.get_run(run_id)
        d = int(manifest.train_config.get("latent_dim", 0))
        if not 1 <= j <= d:
            raise ContractError(f"dimension {j} outside 1..{d}")
        return d

    @app.get("/api/runs/{run_id}/dims/{j}/traversal")
    def traversal(run_id: str, j: int, steps: int = 8, mode: str = "set",
                  instance: str = ""):
        _check_dim(run_id, j)
        model = cache.model(run_id)
        latents = cache.latents(run_id)
        spec = visual.default_traversal_spec(latents, j, steps=steps, mode=mode)
        if instance:
            spec.instance_id = instance
        frames = visual.traverse(model, latents, spec)
        return {
            "dim": j,
            "values": visual.sweep_values(spec).tolist(),
            "instance": spec.instance_id,
            "frames": [_b64_png(f) for f in frames],
        }

    @app.get("/api/runs/{run_id}/dims/{j}/extremes")
    def extremes(run_id: str, j: int, l: int = 16):
        _check_dim(run_id, j)
        latents = cache.latents(run_id)
        run_dir = store.run_dir(run_id)
        dataset_path = run_dir / "dataset.zip"
        if not dataset_path.exists():
            raise NotFoundError(f"run {run_id} has no cached dataset")
        from ..data import load_archive

        dataset, _ = load_archive(dataset_path)
        min_imgs, max_imgs = visual.extremes(latents, dataset, j, l)
        cols = max(1, int(np.ceil(np.sqrt(l))))
        return {
            "dim": j,
            "l": l,
            "min": _b64_png(visual.tile_images(list(min_imgs), cols)),
            "max": _b64_png(visual.tile_images(list(max_imgs), cols)),
        }

    @app.get("/api/runs/{run_id}/dims/{j}/kde")
    def kde_data(run_id: str, j: int):
        _check_dim(run_id, j)
        latents = cache.latents(run_id)
        curves = visual.kde_plot_data(latents, j)
        return [
            {"dim": c.dim, "class": c.cls, "grid": c.grid.tolist(),
             "density": c.density.tolist(), "h": c.bandwidth}
            for c in curves
        ]

    @app.post("/api/runs/{run_id}/decode")
    def decode_latent(run_id: str, body: dict):
        model = cache.model(run_id)
        d = model.config.latent_dim
        z = body.get("z")
        if not isinstance(z, list) or len(z) != d:
            raise ContractError(f"z must be a list of exactly {d} reals")
        img = vae.decode(model, np.asarray(z, dtype=np.float64))
        return Response(content=_png_bytes(img), media_type="image/png")

    @app.post("/api/runs/{run_id}/dims/{j}/verdict")
    def post_verdict(run_id: str, j: int, body: dict):
        record = store.record_verdict(
            run_id, j, body.get("verdict", ""),
            notes=body.get("notes", ""), judge=body.get("judge", ""),
        )
        # keep the human-readable report in sync when evidence exists
        try:
            visual.assemble_report(store.run_dir(run_id))
        except (ContractError, FileNotFoundError):
            pass
        return asdict(record)

    @app.get("/api/runs/{run_id}/report")
    def report(run_id: str):
        path = store.run_dir(run_id) / "report.html"
        if not path.exists():
            store.get_run(run_id)  # 404 on unknown run
            raise NotFoundError(f"run {run_id} has no report yet")
        return FileResponse(path, media_type="text/html")

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="console")
    return app


def serve(run_root: str | Path, port: int = 8008,
          static_dir: str | Path | None = None, host: str = "127.0.0.1"):
    """Run the API with uvicorn (blocking)."""
    import uvicorn

    if not Path(run_root).exists():
        raise NotFoundError(f"run root {run_root} does not exist")
    uvicorn.run(create_app(run_root, static_dir=static_dir),
                host=host, port=port, log_level="warning")
