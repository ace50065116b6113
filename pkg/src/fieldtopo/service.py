"""HTTP explorer for solution-space checkpoints.

Loads one checkpoint at startup and answers density inferences for
interactive parameter sweeps. The checkpoint is read-only shared state;
every request evaluates into private buffers, so handlers are stateless.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from . import fem
from .density import DensityField
from .io import Checkpoint, load_checkpoint, problem_to_dict

MAX_RESOLUTION = 1024 * 1024
_STATIC_DIR = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"


def infer_grid(ckpt: Checkpoint, q: float, resolution) -> tuple[np.ndarray, float]:
    """Cell-center density grid at parameter q and its mean (the volume
    fraction); deterministic in (checkpoint, q, resolution)."""
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != ckpt.problem.dim:
        raise ValueError(f"resolution must have {ckpt.problem.dim} entries, got {resolution}")
    if any(r <= 0 for r in resolution):
        raise ValueError(f"resolution entries must be positive, got {resolution}")
    if int(np.prod(resolution)) > MAX_RESOLUTION:
        raise ValueError(f"resolution {resolution} exceeds the cap of {MAX_RESOLUTION} cells")
    field = DensityField(ckpt.dens_net, ckpt.problem.domain,
                         holes=ckpt.problem.domain.excluded,
                         q_range=None if ckpt.space is None else (ckpt.space.lo, ckpt.space.hi))
    grid = fem.rasterize(field, resolution, ckpt.problem.domain,
                         q=None if ckpt.space is None else q)
    return grid, float(grid.mean())


class InferenceRequest(BaseModel):
    q: float
    resolution: tuple[int, ...] = (300, 100)
    encoding: str = Field("raw", pattern="^(raw|image)$")


def build_app(ckpt: Checkpoint, reject_out_of_range: bool = False) -> FastAPI:
    if ckpt.space is None:
        raise ValueError("explorer needs a solution-space checkpoint (no parameter range found)")
    app = FastAPI(title="density explorer")
    lo, hi = ckpt.space.lo, ckpt.space.hi

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/meta")
    def meta():
        return {
            "parameter_kind": ckpt.space.kind,
            "range": [lo, hi],
            "domain": {"lo": list(ckpt.problem.domain.lo), "hi": list(ckpt.problem.domain.hi)},
            "problem": problem_to_dict(ckpt.problem),
            "metadata": ckpt.metadata,
        }

    @app.post("/api/infer")
    def infer(req: InferenceRequest):
        q, warning = req.q, ""
        if not lo <= q <= hi:
            if reject_out_of_range:
                raise HTTPException(422, detail=f"q={q} outside trained range [{lo}, {hi}]")
            q = min(max(q, lo), hi)
            warning = f"q clamped to trained range [{lo}, {hi}]"
        try:
            grid, volume = infer_grid(ckpt, q, req.resolution)
        except ValueError as e:
            raise HTTPException(400, detail=str(e)) from e
        if req.encoding == "raw":
            body = np.ascontiguousarray(grid.T, dtype="<f4").tobytes()
            media = "application/octet-stream"
        else:
            body = np.floor(255.0 * (1.0 - np.clip(grid.T, 0.0, 1.0)) + 0.5).astype(np.uint8).tobytes()
            media = "application/octet-stream"
        headers = {
            "X-Grid-Dims": "x".join(str(r) for r in req.resolution),
            "X-Volume": f"{volume:.6f}",
            "X-Q": repr(float(q)),
        }
        if warning:
            headers["X-Warning"] = warning
        return Response(content=body, media_type=media, headers=headers)

    if _STATIC_DIR.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=_STATIC_DIR, html=True), name="ui")
    return app


def serve(checkpoint_path, port: int = 8000, host: str | None = None) -> None:
    import os

    import uvicorn

    ckpt = load_checkpoint(checkpoint_path)
    app = build_app(ckpt)
    uvicorn.run(app, host=host or os.environ.get("FIELDTOPO_BIND", "127.0.0.1"), port=port)
