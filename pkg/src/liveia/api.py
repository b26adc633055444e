"""HTTP facade over the engine: scenarios, tracing, radiance, rendering.

Every failure returns the same envelope {"code", "message", "detail"}
where the code fixes the status: NOT_FOUND 404, VALIDATION 422,
VERSION 409, INTERNAL 500. Scenario bodies travel as canonical
documents; GET hands back exactly the stored bytes.
"""

from __future__ import annotations

import copy
import os
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.exceptions import HTTPException as StarletteHTTPException

from .errors import (
    ContractError,
    ForkedEditError,
    LiveiaError,
    NotFoundError,
    SceneValidationError,
    SerializationError,
)
from .optics import TraceLimits, path_to_doc, trace_beam
from .radiance import EquilibriumParams, compute_equilibrium, enlightenment_score, grid_to_doc, grid_to_ppm
from .render import render_frames, render_overview, render_perspective, render_view
from .scenes import (
    Scenario,
    _beam_parse,
    content_digest,
    deserialize,
    fork,
    validate,
)
from .store import ScenarioStore, TimelineNode
from .waves import SampledSignal, Waveform, decompose, superpose, waveform_from_doc, waveform_to_doc

DEFAULT_DATA_DIR = "liveia-data"

SVG_TYPE = "image/svg+xml"
PPM_TYPE = "image/x-portable-pixmap"


class LimitsModel(BaseModel):
    max_events: int = 32
    min_intensity: float = 1e-3


class TraceRequest(BaseModel):
    beam: str | dict
    limits: LimitsModel | None = None


class SuperposeRequest(BaseModel):
    a: dict | None = None
    b: dict | None = None


class DecomposeRequest(BaseModel):
    samples: list[float] = Field(min_length=2)
    sample_rate: float
    max_components: int = 8
    floor: float = 0.05


def _error(status: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


def _violations_detail(violations) -> list[dict]:
    return [
        {"subject": v.subject, "rule": v.rule, "message": v.message}
        for v in violations
    ]


def create_app(data_dir: str | os.PathLike | None = None) -> FastAPI:
    root = Path(data_dir or os.environ.get("LIVEIA_DATA") or DEFAULT_DATA_DIR)
    store = ScenarioStore(root)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        try:
            yield
        finally:
            store.close()

    app = FastAPI(title="liveia", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    @app.exception_handler(NotFoundError)
    async def _nf(request: Request, exc: NotFoundError):
        return _error(404, "NOT_FOUND", str(exc.args[0]) if exc.args else "not found")

    @app.exception_handler(SceneValidationError)
    async def _sv(request: Request, exc: SceneValidationError):
        return _error(422, "VALIDATION", "scenario failed validation", _violations_detail(exc.violations))

    @app.exception_handler(SerializationError)
    async def _se(request: Request, exc: SerializationError):
        if exc.code in ("VERSION_MISSING", "VERSION_MISMATCH"):
            return _error(409, "VERSION", str(exc), {"error_code": exc.code})
        return _error(422, "VALIDATION", str(exc), {"error_code": exc.code})

    @app.exception_handler(ForkedEditError)
    async def _fe(request: Request, exc: ForkedEditError):
        return _error(409, "VERSION", str(exc))

    @app.exception_handler(ContractError)
    async def _ce(request: Request, exc: ContractError):
        return _error(422, "VALIDATION", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _rv(request: Request, exc: RequestValidationError):
        return _error(422, "VALIDATION", "invalid request", exc.errors())

    @app.exception_handler(StarletteHTTPException)
    async def _he(request: Request, exc: StarletteHTTPException):
        code = "NOT_FOUND" if exc.status_code == 404 else "VALIDATION" if exc.status_code < 500 else "INTERNAL"
        return _error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(LiveiaError)
    async def _le(request: Request, exc: LiveiaError):
        return _error(500, "INTERNAL", str(exc))

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception):
        return _error(500, "INTERNAL", "internal error")

    # -- scenarios -----------------------------------------------------

    @app.post("/scenarios", status_code=201)
    async def create_scenario(request: Request):
        s = deserialize(await request.body())
        digest = store.put(s)
        return {"id": s.id, "digest": digest}

    @app.get("/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str) -> Response:
        return Response(content=store.get_bytes(scenario_id), media_type="application/json")

    @app.put("/scenarios/{scenario_id}")
    async def put_scenario(scenario_id: str, request: Request):
        s = deserialize(await request.body())
        if s.id != scenario_id:
            raise ContractError("document id does not match the path")
        digest = store.put(s)
        return {"id": s.id, "digest": digest}

    @app.delete("/scenarios/{scenario_id}", status_code=204)
    def delete_scenario(scenario_id: str) -> Response:
        store.delete(scenario_id)
        return Response(status_code=204)

    @app.post("/scenarios/{scenario_id}/fork", status_code=201)
    def fork_scenario(scenario_id: str):
        parent = store.get(scenario_id)
        child = fork(parent)
        store.put(child)
        store.put(parent)  # refresh the child link, content unchanged
        return {"id": child.id, "digest": content_digest(child), "parent": parent.id}

    # -- engine --------------------------------------------------------

    @app.post("/scenarios/{scenario_id}/trace")
    def trace_scenario(scenario_id: str, req: TraceRequest):
        s = store.get(scenario_id)
        if isinstance(req.beam, str):
            beam = s.beam(req.beam)
            scene = s
        else:
            try:
                beam = _beam_parse(req.beam)
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise SerializationError(f"malformed inline beam: {exc}") from exc
            scene = copy.deepcopy(s)
            scene.beams = [b for b in scene.beams if b.id != beam.id] + [beam]
            violations = validate(scene)
            if violations:
                raise SceneValidationError(violations)
        limits = TraceLimits(
            max_events=req.limits.max_events if req.limits else 32,
            min_intensity=req.limits.min_intensity if req.limits else 1e-3,
        )
        paths = trace_beam(scene, beam, limits)
        return {"beam": beam.id, "paths": [path_to_doc(p) for p in paths]}

    @app.get("/scenarios/{scenario_id}/radiance")
    def radiance_scenario(
        scenario_id: str,
        sphere: str = Query(...),
        seed: int = 0,
        rays_per_iter: int = 400,
        max_iter: int = 150,
        tol: float = 1e-3,
        grid_res: int = 64,
    ):
        s = store.get(scenario_id)
        params = EquilibriumParams(
            rays_per_iter=rays_per_iter, max_iter=max_iter, tol=tol,
            seed=seed, grid_res=grid_res,
        )
        grid, report = compute_equilibrium(s, sphere, s.beams, params)
        target = s.sphere(sphere)
        return {
            "grid": grid_to_doc(grid),
            "report": {
                "iterations": report.iterations,
                "converged": report.converged,
                "uniformity": report.uniformity,
                "shadow_fraction": report.shadow_fraction,
                "shadow_regions": [sorted(list(r)) for r in report.shadow_regions],
                "mean_radiance": list(report.mean_radiance),
                "enlightenment": enlightenment_score(grid, report, target),
            },
        }

    @app.get("/scenarios/{scenario_id}/render")
    def render_scenario(
        scenario_id: str,
        format: str = "svg",
        mode: str = "view",
        focus: str | None = None,
        seed: int = 0,
    ) -> Response:
        s = store.get(scenario_id)
        if format == "ppm":
            if not focus:
                raise ContractError("format=ppm needs focus=<sphere id>")
            grid, _ = compute_equilibrium(
                s, focus, s.beams,
                EquilibriumParams(rays_per_iter=400, max_iter=60, tol=0.05, seed=seed, grid_res=64),
            )
            return Response(content=grid_to_ppm(grid), media_type=PPM_TYPE)
        if format != "svg":
            raise ContractError("format must be svg or ppm")
        if mode == "view":
            svg = render_view(s)
        elif mode == "perspective":
            if not focus:
                raise ContractError("mode=perspective needs focus=<sphere id>")
            svg = render_perspective(s, focus)
        elif mode == "overview":
            svg = render_overview(_ancestors(store, s), s, _descendants(store, s))
        else:
            raise ContractError("mode must be view, overview, or perspective")
        return Response(content=svg, media_type=SVG_TYPE)

    @app.get("/scenarios/{scenario_id}/frames")
    def frames_scenario(scenario_id: str, steps: int = Query(..., ge=1, le=512)):
        s = store.get(scenario_id)
        return {"frames": [f.decode("utf-8") for f in render_frames(s, steps)]}

    # -- lineage and discovery ------------------------------------------

    @app.get("/scenarios/{scenario_id}/similar")
    def similar_scenarios(scenario_id: str, k: int = 5):
        return {"results": [{"id": sid, "score": score} for sid, score in store.similar(scenario_id, k)]}

    @app.get("/scenarios/{scenario_id}/suggest")
    def suggest_scenarios(scenario_id: str, k: int = 5):
        return {
            "suggestions": [
                {
                    "neighbor_id": sug.neighbor_id,
                    "score": sug.score,
                    "steps": [{"id": sid, "title": title} for sid, title in sug.steps],
                }
                for sug in store.suggest(scenario_id, k)
            ]
        }

    @app.get("/timeline/{root_id}")
    def timeline_tree(root_id: str):
        return _timeline_doc(store.timeline(root_id))

    # -- waves -----------------------------------------------------------

    @app.post("/waves/superpose")
    def waves_superpose(req: SuperposeRequest):
        a = waveform_from_doc(req.a) if req.a is not None else None
        b = waveform_from_doc(req.b) if req.b is not None else None
        return waveform_to_doc(superpose(a, b))

    @app.post("/waves/decompose")
    def waves_decompose(req: DecomposeRequest):
        signal = SampledSignal(samples=list(req.samples), sample_rate=req.sample_rate)
        components = decompose(signal, max_components=req.max_components, floor=req.floor)
        return waveform_to_doc(Waveform(components=components, label="decomposed"))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    return app


def _timeline_doc(node: TimelineNode) -> dict:
    return {
        "id": node.id,
        "title": node.title,
        "created_at": node.created_at,
        "children": [_timeline_doc(c) for c in node.children],
    }


def _ancestors(store: ScenarioStore, s: Scenario) -> list[Scenario]:
    chain: list[Scenario] = []
    cur = s.parent
    while cur is not None:
        try:
            parent = store.get(cur)
        except NotFoundError:
            break
        chain.insert(0, parent)
        cur = parent.parent
    return chain


def _descendants(store: ScenarioStore, s: Scenario) -> list[Scenario]:
    out: list[Scenario] = []

    def walk(node: TimelineNode) -> None:
        for child in node.children:
            out.append(store.get(child.id))
            walk(child)

    walk(store.timeline(s.id))
    return out
