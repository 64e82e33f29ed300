"""Stateless HTTP API over the engine, feature store, and repository.

The service adds no semantics: every response body is the corresponding
module operation's output run through the shared serializer, so a CLI run
and a service call produce identical bytes.  Bundles are registered at
startup and preprocessed once; evaluations are pure reads over them.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import engine
from .engine import EvaluationConfig, ReportLog, TraceCache
from .errors import (
    BadParameterPath,
    EntryNotFound,
    ParseError,
    PersonMissingFeature,
    PersonUnknown,
    SceneQueryError,
    UnknownProvenance,
    UnknownSchemaVersion,
    ValidationFailed,
)
from .query import from_document, validate
from .repo import DuplicateOf, QueryRepository
from .store import FEATURE_DESCRIPTIONS, SessionBundle, iter_track_descriptors, load_bundle

PROVENANCE_HEADER = "X-Provenance-Token"


class SessionUnknown(SceneQueryError):
    code = "session_unknown"


_STATUS = {
    ParseError.code: 422,
    UnknownSchemaVersion.code: 422,
    ValidationFailed.code: 422,
    BadParameterPath.code: 422,
    UnknownProvenance.code: 422,
    PersonMissingFeature.code: 409,
    PersonUnknown.code: 404,
    SessionUnknown.code: 404,
    EntryNotFound.code: 404,
}


class EvaluateRequest(BaseModel):
    document: dict
    person: str
    config: Optional[dict] = None


class SweepRequest(BaseModel):
    document: dict
    person: str
    parameter_path: str
    lo: float
    hi: float
    steps: int
    config: Optional[dict] = None


class ReportRequest(BaseModel):
    provenance: str
    segment: dict
    note: str = ""


class ContributeRequest(BaseModel):
    title: str
    description: str = ""
    document: dict
    author: str = ""


class ForkRequest(BaseModel):
    author: str = ""


def discover_bundles(data_dir: str | Path) -> dict[str, SessionBundle]:
    """Load every subdirectory of ``data_dir`` that carries a manifest."""
    bundles: dict[str, SessionBundle] = {}
    root = Path(data_dir)
    for sub in sorted(root.iterdir()) if root.is_dir() else []:
        if (sub / "manifest.json").is_file():
            bundle = load_bundle(sub)
            bundles[bundle.session_id] = bundle
    return bundles


def session_metadata(bundle: SessionBundle, include_tracks: bool = False) -> dict:
    meta = {
        "schema_version": "1",
        "session_id": bundle.session_id,
        "duration_s": bundle.duration,
        "persons": list(bundle.persons),
        "sampling_period_s": bundle.sampling_period_default,
        "features": {p: bundle.features_for(p) for p in bundle.persons},
        "feature_descriptions": {
            name: FEATURE_DESCRIPTIONS.get(name, "ingested feature track")
            for name in bundle.feature_names()
        },
    }
    if include_tracks:
        meta["tracks"] = list(iter_track_descriptors(bundle, include_data=True))
    return meta


def create_app(bundles: dict[str, SessionBundle], repo: QueryRepository,
               report_log: ReportLog, default_config: Optional[EvaluationConfig] = None) -> FastAPI:
    app = FastAPI(title="scenequery", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    caches: dict[str, TraceCache] = {sid: TraceCache() for sid in bundles}

    @app.exception_handler(SceneQueryError)
    async def _scene_error(_request: Request, exc: SceneQueryError):
        return JSONResponse(status_code=_STATUS.get(exc.code, 400), content=exc.to_json())

    def _bundle(session_id: str) -> SessionBundle:
        bundle = bundles.get(session_id)
        if bundle is None:
            raise SessionUnknown(f"unknown session {session_id!r}")
        return bundle

    def _parse_query(document: dict, bundle: SessionBundle):
        node = from_document(json.dumps(document, ensure_ascii=False))
        errors = validate(node, bundle)
        if errors:
            raise ValidationFailed(errors)
        return node

    def _config(bundle: SessionBundle, raw: Optional[dict]) -> EvaluationConfig:
        base = default_config or EvaluationConfig(sampling_period_s=bundle.sampling_period_default)
        if not raw:
            return base
        known = {"sampling_period_s", "merge_gap_s", "min_segment_s"}
        bad = set(raw) - known
        if bad:
            raise ParseError(f"unknown config keys {sorted(bad)}")
        try:
            return EvaluationConfig(**{**base.to_json(), **raw})
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc))

    @app.get("/sessions")
    def list_sessions():
        return [session_metadata(b) for b in bundles.values()]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, include: Optional[str] = Query(default=None)):
        bundle = _bundle(session_id)
        return session_metadata(bundle, include_tracks=(include == "tracks"))

    @app.post("/sessions/{session_id}/evaluate")
    def evaluate_session(session_id: str, req: EvaluateRequest):
        bundle = _bundle(session_id)
        node = _parse_query(req.document, bundle)
        cfg = _config(bundle, req.config)
        segments, traces = engine.evaluate(node, bundle, req.person, cfg, cache=caches[session_id])
        payload = engine.result_payload(bundle, req.person, node, cfg, segments, traces)
        token = report_log.register(payload)
        return Response(
            content=engine.to_json_bytes(payload),
            media_type="application/json",
            headers={PROVENANCE_HEADER: token},
        )

    @app.post("/sessions/{session_id}/sweep")
    def sweep_session(session_id: str, req: SweepRequest):
        bundle = _bundle(session_id)
        node = _parse_query(req.document, bundle)
        cfg = _config(bundle, req.config)
        if req.steps < 2:
            raise ParseError("steps must be >= 2")
        if not req.lo < req.hi:
            raise ParseError("lo must be < hi")
        result = engine.sweep(
            node, bundle, req.person, cfg, req.parameter_path,
            req.lo, req.hi, req.steps, cache=caches[session_id])
        return Response(content=engine.to_json_bytes(result.to_json()), media_type="application/json")

    @app.post("/reports")
    def post_report(req: ReportRequest):
        segment = (float(req.segment.get("start_s")), float(req.segment.get("end_s")))
        record_id, created = report_log.report(req.provenance, segment, req.note)
        return JSONResponse(status_code=201 if created else 200, content={"record_id": record_id})

    @app.get("/orgs/{org_id}/queries")
    def search_queries(org_id: str, text: Optional[str] = None, features: Optional[str] = None):
        wanted = {f for f in (features or "").split(",") if f} or None
        entries = repo.search(org_id, text=text, features=wanted)
        return [e.to_json() for e in entries]

    @app.post("/orgs/{org_id}/queries")
    def contribute_query(org_id: str, req: ContributeRequest):
        outcome = repo.contribute(
            org_id, req.title, req.description,
            json.dumps(req.document, ensure_ascii=False), req.author)
        if isinstance(outcome, DuplicateOf):
            return JSONResponse(
                status_code=409,
                content={
                    "code": "duplicate_query",
                    "message": "an equivalent query is already stored in this organization",
                    "detail": {"duplicate_of": outcome.entry_id},
                },
            )
        return JSONResponse(status_code=201, content={"entry_id": outcome})

    @app.post("/orgs/{org_id}/queries/{entry_id}/fork")
    def fork_query(org_id: str, entry_id: str, req: ForkRequest):
        entry = repo.fork(org_id, entry_id, req.author)
        return JSONResponse(status_code=201, content=entry.to_json())

    return app


def build_app(data_dir: str | Path, repo_root: str | Path,
              reports_path: Optional[str | Path] = None,
              default_config: Optional[EvaluationConfig] = None) -> FastAPI:
    """Assemble the app from filesystem locations (startup preprocessing included)."""
    bundles = discover_bundles(data_dir)
    repo = QueryRepository(repo_root)
    if reports_path is None:
        reports_path = Path(repo_root) / "reports.jsonl"
    return create_app(bundles, repo, ReportLog(reports_path), default_config)
