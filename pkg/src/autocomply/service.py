"""HTTP application layer: ingestion, case review, alerts, metrics, labels.

Thin JSON facade over the engine. All writes funnel through the engine's
single-writer lock; reads serve point-in-time copies. On startup the
service replays any existing WAL (snapshot-accelerated) before accepting
traffic, then appends to the same log.

Endpoints (all under /v1): POST /events, POST /rules, GET /cases,
GET /cases/{id}, POST /cases/{id}/verdict, GET /alerts, GET /metrics,
GET /labels/export, POST /admin/models, GET /health. Errors come back as
{"error_code", "message"} with 409 for conflicts, 404 for unknown cases
and 400 for validation failures.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from . import dqn as dqn_mod
from . import engine as engine_mod
from . import rules as rules_mod
from . import wal as wal_mod
from .docclf import DocClassifier
from .domain import (
    AlreadyResolved,
    CaseStatus,
    DecisionAction,
    DecisionSource,
    Event,
    SourceMismatch,
    Verdict,
)
from .engine import DuplicateEvent, Engine, EngineConfig, ModelBundle, UnknownCase
from .features import FeaturePipeline
from .seqmodel import SequenceModel
from .streaming import AlertPolicy, TumblingWindow
from .svm import SvmModel


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8500
    wal_dir: str = "./runtime"
    rules_path: Optional[str] = None
    model_paths: dict = field(default_factory=dict)
    alert_policy: dict = field(default_factory=dict)
    window_width_ms: int = 60_000
    lateness_ms: int = 5_000
    queue_capacity: int = 100
    seed: int = 0
    bearer_token: Optional[str] = None
    console_dir: Optional[str] = None

    @classmethod
    def load(cls, path: str) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls(**raw)


def _now_ms() -> int:
    return int(time.time() * 1000)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error_code": code, "message": message})


def load_models(model_paths: dict) -> Optional[ModelBundle]:
    """Load whichever model checkpoints are configured; None when incomplete."""
    required = {"pipeline", "svm", "sequence", "policy"}
    if not required.issubset(model_paths):
        return None
    bundle = ModelBundle(
        pipeline=FeaturePipeline.load(model_paths["pipeline"]),
        svm=SvmModel.load(model_paths["svm"]),
        sequence=SequenceModel.load(model_paths["sequence"]),
        policy=dqn_mod.load_policy(model_paths["policy"]),
    )
    if "doc" in model_paths:
        bundle.doc = DocClassifier.load(model_paths["doc"])
    return bundle


def build_engine(config: ServiceConfig,
                 models: Optional[ModelBundle] = None) -> Engine:
    """Engine with WAL recovery: replay existing records, then keep appending."""
    os.makedirs(config.wal_dir, exist_ok=True)
    wal_path = os.path.join(config.wal_dir, "engine.wal")
    engine_config = EngineConfig(
        queue_capacity=config.queue_capacity,
        window=TumblingWindow(config.window_width_ms),
        alert_policy=AlertPolicy(**config.alert_policy) if config.alert_policy else AlertPolicy(),
        lateness_ms=config.lateness_ms,
    )
    if models is None:
        models = load_models(config.model_paths)
    ruleset = None
    if config.rules_path:
        ruleset = rules_mod.parse_rules_file(config.rules_path)
    engine = Engine(ruleset=ruleset, models=models, config=engine_config, wal_path=None)
    start_seq = 1
    if os.path.exists(wal_path):
        snap = engine_mod.latest_snapshot_path(wal_path)
        if snap is not None:
            with open(snap, "r", encoding="utf-8") as f:
                start_seq = engine.restore_snapshot(json.load(f)) + 1
        last = engine_mod.apply_records(
            engine, wal_mod.read_wal(wal_path, start_seq=start_seq))
        start_seq = max(start_seq, last + 1)
    engine.wal = wal_mod.WalWriter(wal_path, snapshot_fn=engine._write_snapshot,
                                   start_seq=start_seq)
    return engine


def create_app(engine: Engine, bearer_token: Optional[str] = None,
               console_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="autocomply", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        if bearer_token and request.url.path.startswith("/v1/") \
                and request.url.path != "/v1/health":
            header = request.headers.get("authorization", "")
            if header != f"Bearer {bearer_token}":
                return _error(401, "Unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    @app.get("/v1/health")
    def health():
        return {"status": "ok",
                "wal_seq": engine.wal.last_seq if engine.wal else 0,
                "models_loaded": engine.models is not None}

    @app.post("/v1/events")
    def post_events(payload=Body(...)):
        single = isinstance(payload, dict)
        raw_events = [payload] if single else payload
        if not isinstance(raw_events, list) or not raw_events:
            return _error(400, "ValidationError", "expected an event or array of events")
        try:
            events = [Event.from_json_dict(d) for d in raw_events]
        except (KeyError, ValueError, TypeError) as e:
            return _error(400, "ValidationError", f"malformed event: {e}")
        try:
            cases = engine.ingest_many(events)
        except DuplicateEvent as e:
            return _error(409, "DuplicateEvent", str(e))
        except ValueError as e:
            return _error(400, "ValidationError", str(e))
        body = [c.to_json_dict() for c in cases]
        return body[0] if single else body

    @app.post("/v1/rules")
    def post_rules(body: bytes = Body(...)):
        text = body.decode("utf-8", errors="replace")
        try:
            count = engine.load_rules(text)
        except (rules_mod.RuleSyntaxError, rules_mod.DuplicateId,
                rules_mod.UnknownField, rules_mod.TypeMismatch) as e:
            return _error(400, type(e).__name__, str(e))
        return {"status": "ok", "rules": count}

    @app.get("/v1/cases")
    def get_cases(status: Optional[str] = None, limit: int = 100):
        parsed_status = None
        if status is not None:
            try:
                parsed_status = CaseStatus(status)
            except ValueError:
                return _error(400, "ValidationError", f"unknown status {status!r}")
        cases = engine.list_cases(status=parsed_status, limit=max(1, min(limit, 10_000)))
        return {"cases": [_case_view(engine, c) for c in cases],
                "pending_review_depth": len(engine.queue)}

    @app.get("/v1/cases/{case_id}")
    def get_case(case_id: str):
        try:
            case = engine.get_case(case_id)
        except UnknownCase as e:
            return _error(404, "UnknownCase", str(e))
        return _case_view(engine, case)

    @app.post("/v1/cases/{case_id}/verdict")
    def post_verdict(case_id: str, body: dict = Body(...)):
        try:
            decision = DecisionAction(body["decision"])
        except (KeyError, ValueError):
            return _error(400, "ValidationError", "decision must be approve or reject")
        reviewer = body.get("reviewer_id")
        if not reviewer:
            return _error(400, "ValidationError", "human verdicts require reviewer_id")
        verdict = Verdict(case_id=case_id, decision=decision,
                          source=DecisionSource.HUMAN, reviewer_id=reviewer,
                          timestamp=body.get("timestamp", _now_ms()))
        try:
            case = engine.submit_verdict(verdict)
        except UnknownCase as e:
            return _error(404, "UnknownCase", str(e))
        except AlreadyResolved as e:
            return _error(409, "AlreadyResolved", str(e))
        except SourceMismatch as e:
            return _error(400, "SourceMismatch", str(e))
        except ValueError as e:
            return _error(400, "ValidationError", str(e))
        return _case_view(engine, case)

    @app.get("/v1/alerts")
    def get_alerts(since_seq: int = 0):
        alerts = engine.alerts_since(since_seq)
        return {"alerts": [a.to_json_dict() for a in alerts],
                "last_seq": alerts[-1].seq if alerts else since_seq}

    @app.get("/v1/metrics")
    def get_metrics():
        return engine.metrics_snapshot()

    @app.get("/v1/labels/export")
    def export_labels():
        lines = "\n".join(wal_mod.canonical_json(lbl.to_json_dict())
                          for lbl in list(engine.labels))
        return PlainTextResponse(lines + ("\n" if lines else ""),
                                 media_type="application/x-ndjson")

    @app.post("/v1/admin/models")
    def admin_models(body: dict = Body(...)):
        kind = body.get("kind")
        path = body.get("checkpoint_path")
        if kind not in {"pipeline", "svm", "sequence", "doc", "policy", "bundle"}:
            return _error(400, "ValidationError", f"unknown model kind {kind!r}")
        if not path:
            return _error(400, "ValidationError", "checkpoint_path required")
        try:
            if kind == "bundle":
                with open(path, "r", encoding="utf-8") as f:
                    engine.models = load_models(json.load(f))
            elif engine.models is None:
                return _error(400, "ModelNotLoaded",
                              "no bundle loaded; hot-swap needs a full bundle first")
            elif kind == "pipeline":
                engine.models.pipeline = FeaturePipeline.load(path)
            elif kind == "svm":
                engine.models.svm = SvmModel.load(path)
            elif kind == "sequence":
                engine.models.sequence = SequenceModel.load(path)
            elif kind == "doc":
                engine.models.doc = DocClassifier.load(path)
            elif kind == "policy":
                engine.models.policy = dqn_mod.load_policy(path)
        except (OSError, ValueError, KeyError) as e:
            return _error(400, "ValidationError", f"cannot load {kind}: {e}")
        return {"status": "ok", "kind": kind}

    if console_dir and os.path.isdir(console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app


def _case_view(engine: Engine, case) -> dict:
    view = case.to_json_dict()
    event = engine.event_by_case.get(case.case_id)
    if event is not None:
        view["event"] = {
            "id": event.id,
            "timestamp": event.timestamp,
            "account": event.account,
            "amount": event.amount,
            "channel": event.channel.value,
            "region": event.region,
            "doc_text": event.doc_text,
        }
    return view


def serve(config_path: str) -> None:
    import uvicorn

    config = ServiceConfig.load(config_path)
    engine = build_engine(config)
    app = create_app(engine, bearer_token=config.bearer_token,
                     console_dir=config.console_dir)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
