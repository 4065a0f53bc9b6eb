"""Session-oriented HTTP/JSON API for the interactive feedback loop.

Each session owns a personalized model chain retrained synchronously inside
POST /feedback; locked applications keep the prediction they displayed at
feedback time, and undo restores the exact prior snapshot.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .fairness import PercentChange
from .gbdt import ACCEPT
from .harness import BaselineArtifacts, PreparedData, build_context, load_baseline, load_prepared
from .integration import (
    LABEL_UNFAIR,
    LABEL_WEIGHTS_ONLY,
    POLICY_LABELS_UNFAIR_WEIGHTS,
    IntegrationPolicy,
)
from .session import (
    ApplicationLockedError,
    EmptyUndoStackError,
    InvalidWeightsError,
    Session,
    SessionError,
    UnknownApplicationError,
    new_session_id,
)

SCHEMA_VERSION = "1"

SORT_KEYS = ("id", "prediction", "confidence", "status")


class ApiError(Exception):
    def __init__(self, status_code: int, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.status_code = status_code
        self.code = code
        self.message = message
        self.detail = detail


class ServingState:
    """Baseline artifacts plus the live session table."""

    def __init__(
        self,
        prepared_dir: str | Path | None = None,
        baseline_dir: str | Path | None = None,
        session_store_dir: str | Path | None = None,
    ):
        self.prepared_dir = prepared_dir
        self.baseline_dir = baseline_dir
        self.session_store_dir = Path(session_store_dir) if session_store_dir else None
        self.prepared: PreparedData | None = None
        self.baseline: BaselineArtifacts | None = None
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.load_error: str | None = None
        self.try_load()

    def try_load(self) -> bool:
        if self.prepared is not None and self.baseline is not None:
            return True
        try:
            if self.prepared is None and self.prepared_dir is not None:
                self.prepared = load_prepared(self.prepared_dir)
            if self.baseline is None and self.baseline_dir is not None:
                self.baseline = load_baseline(self.baseline_dir)
        except Exception as e:  # kept for the 503 detail
            self.load_error = str(e)
            return False
        self.load_error = None if self.baseline is not None else "baseline not configured"
        return self.prepared is not None and self.baseline is not None

    def ready(self) -> bool:
        return self.try_load()

    def policy(self) -> IntegrationPolicy:
        return IntegrationPolicy(
            POLICY_LABELS_UNFAIR_WEIGHTS,
            alpha=self.baseline.alpha if self.baseline else 1.0,
            flip_source=self.prepared.config.flip_source if self.prepared else "predicted",
        )

    def create_session(self, participant_id: str | None) -> Session:
        if not self.ready():
            raise ApiError(503, "baseline_unavailable", "baseline artifacts not loaded",
                           self.load_error or "")
        sid = new_session_id()
        ctx = build_context(self.prepared, self.baseline)
        log_path = None
        if self.session_store_dir is not None:
            self.session_store_dir.mkdir(parents=True, exist_ok=True)
            log_path = self.session_store_dir / f"{sid}.jsonl"
        session = Session(
            session_id=sid,
            participant_id=participant_id or sid[:8],
            ctx=ctx,
            policy=self.policy(),
            event_log_path=log_path,
        )
        with self.lock:
            self.sessions[sid] = session
        return session

    def get_session(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session


class FeedbackBody(BaseModel):
    application_id: str
    label: str
    weights: dict[str, float] | None = None


class SessionBody(BaseModel):
    participant_id: str | None = None


def _metric_payload(mv) -> dict:
    return {"value": mv.value, "defined": mv.defined, "note": mv.note}


def _rate_extremes(groups: Mapping, field: str) -> dict:
    defined = {g: getattr(r, field) for g, r in groups.items() if getattr(r, field) is not None}
    if not defined:
        return {"min": None, "max": None}
    lo = min(defined, key=lambda g: (defined[g], g))
    hi = max(defined, key=lambda g: (defined[g], g))
    return {
        "min": {"group": lo, "rate": defined[lo]},
        "max": {"group": hi, "rate": defined[hi]},
    }


def metrics_payload(session: Session, attributes: list[str] | None = None) -> dict:
    """Live metrics for the fairness panel: DPR and AOD with their min/max
    bars, per-value predicted accept/reject distributions, and the system
    overview."""
    rep = session.report
    known = list(rep.attributes)
    attrs = attributes or known
    unknown = sorted(set(attrs) - set(known))
    if unknown:
        raise ApiError(400, "unknown_attribute", f"attributes not in report: {unknown}")

    pool = session.ctx.eval_ds
    payload_attrs = {}
    for attr in attrs:
        ar = rep.attributes[attr]
        distribution = []
        for value, rates in sorted(ar.groups.items()):
            sel = rates.selection_rate
            distribution.append(
                {
                    "value": value,
                    "count": rates.count,
                    "accepted_pct": None if sel is None else sel * 100.0,
                    "rejected_pct": None if sel is None else (1.0 - sel) * 100.0,
                }
            )
        payload_attrs[attr] = {
            "dpr": {**_metric_payload(ar.dpr), **_rate_extremes(ar.groups, "selection_rate")},
            "aod": {
                **_metric_payload(ar.aod),
                "tpr": _rate_extremes(ar.groups, "tpr"),
                "fpr": _rate_extremes(ar.groups, "fpr"),
            },
            "distribution": distribution,
        }

    counts = session.status_counts()
    acceptance = None
    if rep.attributes:
        any_attr = next(iter(rep.attributes.values()))
        total = sum(r.count for r in any_attr.groups.values())
        accepted = sum(
            r.selection_rate * r.count for r in any_attr.groups.values()
            if r.selection_rate is not None
        )
        acceptance = accepted / total * 100.0 if total else None

    return {
        "schema_version": SCHEMA_VERSION,
        "step": len(session.feedback),
        "attributes": payload_attrs,
        "overview": {
            "acceptance_rate_pct": acceptance,
            "accuracy": rep.accuracy.value,
            "consistency": rep.consistency.value if rep.consistency.defined else None,
            "unfair_count": counts["Unfair"],
            "checked_count": counts["Checked"],
            "test_set_size": pool.n_rows,
        },
        "feature_weights": dict(sorted(session.model.feature_weights.items())),
        "default_attributes": list(session.ctx.report_config.attributes),
    }


def _delta_payload(deltas: Mapping[str, PercentChange]) -> dict:
    out = {}
    for key, pc in sorted(deltas.items()):
        out[key] = {
            "pct": pc.pct,
            "absolute": pc.absolute,
            "improved": pc.improved,
            "direction": pc.direction,
            "note": pc.note,
        }
    return out


def create_app(
    prepared_dir: str | Path | None = None,
    baseline_dir: str | Path | None = None,
    session_store_dir: str | Path | None = None,
) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="fairloop service")
    # the browser UI is served from a different origin than the API
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    state = ServingState(prepared_dir, baseline_dir, session_store_dir)
    app.state.serving = state

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail,
                     "schema_version": SCHEMA_VERSION},
        )

    def translate(e: Exception) -> ApiError:
        if isinstance(e, ApplicationLockedError):
            return ApiError(409, "application_locked", str(e))
        if isinstance(e, EmptyUndoStackError):
            return ApiError(409, "empty_undo_stack", str(e))
        if isinstance(e, InvalidWeightsError):
            return ApiError(422, "invalid_weights", str(e))
        if isinstance(e, UnknownApplicationError):
            return ApiError(404, "unknown_application", str(e))
        if isinstance(e, SessionError):
            return ApiError(400, "bad_request", str(e))
        raise e

    @app.post("/sessions")
    def create_session(body: SessionBody | None = None):
        session = state.create_session(body.participant_id if body else None)
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session.session_id,
            "participant_id": session.participant_id,
            "schema": [f.to_dict() for f in session.ctx.app_pool.schema],
            "default_attributes": list(session.ctx.report_config.attributes),
            "policy": session.policy.name,
        }

    @app.get("/sessions/{session_id}/applications")
    def list_applications(
        session_id: str,
        sort: str | None = None,
        filter: list[str] = Query(default=[]),
    ):
        session = state.get_session(session_id)
        with session.lock:
            views = session.application_views()
        for f in filter:
            if "=" not in f:
                raise ApiError(400, "bad_filter", f"filter must be feature=value, got {f!r}")
            name, value = f.split("=", 1)
            by_label = {sp.display_label: sp.name for sp in session.ctx.app_pool.schema}
            if name not in by_label and name not in by_label.values():
                raise ApiError(400, "unknown_filter_feature", f"unknown feature {name!r}")
            label = name if name in by_label else next(
                sp.display_label for sp in session.ctx.app_pool.schema if sp.name == name
            )
            views = [v for v in views if str(v["attributes"].get(label)) == value]
        if sort:
            key, _, direction = sort.partition(":")
            if key not in SORT_KEYS:
                raise ApiError(400, "unknown_sort_key", f"sort key must be one of {SORT_KEYS}")
            if direction not in ("", "asc", "desc"):
                raise ApiError(400, "bad_sort_direction", f"unknown direction {direction!r}")
            views.sort(key=lambda v: (v[key], v["id"]), reverse=direction == "desc")
        return {"schema_version": SCHEMA_VERSION, "applications": views}

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str, attributes: str | None = None):
        session = state.get_session(session_id)
        attrs = [a for a in attributes.split(",") if a] if attributes else None
        with session.lock:
            return metrics_payload(session, attrs)

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody):
        session = state.get_session(session_id)
        if body.label not in (LABEL_UNFAIR, LABEL_WEIGHTS_ONLY):
            raise ApiError(
                422, "invalid_label",
                f"label must be '{LABEL_UNFAIR}' or '{LABEL_WEIGHTS_ONLY}'",
            )
        with session.lock:
            try:
                deltas = session.give_feedback(body.application_id, body.label, body.weights)
            except SessionError as e:
                raise translate(e) from None
            payload = metrics_payload(session)
        return {
            "schema_version": SCHEMA_VERSION,
            "step_summary": {
                "step": len(session.feedback),
                "application_id": body.application_id,
                "label": body.label,
                "locked": True,
            },
            "metrics": payload,
            "deltas": _delta_payload(deltas),
        }

    @app.post("/sessions/{session_id}/undo")
    def post_undo(session_id: str):
        session = state.get_session(session_id)
        with session.lock:
            try:
                session.undo()
            except SessionError as e:
                raise translate(e) from None
            payload = metrics_payload(session)
        return {"schema_version": SCHEMA_VERSION, "metrics": payload}

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str):
        session = state.get_session(session_id)
        with session.lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "session_id": session.session_id,
                "participant_id": session.participant_id,
                "feedback_jsonl": session.export_feedback_jsonl(),
                "model": session.model.to_dict(),
                "policy": session.policy.name,
                "alpha": session.policy.alpha,
            }

    return app


def run_server(
    prepared_dir: str | Path,
    baseline_dir: str | Path,
    port: int = 8000,
    host: str = "127.0.0.1",
    session_store_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(prepared_dir, baseline_dir, session_store_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
