"""Per-participant live session: feedback, synchronous retrain, locking, undo.

A session owns a chain of immutable model snapshots.  Every accepted feedback
retrains synchronously under the unfair-labels-plus-weights policy, locks the
application, and pushes the prior state onto the undo stack; undo restores it
bit-exactly.  Sessions can persist as append-only event logs and be rebuilt
deterministically by replaying them.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .fairness import FairnessReport, PercentChange, attach_deltas
from .gbdt import Model, label_of, predict_proba
from .integration import (
    LABEL_UNFAIR,
    LABEL_WEIGHTS_ONLY,
    FeedbackInstance,
    IntegrationContext,
    IntegrationPolicy,
    apply_policy,
    feedback_jsonl_lines,
)
from .integration import _retrain  # session retrains through the same path as replay

STATUS_UNCHECKED = "Unchecked"
STATUS_CHECKED = "Checked"
STATUS_UNFAIR = "Unfair"


class SessionError(Exception):
    pass


class ApplicationLockedError(SessionError):
    pass


class UnknownApplicationError(SessionError):
    pass


class EmptyUndoStackError(SessionError):
    pass


class InvalidWeightsError(SessionError):
    pass


@dataclass(frozen=True)
class Snapshot:
    model: Model
    report: FairnessReport
    locks: frozenset[str]
    statuses: tuple[tuple[str, str], ...]
    displayed: tuple[tuple[str, tuple[str, float]], ...]
    pool_probs: tuple[float, ...]


class Session:
    """Single-writer session state; callers serialize mutations per session."""

    def __init__(
        self,
        session_id: str,
        participant_id: str,
        ctx: IntegrationContext,
        policy: IntegrationPolicy,
        event_log_path: str | Path | None = None,
    ):
        self.session_id = session_id
        self.participant_id = participant_id
        self.ctx = ctx
        self.policy = policy
        self.lock = threading.Lock()
        self.feedback: list[FeedbackInstance] = []
        self.undo_stack: list[Snapshot] = []
        self.model = ctx.baseline_model
        self.report = ctx.baseline_report
        self.locks: set[str] = set()
        self.statuses: dict[str, str] = {a: STATUS_UNCHECKED for a in ctx.app_pool.ids}
        self.displayed: dict[str, tuple[str, float]] = {}
        self.pool_probs = predict_proba(
            ctx.baseline_model, ctx.encoder.transform(ctx.app_pool).X
        )
        self._event_log_path = None if event_log_path is None else Path(event_log_path)
        if self._event_log_path is not None and not self._event_log_path.exists():
            self._append_event(
                {
                    "event": "created",
                    "session_id": session_id,
                    "participant_id": participant_id,
                }
            )

    # -- persistence --------------------------------------------------------

    def _append_event(self, record: dict) -> None:
        if self._event_log_path is None:
            return
        with self._event_log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def restore(
        event_log_path: str | Path,
        ctx: IntegrationContext,
        policy: IntegrationPolicy,
    ) -> "Session":
        """Rebuild a session by replaying its event log (deterministic)."""
        path = Path(event_log_path)
        events = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        if not events or events[0].get("event") != "created":
            raise SessionError(f"event log {path} has no creation record")
        session = Session(
            session_id=events[0]["session_id"],
            participant_id=events[0]["participant_id"],
            ctx=ctx,
            policy=policy,
            event_log_path=None,
        )
        for ev in events[1:]:
            if ev["event"] == "feedback":
                fb = FeedbackInstance.from_dict(ev["data"])
                session.give_feedback(
                    fb.application_id, fb.label, fb.weights, timestamp_ms=fb.timestamp_ms
                )
            elif ev["event"] == "undo":
                session.undo()
        session._event_log_path = path
        return session

    # -- state transitions ---------------------------------------------------

    def _snapshot(self) -> Snapshot:
        return Snapshot(
            model=self.model,
            report=self.report,
            locks=frozenset(self.locks),
            statuses=tuple(sorted(self.statuses.items())),
            displayed=tuple(sorted(self.displayed.items())),
            pool_probs=tuple(self.pool_probs.tolist()),
        )

    def _restore_snapshot(self, snap: Snapshot) -> None:
        self.model = snap.model
        self.report = snap.report
        self.locks = set(snap.locks)
        self.statuses = dict(snap.statuses)
        self.displayed = dict(snap.displayed)
        self.pool_probs = np.asarray(snap.pool_probs)

    def validate_weights(self, weights: Mapping[str, float] | None) -> None:
        if weights is None:
            return
        known = {f.name for f in self.ctx.app_pool.schema}
        unknown = sorted(set(weights) - known)
        if unknown:
            raise InvalidWeightsError(f"weights for unknown features: {unknown}")
        if any(v < 0 for v in weights.values()):
            raise InvalidWeightsError("weights must be non-negative")
        if weights and all(v == 0 for v in weights.values()):
            raise InvalidWeightsError("weights must not be all zero")

    def give_feedback(
        self,
        application_id: str,
        label: str,
        weights: Mapping[str, float] | None = None,
        timestamp_ms: int | None = None,
    ) -> dict[str, PercentChange]:
        """Record one judgement and synchronously retrain.

        Returns the per-metric deltas of the new report against the previous
        step's report.  The application is locked and keeps the prediction it
        displayed at feedback time.
        """
        if label not in (LABEL_UNFAIR, LABEL_WEIGHTS_ONLY):
            raise SessionError(f"live sessions accept 'unfair' or 'weights_only', got {label!r}")
        if not self.ctx.app_pool.has_id(application_id):
            raise UnknownApplicationError(f"unknown application {application_id!r}")
        if application_id in self.locks:
            raise ApplicationLockedError(f"application {application_id!r} already judged")
        self.validate_weights(weights)
        if label == LABEL_WEIGHTS_ONLY and not weights:
            raise InvalidWeightsError("weights_only feedback requires a weights map")

        ts = int(time.time() * 1000) if timestamp_ms is None else int(timestamp_ms)
        if self.feedback and ts <= self.feedback[-1].timestamp_ms:
            ts = self.feedback[-1].timestamp_ms + 1
        fb = FeedbackInstance(
            participant_id=self.participant_id,
            application_id=application_id,
            timestamp_ms=ts,
            label=label,
            weights=None if weights is None else {k: float(v) for k, v in weights.items()},
        )

        prev = self._snapshot()
        prev_report = self.report
        applied = apply_policy(
            self.ctx.base_train,
            self.feedback + [fb],
            self.ctx.app_pool,
            self.policy,
            self.ctx.baseline_model,
            self.ctx.encoder,
            dedup=False,
        )
        model, rep = _retrain(self.ctx, applied)

        pos = self.ctx.app_pool.index_of(application_id)
        shown_prob = float(self.pool_probs[pos])
        self.undo_stack.append(prev)
        self.feedback.append(fb)
        self.model = model
        self.report = rep
        self.locks.add(application_id)
        self.statuses[application_id] = (
            STATUS_UNFAIR if label == LABEL_UNFAIR else STATUS_CHECKED
        )
        self.displayed[application_id] = (label_of(shown_prob), max(shown_prob, 1 - shown_prob))
        self.pool_probs = predict_proba(model, self.ctx.encoder.transform(self.ctx.app_pool).X)
        self._append_event({"event": "feedback", "data": fb.to_dict()})

        return attach_deltas(rep, prev_report).deltas

    def undo(self) -> None:
        """Restore the state before the last feedback, unlocking its application."""
        if not self.undo_stack:
            raise EmptyUndoStackError("nothing to undo")
        snap = self.undo_stack.pop()
        self.feedback.pop()
        self._restore_snapshot(snap)
        self._append_event({"event": "undo"})

    # -- views ----------------------------------------------------------------

    def application_views(self) -> list[dict]:
        """Current table rows: locked rows keep the prediction shown at
        feedback time, unlocked rows reflect the current model."""
        out = []
        pool = self.ctx.app_pool
        for i, app_id in enumerate(pool.ids):
            locked = app_id in self.locks
            if locked:
                lab, conf = self.displayed[app_id]
            else:
                p = float(self.pool_probs[i])
                lab, conf = label_of(p), max(p, 1 - p)
            attributes = {
                f.display_label: pool.columns[f.name][i] for f in pool.schema
            }
            out.append(
                {
                    "id": app_id,
                    "attributes": attributes,
                    "prediction": lab,
                    "confidence": conf,
                    "status": self.statuses[app_id],
                    "locked": locked,
                }
            )
        return out

    def status_counts(self) -> dict[str, int]:
        counts = {STATUS_UNFAIR: 0, STATUS_CHECKED: 0, STATUS_UNCHECKED: 0}
        for s in self.statuses.values():
            counts[s] += 1
        return counts

    def export_feedback_jsonl(self) -> str:
        return feedback_jsonl_lines(self.feedback)

    def invariants_ok(self) -> bool:
        return len(self.undo_stack) == len(self.feedback) and self.locks <= set(
            self.ctx.app_pool.ids
        )


def new_session_id() -> str:
    return uuid.uuid4().hex
