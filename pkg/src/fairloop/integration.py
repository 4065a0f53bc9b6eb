"""Feedback integration: turn participant judgements into retrained models.

Four policies control what enters the retraining set (label rows, only the
unfair ones, and/or slider weight maps), applied either globally across all
participants or step-by-step per participant with cumulative-moving-average
trend series.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import DataError, Dataset, Encoder, concat
from .fairness import (
    METRIC_DIRECTIONS,
    FairnessReport,
    PercentChange,
    ReportConfig,
    percent_change,
    report,
)
from .gbdt import (
    GbdtParams,
    Model,
    balance_instance_weights,
    normalize_weights,
    predict_proba,
    train,
)

LABEL_FAIR = "fair"
LABEL_UNFAIR = "unfair"
LABEL_WEIGHTS_ONLY = "weights_only"
FEEDBACK_LABELS = (LABEL_FAIR, LABEL_UNFAIR, LABEL_WEIGHTS_ONLY)

POLICY_LABELS = "labels"
POLICY_LABELS_UNFAIR = "labels_unfair"
POLICY_LABELS_WEIGHTS = "labels_weights"
POLICY_LABELS_UNFAIR_WEIGHTS = "labels_unfair_weights"
POLICIES = (
    POLICY_LABELS,
    POLICY_LABELS_UNFAIR,
    POLICY_LABELS_WEIGHTS,
    POLICY_LABELS_UNFAIR_WEIGHTS,
)


class IntegrationError(ValueError):
    """Invalid feedback or policy application."""


@dataclass(frozen=True)
class FeedbackInstance:
    """One participant judgement on one application."""

    participant_id: str
    application_id: str
    timestamp_ms: int
    label: str
    weights: dict[str, float] | None = None

    def __post_init__(self):
        if self.label not in FEEDBACK_LABELS:
            raise IntegrationError(f"unknown feedback label {self.label!r}")
        if self.label == LABEL_WEIGHTS_ONLY and not self.weights:
            raise IntegrationError("weights_only feedback requires a weights map")
        if self.weights is not None:
            for k, v in self.weights.items():
                if v < 0:
                    raise IntegrationError(f"negative weight for {k!r} in feedback")

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "application_id": self.application_id,
            "timestamp_ms": self.timestamp_ms,
            "label": self.label,
            "weights": self.weights,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "FeedbackInstance":
        return FeedbackInstance(
            participant_id=str(d["participant_id"]),
            application_id=str(d["application_id"]),
            timestamp_ms=int(d["timestamp_ms"]),
            label=str(d["label"]).lower(),
            weights=None if d.get("weights") in (None, "") else {
                str(k): float(v) for k, v in d["weights"].items()
            },
        )


@dataclass(frozen=True)
class IntegrationPolicy:
    """Which parts of the feedback enter retraining, plus the feedback
    contribution ratio alpha (block-total weight of feedback rows relative to
    the original training block)."""

    name: str
    alpha: float = 1.0
    flip_source: str = "predicted"

    def __post_init__(self):
        if self.name not in POLICIES:
            raise IntegrationError(f"unknown policy {self.name!r}; choose from {POLICIES}")
        if self.alpha < 0:
            raise IntegrationError("alpha must be >= 0")
        if self.flip_source not in ("predicted", "ground_truth"):
            raise IntegrationError("flip_source must be 'predicted' or 'ground_truth'")

    @property
    def uses_weights(self) -> bool:
        return self.name in (POLICY_LABELS_WEIGHTS, POLICY_LABELS_UNFAIR_WEIGHTS)

    @property
    def includes_fair_rows(self) -> bool:
        return self.name in (POLICY_LABELS, POLICY_LABELS_WEIGHTS)


def dedup_latest(feedback: Sequence[FeedbackInstance]) -> list[FeedbackInstance]:
    """Keep only the latest judgement per (participant, application); ties on
    timestamp resolve to the later log position."""
    latest: dict[tuple[str, str], tuple[int, int, FeedbackInstance]] = {}
    for pos, fb in enumerate(feedback):
        key = (fb.participant_id, fb.application_id)
        cur = latest.get(key)
        if cur is None or (fb.timestamp_ms, pos) >= (cur[0], cur[1]):
            latest[key] = (fb.timestamp_ms, pos, fb)
    kept = sorted(latest.values(), key=lambda t: t[1])
    return [fb for _, _, fb in kept]


@dataclass(frozen=True)
class PolicyApplication:
    augmented_train: Dataset
    feature_weights: dict[str, float]
    instance_weights: np.ndarray
    feedback_rows: tuple[int, ...]
    effective_count: int
    warnings: tuple[str, ...]


def merge_weight_feedback(
    baseline_weights: Mapping[str, float],
    feedback: Sequence[FeedbackInstance],
) -> dict[str, float]:
    """Combine slider maps into one normalized feature-weight vector.

    Per participant the latest submitted value per feature overwrites earlier
    ones on top of the baseline vector, then normalizes; across participants
    the normalized vectors are averaged and renormalized.  Participants who
    never submitted weights do not enter the average.
    """
    per_participant: dict[str, dict[str, float]] = {}
    order: dict[str, list[tuple[int, int, dict[str, float]]]] = {}
    for pos, fb in enumerate(feedback):
        if fb.weights:
            order.setdefault(fb.participant_id, []).append((fb.timestamp_ms, pos, fb.weights))
    if not order:
        return normalize_weights(dict(baseline_weights))
    for pid, seq in order.items():
        vec = dict(baseline_weights)
        for _, _, wmap in sorted(seq, key=lambda t: (t[0], t[1])):
            unknown = sorted(set(wmap) - set(vec))
            if unknown:
                raise IntegrationError(f"weights for unknown features: {unknown}")
            vec.update(wmap)
        per_participant[pid] = normalize_weights(vec)
    merged = {f: 0.0 for f in baseline_weights}
    for vec in per_participant.values():
        for f, v in vec.items():
            merged[f] += v
    merged = {f: v / len(per_participant) for f, v in merged.items()}
    return normalize_weights(merged)


def apply_policy(
    base_train: Dataset,
    feedback: Sequence[FeedbackInstance],
    app_pool: Dataset,
    policy: IntegrationPolicy,
    baseline_model: Model,
    encoder: Encoder,
    dedup: bool = True,
) -> PolicyApplication:
    """Build the augmented training set, feature weights, and instance weights
    implied by a feedback log.

    Unfair rows enter with the baseline model's predicted label flipped (or
    the ground-truth label flipped when so configured); fair rows confirm the
    prediction; weight maps only apply under the weights policies.  Effective
    rows are appended in a canonical order so the result depends only on the
    feedback set, not its arrival order.
    """
    warnings: list[str] = []
    for fb in feedback:
        if not app_pool.has_id(fb.application_id):
            raise IntegrationError(
                f"feedback references unknown application id {fb.application_id!r}"
            )
    effective = dedup_latest(feedback) if dedup else list(feedback)

    needed = sorted({fb.application_id for fb in effective})
    predicted_target: dict[str, int] = {}
    if needed:
        rows = app_pool.subset([app_pool.index_of(a) for a in needed])
        probs = predict_proba(baseline_model, encoder.transform(rows).X)
        predicted_target = {a: int(p >= 0.5) for a, p in zip(needed, probs)}

    def flip_base(fb: FeedbackInstance) -> int:
        if policy.flip_source == "ground_truth":
            pos = app_pool.index_of(fb.application_id)
            if app_pool.target is None or app_pool.target[pos] is None:
                raise IntegrationError(
                    f"flip_source=ground_truth but application {fb.application_id!r}"
                    " has no label"
                )
            return int(app_pool.target[pos])
        return predicted_target[fb.application_id]

    row_feedback: list[tuple[FeedbackInstance, int]] = []
    weight_feedback: list[FeedbackInstance] = []
    for fb in effective:
        if fb.label == LABEL_UNFAIR:
            row_feedback.append((fb, 1 - flip_base(fb)))
            if fb.weights and policy.uses_weights:
                weight_feedback.append(fb)
            elif fb.weights and not policy.uses_weights:
                warnings.append(
                    f"weights on feedback {fb.application_id} ignored under policy"
                    f" {policy.name}"
                )
        elif fb.label == LABEL_FAIR:
            if policy.includes_fair_rows:
                row_feedback.append((fb, flip_base(fb)))
            if fb.weights and policy.uses_weights:
                weight_feedback.append(fb)
        else:  # weights_only
            if policy.uses_weights:
                weight_feedback.append(fb)
            else:
                warnings.append(
                    f"weights_only feedback on {fb.application_id} ignored under"
                    f" policy {policy.name}"
                )

    # canonical order: result must not depend on feedback arrival order
    row_feedback.sort(
        key=lambda t: (t[0].application_id, t[0].participant_id, t[0].timestamp_ms)
    )

    if policy.alpha == 0 and (row_feedback or weight_feedback):
        warnings.append("alpha=0: feedback contributes nothing to retraining")

    fw = dict(baseline_model.feature_weights)
    if policy.uses_weights and weight_feedback and policy.alpha > 0:
        fw = merge_weight_feedback(baseline_model.feature_weights, weight_feedback)

    if row_feedback and policy.alpha > 0:
        ids: list[str] = []
        used: set[str] = set(base_train.ids)
        cols: dict[str, list] = {f.name: [] for f in base_train.schema}
        targets: list[int] = []
        for fb, tgt in row_feedback:
            rid = f"fb:{fb.participant_id}:{fb.application_id}:{fb.timestamp_ms}"
            k = 0
            while rid in used:
                k += 1
                rid = f"fb:{fb.participant_id}:{fb.application_id}:{fb.timestamp_ms}#{k}"
            used.add(rid)
            ids.append(rid)
            values = app_pool.row_values(fb.application_id)
            for f in base_train.schema:
                cols[f.name].append(values[f.name])
            targets.append(tgt)
        fb_ds = Dataset(
            schema=base_train.schema,
            ids=tuple(ids),
            columns={k: tuple(v) for k, v in cols.items()},
            target=tuple(targets),
        )
        augmented = concat(base_train, fb_ds)
        fb_idx = tuple(range(base_train.n_rows, augmented.n_rows))
    else:
        augmented = base_train
        fb_idx = ()

    iw = balance_instance_weights(
        [int(t) for t in augmented.target], fb_idx, policy.alpha if fb_idx else 1.0
    )
    return PolicyApplication(
        augmented_train=augmented,
        feature_weights=fw,
        instance_weights=iw,
        feedback_rows=fb_idx,
        effective_count=len(row_feedback) + len(weight_feedback),
        warnings=tuple(warnings),
    )


def adjusted_pct(pc: PercentChange) -> float | None:
    """Sign-adjusted percentage: positive means improvement for the metric."""
    if pc.pct is None:
        return None
    return abs(pc.pct) if pc.improved else -abs(pc.pct)


@dataclass(frozen=True)
class RetrainOutcome:
    model: Model
    report: FairnessReport
    deltas: dict[str, PercentChange]
    equals_baseline: bool = False
    warnings: tuple[str, ...] = ()


@dataclass
class IntegrationContext:
    """Everything a retrain needs besides the feedback itself."""

    base_train: Dataset
    app_pool: Dataset
    eval_ds: Dataset
    encoder: Encoder
    baseline_model: Model
    baseline_report: FairnessReport
    params: GbdtParams
    report_config: ReportConfig


def _retrain(ctx: IntegrationContext, applied: PolicyApplication) -> tuple[Model, FairnessReport]:
    matrix = ctx.encoder.transform(applied.augmented_train)
    model = train(matrix, ctx.params, iw=applied.instance_weights, fw=applied.feature_weights)
    rep = report(model, ctx.eval_ds, ctx.encoder, ctx.report_config, baseline=ctx.baseline_report)
    return model, rep


def retrain_global(
    ctx: IntegrationContext,
    all_feedback: Sequence[FeedbackInstance],
    policy: IntegrationPolicy,
) -> RetrainOutcome:
    """One retrain over the feedback of every participant pooled (deduplicated
    to the latest judgement per participant and application)."""
    applied = apply_policy(
        ctx.base_train, all_feedback, ctx.app_pool, policy,
        ctx.baseline_model, ctx.encoder, dedup=True,
    )
    model, rep = _retrain(ctx, applied)
    warnings = list(applied.warnings)
    equals = applied.effective_count == 0 or policy.alpha == 0
    if equals:
        warnings.append("no effective feedback: outcome equals the class-balanced baseline")
    return RetrainOutcome(
        model=model,
        report=rep,
        deltas=rep.deltas,
        equals_baseline=equals,
        warnings=tuple(warnings),
    )


def cumulative_moving_average(values: Sequence[float | None]) -> list[float | None]:
    """Running mean over the defined prefix values."""
    out: list[float | None] = []
    total, count = 0.0, 0
    for v in values:
        if v is not None:
            total += v
            count += 1
        out.append(total / count if count else None)
    return out


@dataclass
class MetricSeries:
    """Per metric key: (step, raw, cma) triples across integration steps."""

    participant_id: str
    baseline: dict[str, float | None]
    raw: dict[str, list[float | None]]
    cma: dict[str, list[float | None]]

    def n_steps(self) -> int:
        return len(next(iter(self.raw.values()))) if self.raw else 0

    def final_deltas(self) -> dict[str, PercentChange]:
        """Percentage change of the last CMA value from baseline per metric."""
        out: dict[str, PercentChange] = {}
        for key, series in self.cma.items():
            base = self.baseline.get(key)
            last = series[-1] if series else None
            if base is None or last is None:
                continue
            name = key.split(":", 1)[0]
            out[key] = percent_change(base, last, METRIC_DIRECTIONS[name])
        return out

    def rows(self) -> list[dict]:
        out = []
        for key in sorted(self.raw):
            name, _, attr = key.partition(":")
            for step, (r, c) in enumerate(zip(self.raw[key], self.cma[key]), start=1):
                out.append(
                    {
                        "participant": self.participant_id,
                        "metric": name,
                        "attribute": attr or "(overall)",
                        "step": step,
                        "raw": r,
                        "cma": c,
                        "baseline": self.baseline.get(key),
                    }
                )
        return out


@dataclass(frozen=True)
class PersonalizedResult:
    participant_id: str
    outcomes: tuple[RetrainOutcome, ...]
    series: MetricSeries


def retrain_personalized(
    ctx: IntegrationContext,
    participant_feedback: Sequence[FeedbackInstance],
    policy: IntegrationPolicy,
) -> PersonalizedResult:
    """Retrain from scratch after each feedback instance of one participant,
    in increasing timestamp order, keeping all earlier instances."""
    if not participant_feedback:
        raise IntegrationError("personalized retraining needs at least one feedback instance")
    pids = {fb.participant_id for fb in participant_feedback}
    if len(pids) != 1:
        raise IntegrationError(f"feedback mixes participants: {sorted(pids)}")
    ordered = sorted(
        enumerate(participant_feedback), key=lambda t: (t[1].timestamp_ms, t[0])
    )
    feedback = [fb for _, fb in ordered]

    keys = ctx.baseline_report.metric_keys()
    baseline_values = {
        k: (ctx.baseline_report.metric(k).value if ctx.baseline_report.metric(k).defined else None)
        for k in keys
    }
    raw: dict[str, list[float | None]] = {k: [] for k in keys}
    outcomes: list[RetrainOutcome] = []
    for t in range(1, len(feedback) + 1):
        applied = apply_policy(
            ctx.base_train, feedback[:t], ctx.app_pool, policy,
            ctx.baseline_model, ctx.encoder, dedup=False,
        )
        model, rep = _retrain(ctx, applied)
        outcomes.append(
            RetrainOutcome(model=model, report=rep, deltas=rep.deltas,
                           warnings=applied.warnings)
        )
        for k in keys:
            mv = rep.metric(k)
            raw[k].append(mv.value if mv.defined else None)

    cma = {k: cumulative_moving_average(v) for k, v in raw.items()}
    series = MetricSeries(
        participant_id=feedback[0].participant_id,
        baseline=baseline_values,
        raw=raw,
        cma=cma,
    )
    return PersonalizedResult(
        participant_id=feedback[0].participant_id,
        outcomes=tuple(outcomes),
        series=series,
    )


# ---------------------------------------------------------------------------
# feedback log I/O

def write_feedback_jsonl(path: str | Path, feedback: Sequence[FeedbackInstance]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for fb in feedback:
            fh.write(json.dumps(fb.to_dict(), sort_keys=True) + "\n")


def feedback_jsonl_lines(feedback: Sequence[FeedbackInstance]) -> str:
    return "".join(json.dumps(fb.to_dict(), sort_keys=True) + "\n" for fb in feedback)


def read_feedback_jsonl(path: str | Path) -> tuple[list[FeedbackInstance], list[str]]:
    """Parse a feedback log; malformed lines are reported (with line numbers)
    and skipped so the run can continue."""
    path = Path(path)
    if not path.exists():
        raise IntegrationError(f"feedback log not found: {path}")
    out: list[FeedbackInstance] = []
    errors: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(FeedbackInstance.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
                errors.append(f"line {lineno}: {e}")
    return out, errors


DEFAULT_FIELD_MAP = {
    "participant_id": "participant_id",
    "application_id": "application_id",
    "timestamp_ms": "timestamp_ms",
    "label": "label",
    "weights": "weights",
}


def read_feedback_mapped(
    path: str | Path,
    mapping: Mapping,
) -> tuple[list[FeedbackInstance], list[str]]:
    """Ingest a foreign feedback dataset (CSV or JSONL) via a mapping config.

    The config renames columns onto the canonical schema and translates label
    values; weights cells hold JSON objects.  Keys: ``fields`` (canonical ->
    source column), ``label_values`` (source label -> fair/unfair/weights_only),
    ``timestamp_unit`` ("ms" or "s").
    """
    path = Path(path)
    if not path.exists():
        raise IntegrationError(f"feedback dataset not found: {path}")
    fields = dict(DEFAULT_FIELD_MAP)
    fields.update(mapping.get("fields", {}))
    label_values = {str(k).lower(): str(v).lower() for k, v in mapping.get("label_values", {}).items()}
    unit = mapping.get("timestamp_unit", "ms")
    scale = 1000 if unit == "s" else 1

    def build(record: Mapping, lineno: int):
        raw_label = str(record[fields["label"]]).lower()
        label = label_values.get(raw_label, raw_label)
        weights = None
        wcol = fields.get("weights")
        if wcol and record.get(wcol) not in (None, ""):
            wv = record[wcol]
            weights = json.loads(wv) if isinstance(wv, str) else dict(wv)
        return FeedbackInstance(
            participant_id=str(record[fields["participant_id"]]),
            application_id=str(record[fields["application_id"]]),
            timestamp_ms=int(float(record[fields["timestamp_ms"]]) * scale),
            label=label,
            weights=weights,
        )

    out: list[FeedbackInstance] = []
    errors: list[str] = []
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(build(json.loads(line), lineno))
                except Exception as e:  # malformed lines must not stop the run
                    errors.append(f"line {lineno}: {e}")
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            for lineno, record in enumerate(csv.DictReader(fh), start=2):
                try:
                    out.append(build(record, lineno))
                except Exception as e:
                    errors.append(f"line {lineno}: {e}")
    return out, errors
