"""Accuracy and fairness metrics over model predictions on a labeled set.

Group metrics reduce multi-valued attributes by min/max by default, the
favorable outcome is always Accept, and undefined quantities surface as typed
flags rather than silent zeros or NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import (
    CATEGORICAL,
    BinningRule,
    DataError,
    Dataset,
    EncodedMatrix,
    Encoder,
    bin_assign,
)
from .gbdt import ACCEPT, REJECT, Model, Prediction, predict_proba

REDUCTIONS = ("minmax", "pairwise_max")

METRIC_DIRECTIONS: dict[str, str] = {
    "accuracy": "higher_better",
    "consistency": "higher_better",
    "theil": "lower_better",
    "dpr": "higher_better",
    "cdd": "lower_better",
    "eod": "lower_better",
    "aod": "lower_better",
    "ppd": "lower_better",
    "cf": "higher_better",
}

METRIC_IDEALS: dict[str, str] = {
    "accuracy": "≈ 100",
    "consistency": "≈ 1",
    "theil": "≈ 0",
    "dpr": "≈ 1",
    "cdd": "≤ 0",
    "eod": "≈ 0",
    "aod": "≈ 0",
    "ppd": "≈ 0",
    "cf": "≈ 1",
}

ARROWS = {"higher_better": "↑", "lower_better": "↓"}


class UndefinedMetricError(ValueError):
    """A metric has no defined value on the given inputs (for example a group
    with a zero denominator)."""


def _fav_pred(preds: Sequence) -> np.ndarray:
    """1 where the predicted label is Accept."""
    out = np.zeros(len(preds), dtype=np.float64)
    for i, p in enumerate(preds):
        if isinstance(p, Prediction):
            out[i] = 1.0 if p.label == ACCEPT else 0.0
        elif isinstance(p, str):
            if p not in (ACCEPT, REJECT):
                raise DataError(f"unknown prediction label {p!r}")
            out[i] = 1.0 if p == ACCEPT else 0.0
        else:
            # numeric: probability of Reject (target=1)
            out[i] = 1.0 if float(p) < 0.5 else 0.0
    return out


def _fav_truth(truth: Sequence) -> np.ndarray:
    """1 where the ground-truth outcome is Accept (target = 0)."""
    y = np.asarray(truth, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("truth labels must be binary 0/1")
    return 1.0 - y


@dataclass(frozen=True)
class GroupRates:
    count: int
    selection_rate: float | None
    tpr: float | None
    fpr: float | None
    ppv: float | None

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "selection_rate": self.selection_rate,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "ppv": self.ppv,
        }


@dataclass(frozen=True)
class GroupStats:
    rates: dict[str, GroupRates]
    n: int

    def groups(self) -> list[str]:
        return sorted(self.rates)


def group_stats(preds: Sequence, truth: Sequence, grouping: Sequence[str]) -> GroupStats:
    """Per-group counts and rates with Accept as the favorable outcome.

    Rates with a zero denominator are carried as None, never silently 0.
    """
    if len(preds) != len(truth) or len(preds) != len(grouping):
        raise DataError("preds, truth, and grouping must be aligned")
    if len(preds) == 0:
        raise DataError("empty evaluation set")
    fav_p = _fav_pred(preds)
    fav_t = _fav_truth(truth)
    groups = np.asarray([str(g) for g in grouping])
    rates: dict[str, GroupRates] = {}
    for g in sorted(set(groups)):
        m = groups == g
        cnt = int(m.sum())
        sel = float(fav_p[m].mean())
        n_pos = float(fav_t[m].sum())
        n_neg = cnt - n_pos
        tp = float((fav_p[m] * fav_t[m]).sum())
        fp = float((fav_p[m] * (1.0 - fav_t[m])).sum())
        n_pred_fav = float(fav_p[m].sum())
        rates[g] = GroupRates(
            count=cnt,
            selection_rate=sel,
            tpr=tp / n_pos if n_pos > 0 else None,
            fpr=fp / n_neg if n_neg > 0 else None,
            ppv=tp / n_pred_fav if n_pred_fav > 0 else None,
        )
    return GroupStats(rates=rates, n=len(preds))


def _require_groups(stats: GroupStats, metric: str) -> None:
    if len(stats.rates) < 2:
        raise UndefinedMetricError(f"{metric} needs at least 2 groups")


def _collect(stats: GroupStats, attr: str, metric: str) -> dict[str, float]:
    out = {}
    for g, r in stats.rates.items():
        v = getattr(r, attr)
        if v is None:
            raise UndefinedMetricError(f"{metric} undefined: group {g!r} has no {attr}")
        out[g] = v
    return out


def dpr(stats: GroupStats) -> float:
    """Minimum over maximum selection rate across groups; 1 is ideal."""
    _require_groups(stats, "dpr")
    rates = _collect(stats, "selection_rate", "dpr")
    hi = max(rates.values())
    if hi == 0:
        raise UndefinedMetricError("dpr undefined: maximum selection rate is 0")
    return min(rates.values()) / hi


def _spread(values: Sequence[float], reduction: str) -> float:
    if reduction == "minmax":
        return max(values) - min(values)
    if reduction == "pairwise_max":
        return max(abs(a - b) for a in values for b in values)
    raise DataError(f"unknown reduction {reduction!r}")


def eod(stats: GroupStats, reduction: str = "minmax") -> float:
    """Spread of true-positive rates across groups; 0 is ideal."""
    _require_groups(stats, "eod")
    tprs = _collect(stats, "tpr", "eod")
    return _spread(list(tprs.values()), reduction)


def aod(stats: GroupStats, reduction: str = "minmax") -> float:
    """Half the sum of the TPR and FPR spreads; 0 is ideal."""
    _require_groups(stats, "aod")
    tprs = list(_collect(stats, "tpr", "aod").values())
    fprs = list(_collect(stats, "fpr", "aod").values())
    if reduction == "pairwise_max":
        groups = sorted(stats.rates)
        t = _collect(stats, "tpr", "aod")
        f = _collect(stats, "fpr", "aod")
        return max(
            0.5 * (abs(t[a] - t[b]) + abs(f[a] - f[b]))
            for a in groups
            for b in groups
        )
    return 0.5 * (_spread(tprs, "minmax") + _spread(fprs, "minmax"))


def ppd(stats: GroupStats, reduction: str = "minmax") -> float:
    """Spread of precision (PPV) across groups; 0 is ideal."""
    _require_groups(stats, "ppd")
    ppvs = _collect(stats, "ppv", "ppd")
    return _spread(list(ppvs.values()), reduction)


def cdd(
    preds: Sequence,
    grouping: Sequence[str],
    strata: Sequence[str] | None = None,
) -> float:
    value, _, _ = cdd_detailed(preds, grouping, strata)
    return value


def cdd_detailed(
    preds: Sequence,
    grouping: Sequence[str],
    strata: Sequence[str] | None = None,
) -> tuple[float, dict[str, float], list[str]]:
    """Conditional demographic disparity.

    Per group g and stratum, DD_g = P(g | predicted Reject) - P(g | predicted
    Accept); per group the stratum-size-weighted average is taken and the
    reported value is the maximum over groups.  Returns (value, per-group
    weighted DD, warnings); strata with one-sided predictions are skipped.
    """
    fav_p = _fav_pred(preds)
    groups = np.asarray([str(g) for g in grouping])
    if len(groups) != len(fav_p):
        raise DataError("preds and grouping must be aligned")
    group_values = sorted(set(groups))
    if len(group_values) < 2:
        raise UndefinedMetricError("cdd needs at least 2 groups")
    if strata is None:
        strata_arr = np.asarray(["all"] * len(fav_p))
    else:
        strata_arr = np.asarray([str(s) for s in strata])
        if len(strata_arr) != len(fav_p):
            raise DataError("preds and strata must be aligned")

    warnings: list[str] = []
    acc: dict[str, float] = {g: 0.0 for g in group_values}
    used = 0
    for s in sorted(set(strata_arr)):
        m = strata_arr == s
        size = int(m.sum())
        n_acc = float(fav_p[m].sum())
        n_rej = size - n_acc
        if n_acc == 0 or n_rej == 0:
            warnings.append(
                f"cdd: stratum {s!r} skipped (no predicted "
                f"{'Accepts' if n_acc == 0 else 'Rejects'})"
            )
            continue
        used += size
        for g in group_values:
            gm = m & (groups == g)
            p_rej = float((gm & (fav_p == 0)).sum()) / n_rej
            p_acc = float((gm & (fav_p == 1)).sum()) / n_acc
            acc[g] += size * (p_rej - p_acc)
    if used == 0:
        raise UndefinedMetricError("cdd undefined: every stratum one-sided")
    per_group = {g: v / used for g, v in acc.items()}
    return max(per_group.values()), per_group, warnings


def _pairwise_sq(A: np.ndarray, B: np.ndarray, col_chunk: int = 512) -> np.ndarray:
    out = np.zeros((A.shape[0], B.shape[0]), dtype=np.float64)
    for s in range(0, B.shape[0], col_chunk):
        diff = A[:, None, :] - B[None, s : s + col_chunk, :]
        out[:, s : s + col_chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def consistency(preds: Sequence, matrix: EncodedMatrix | np.ndarray, k: int = 5) -> float:
    """1 minus the mean disagreement between each prediction and the mean
    prediction of its k nearest neighbours (Euclidean over all encoded
    columns, self excluded, distance ties broken by lowest instance index)."""
    X = matrix.X if isinstance(matrix, EncodedMatrix) else np.asarray(matrix, dtype=np.float64)
    yhat = 1.0 - _fav_pred(preds)  # predicted target, polarity irrelevant to |diff|
    n = len(yhat)
    if X.shape[0] != n:
        raise DataError("preds and matrix rows must be aligned")
    if k <= 0:
        raise UndefinedMetricError("consistency needs k >= 1")
    if k >= n:
        raise UndefinedMetricError(f"consistency needs k < n (k={k}, n={n})")
    total = 0.0
    # keep the broadcast temporary around 64 MB
    row_chunk = max(1, min(128, 16384 // max(1, X.shape[1])))
    for start in range(0, n, row_chunk):
        stop = min(start + row_chunk, n)
        d2 = _pairwise_sq(X[start:stop], X)
        for i in range(start, stop):
            d = d2[i - start]
            d[i] = np.inf
            kth = np.partition(d, k - 1)[k - 1]
            cand = np.flatnonzero(d <= kth)
            order = cand[np.argsort(d[cand], kind="stable")]
            nn = order[:k]
            total += abs(yhat[i] - float(yhat[nn].mean()))
    return 1.0 - total / n


def theil(preds: Sequence, truth: Sequence) -> float:
    """Generalized-entropy inequality of per-instance benefits (0 ideal).

    Benefit is favorable-prediction minus favorable-truth plus one, so a
    false negative (deserving applicant rejected) scores 0, a correct
    decision 1, and a false positive 2.
    """
    if len(preds) == 0:
        raise DataError("empty evaluation set")
    b = _fav_pred(preds) - _fav_truth(truth) + 1.0
    mu = float(b.mean())
    if mu == 0:
        raise UndefinedMetricError("theil undefined: mean benefit is 0")
    r = b / mu
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(b > 0, r * np.log(np.where(b > 0, r, 1.0)), 0.0)
    return float(terms.mean())


def accuracy(preds: Sequence, truth: Sequence) -> float:
    if len(preds) == 0:
        raise DataError("empty evaluation set")
    return float((_fav_pred(preds) == _fav_truth(truth)).mean())


def counterfactual(
    model: Model,
    ds: Dataset,
    encoder: Encoder,
    attribute: str,
    binning: BinningRule | None = None,
) -> float:
    """Fraction of instances whose predicted label is invariant to switching
    the attribute to every other observed value; 1 is ideal.

    Binned numeric attributes substitute the median of each other bin.
    """
    spec = ds.feature(attribute)
    X = encoder.transform(ds).X
    base_labels = predict_proba(model, X) >= 0.5
    n = ds.n_rows
    changed = np.zeros(n, dtype=bool)

    if spec.kind == CATEGORICAL:
        raw = [str(v) for v in ds.columns[attribute]]
        values = sorted(set(raw))
        if len(values) < 2:
            raise UndefinedMetricError(
                f"counterfactual undefined: {attribute!r} has a single observed value"
            )
        group_cols = encoder.group_columns()[attribute]
        col_of = {encoder.columns[c].category: c for c in group_cols}
        raw_arr = np.asarray(raw)
        for v in values:
            Xv = X.copy()
            Xv[:, list(group_cols)] = 0.0
            Xv[:, col_of[v]] = 1.0
            labels_v = predict_proba(model, Xv) >= 0.5
            applies = raw_arr != v
            changed |= applies & (labels_v != base_labels)
    else:
        if binning is None:
            raise DataError(
                f"counterfactual on numeric {attribute!r} requires a binning rule"
            )
        assignment, _ = bin_assign(ds, binning)
        bins = np.asarray([assignment[rid] for rid in ds.ids])
        values = sorted(set(bins))
        if len(values) < 2:
            raise UndefinedMetricError(
                f"counterfactual undefined: {attribute!r} has a single observed bin"
            )
        vals = np.asarray([float(v) for v in ds.columns[attribute]])
        (col,) = encoder.group_columns()[attribute]
        for v in values:
            med = float(np.median(vals[bins == v]))
            Xv = X.copy()
            Xv[:, col] = encoder._numeric_value(attribute, med)
            labels_v = predict_proba(model, Xv) >= 0.5
            applies = bins != v
            changed |= applies & (labels_v != base_labels)

    return float(1.0 - changed.mean())


@dataclass(frozen=True)
class MetricValue:
    value: float | None
    defined: bool = True
    note: str | None = None

    @staticmethod
    def of(v: float) -> "MetricValue":
        return MetricValue(value=float(v))

    @staticmethod
    def undefined(note: str) -> "MetricValue":
        return MetricValue(value=None, defined=False, note=note)

    def to_dict(self) -> dict:
        return {"value": self.value, "defined": self.defined, "note": self.note}

    @staticmethod
    def from_dict(d: Mapping) -> "MetricValue":
        return MetricValue(value=d["value"], defined=d["defined"], note=d.get("note"))


@dataclass(frozen=True)
class PercentChange:
    baseline: float
    value: float
    pct: float | None
    absolute: float
    improved: bool
    direction: str
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "value": self.value,
            "pct": self.pct,
            "absolute": self.absolute,
            "improved": self.improved,
            "direction": self.direction,
            "note": self.note,
        }


def percent_change(baseline: float, value: float, direction) -> PercentChange:
    """Signed percentage change from baseline with an improvement flag.

    ``direction`` is "higher_better", "lower_better", or ("toward", ideal).
    A zero baseline falls back to the absolute change, flagged in ``note``.
    """
    if isinstance(direction, tuple):
        kind, ideal = direction
        if kind != "toward":
            raise DataError(f"unknown direction {direction!r}")
        improved = abs(value - ideal) < abs(baseline - ideal)
        dir_name = f"toward({ideal:g})"
    elif direction == "higher_better":
        improved = value > baseline
        dir_name = direction
    elif direction == "lower_better":
        improved = value < baseline
        dir_name = direction
    else:
        raise DataError(f"unknown direction {direction!r}")
    absolute = value - baseline
    if baseline == 0:
        return PercentChange(
            baseline=baseline,
            value=value,
            pct=None,
            absolute=absolute,
            improved=improved,
            direction=dir_name,
            note="zero baseline: absolute change reported",
        )
    pct = (value - baseline) / abs(baseline) * 100.0
    return PercentChange(
        baseline=baseline,
        value=value,
        pct=pct,
        absolute=absolute,
        improved=improved,
        direction=dir_name,
    )


@dataclass(frozen=True)
class AttributeReport:
    dpr: MetricValue
    cdd: MetricValue
    eod: MetricValue
    aod: MetricValue
    ppd: MetricValue
    cf: MetricValue
    groups: dict[str, GroupRates]
    cdd_per_group: dict[str, float] = field(default_factory=dict)

    def metric(self, name: str) -> MetricValue:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "dpr": self.dpr.to_dict(),
            "cdd": self.cdd.to_dict(),
            "eod": self.eod.to_dict(),
            "aod": self.aod.to_dict(),
            "ppd": self.ppd.to_dict(),
            "cf": self.cf.to_dict(),
            "groups": {g: r.to_dict() for g, r in self.groups.items()},
            "cdd_per_group": dict(self.cdd_per_group),
        }

    @staticmethod
    def from_dict(d: Mapping) -> "AttributeReport":
        return AttributeReport(
            dpr=MetricValue.from_dict(d["dpr"]),
            cdd=MetricValue.from_dict(d["cdd"]),
            eod=MetricValue.from_dict(d["eod"]),
            aod=MetricValue.from_dict(d["aod"]),
            ppd=MetricValue.from_dict(d["ppd"]),
            cf=MetricValue.from_dict(d["cf"]),
            groups={
                g: GroupRates(**r) for g, r in d.get("groups", {}).items()
            },
            cdd_per_group={k: float(v) for k, v in d.get("cdd_per_group", {}).items()},
        )


ATTRIBUTE_METRICS = ("dpr", "cdd", "eod", "aod", "ppd", "cf")
OVERALL_METRICS = ("accuracy", "consistency", "theil")


@dataclass(frozen=True)
class FairnessReport:
    accuracy: MetricValue
    consistency: MetricValue
    theil: MetricValue
    attributes: dict[str, AttributeReport]
    metadata: dict
    deltas: dict[str, PercentChange] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def metric(self, key: str) -> MetricValue:
        """Look up a metric by flat key: "accuracy" or "dpr:Gender"."""
        if ":" in key:
            name, attr = key.split(":", 1)
            return self.attributes[attr].metric(name)
        return getattr(self, key)

    def metric_keys(self) -> list[str]:
        keys = list(OVERALL_METRICS)
        for attr in sorted(self.attributes):
            keys.extend(f"{m}:{attr}" for m in ATTRIBUTE_METRICS)
        return keys

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "accuracy": self.accuracy.to_dict(),
            "consistency": self.consistency.to_dict(),
            "theil": self.theil.to_dict(),
            "attributes": {a: r.to_dict() for a, r in self.attributes.items()},
            "metadata": dict(self.metadata),
            "deltas": {k: v.to_dict() for k, v in self.deltas.items()},
            "warnings": list(self.warnings),
            "annotations": {
                m: {"ideal": METRIC_IDEALS[m], "direction": ARROWS[METRIC_DIRECTIONS[m]]}
                for m in METRIC_IDEALS
            },
        }

    @staticmethod
    def from_dict(d: Mapping) -> "FairnessReport":
        deltas = {}
        for k, v in d.get("deltas", {}).items():
            deltas[k] = PercentChange(
                baseline=v["baseline"],
                value=v["value"],
                pct=v["pct"],
                absolute=v["absolute"],
                improved=v["improved"],
                direction=v["direction"],
                note=v.get("note"),
            )
        return FairnessReport(
            accuracy=MetricValue.from_dict(d["accuracy"]),
            consistency=MetricValue.from_dict(d["consistency"]),
            theil=MetricValue.from_dict(d["theil"]),
            attributes={a: AttributeReport.from_dict(r) for a, r in d["attributes"].items()},
            metadata=dict(d.get("metadata", {})),
            deltas=deltas,
            warnings=tuple(d.get("warnings", ())),
        )


@dataclass(frozen=True)
class ReportConfig:
    attributes: tuple[str, ...]
    binning: dict[str, BinningRule] = field(default_factory=dict)
    consistency_k: int = 5
    strata: dict[str, str] = field(default_factory=dict)
    reduction: str = "minmax"

    def __post_init__(self):
        if self.reduction not in REDUCTIONS:
            raise DataError(f"reduction must be one of {REDUCTIONS}")


def _grouping_for(ds: Dataset, attribute: str, config: ReportConfig) -> tuple[list[str], list[str]]:
    spec = ds.feature(attribute)
    if spec.kind == CATEGORICAL:
        return [str(v) for v in ds.columns[attribute]], []
    rule = config.binning.get(attribute)
    if rule is None:
        raise DataError(f"no binning rule for numeric attribute {attribute!r}")
    assignment, warnings = bin_assign(ds, rule)
    return [assignment[rid] for rid in ds.ids], warnings


def _guarded(fn, *args, **kwargs) -> MetricValue:
    try:
        return MetricValue.of(fn(*args, **kwargs))
    except UndefinedMetricError as e:
        return MetricValue.undefined(str(e))


def report(
    model: Model,
    eval_ds: Dataset,
    encoder: Encoder,
    config: ReportConfig,
    baseline: "FairnessReport | None" = None,
) -> FairnessReport:
    """Compute the full metric suite on a labeled evaluation set.

    Undefined metrics are carried as flags; ``baseline`` adds per-metric
    percentage deltas computed from unrounded stored values.
    """
    if eval_ds.n_rows == 0:
        raise DataError("empty evaluation set")
    if not eval_ds.labeled():
        raise DataError("evaluation set must be fully labeled")
    matrix = encoder.transform(eval_ds)
    probs = predict_proba(model, matrix.X)
    preds = probs.tolist()
    truth = list(eval_ds.target)

    warnings: list[str] = []
    acc = MetricValue.of(accuracy(preds, truth))
    cons = _guarded(consistency, preds, matrix, config.consistency_k)
    ti = _guarded(theil, preds, truth)

    attributes: dict[str, AttributeReport] = {}
    for attr in config.attributes:
        grouping, bin_warnings = _grouping_for(eval_ds, attr, config)
        warnings.extend(bin_warnings)
        stats = group_stats(preds, truth, grouping)
        strata_vals = None
        if attr in config.strata:
            strata_vals, sw = _grouping_for(eval_ds, config.strata[attr], config)
            warnings.extend(sw)

        per_group: dict[str, float] = {}
        try:
            v, per_group, cw = cdd_detailed(preds, grouping, strata_vals)
            warnings.extend(cw)
            cdd_value = MetricValue.of(v)
        except UndefinedMetricError as e:
            cdd_value = MetricValue.undefined(str(e))

        spec = eval_ds.feature(attr)
        rule = config.binning.get(attr) if spec.kind != CATEGORICAL else None
        attributes[attr] = AttributeReport(
            dpr=_guarded(dpr, stats),
            cdd=cdd_value,
            eod=_guarded(eod, stats, config.reduction),
            aod=_guarded(aod, stats, config.reduction),
            ppd=_guarded(ppd, stats, config.reduction),
            cf=_guarded(counterfactual, model, eval_ds, encoder, attr, rule),
            groups=stats.rates,
            cdd_per_group=per_group,
        )

    metadata = {
        "eval_fingerprint": eval_ds.fingerprint(),
        "model_fingerprint": model.fingerprint,
        "consistency_k": config.consistency_k,
        "reduction": config.reduction,
        "binning": {k: v.to_dict() for k, v in config.binning.items()},
        "n_eval": eval_ds.n_rows,
    }
    rep = FairnessReport(
        accuracy=acc,
        consistency=cons,
        theil=ti,
        attributes=attributes,
        metadata=metadata,
        warnings=tuple(warnings),
    )
    if baseline is not None:
        rep = attach_deltas(rep, baseline)
    return rep


def attach_deltas(rep: FairnessReport, baseline: FairnessReport) -> FairnessReport:
    deltas: dict[str, PercentChange] = {}
    for key in rep.metric_keys():
        name = key.split(":", 1)[0]
        try:
            base_v = baseline.metric(key)
        except KeyError:
            continue
        cur_v = rep.metric(key)
        if not (base_v.defined and cur_v.defined):
            continue
        deltas[key] = percent_change(base_v.value, cur_v.value, METRIC_DIRECTIONS[name])
    return FairnessReport(
        accuracy=rep.accuracy,
        consistency=rep.consistency,
        theil=rep.theil,
        attributes=rep.attributes,
        metadata=rep.metadata,
        deltas=deltas,
        warnings=rep.warnings,
    )
