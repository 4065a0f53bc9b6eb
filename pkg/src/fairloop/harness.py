"""Offline pipeline driver: prepare splits, train baselines, replay feedback
logs, and emit report tables, series files, and figures."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import RunConfig
from .data import (
    CATEGORICAL,
    NUMERIC,
    BinningRule,
    DataError,
    Dataset,
    Encoder,
    FeatureSpec,
    concat,
    explicit_binning,
    fit_binning,
    fit_encoder,
    impute,
    load_csv,
    split,
)
from .fairness import (
    ARROWS,
    METRIC_DIRECTIONS,
    METRIC_IDEALS,
    FairnessReport,
    ReportConfig,
    report,
)
from .gbdt import GbdtParams, Model, balance_instance_weights, train
from .integration import (
    POLICIES,
    FeedbackInstance,
    IntegrationContext,
    IntegrationPolicy,
    RetrainOutcome,
    adjusted_pct,
    read_feedback_jsonl,
    read_feedback_mapped,
    retrain_global,
    retrain_personalized,
)

SCHEMA_VERSION = "1"


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# atomic file helpers

def write_atomic(path: str | Path, data: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise HarnessError(f"missing file: {path}")
    with path.open(encoding="utf-8") as fh:
        return json.load(fh)


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv_rows(path: str | Path, rows: Sequence[Mapping], columns: Sequence[str]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt_cell(r.get(c)) for c in columns])
    write_atomic(path, buf.getvalue())


def read_csv_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise HarnessError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_aligned(rows: Sequence[Mapping], columns: Sequence[str], title: str = "") -> str:
    """Human-readable fixed-width rendering of a row table."""
    def disp(v):
        if v is None or v == "":
            return "n/a"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    table = [[disp(r.get(c)) for c in columns] for r in rows]
    widths = [
        max(len(c), *(len(row[i]) for row in table)) if table else len(c)
        for i, c in enumerate(columns)
    ]
    out = []
    if title:
        out.append(title)
    out.append("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    out.append("  ".join("-" * w for w in widths))
    for row in table:
        out.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# dataset <-> csv

def dataset_to_csv(ds: Dataset, id_column: str = "id", target_column: str = "target") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [id_column] + [f.name for f in ds.schema]
    if ds.target is not None:
        header.append(target_column)
    writer.writerow(header)
    for i, rid in enumerate(ds.ids):
        row = [rid]
        for f in ds.schema:
            v = ds.columns[f.name][i]
            row.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        if ds.target is not None:
            t = ds.target[i]
            row.append("" if t is None else str(int(t)))
        writer.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# prepared-directory protocol

@dataclass
class PreparedData:
    config: RunConfig
    train: Dataset
    test: Dataset
    display: Dataset
    encoder: Encoder
    binning: dict[str, BinningRule]

    def report_config(self) -> ReportConfig:
        return ReportConfig(
            attributes=self.config.report_attributes,
            binning=self.binning,
            consistency_k=self.config.consistency_k,
            strata=self.config.cdd_strata,
            reduction=self.config.reduction,
        )


def cmd_prepare(config: RunConfig, raw_csv: str | Path, out_dir: str | Path) -> PreparedData:
    """Split, impute, fit the encoder and binning rules, and write everything
    to ``out_dir``.  Deterministic given the seed: rerunning produces
    byte-identical files."""
    out_dir = Path(out_dir)
    if config.split is None:
        raise HarnessError("config has no 'split' section")
    raw = load_csv(raw_csv, config.schema, config.id_column, config.target_column)
    if raw.target is None:
        raise HarnessError("raw data has no target column; cannot split")
    raw = impute(raw)
    train_ds, test_ds = split(raw, config.split, config.seed)

    used = set(train_ds.ids) | set(test_ds.ids)
    if config.display_path:
        display = impute(
            load_csv(config.display_path, config.schema, config.id_column, config.target_column)
        )
    else:
        rest = [i for i, rid in enumerate(raw.ids) if rid not in used]
        if config.display_n > len(rest):
            raise HarnessError(
                f"display pool of {config.display_n} requested but only"
                f" {len(rest)} rows remain outside train/test"
            )
        rng = np.random.default_rng(config.seed + 1)
        chosen = sorted(rng.choice(rest, size=config.display_n, replace=False).tolist())
        display = raw.subset(chosen)

    universe = concat(concat(train_ds, test_ds), display) if display.n_rows else concat(
        train_ds, test_ds
    )
    encoder = fit_encoder(universe, config.amount_features)

    binning: dict[str, BinningRule] = {}
    for name, edges in config.bins.items():
        binning[name] = explicit_binning(name, edges)
    for attr in config.report_attributes:
        spec = train_ds.feature(attr)
        if spec.kind == NUMERIC and attr not in binning:
            binning[attr] = fit_binning(train_ds, attr)
    for attr in config.cdd_strata.values():
        spec = train_ds.feature(attr)
        if spec.kind == NUMERIC and attr not in binning:
            binning[attr] = fit_binning(train_ds, attr)

    write_atomic(out_dir / "train.csv", dataset_to_csv(train_ds, config.id_column, config.target_column))
    write_atomic(out_dir / "test.csv", dataset_to_csv(test_ds, config.id_column, config.target_column))
    write_atomic(out_dir / "display.csv", dataset_to_csv(display, config.id_column, config.target_column))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "config": config.to_dict(),
        "encoder": encoder.to_dict(),
        "binning": {k: v.to_dict() for k, v in binning.items()},
        "counts": {"train": train_ds.n_rows, "test": test_ds.n_rows, "display": display.n_rows},
        "fingerprints": {
            "train": train_ds.fingerprint(),
            "test": test_ds.fingerprint(),
            "display": display.fingerprint(),
        },
    }
    write_json(out_dir / "meta.json", meta)
    return PreparedData(
        config=config, train=train_ds, test=test_ds, display=display,
        encoder=encoder, binning=binning,
    )


def load_prepared(prepared_dir: str | Path) -> PreparedData:
    prepared_dir = Path(prepared_dir)
    meta = read_json(prepared_dir / "meta.json")
    config = RunConfig.from_dict(meta["config"])
    encoder = Encoder.from_dict(meta["encoder"])
    binning = {k: BinningRule.from_dict(v) for k, v in meta["binning"].items()}

    def _load(name: str) -> Dataset:
        return load_csv(
            prepared_dir / name, config.schema, config.id_column, config.target_column
        )

    return PreparedData(
        config=config,
        train=_load("train.csv"),
        test=_load("test.csv"),
        display=_load("display.csv"),
        encoder=encoder,
        binning=binning,
    )


# ---------------------------------------------------------------------------
# baseline

def report_table_rows(rep: FairnessReport, policy_name: str = "baseline") -> list[dict]:
    """Long-format rows for a report: one row per metric (and attribute)."""
    rows = []

    def row(metric, attribute, mv, key):
        pc = rep.deltas.get(key)
        improved = pc.improved if pc else None
        pct = pc.pct if pc else None
        band = ""
        if pc and pc.improved and pct is not None:
            band = "light" if abs(pct) <= 5.0 else "dark"
        return {
            "policy": policy_name,
            "attribute": attribute,
            "metric": metric,
            "ideal": METRIC_IDEALS[metric],
            "direction": ARROWS[METRIC_DIRECTIONS[metric]],
            "value": mv.value,
            "defined": mv.defined,
            "baseline": pc.baseline if pc else None,
            "pct_change": pct,
            "improved": improved,
            "highlight_band": band,
            "note": mv.note,
        }

    for m in ("accuracy", "consistency", "theil"):
        rows.append(row(m, "(overall)", rep.metric(m), m))
    for attr in sorted(rep.attributes):
        for m in ("dpr", "cdd", "eod", "aod", "ppd", "cf"):
            rows.append(row(m, attr, rep.attributes[attr].metric(m), f"{m}:{attr}"))
    return rows


TABLE_COLUMNS = (
    "policy", "attribute", "metric", "ideal", "direction", "value",
    "baseline", "pct_change", "improved", "highlight_band", "defined", "note",
)


def cmd_train_baseline(
    prepared: PreparedData | str | Path,
    out_dir: str | Path,
    params: GbdtParams | None = None,
) -> tuple[Model, FairnessReport]:
    """Train the class-balanced baseline and write its snapshot and report."""
    if not isinstance(prepared, PreparedData):
        prepared = load_prepared(prepared)
    out_dir = Path(out_dir)
    cfg = prepared.config
    params = params or cfg.gbdt
    if prepared.train.n_rows == 0:
        raise HarnessError("prepared training split is empty")
    iw = balance_instance_weights([int(t) for t in prepared.train.target])
    model = train(prepared.encoder.transform(prepared.train), params, iw=iw)
    rep = report(model, prepared.test, prepared.encoder, prepared.report_config())

    write_atomic(out_dir / "model.json", model.to_json() + "\n")
    write_json(out_dir / "report.json", rep.to_dict())
    rows = report_table_rows(rep)
    write_csv_rows(out_dir / "report.csv", rows, TABLE_COLUMNS)
    write_atomic(
        out_dir / "report.txt",
        render_aligned(
            rows,
            ("attribute", "metric", "ideal", "direction", "value", "note"),
            title=f"baseline metrics (seed {params.seed})",
        ),
    )
    write_json(
        out_dir / "meta.json",
        {
            "schema_version": SCHEMA_VERSION,
            "seed": cfg.seed,
            "params": params.to_dict(),
            "alpha": cfg.alpha,
            "consistency_k": cfg.consistency_k,
            "model_fingerprint": model.fingerprint,
            "prepared_fingerprints": {
                "train": prepared.train.fingerprint(),
                "test": prepared.test.fingerprint(),
            },
        },
    )
    return model, rep


@dataclass
class BaselineArtifacts:
    model: Model
    report: FairnessReport
    params: GbdtParams
    alpha: float


def load_baseline(baseline_dir: str | Path) -> BaselineArtifacts:
    baseline_dir = Path(baseline_dir)
    model_path = baseline_dir / "model.json"
    if not model_path.exists():
        raise HarnessError(f"missing baseline model: {model_path}")
    model = Model.from_json(model_path.read_text(encoding="utf-8"))
    rep = FairnessReport.from_dict(read_json(baseline_dir / "report.json"))
    meta = read_json(baseline_dir / "meta.json")
    return BaselineArtifacts(
        model=model,
        report=rep,
        params=GbdtParams.from_dict(meta["params"]),
        alpha=float(meta.get("alpha", 1.0)),
    )


def build_context(prepared: PreparedData, baseline: BaselineArtifacts) -> IntegrationContext:
    return IntegrationContext(
        base_train=prepared.train,
        app_pool=prepared.display,
        eval_ds=prepared.test,
        encoder=prepared.encoder,
        baseline_model=baseline.model,
        baseline_report=baseline.report,
        params=baseline.params,
        report_config=prepared.report_config(),
    )


# ---------------------------------------------------------------------------
# replay

SERIES_COLUMNS = ("participant", "metric", "attribute", "step", "raw", "cma", "baseline")
DELTA_COLUMNS = (
    "participant", "metric", "attribute", "baseline", "final_cma",
    "pct_change", "adjusted_pct", "improved", "highlight_band",
)
AVERAGE_COLUMNS = (
    "metric", "attribute", "mean_final_cma", "mean_pct_change", "n_participants",
)


def _band(pc) -> str:
    if pc.pct is None or not pc.improved:
        return ""
    return "light" if abs(pc.pct) <= 5.0 else "dark"


@dataclass
class ReplayResult:
    mode: str
    policy: IntegrationPolicy
    warnings: list[str]
    global_outcome: RetrainOutcome | None = None
    personalized: dict[str, object] | None = None


def cmd_replay(
    prepared: PreparedData | str | Path,
    baseline_dir: str | Path,
    feedback_path: str | Path,
    mode: str,
    policy_name: str,
    out_dir: str | Path,
    mapping: Mapping | None = None,
    alpha: float | None = None,
) -> ReplayResult:
    """Replay a feedback log under a policy and write tables and series files."""
    if not isinstance(prepared, PreparedData):
        prepared = load_prepared(prepared)
    if mode not in ("global", "personalized"):
        raise HarnessError(f"mode must be global or personalized, got {mode!r}")
    if policy_name not in POLICIES:
        raise HarnessError(f"unknown policy {policy_name!r}")
    out_dir = Path(out_dir)
    baseline = load_baseline(baseline_dir)
    policy = IntegrationPolicy(
        policy_name,
        alpha=baseline.alpha if alpha is None else alpha,
        flip_source=prepared.config.flip_source,
    )
    ctx = build_context(prepared, baseline)

    if mapping is None:
        feedback, errors = read_feedback_jsonl(feedback_path)
    else:
        feedback, errors = read_feedback_mapped(feedback_path, mapping)
    warnings = [f"feedback {Path(feedback_path).name}: {e}" for e in errors]

    run_meta = {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "policy": policy.name,
        "alpha": policy.alpha,
        "seed": prepared.config.seed,
        "n_feedback": len(feedback),
        "malformed_lines": warnings,
        "baseline_fingerprint": baseline.model.fingerprint,
    }

    if mode == "global":
        outcome = retrain_global(ctx, feedback, policy)
        warnings.extend(outcome.warnings)
        rows = report_table_rows(outcome.report, policy_name=policy.name)
        write_csv_rows(out_dir / "global_table.csv", rows, TABLE_COLUMNS)
        write_atomic(
            out_dir / "global_table.txt",
            render_aligned(
                rows,
                ("attribute", "metric", "direction", "value", "baseline",
                 "pct_change", "highlight_band", "note"),
                title=(
                    f"policy {policy.name} (alpha={policy.alpha}) vs baseline;"
                    " improvement bands: light <=5%, dark >5%"
                ),
            ),
        )
        run_meta["model_fingerprint"] = outcome.model.fingerprint
        run_meta["equals_baseline"] = outcome.equals_baseline
        write_json(out_dir / "outcome.json", outcome.report.to_dict())
        write_json(out_dir / "run_meta.json", run_meta)
        return ReplayResult(mode=mode, policy=policy, warnings=warnings, global_outcome=outcome)

    # personalized: one independent replay per participant
    by_participant: dict[str, list[FeedbackInstance]] = {}
    for fb in feedback:
        by_participant.setdefault(fb.participant_id, []).append(fb)

    series_dir = out_dir / "series"
    delta_rows: list[dict] = []
    results = {}
    for pid in sorted(by_participant):
        res = retrain_personalized(ctx, by_participant[pid], policy)
        results[pid] = res
        write_csv_rows(series_dir / f"{pid}.csv", res.series.rows(), SERIES_COLUMNS)
        for key, pc in sorted(res.series.final_deltas().items()):
            name, _, attr = key.partition(":")
            delta_rows.append(
                {
                    "participant": pid,
                    "metric": name,
                    "attribute": attr or "(overall)",
                    "baseline": pc.baseline,
                    "final_cma": pc.value,
                    "pct_change": pc.pct,
                    "adjusted_pct": adjusted_pct(pc),
                    "improved": pc.improved,
                    "highlight_band": _band(pc),
                }
            )
    write_csv_rows(out_dir / "participant_deltas.csv", delta_rows, DELTA_COLUMNS)

    avg_rows = average_delta_rows(delta_rows)
    write_csv_rows(out_dir / "averages.csv", avg_rows, AVERAGE_COLUMNS)
    write_atomic(
        out_dir / "averages.txt",
        render_aligned(
            avg_rows,
            AVERAGE_COLUMNS,
            title=f"personalized averages, policy {policy.name} (alpha={policy.alpha})",
        ),
    )
    run_meta["participants"] = sorted(by_participant)
    write_json(out_dir / "run_meta.json", run_meta)
    return ReplayResult(
        mode=mode, policy=policy, warnings=warnings, personalized=results
    )


def average_delta_rows(delta_rows: Sequence[Mapping]) -> list[dict]:
    """Mean of per-participant final CMA values and percentage changes."""
    acc: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in delta_rows:
        key = (r["metric"], r["attribute"])
        slot = acc.setdefault(key, {"value": [], "pct": []})
        if r["final_cma"] is not None and r["final_cma"] != "":
            slot["value"].append(float(r["final_cma"]))
        if r["pct_change"] is not None and r["pct_change"] != "":
            slot["pct"].append(float(r["pct_change"]))
    out = []
    for (metric, attribute), slot in sorted(acc.items()):
        out.append(
            {
                "metric": metric,
                "attribute": attribute,
                "mean_final_cma": (
                    sum(slot["value"]) / len(slot["value"]) if slot["value"] else None
                ),
                "mean_pct_change": (
                    sum(slot["pct"]) / len(slot["pct"]) if slot["pct"] else None
                ),
                "n_participants": len(slot["value"]),
            }
        )
    return out


# ---------------------------------------------------------------------------
# report rendering (figures + re-rendered text tables)

def cmd_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render figures (and refreshed text tables) from a replay output
    directory; every artifact is derived from the emitted CSV files."""
    from . import figures

    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "figures"
    produced: list[Path] = []

    global_csv = run_dir / "global_table.csv"
    if global_csv.exists():
        rows = read_csv_rows(global_csv)
        path = out_dir / "global_deltas.png"
        figures.plot_global_deltas(rows, path)
        produced.append(path)
        write_atomic(
            run_dir / "global_table.txt",
            render_aligned(
                rows,
                ("attribute", "metric", "direction", "value", "baseline",
                 "pct_change", "highlight_band", "note"),
                title="rendered from global_table.csv",
            ),
        )

    series_dir = run_dir / "series"
    if series_dir.exists():
        for series_csv in sorted(series_dir.glob("*.csv")):
            rows = read_csv_rows(series_csv)
            pid = series_csv.stem
            for metric in sorted({r["metric"] for r in rows}):
                path = out_dir / f"cma_{pid}_{metric}.png"
                figures.plot_cma_trends(rows, metric, path, participant=pid)
                produced.append(path)

    deltas_csv = run_dir / "participant_deltas.csv"
    if deltas_csv.exists():
        rows = read_csv_rows(deltas_csv)
        combos = sorted({(r["metric"], r["attribute"]) for r in rows})
        for metric, attribute in combos:
            safe_attr = attribute.replace("(", "").replace(")", "").replace(" ", "_")
            path = out_dir / f"participant_deltas_{metric}_{safe_attr}.png"
            figures.plot_participant_deltas(rows, metric, attribute, path)
            produced.append(path)
        avg_rows = average_delta_rows(
            [
                {
                    "metric": r["metric"],
                    "attribute": r["attribute"],
                    "final_cma": float(r["final_cma"]) if r["final_cma"] else None,
                    "pct_change": float(r["pct_change"]) if r["pct_change"] else None,
                }
                for r in rows
            ]
        )
        write_atomic(
            run_dir / "averages.txt",
            render_aligned(avg_rows, AVERAGE_COLUMNS, title="rendered from participant_deltas.csv"),
        )

    if not produced:
        raise HarnessError(f"nothing to render in {run_dir} (no tables or series found)")
    return produced


# ---------------------------------------------------------------------------
# synthetic loan data for end-to-end runs without external data

SYNTH_SCHEMA = (
    FeatureSpec("Gender", CATEGORICAL, protected=True),
    FeatureSpec("Marital Status", CATEGORICAL, protected=True),
    FeatureSpec("Age", NUMERIC, protected=True),
    FeatureSpec("Income", NUMERIC),
    FeatureSpec("Loan Credit Amount", NUMERIC, display_label="Credit Amount"),
    FeatureSpec("Owns Car", CATEGORICAL),
    FeatureSpec("Owns Property", CATEGORICAL),
    FeatureSpec("Income Type", CATEGORICAL),
    FeatureSpec("Highest Education", CATEGORICAL),
    FeatureSpec("Years Employed", NUMERIC),
    FeatureSpec("Children", NUMERIC),
)

SYNTH_AMOUNTS = ("Income", "Loan Credit Amount")


def synth_loan_dataset(n: int, seed: int = 0) -> Dataset:
    """A loan-application table with realistic shape: skewed amounts, class
    imbalance, and mild group-dependent effects."""
    rng = np.random.default_rng(seed)
    gender = rng.choice(["F", "M"], size=n, p=[0.6, 0.4])
    marital = rng.choice(
        ["Married", "Single", "Divorced", "Widowed"], size=n, p=[0.55, 0.3, 0.1, 0.05]
    )
    age = np.clip(rng.normal(42, 12, size=n), 21, 69).round(0)
    income = np.exp(rng.normal(11.8, 0.55, size=n)).round(2)
    credit = (income * rng.uniform(1.5, 8.0, size=n)).round(2)
    owns_car = rng.choice(["Y", "N"], size=n, p=[0.35, 0.65])
    owns_prop = rng.choice(["Y", "N"], size=n, p=[0.7, 0.3])
    income_type = rng.choice(
        ["Working", "Business", "Pensioner", "Student"], size=n, p=[0.55, 0.2, 0.2, 0.05]
    )
    education = rng.choice(
        ["Secondary", "Higher", "Incomplete higher", "Lower secondary"],
        size=n,
        p=[0.6, 0.25, 0.1, 0.05],
    )
    years_emp = np.clip(rng.exponential(7, size=n), 0, 45).round(1)
    children = rng.poisson(0.7, size=n).astype(float)

    z = (
        -1.6
        + 0.5 * (credit / income > 5)
        + 0.35 * (education == "Lower secondary")
        - 0.25 * (owns_prop == "Y")
        - 0.015 * (age - 42)
        - 0.04 * np.minimum(years_emp, 20)
        + 0.25 * (gender == "M")
        + 0.3 * (marital == "Single")
        + rng.normal(0, 0.6, size=n)
    )
    target = (rng.uniform(size=n) < 1 / (1 + np.exp(-z))).astype(int)

    return Dataset(
        schema=SYNTH_SCHEMA,
        ids=tuple(f"APP{100000 + i}" for i in range(n)),
        columns={
            "Gender": tuple(gender.tolist()),
            "Marital Status": tuple(marital.tolist()),
            "Age": tuple(float(v) for v in age),
            "Income": tuple(float(v) for v in income),
            "Loan Credit Amount": tuple(float(v) for v in credit),
            "Owns Car": tuple(owns_car.tolist()),
            "Owns Property": tuple(owns_prop.tolist()),
            "Income Type": tuple(income_type.tolist()),
            "Highest Education": tuple(education.tolist()),
            "Years Employed": tuple(float(v) for v in years_emp),
            "Children": tuple(float(v) for v in children),
        },
        target=tuple(int(t) for t in target),
    )


def synth_config_dict(n: int, seed: int) -> dict:
    train_n = int(n * 0.7)
    test_n = int(n * 0.15)
    display_n = min(100, max(1, n - train_n - test_n))
    return {
        "features": [f.to_dict() for f in SYNTH_SCHEMA],
        "amount_features": list(SYNTH_AMOUNTS),
        "bins": {},
        "seed": seed,
        "split": {"stratified": {"train": train_n, "test": test_n}},
        "display": {"n": display_n},
        "gbdt": GbdtParams(seed=seed).to_dict(),
        "alpha": 1.0,
        "consistency_k": 5,
    }


def cmd_synth(
    n: int, seed: int, out_csv: str | Path, config_out: str | Path | None = None
) -> None:
    ds = synth_loan_dataset(n, seed)
    write_atomic(out_csv, dataset_to_csv(ds))
    if config_out:
        write_json(config_out, synth_config_dict(n, seed))
