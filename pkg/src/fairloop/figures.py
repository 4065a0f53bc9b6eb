"""Figure rendering for replay outputs: CMA trend lines and delta bar charts."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

RAW_COLOR = "#4878cf"
CMA_COLOR = "#d65f5f"
BASELINE_COLOR = "#333333"
IMPROVE_COLOR = "#59a14f"
WORSEN_COLOR = "#b07aa1"


def _float(v):
    if v in (None, ""):
        return None
    return float(v)


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_cma_trends(
    series_rows: Sequence[Mapping],
    metric: str,
    path: str | Path,
    participant: str = "",
) -> Path:
    """Raw metric values and their cumulative moving average per integration
    step, one panel per attribute, with the baseline as a horizontal line."""
    rows = [r for r in series_rows if r["metric"] == metric]
    attributes = sorted({r["attribute"] for r in rows})
    fig, axes = plt.subplots(
        1, max(1, len(attributes)),
        figsize=(4.2 * max(1, len(attributes)), 3.2),
        squeeze=False,
    )
    for ax, attr in zip(axes[0], attributes):
        sub = sorted((r for r in rows if r["attribute"] == attr), key=lambda r: int(r["step"]))
        steps = [int(r["step"]) for r in sub]
        raw = [_float(r["raw"]) for r in sub]
        cma = [_float(r["cma"]) for r in sub]
        base = _float(sub[0]["baseline"]) if sub else None
        ax.plot(steps, raw, marker="o", ms=3, lw=1.0, color=RAW_COLOR, label="raw")
        ax.plot(steps, cma, marker="s", ms=3, lw=1.4, color=CMA_COLOR, label="running mean")
        if base is not None:
            ax.axhline(base, color=BASELINE_COLOR, lw=1.0, ls="--", label="baseline")
        ax.set_title(f"{metric} — {attr}" if attr != "(overall)" else metric, fontsize=10)
        ax.set_xlabel("integration step", fontsize=9)
        ax.tick_params(labelsize=8)
        if len(steps) <= 10:
            ax.set_xticks(steps)
    axes[0][0].set_ylabel(metric, fontsize=9)
    axes[0][-1].legend(fontsize=8, loc="best")
    if participant:
        fig.suptitle(f"participant {participant}", fontsize=11)
    fig.tight_layout()
    return save(fig, path)


def plot_participant_deltas(
    delta_rows: Sequence[Mapping],
    metric: str,
    attribute: str,
    path: str | Path,
) -> Path:
    """Sorted per-participant percentage change from baseline for one metric
    and attribute; improvements and deteriorations are colored apart."""
    rows = [
        r for r in delta_rows
        if r["metric"] == metric and r["attribute"] == attribute and _float(r["pct_change"]) is not None
    ]
    rows.sort(key=lambda r: _float(r["pct_change"]), reverse=True)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(rows) + 1.5), 3.2))
    pcts = [_float(r["pct_change"]) for r in rows]
    improved = [str(r["improved"]).lower() == "true" or r["improved"] is True for r in rows]
    colors = [IMPROVE_COLOR if i else WORSEN_COLOR for i in improved]
    ax.bar(range(len(rows)), pcts, color=colors)
    ax.axhline(0, color=BASELINE_COLOR, lw=0.8)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r["participant"] for r in rows], rotation=90, fontsize=7)
    ax.set_ylabel("% change from baseline", fontsize=9)
    title = f"{metric} — {attribute}" if attribute != "(overall)" else metric
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    return save(fig, path)


def plot_global_deltas(table_rows: Sequence[Mapping], path: str | Path) -> Path:
    """Grouped percentage-change bars per attribute for every defined metric."""
    rows = [r for r in table_rows if _float(r.get("pct_change")) is not None]
    attributes = sorted({r["attribute"] for r in rows})
    metrics = sorted({r["metric"] for r in rows})
    fig, ax = plt.subplots(figsize=(1.1 * len(metrics) * max(1, len(attributes)) + 2, 3.4))
    width = 0.8 / max(1, len(attributes))
    for j, attr in enumerate(attributes):
        xs, ys = [], []
        for i, metric in enumerate(metrics):
            match = [
                r for r in rows if r["metric"] == metric and r["attribute"] == attr
            ]
            if match:
                xs.append(i + j * width)
                ys.append(_float(match[0]["pct_change"]))
        ax.bar(xs, ys, width=width, label=attr)
    ax.axhline(0, color=BASELINE_COLOR, lw=0.8)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(metrics))])
    ax.set_xticklabels(metrics, fontsize=8)
    ax.set_ylabel("% change from baseline", fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save(fig, path)
