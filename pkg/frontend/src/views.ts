// Pure renderers: payload in, HTML string out. Every displayed number is the
// server's value passed through String() untouched, so snapshots prove the
// client never recomputes or reformats a fairness figure.

import type {
  ApplicationView,
  AttributeBlock,
  DeltaEntry,
  MetricsPayload,
  Overview,
} from "./types.js";
import type { DecideForm } from "./decide.js";

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function verbatim(v: number | string | null): string {
  return v === null ? "n/a" : String(v);
}

export function renderApplicationsTable(
  applications: ApplicationView[],
  attributeLabels: string[],
): string {
  const head = ["ID", ...attributeLabels, "Prediction", "Confidence", "Fairness", ""]
    .map((h) => `<th>${esc(h)}</th>`)
    .join("");
  const rows = applications
    .map((a) => {
      const cells = attributeLabels
        .map((label) => `<td>${esc(verbatim(a.attributes[label] ?? null))}</td>`)
        .join("");
      const decide = a.locked
        ? ""
        : `<button class="decide" data-app="${esc(a.id)}">Decide</button>`;
      return (
        `<tr data-id="${esc(a.id)}" class="${a.locked ? "locked" : "open"}">` +
        `<td>${esc(a.id)}</td>${cells}` +
        `<td>${esc(a.prediction)}</td>` +
        `<td>${verbatim(a.confidence)}</td>` +
        `<td class="status-${a.status.toLowerCase()}">${esc(a.status)}</td>` +
        `<td>${decide}</td></tr>`
      );
    })
    .join("\n");
  return `<table class="applications"><thead><tr>${head}</tr></thead><tbody>\n${rows}\n</tbody></table>`;
}

function bar(label: string, entry: { group: string; rate: number } | null): string {
  if (!entry) return `<div class="bar">${esc(label)}: n/a</div>`;
  return (
    `<div class="bar" data-rate="${verbatim(entry.rate)}">` +
    `${esc(label)} ${esc(entry.group)}: ${verbatim(entry.rate)}</div>`
  );
}

export function renderAttributePanel(name: string, block: AttributeBlock): string {
  const dpr = block.dpr;
  const aod = block.aod;
  const dist = block.distribution
    .map(
      (d) =>
        `<div class="dist-row" data-value="${esc(d.value)}">` +
        `${esc(d.value)} (${verbatim(d.count)}): accepted ${verbatim(d.accepted_pct)}%` +
        ` / rejected ${verbatim(d.rejected_pct)}%</div>`,
    )
    .join("\n");
  return (
    `<section class="attribute" data-attribute="${esc(name)}">` +
    `<h3>${esc(name)}</h3>` +
    `<div class="metric dpr">DPR: <span class="value">${
      dpr.defined ? verbatim(dpr.value) : "n/a"
    }</span>${bar("lowest selection rate", dpr.min)}${bar("highest selection rate", dpr.max)}</div>` +
    `<div class="metric aod">AOD: <span class="value">${
      aod.defined ? verbatim(aod.value) : "n/a"
    }</span>${bar("lowest TPR", aod.tpr.min)}${bar("highest TPR", aod.tpr.max)}` +
    `${bar("lowest FPR", aod.fpr.min)}${bar("highest FPR", aod.fpr.max)}</div>` +
    `<div class="distribution">\n${dist}\n</div>` +
    `</section>`
  );
}

export function renderFairnessPanel(metrics: MetricsPayload, attributes?: string[]): string {
  const names = attributes ?? Object.keys(metrics.attributes);
  const sections = names
    .map((name) => {
      const block = metrics.attributes[name];
      return block ? renderAttributePanel(name, block) : "";
    })
    .join("\n");
  return `<div class="fairness-panel" data-step="${metrics.step}">\n${sections}\n</div>`;
}

export function renderOverview(overview: Overview): string {
  return (
    `<div class="overview">` +
    `<span class="acceptance">accepted: ${verbatim(overview.acceptance_rate_pct)}%</span>` +
    `<span class="accuracy">accuracy: ${verbatim(overview.accuracy)}</span>` +
    `<span class="consistency">consistency: ${verbatim(overview.consistency)}</span>` +
    `<span class="judged">unfair: ${verbatim(overview.unfair_count)}, checked: ${verbatim(
      overview.checked_count,
    )}</span>` +
    `</div>`
  );
}

// Badge direction mirrors the server's delta sign exactly: up for a positive
// percentage change, down for negative, dot for zero or undefined.
export function renderDeltaBadges(deltas: Record<string, DeltaEntry>): string {
  const badges = Object.keys(deltas)
    .sort()
    .map((key) => {
      const d = deltas[key]!;
      const arrow = d.pct === null || d.pct === 0 ? "•" : d.pct > 0 ? "▲" : "▼";
      const cls = d.improved ? "improved" : "worsened";
      return (
        `<span class="delta ${cls}" data-metric="${esc(key)}">` +
        `${arrow} ${esc(key)} ${verbatim(d.pct)}%</span>`
      );
    })
    .join("");
  return `<div class="deltas">${badges}</div>`;
}

export function renderDecideModal(form: DecideForm, canSubmitNow: boolean): string {
  const sliders = Object.keys(form.weights)
    .sort()
    .map((feature) => {
      const v = form.weights[feature]!;
      return (
        `<label class="slider" data-feature="${esc(feature)}">${esc(feature)}` +
        `<input type="range" min="0" max="1" step="any" value="${verbatim(v)}"` +
        ` data-feature="${esc(feature)}"/><span class="raw">${verbatim(v)}</span></label>`
      );
    })
    .join("\n");
  return (
    `<div class="decide-modal" data-app="${esc(form.applicationId)}">` +
    `<label class="unfair-toggle"><input type="checkbox" ${
      form.unfair ? "checked" : ""
    }/>This decision is unfair</label>\n${sliders}\n` +
    `<button class="ok" ${canSubmitNow ? "" : "disabled "}>OK</button>` +
    `<button class="cancel">Cancel</button></div>`
  );
}

export function renderBlockingOverlay(visible: boolean): string {
  return visible
    ? `<div class="overlay">retraining the model with your feedback…</div>`
    : "";
}

export function renderTutorialButton(): string {
  return `<button class="tutorial-link">View tutorial</button>`;
}

export function renderTutorial(): string {
  return (
    `<div class="tutorial">` +
    `<h2>How to give feedback</h2>` +
    `<ol>` +
    `<li>Sort or filter the applications list to find decisions to inspect.</li>` +
    `<li>Click Decide to open the feedback window. Mark the decision unfair` +
    ` and/or adjust how much weight each attribute should carry.</li>` +
    `<li>OK retrains your personal model immediately; the fairness panel,` +
    ` acceptance rates, and unchecked predictions refresh with the result.</li>` +
    `<li>If you dislike the effect, Undo restores the previous model.</li>` +
    `</ol>` +
    `<button class="close-tutorial">Back</button></div>`
  );
}
