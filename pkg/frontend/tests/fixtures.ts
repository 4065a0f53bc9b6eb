// Canned service payloads used by the contract tests. Values are irregular
// floats on purpose: rendering must reproduce them digit for digit.

import type {
  ApplicationView,
  DeltaEntry,
  FeedbackResponse,
  MetricsPayload,
  SessionInfo,
  UndoResponse,
} from "../src/types.js";

export const session: SessionInfo = {
  schema_version: "1",
  session_id: "s-test",
  participant_id: "p-test",
  schema: [
    { name: "Gender", kind: "categorical", protected: true, display_label: "Gender" },
    { name: "Age", kind: "numeric", protected: true, display_label: "Age" },
    { name: "Income", kind: "numeric", protected: false, display_label: "Income" },
  ],
  default_attributes: ["Gender", "Age"],
  policy: "labels_unfair_weights",
};

export function baselineMetrics(): MetricsPayload {
  return {
    schema_version: "1",
    step: 0,
    attributes: {
      Gender: {
        dpr: {
          value: 0.7603948210573411,
          defined: true,
          note: null,
          min: { group: "F", rate: 0.3819748210573411 },
          max: { group: "M", rate: 0.5023198210573411 },
        },
        aod: {
          value: 0.1477777712345678,
          defined: true,
          note: null,
          tpr: {
            min: { group: "F", rate: 0.6190476190476191 },
            max: { group: "M", rate: 0.7619047619047619 },
          },
          fpr: {
            min: { group: "F", rate: 0.2183098591549296 },
            max: { group: "M", rate: 0.3239436619718310 },
          },
        },
        distribution: [
          { value: "F", count: 61, accepted_pct: 38.19748210573411, rejected_pct: 61.80251789426589 },
          { value: "M", count: 39, accepted_pct: 50.23198210573411, rejected_pct: 49.76801789426589 },
        ],
      },
    },
    overview: {
      acceptance_rate_pct: 43.99999999999999,
      accuracy: 0.6659123456789,
      consistency: 0.6712345678901234,
      unfair_count: 0,
      checked_count: 0,
      test_set_size: 100,
    },
    feature_weights: { Gender: 0.2, Age: 0.3, Income: 0.5 },
    default_attributes: ["Gender", "Age"],
  };
}

export function retrainedMetrics(): MetricsPayload {
  const m = baselineMetrics();
  m.step = 1;
  m.attributes.Gender!.dpr.value = 0.8123456789012345;
  m.overview.unfair_count = 1;
  m.feature_weights = { Gender: 0.1, Age: 0.4, Income: 0.5 };
  return m;
}

export const deltas: Record<string, DeltaEntry> = {
  "dpr:Gender": {
    pct: 6.832077719414396,
    absolute: 0.0519508578438934,
    improved: true,
    direction: "higher_better",
    note: null,
  },
  accuracy: {
    pct: -1.2345678901234567,
    absolute: -0.008222,
    improved: false,
    direction: "higher_better",
    note: null,
  },
};

export function feedbackResponse(): FeedbackResponse {
  return {
    schema_version: "1",
    step_summary: { step: 1, application_id: "A1", label: "unfair", locked: true },
    metrics: retrainedMetrics(),
    deltas,
  };
}

export function undoResponse(): UndoResponse {
  return { schema_version: "1", metrics: baselineMetrics() };
}

export function applications(): ApplicationView[] {
  return [
    {
      id: "A1",
      attributes: { Gender: "F", Age: 34, Income: 52000.55 },
      prediction: "Reject",
      confidence: 0.7412345678901234,
      status: "Unchecked",
      locked: false,
    },
    {
      id: "A2",
      attributes: { Gender: "M", Age: 51, Income: 81000.25 },
      prediction: "Accept",
      confidence: 0.6598765432109876,
      status: "Unchecked",
      locked: false,
    },
  ];
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
