// Decide-modal state: an unfair toggle plus one slider per feature. Sliders
// start at the current model weights and submit raw values; normalization is
// the server's job.

import type { FeedbackPayload } from "./types.js";

export interface DecideForm {
  applicationId: string;
  unfair: boolean;
  initialWeights: Record<string, number>;
  weights: Record<string, number>;
  touched: boolean;
}

export function openDecide(
  applicationId: string,
  currentWeights: Record<string, number>,
): DecideForm {
  return {
    applicationId,
    unfair: false,
    initialWeights: { ...currentWeights },
    weights: { ...currentWeights },
    touched: false,
  };
}

export function toggleUnfair(form: DecideForm, on: boolean): DecideForm {
  return { ...form, unfair: on };
}

export function setSlider(form: DecideForm, feature: string, value: number): DecideForm {
  if (!(feature in form.initialWeights)) {
    throw new Error(`unknown feature ${feature}`);
  }
  if (value < 0) {
    throw new Error("slider values are bounded at 0");
  }
  const weights = { ...form.weights, [feature]: value };
  const touched = Object.keys(weights).some(
    (k) => weights[k] !== form.initialWeights[k],
  );
  return { ...form, weights, touched };
}

// Submission is disabled until the form expresses something: the unfair
// toggle is on or at least one slider moved.
export function canSubmit(form: DecideForm): boolean {
  return form.unfair || form.touched;
}

// The exact wire payloads:
//   unfair only          -> { application_id, label: "unfair" }
//   sliders only         -> { application_id, label: "weights_only", weights }
//   unfair plus sliders  -> { application_id, label: "unfair", weights }
// Cancel never calls this; the caller discards the form instead.
export function buildFeedbackPayload(form: DecideForm): FeedbackPayload | null {
  if (!canSubmit(form)) {
    return null;
  }
  if (form.unfair && !form.touched) {
    return { application_id: form.applicationId, label: "unfair" };
  }
  const weights = { ...form.weights };
  if (form.unfair) {
    return { application_id: form.applicationId, label: "unfair", weights };
  }
  return { application_id: form.applicationId, label: "weights_only", weights };
}
