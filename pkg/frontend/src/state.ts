// Client-side session state. One mutating request may be in flight at a
// time (the retrain is synchronous and user-perceptible, so the UI blocks
// honestly); reads may race but only the freshest response renders, tracked
// by sequence numbers.

import type {
  ApplicationView,
  DeltaEntry,
  FeedbackResponse,
  MetricsPayload,
  SessionInfo,
  UndoResponse,
} from "./types.js";

export type Screen = "applications" | "tutorial";

export interface AppState {
  session: SessionInfo | null;
  metrics: MetricsPayload | null;
  metricsSeq: number;
  applications: ApplicationView[];
  applicationsSeq: number;
  deltas: Record<string, DeltaEntry>;
  pendingMutation: boolean;
  sort: string | null;
  filters: string[];
  screen: Screen;
  error: string | null;
}

export function initialState(): AppState {
  return {
    session: null,
    metrics: null,
    metricsSeq: -1,
    applications: [],
    applicationsSeq: -1,
    deltas: {},
    pendingMutation: false,
    sort: null,
    filters: [],
    screen: "applications",
    error: null,
  };
}

export function applySession(state: AppState, session: SessionInfo): AppState {
  return { ...state, session };
}

// Stale responses (lower sequence number) never overwrite fresher state.
export function applyMetrics(state: AppState, payload: MetricsPayload, seq: number): AppState {
  if (seq <= state.metricsSeq) {
    return state;
  }
  return { ...state, metrics: payload, metricsSeq: seq };
}

export function applyApplications(
  state: AppState,
  applications: ApplicationView[],
  seq: number,
): AppState {
  if (seq <= state.applicationsSeq) {
    return state;
  }
  return { ...state, applications, applicationsSeq: seq };
}

// Returns null when another mutation is already in flight.
export function beginMutation(state: AppState): AppState | null {
  if (state.pendingMutation) {
    return null;
  }
  return { ...state, pendingMutation: true, error: null };
}

export function applyFeedbackResponse(
  state: AppState,
  response: FeedbackResponse,
  seq: number,
): AppState {
  const next = applyMetrics(state, response.metrics, seq);
  return { ...next, deltas: response.deltas, pendingMutation: false };
}

export function applyUndoResponse(state: AppState, response: UndoResponse, seq: number): AppState {
  const next = applyMetrics(state, response.metrics, seq);
  return { ...next, deltas: {}, pendingMutation: false };
}

export function failMutation(state: AppState, message: string): AppState {
  // the previous state is retained; the caller offers a retry affordance
  return { ...state, pendingMutation: false, error: message };
}

// The tutorial is reachable from any screen and returns to where it left.
export function showTutorial(state: AppState): AppState {
  return { ...state, screen: "tutorial" };
}

export function closeTutorial(state: AppState): AppState {
  return { ...state, screen: "applications" };
}
