// Wire types for the fairloop service API. Every payload carries a
// schema_version; the client renders these values verbatim and never
// recomputes a fairness number.

export type PredictionLabel = "Accept" | "Reject";
export type FairnessStatus = "Unchecked" | "Checked" | "Unfair";
export type FeedbackLabel = "unfair" | "weights_only";

export interface SessionInfo {
  schema_version: string;
  session_id: string;
  participant_id: string;
  schema: FeatureSpec[];
  default_attributes: string[];
  policy: string;
}

export interface FeatureSpec {
  name: string;
  kind: "categorical" | "numeric";
  protected: boolean;
  display_label: string;
}

export interface ApplicationView {
  id: string;
  attributes: Record<string, string | number>;
  prediction: PredictionLabel;
  confidence: number;
  status: FairnessStatus;
  locked: boolean;
}

export interface ApplicationsPayload {
  schema_version: string;
  applications: ApplicationView[];
}

export interface RateBar {
  group: string;
  rate: number;
}

export interface DprBlock {
  value: number | null;
  defined: boolean;
  note: string | null;
  min: RateBar | null;
  max: RateBar | null;
}

export interface AodBlock {
  value: number | null;
  defined: boolean;
  note: string | null;
  tpr: { min: RateBar | null; max: RateBar | null };
  fpr: { min: RateBar | null; max: RateBar | null };
}

export interface DistributionEntry {
  value: string;
  count: number;
  accepted_pct: number | null;
  rejected_pct: number | null;
}

export interface AttributeBlock {
  dpr: DprBlock;
  aod: AodBlock;
  distribution: DistributionEntry[];
}

export interface Overview {
  acceptance_rate_pct: number | null;
  accuracy: number | null;
  consistency: number | null;
  unfair_count: number;
  checked_count: number;
  test_set_size: number;
}

export interface MetricsPayload {
  schema_version: string;
  step: number;
  attributes: Record<string, AttributeBlock>;
  overview: Overview;
  feature_weights: Record<string, number>;
  default_attributes: string[];
}

export interface DeltaEntry {
  pct: number | null;
  absolute: number;
  improved: boolean;
  direction: string;
  note: string | null;
}

export interface FeedbackResponse {
  schema_version: string;
  step_summary: {
    step: number;
    application_id: string;
    label: FeedbackLabel;
    locked: boolean;
  };
  metrics: MetricsPayload;
  deltas: Record<string, DeltaEntry>;
}

export interface UndoResponse {
  schema_version: string;
  metrics: MetricsPayload;
}

export interface FeedbackPayload {
  application_id: string;
  label: FeedbackLabel;
  weights?: Record<string, number>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: string;
}
