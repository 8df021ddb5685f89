/** Wire types mirroring the service's JSON (snake_case preserved). */

export type CaseStatus =
  | "pending_score"
  | "auto_approved"
  | "auto_rejected"
  | "pending_review"
  | "resolved_approved"
  | "resolved_rejected";

export interface EventView {
  id: string;
  timestamp: number;
  account: string;
  amount: number;
  channel: string;
  region: string;
  doc_text: string | null;
}

export interface CaseView {
  case_id: string;
  event_ref: string;
  status: CaseStatus;
  created_at: number;
  risk_score: number | null;
  anomaly_flag: "inlier" | "outlier" | null;
  doc_class: string | null;
  decided_by: "rules" | "model" | "human" | null;
  resolved_at: number | null;
  matched_rule_id: string | null;
  event?: EventView;
}

export interface QueueResponse {
  cases: CaseView[];
  pending_review_depth: number;
}

export interface AlertView {
  alert_id: string;
  case_id: string;
  severity: "info" | "warning" | "high";
  reason: string;
  emitted_at: number;
  seq: number;
}

export interface AlertsResponse {
  alerts: AlertView[];
  last_seq: number;
}

export interface MetricsView {
  total_cases: number;
  pending_review_depth: number;
  rule_coverage: number;
  auto_rate: number;
  by_status: Record<string, number>;
  by_decided_by: Record<string, number>;
  alerts_by_severity: Record<string, number>;
  [key: string]: unknown;
}

export interface ApiError {
  error_code: string;
  message: string;
}

export type VerdictDecision = "approve" | "reject";

export type VerdictResult =
  | { ok: true; case: CaseView }
  | { ok: false; status: number; error: ApiError }
  | { ok: false; status: 0; error: { error_code: "NetworkError"; message: string } };

export interface ConsoleSettings {
  baseUrl: string;
  token: string | null;
  pollIntervalMs: number;
  reviewerId: string;
}

export const DEFAULT_SETTINGS: ConsoleSettings = {
  baseUrl: "",
  token: null,
  pollIntervalMs: 2000,
  reviewerId: "",
};
