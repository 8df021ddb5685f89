/** Thin typed client over the service's HTTP endpoints.
 *
 * Every call is stateless; the console holds no authoritative data and any
 * view can be rebuilt from these endpoints alone.
 */

import type {
  AlertsResponse,
  ApiError,
  CaseView,
  ConsoleSettings,
  MetricsView,
  QueueResponse,
  VerdictDecision,
  VerdictResult,
} from "./types.js";

function headers(settings: ConsoleSettings): Record<string, string> {
  const out: Record<string, string> = { "content-type": "application/json" };
  if (settings.token) {
    out["authorization"] = `Bearer ${settings.token}`;
  }
  return out;
}

export function queueUrl(base: string, limit = 200): string {
  return `${base}/v1/cases?status=pending_review&limit=${limit}`;
}

export function alertsUrl(base: string, sinceSeq: number): string {
  return `${base}/v1/alerts?since_seq=${sinceSeq}`;
}

async function getJson<T>(settings: ConsoleSettings, url: string): Promise<T> {
  const resp = await fetch(url, { headers: headers(settings) });
  if (!resp.ok) {
    throw new Error(`GET ${url} -> ${resp.status}`);
  }
  return (await resp.json()) as T;
}

export async function loadQueue(
  settings: ConsoleSettings,
  limit = 200,
): Promise<QueueResponse> {
  return getJson<QueueResponse>(settings, queueUrl(settings.baseUrl, limit));
}

export async function loadCase(
  settings: ConsoleSettings,
  caseId: string,
): Promise<CaseView> {
  return getJson<CaseView>(settings, `${settings.baseUrl}/v1/cases/${caseId}`);
}

export async function loadAlerts(
  settings: ConsoleSettings,
  sinceSeq: number,
): Promise<AlertsResponse> {
  return getJson<AlertsResponse>(settings, alertsUrl(settings.baseUrl, sinceSeq));
}

export async function loadMetrics(settings: ConsoleSettings): Promise<MetricsView> {
  return getJson<MetricsView>(settings, `${settings.baseUrl}/v1/metrics`);
}

export async function loadLabelsExport(settings: ConsoleSettings): Promise<string[]> {
  const resp = await fetch(`${settings.baseUrl}/v1/labels/export`, {
    headers: headers(settings),
  });
  if (!resp.ok) {
    throw new Error(`labels export -> ${resp.status}`);
  }
  const text = await resp.text();
  return text.split("\n").filter((line) => line.trim().length > 0);
}

/** POST a verdict; 409 and other API errors come back as values, not throws,
 * so the caller can converge the row to the server's state. */
export async function submitVerdict(
  settings: ConsoleSettings,
  caseId: string,
  decision: VerdictDecision,
): Promise<VerdictResult> {
  let resp: Response;
  try {
    resp = await fetch(`${settings.baseUrl}/v1/cases/${caseId}/verdict`, {
      method: "POST",
      headers: headers(settings),
      body: JSON.stringify({ decision, reviewer_id: settings.reviewerId }),
    });
  } catch (err) {
    return {
      ok: false,
      status: 0,
      error: { error_code: "NetworkError", message: String(err) },
    };
  }
  if (resp.ok) {
    return { ok: true, case: (await resp.json()) as CaseView };
  }
  let error: ApiError;
  try {
    error = (await resp.json()) as ApiError;
  } catch {
    error = { error_code: "HttpError", message: `status ${resp.status}` };
  }
  return { ok: false, status: resp.status, error };
}
