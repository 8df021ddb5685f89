/** Pure session-state transitions for the console.
 *
 * The server is the source of truth: these reducers only cache its latest
 * answers, keep the alert feed append-only within a session, and converge
 * to the server's state on conflicting verdicts (409).
 */

import type {
  AlertsResponse,
  AlertView,
  CaseView,
  QueueResponse,
  VerdictResult,
} from "./types.js";

export interface QueueState {
  cases: CaseView[];
  pendingDepth: number;
  /** case ids with an in-flight verdict; one request per user gesture */
  inFlight: Set<string>;
  lastError: string | null;
}

export function emptyQueueState(): QueueState {
  return { cases: [], pendingDepth: 0, inFlight: new Set(), lastError: null };
}

/** Replace the queue with the server's answer, oldest first. */
export function applyQueueResponse(state: QueueState, resp: QueueResponse): QueueState {
  const cases = [...resp.cases].sort((a, b) => a.created_at - b.created_at);
  return {
    ...state,
    cases,
    pendingDepth: resp.pending_review_depth,
    lastError: null,
  };
}

export function beginVerdict(state: QueueState, caseId: string): QueueState | null {
  if (state.inFlight.has(caseId)) {
    return null; // a verdict for this case is already on the wire
  }
  const inFlight = new Set(state.inFlight);
  inFlight.add(caseId);
  return { ...state, inFlight };
}

/** Fold a verdict response back into the queue.
 *
 * 200 removes the row; 409 means someone else resolved it first, which is
 * the same outcome for this view, so the row also leaves and the next poll
 * reconciles the counter. Network errors keep the row and surface a notice.
 */
export function applyVerdictResult(
  state: QueueState,
  caseId: string,
  result: VerdictResult,
): QueueState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(caseId);
  const resolvedOnServer = result.ok || result.status === 409;
  if (!resolvedOnServer) {
    return {
      ...state,
      inFlight,
      lastError: `${result.error.error_code}: ${result.error.message}`,
    };
  }
  const wasListed = state.cases.some((c) => c.case_id === caseId);
  return {
    cases: state.cases.filter((c) => c.case_id !== caseId),
    pendingDepth: Math.max(0, state.pendingDepth - (wasListed ? 1 : 0)),
    inFlight,
    lastError: null,
  };
}

export interface AlertFeedState {
  alerts: AlertView[];
  lastSeq: number;
  consecutiveFailures: number;
}

export function emptyAlertFeed(): AlertFeedState {
  return { alerts: [], lastSeq: 0, consecutiveFailures: 0 };
}

/** Append strictly-newer alerts; the feed never reorders within a session. */
export function appendAlerts(state: AlertFeedState, resp: AlertsResponse): AlertFeedState {
  const fresh = resp.alerts
    .filter((a) => a.seq > state.lastSeq)
    .sort((a, b) => a.seq - b.seq);
  const lastSeq = fresh.length ? fresh[fresh.length - 1].seq : state.lastSeq;
  return {
    alerts: [...state.alerts, ...fresh],
    lastSeq,
    consecutiveFailures: 0,
  };
}

export function recordPollFailure(state: AlertFeedState): AlertFeedState {
  return { ...state, consecutiveFailures: state.consecutiveFailures + 1 };
}

/** Single poll failures stay silent; three in a row surface a banner. */
export function shouldSurfacePollFailure(state: AlertFeedState): boolean {
  return state.consecutiveFailures >= 3;
}
