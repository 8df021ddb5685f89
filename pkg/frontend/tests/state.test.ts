import { describe, expect, it } from "vitest";

import {
  appendAlerts,
  applyQueueResponse,
  applyVerdictResult,
  beginVerdict,
  emptyAlertFeed,
  emptyQueueState,
  recordPollFailure,
  shouldSurfacePollFailure,
} from "../src/state.js";
import type { AlertView, CaseView } from "../src/types.js";

function caseView(id: string, createdAt: number): CaseView {
  return {
    case_id: id,
    event_ref: id.replace("case-", ""),
    status: "pending_review",
    created_at: createdAt,
    risk_score: 0.5,
    anomaly_flag: "inlier",
    doc_class: null,
    decided_by: null,
    resolved_at: null,
    matched_rule_id: null,
  };
}

function alert(seq: number): AlertView {
  return {
    alert_id: `a${seq}`,
    case_id: `case-${seq}`,
    severity: "high",
    reason: "risk",
    emitted_at: seq * 10,
    seq,
  };
}

describe("queue state", () => {
  it("renders the empty state when no cases are pending", () => {
    const state = applyQueueResponse(emptyQueueState(), {
      cases: [],
      pending_review_depth: 0,
    });
    expect(state.cases).toEqual([]);
    expect(state.pendingDepth).toBe(0);
  });

  it("sorts the queue oldest first regardless of server order", () => {
    const state = applyQueueResponse(emptyQueueState(), {
      cases: [caseView("case-b", 200), caseView("case-a", 100), caseView("case-c", 300)],
      pending_review_depth: 3,
    });
    expect(state.cases.map((c) => c.case_id)).toEqual(["case-a", "case-b", "case-c"]);
  });

  it("sends at most one verdict per case at a time", () => {
    let state = applyQueueResponse(emptyQueueState(), {
      cases: [caseView("case-a", 1)],
      pending_review_depth: 1,
    });
    const first = beginVerdict(state, "case-a");
    expect(first).not.toBeNull();
    state = first!;
    expect(beginVerdict(state, "case-a")).toBeNull();
  });

  it("removes the row and decrements the counter on success", () => {
    let state = applyQueueResponse(emptyQueueState(), {
      cases: [caseView("case-a", 1), caseView("case-b", 2)],
      pending_review_depth: 2,
    });
    state = beginVerdict(state, "case-a")!;
    state = applyVerdictResult(state, "case-a", {
      ok: true,
      case: { ...caseView("case-a", 1), status: "resolved_approved" },
    });
    expect(state.cases.map((c) => c.case_id)).toEqual(["case-b"]);
    expect(state.pendingDepth).toBe(1);
    expect(state.inFlight.size).toBe(0);
    expect(state.lastError).toBeNull();
  });

  it("converges on 409: the row leaves because the server already resolved it", () => {
    let state = applyQueueResponse(emptyQueueState(), {
      cases: [caseView("case-a", 1)],
      pending_review_depth: 1,
    });
    state = beginVerdict(state, "case-a")!;
    state = applyVerdictResult(state, "case-a", {
      ok: false,
      status: 409,
      error: { error_code: "AlreadyResolved", message: "case case-a already resolved" },
    });
    expect(state.cases).toEqual([]);
    expect(state.pendingDepth).toBe(0);
    expect(state.lastError).toBeNull();
  });

  it("keeps the row and surfaces the error on network failure", () => {
    let state = applyQueueResponse(emptyQueueState(), {
      cases: [caseView("case-a", 1)],
      pending_review_depth: 1,
    });
    state = beginVerdict(state, "case-a")!;
    state = applyVerdictResult(state, "case-a", {
      ok: false,
      status: 0,
      error: { error_code: "NetworkError", message: "connection refused" },
    });
    expect(state.cases.length).toBe(1);
    expect(state.pendingDepth).toBe(1);
    expect(state.lastError).toContain("NetworkError");
  });
});

describe("alert feed", () => {
  it("starts empty", () => {
    expect(emptyAlertFeed().alerts).toEqual([]);
  });

  it("is append-only and never reorders within a session", () => {
    let feed = appendAlerts(emptyAlertFeed(), { alerts: [alert(1), alert(2)], last_seq: 2 });
    feed = appendAlerts(feed, { alerts: [alert(2), alert(4), alert(3)], last_seq: 4 });
    expect(feed.alerts.map((a) => a.seq)).toEqual([1, 2, 3, 4]);
    // a later poll returning older alerts cannot rewrite history
    feed = appendAlerts(feed, { alerts: [alert(1)], last_seq: 4 });
    expect(feed.alerts.map((a) => a.seq)).toEqual([1, 2, 3, 4]);
    expect(feed.lastSeq).toBe(4);
  });

  it("surfaces poll failures only after three in a row", () => {
    let feed = emptyAlertFeed();
    feed = recordPollFailure(feed);
    feed = recordPollFailure(feed);
    expect(shouldSurfacePollFailure(feed)).toBe(false);
    feed = recordPollFailure(feed);
    expect(shouldSurfacePollFailure(feed)).toBe(true);
    // one success resets the counter
    feed = appendAlerts(feed, { alerts: [], last_seq: 0 });
    expect(shouldSurfacePollFailure(feed)).toBe(false);
  });
});
