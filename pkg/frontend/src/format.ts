/** Small display helpers shared by the DOM layer and tests. */

import type { CaseView } from "./types.js";

export function formatAmount(amount: number): string {
  return amount.toLocaleString("en-US", {
    minimumFractionDigits: 2,
    maximumFractionDigits: 2,
  });
}

export function formatRisk(score: number | null): string {
  return score == null ? "–" : score.toFixed(3);
}

/** Age of a case in the queue, in compact human units. */
export function formatAge(createdAtMs: number, nowMs: number): string {
  const deltaS = Math.max(0, Math.floor((nowMs - createdAtMs) / 1000));
  if (deltaS < 60) return `${deltaS}s`;
  if (deltaS < 3600) return `${Math.floor(deltaS / 60)}m`;
  if (deltaS < 86400) return `${Math.floor(deltaS / 3600)}h`;
  return `${Math.floor(deltaS / 86400)}d`;
}

export function severityClass(severity: "info" | "warning" | "high"): string {
  return { info: "sev-info", warning: "sev-warning", high: "sev-high" }[severity];
}

export function caseSummaryLine(c: CaseView): string {
  const amount = c.event ? formatAmount(c.event.amount) : "?";
  const region = c.event ? c.event.region : "?";
  return `${c.case_id} · ${amount} · ${region} · risk ${formatRisk(c.risk_score)}`;
}

export function queueCountLabel(depth: number): string {
  return depth === 1 ? "1 pending" : `${depth} pending`;
}
