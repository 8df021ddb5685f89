/** DOM wiring: polling loops, queue table, case detail, alerts, metrics.
 *
 * All server interaction lives in api.ts and the state transitions in
 * state.ts; this file only renders and forwards user gestures.
 */

import {
  loadAlerts,
  loadCase,
  loadMetrics,
  loadQueue,
  submitVerdict,
} from "./api.js";
import {
  caseSummaryLine,
  formatAge,
  formatAmount,
  formatRisk,
  queueCountLabel,
  severityClass,
} from "./format.js";
import {
  appendAlerts,
  applyQueueResponse,
  applyVerdictResult,
  beginVerdict,
  emptyAlertFeed,
  emptyQueueState,
  recordPollFailure,
  shouldSurfacePollFailure,
} from "./state.js";
import type { CaseView, ConsoleSettings, VerdictDecision } from "./types.js";
import { DEFAULT_SETTINGS } from "./types.js";

const SETTINGS_KEY = "autocomply-console-settings";

export class ConsoleApp {
  settings: ConsoleSettings;
  queue = emptyQueueState();
  alerts = emptyAlertFeed();
  selected: CaseView | null = null;
  private timers: number[] = [];

  constructor(private root: Document) {
    this.settings = this.loadSettings();
  }

  private loadSettings(): ConsoleSettings {
    try {
      const raw = this.root.defaultView?.localStorage.getItem(SETTINGS_KEY);
      if (raw) {
        return { ...DEFAULT_SETTINGS, ...JSON.parse(raw) };
      }
    } catch {
      // ignore storage failures; fall through to defaults
    }
    return { ...DEFAULT_SETTINGS };
  }

  saveSettings(): void {
    try {
      this.root.defaultView?.localStorage.setItem(
        SETTINGS_KEY,
        JSON.stringify(this.settings),
      );
    } catch {
      // storage is best-effort
    }
  }

  start(): void {
    this.bindSettingsForm();
    this.pollQueue();
    this.pollAlerts();
    this.pollMetrics();
    const every = this.settings.pollIntervalMs;
    const win = this.root.defaultView!;
    this.timers.push(win.setInterval(() => this.pollQueue(), every));
    this.timers.push(win.setInterval(() => this.pollAlerts(), every));
    this.timers.push(win.setInterval(() => this.pollMetrics(), every * 2));
  }

  stop(): void {
    const win = this.root.defaultView!;
    for (const t of this.timers) win.clearInterval(t);
    this.timers = [];
  }

  // ------------------------------------------------------------------
  // polling
  // ------------------------------------------------------------------

  async pollQueue(): Promise<void> {
    try {
      const resp = await loadQueue(this.settings);
      this.queue = applyQueueResponse(this.queue, resp);
      this.renderQueue();
      this.setBanner(null);
    } catch (err) {
      this.setBanner(`queue unavailable, retrying: ${err}`);
    }
  }

  async pollAlerts(): Promise<void> {
    try {
      const resp = await loadAlerts(this.settings, this.alerts.lastSeq);
      this.alerts = appendAlerts(this.alerts, resp);
      this.renderAlerts();
    } catch {
      this.alerts = recordPollFailure(this.alerts);
      if (shouldSurfacePollFailure(this.alerts)) {
        this.setBanner("alert feed unavailable for 3 polls");
      }
    }
  }

  async pollMetrics(): Promise<void> {
    try {
      const metrics = await loadMetrics(this.settings);
      const panel = this.root.getElementById("metrics");
      if (panel) {
        panel.innerHTML = "";
        const rows: Array<[string, string]> = [
          ["total cases", String(metrics.total_cases)],
          ["pending review", String(metrics.pending_review_depth)],
          ["rule coverage", (metrics.rule_coverage * 100).toFixed(1) + "%"],
          ["auto-decided", (metrics.auto_rate * 100).toFixed(1) + "%"],
          ["human verdicts", String(metrics.by_decided_by?.human ?? 0)],
        ];
        for (const [label, value] of rows) {
          const div = this.root.createElement("div");
          div.className = "metric";
          div.innerHTML = `<span class="metric-value">${value}</span>` +
            `<span class="metric-label">${label}</span>`;
          panel.appendChild(div);
        }
      }
    } catch {
      // metrics panel keeps its previous values on poll failure
    }
  }

  // ------------------------------------------------------------------
  // user gestures
  // ------------------------------------------------------------------

  async selectCase(caseId: string): Promise<void> {
    try {
      this.selected = await loadCase(this.settings, caseId);
    } catch {
      this.selected = this.queue.cases.find((c) => c.case_id === caseId) ?? null;
    }
    this.renderDetail();
  }

  async decide(caseId: string, decision: VerdictDecision): Promise<void> {
    if (!this.settings.reviewerId) {
      this.setBanner("set a reviewer id before submitting verdicts");
      return;
    }
    const next = beginVerdict(this.queue, caseId);
    if (next === null) {
      return; // already in flight: one request per gesture
    }
    this.queue = next;
    this.renderQueue();
    const result = await submitVerdict(this.settings, caseId, decision);
    this.queue = applyVerdictResult(this.queue, caseId, result);
    if (!result.ok && result.status === 409) {
      // somebody else resolved it; refresh the detail pane to their outcome
      await this.selectCase(caseId);
    } else if (this.selected?.case_id === caseId) {
      this.selected = result.ok ? result.case : this.selected;
      this.renderDetail();
    }
    this.renderQueue();
    this.pollMetrics();
  }

  // ------------------------------------------------------------------
  // rendering
  // ------------------------------------------------------------------

  renderQueue(): void {
    const host = this.root.getElementById("queue");
    const counter = this.root.getElementById("queue-count");
    if (counter) counter.textContent = queueCountLabel(this.queue.pendingDepth);
    if (!host) return;
    host.innerHTML = "";
    if (this.queue.cases.length === 0) {
      const empty = this.root.createElement("p");
      empty.className = "empty";
      empty.textContent = "0 pending: the queue is clear";
      host.appendChild(empty);
      return;
    }
    const now = Date.now();
    for (const c of this.queue.cases) {
      const row = this.root.createElement("div");
      row.className = "case-row";
      row.dataset.caseId = c.case_id;
      const busy = this.queue.inFlight.has(c.case_id);
      row.innerHTML =
        `<span class="case-line">${caseSummaryLine(c)}</span>` +
        `<span class="case-age">${formatAge(c.created_at, now)}</span>` +
        `<button class="approve" ${busy ? "disabled" : ""}>approve</button>` +
        `<button class="reject" ${busy ? "disabled" : ""}>reject</button>`;
      row.querySelector(".case-line")?.addEventListener("click", () =>
        this.selectCase(c.case_id));
      row.querySelector(".approve")?.addEventListener("click", () =>
        this.decide(c.case_id, "approve"));
      row.querySelector(".reject")?.addEventListener("click", () =>
        this.decide(c.case_id, "reject"));
      host.appendChild(row);
    }
  }

  renderDetail(): void {
    const host = this.root.getElementById("detail");
    if (!host) return;
    if (!this.selected) {
      host.innerHTML = `<p class="empty">select a case</p>`;
      return;
    }
    const c = this.selected;
    const event = c.event;
    host.innerHTML = `
      <h3>${c.case_id}</h3>
      <dl>
        <dt>status</dt><dd>${c.status}</dd>
        <dt>risk score</dt><dd>${formatRisk(c.risk_score)}</dd>
        <dt>anomaly</dt><dd>${c.anomaly_flag ?? "–"}</dd>
        <dt>document class</dt><dd>${c.doc_class ?? "–"}</dd>
        <dt>matched rule</dt><dd>${c.matched_rule_id ?? "(none)"}</dd>
        <dt>decided by</dt><dd>${c.decided_by ?? "–"}</dd>
        ${event ? `
        <dt>amount</dt><dd>${formatAmount(event.amount)}</dd>
        <dt>account</dt><dd>${event.account}</dd>
        <dt>region / channel</dt><dd>${event.region} / ${event.channel}</dd>
        <dt>document</dt><dd>${event.doc_text ?? "(none)"}</dd>` : ""}
      </dl>`;
  }

  renderAlerts(): void {
    const host = this.root.getElementById("alerts");
    if (!host) return;
    host.innerHTML = "";
    if (this.alerts.alerts.length === 0) {
      const empty = this.root.createElement("p");
      empty.className = "empty";
      empty.textContent = "no alerts yet";
      host.appendChild(empty);
      return;
    }
    for (const alert of [...this.alerts.alerts].reverse().slice(0, 50)) {
      const row = this.root.createElement("div");
      row.className = `alert-row ${severityClass(alert.severity)}`;
      row.innerHTML =
        `<span class="alert-sev">${alert.severity}</span>` +
        `<span class="alert-case">${alert.case_id}</span>` +
        `<span class="alert-reason">${alert.reason}</span>`;
      host.appendChild(row);
    }
  }

  private setBanner(message: string | null): void {
    const banner = this.root.getElementById("banner");
    if (!banner) return;
    banner.textContent = message ?? "";
    banner.classList.toggle("visible", message !== null);
  }

  private bindSettingsForm(): void {
    const form = this.root.getElementById("settings-form") as HTMLFormElement | null;
    if (!form) return;
    const baseUrl = form.querySelector<HTMLInputElement>('[name="baseUrl"]');
    const token = form.querySelector<HTMLInputElement>('[name="token"]');
    const reviewer = form.querySelector<HTMLInputElement>('[name="reviewerId"]');
    const interval = form.querySelector<HTMLInputElement>('[name="pollIntervalMs"]');
    if (baseUrl) baseUrl.value = this.settings.baseUrl;
    if (token) token.value = this.settings.token ?? "";
    if (reviewer) reviewer.value = this.settings.reviewerId;
    if (interval) interval.value = String(this.settings.pollIntervalMs);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.settings = {
        baseUrl: baseUrl?.value.replace(/\/$/, "") ?? "",
        token: token?.value || null,
        reviewerId: reviewer?.value ?? "",
        pollIntervalMs: Math.max(250, Number(interval?.value) || 2000),
      };
      this.saveSettings();
      this.stop();
      this.start();
    });
  }
}

export function boot(doc: Document): ConsoleApp {
  const app = new ConsoleApp(doc);
  app.start();
  return app;
}
