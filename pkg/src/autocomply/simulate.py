"""Workflow simulation and reporting.

simulate_process turns a scenario's stage table and process metrics into
before/after improvement rows (each row names its own rounding formula,
because reduction rates and relative gains round differently). run_simulation
drives the full in-process loop: generate a workload, quick-train models,
ingest through the engine, optionally resolve the review queue with
simulated reviewers, and emit metrics.csv / tables.csv / run-manifest.json.

Simulated runs use the virtual tick clock, so reports are byte-identical
for a fixed seed; wall-clock performance belongs to the bench harness.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import dqn as dqn_mod
from .docclf import train_doc_classifier
from .domain import CaseStatus, DecisionAction, DecisionSource, GroundTruth, Verdict
from .engine import Engine, EngineConfig, ModelBundle, VirtualClock
from .features import fit_pipeline
from .rules import parse_rules
from .seqmodel import SeqModelConfig, train_sequence_model
from .svm import train as train_svm
from .wal import canonical_json
from .workload import (
    Scenario,
    demo_ruleset_text,
    generate_workload,
    make_sequence_task,
)


def round_half_up(x: float, ndigits: int = 0) -> float:
    scale = 10 ** ndigits
    return math.floor(x * scale + 0.5) / scale


FORMULAS = {
    "reduction_pct_int": lambda before, after: round_half_up((1.0 - after / before) * 100.0),
    "reduction_pct_1dp": lambda before, after: round_half_up((1.0 - after / before) * 100.0, 1),
    "relative_gain_pct_1dp": lambda before, after: round_half_up(
        (after - before) / before * 100.0, 1),
}


@dataclass
class ReportRow:
    table: str
    metric: str
    before: float | None
    after: float | None
    value: float | None
    improvement_rate: float | None
    formula: str

    def as_csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float) and v == int(v) and abs(v) < 1e15:
                return str(int(v))
            return f"{v}"

        improvement = ""
        if self.improvement_rate is not None:
            digits = 0 if self.formula == "reduction_pct_int" else 2
            improvement = f"{self.improvement_rate:.{digits}f}%"
        return [self.table, self.metric, fmt(self.before), fmt(self.after),
                fmt(self.value), improvement, self.formula]


@dataclass
class MetricsReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add_improvement(self, table: str, metric: str, before: float, after: float,
                        formula: str) -> ReportRow:
        if before == after:
            rate = 0.0
        else:
            rate = FORMULAS[formula](before, after)
        row = ReportRow(table=table, metric=metric, before=before, after=after,
                        value=None, improvement_rate=rate, formula=formula)
        self.rows.append(row)
        return row

    def add_value(self, table: str, metric: str, value: float, note: str = "measured") -> ReportRow:
        row = ReportRow(table=table, metric=metric, before=None, after=None,
                        value=value, improvement_rate=None, formula=note)
        self.rows.append(row)
        return row

    def by_metric(self, metric: str) -> ReportRow:
        for row in self.rows:
            if row.metric == metric:
                return row
        raise KeyError(metric)


def simulate_process(scenario: Scenario) -> MetricsReport:
    """Manual-vs-automated arithmetic from the scenario's stage tables.

    Stage rows use nearest-integer reduction percentages and also yield a
    total row; the process-metric rows carry their own per-row formula.
    """
    if not scenario.stage_table:
        raise ValueError(f"scenario {scenario.name!r} has no stage table")
    report = MetricsReport()
    total_before = 0.0
    total_after = 0.0
    for row in scenario.stage_table:
        report.add_improvement("stage_table", row.name, row.before, row.after,
                               "reduction_pct_int")
        total_before += row.before
        total_after += row.after
    report.add_improvement("stage_table", "total_hours_per_month",
                           total_before, total_after, "reduction_pct_int")
    for metric in scenario.process_metrics:
        report.add_improvement("process_metrics", metric.name, metric.before,
                               metric.after, metric.formula)
    return report


# ---------------------------------------------------------------------------
# Quick model fitting for end-to-end runs
# ---------------------------------------------------------------------------

def build_models(scenario: Scenario, events, labels,
                 train_rows: int = 600, seq_epochs: int = 2,
                 with_doc: bool = True) -> ModelBundle:
    """Small, fast model bundle fitted on a workload prefix.

    Accuracy targets live in the dedicated training tasks; this bundle only
    has to be a functioning scoring path for pipeline-level runs.
    """
    rows = np.stack([ev.features for ev in events[:train_rows]])
    pipeline = fit_pipeline(rows, k=min(scenario.projected_dim, rows.shape[1], train_rows - 1))
    projected = pipeline.transform(rows)
    compliant_rows = projected[
        [lbl.ground_truth is GroundTruth.COMPLIANT for lbl in labels[:train_rows]]]
    svm_model = train_svm(compliant_rows[:300], nu=0.1)

    seq_cfg = SeqModelConfig(
        input_dim=pipeline.output_dim,
        conv_channels=(8, 8, 8),
        lstm_hidden=(8, 8),
        epochs=seq_epochs,
        seed=scenario.seed,
    )
    seq_train = make_sequence_task(160, feature_dim=pipeline.output_dim,
                                   seed=scenario.seed + 1)
    seq_valid = make_sequence_task(40, feature_dim=pipeline.output_dim,
                                   seed=scenario.seed + 2)
    seq_model, _ = train_sequence_model(seq_cfg, seq_train, seq_valid)

    doc = None
    if with_doc:
        from .workload import make_doc_corpus

        texts, doc_labels = make_doc_corpus(160, seed=scenario.seed + 3)
        doc, _ = train_doc_classifier(texts, doc_labels, epochs=30)

    policy = myopic_policy()
    return ModelBundle(pipeline=pipeline, svm=svm_model, sequence=seq_model,
                       policy=policy, doc=doc)


def myopic_policy(cfg: dqn_mod.MdpConfig = dqn_mod.MdpConfig()) -> dqn_mod.QFunction:
    """Greedy-on-expected-immediate-reward routing table; fast and sensible."""
    q = dqn_mod.QFunction()
    for idx in range(dqn_mod.N_STATES):
        state = dqn_mod.state_from_index(idx)
        for a_idx, action in enumerate(dqn_mod.ACTIONS):
            q.table[idx, a_idx] = cfg.expected_reward(state, action)
    return q


# ---------------------------------------------------------------------------
# Full in-process run
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    scenario: Scenario
    engine: Engine
    metrics: dict
    report: MetricsReport
    events: list
    labels: list


def run_simulation(scenario: Scenario, out_dir: str | None = None,
                   models: ModelBundle | None = None,
                   use_wal: bool = True) -> SimulationResult:
    events, labels = generate_workload(scenario)
    if models is None:
        models = build_models(scenario, events, labels,
                              with_doc=scenario.doc_text_prob > 0)
    ruleset = parse_rules(demo_ruleset_text())
    wal_path = None
    if use_wal and out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        wal_path = os.path.join(out_dir, "engine.wal")
        if os.path.exists(wal_path):
            os.remove(wal_path)
    engine = Engine(ruleset=ruleset, models=models, config=EngineConfig(),
                    wal_path=wal_path, clock=VirtualClock())

    batch = 1000
    for start in range(0, len(events), batch):
        engine.ingest_many(events[start:start + batch])

    label_by_case = {lbl.case_id: lbl for lbl in labels}
    if scenario.resolve_queue:
        # simulated reviewers resolve the queue, always matching ground truth
        while engine.queue:
            case_id = engine.queue[0]
            truth = label_by_case[case_id].ground_truth
            decision = (DecisionAction.REJECT if truth is GroundTruth.VIOLATION
                        else DecisionAction.APPROVE)
            case = engine.get_case(case_id)
            engine.submit_verdict(Verdict(
                case_id=case_id, decision=decision, source=DecisionSource.HUMAN,
                reviewer_id="sim-reviewer-1", timestamp=case.created_at))
    engine.flush_windows()
    metrics = engine.metrics_snapshot()

    report = build_report(scenario, engine, metrics, label_by_case)
    result = SimulationResult(scenario=scenario, engine=engine, metrics=metrics,
                              report=report, events=events, labels=labels)
    if out_dir is not None:
        write_report_files(result, out_dir)
    return result


def build_report(scenario: Scenario, engine: Engine, metrics: dict,
                 label_by_case: dict) -> MetricsReport:
    if scenario.stage_table:
        report = simulate_process(scenario)
    else:
        report = MetricsReport()

    # decision quality against the synthetic ground truth
    correct = 0
    decided = 0
    for case_id, case in engine.cases.items():
        truth = label_by_case.get(case_id)
        if truth is None or not case.is_terminal:
            continue
        decided += 1
        approved = case.status in (CaseStatus.AUTO_APPROVED, CaseStatus.RESOLVED_APPROVED)
        if approved == (truth.ground_truth is GroundTruth.COMPLIANT):
            correct += 1
    accuracy = correct / decided if decided else 0.0

    high_alert_hits = 0
    high_alerts = 0
    for alert in engine.alerts:
        if alert.severity.value != "high" or alert.case_id.startswith("window:"):
            continue
        high_alerts += 1
        truth = label_by_case.get(alert.case_id)
        if truth is not None and truth.ground_truth is GroundTruth.VIOLATION:
            high_alert_hits += 1
    alert_precision = high_alert_hits / high_alerts if high_alerts else None

    report.add_value("module_kpis", "risk_identification_accuracy", round(accuracy, 4))
    report.add_value("module_kpis", "auto_approval_coverage_rate",
                     round(metrics["rule_coverage"], 4))
    report.add_value("module_kpis", "auto_decided_rate", round(metrics["auto_rate"], 4))
    report.add_value("module_kpis", "monitoring_throughput_eps",
                     round(metrics["throughput_eps"], 2))
    if alert_precision is not None:
        report.add_value("module_kpis", "alert_precision", round(alert_precision, 4))
    report.add_value("module_kpis", "human_review_rate",
                     round(metrics["by_decided_by"]["human"] / metrics["total_cases"], 4)
                     if metrics["total_cases"] else 0.0)
    return report


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

TABLES_HEADER = ["table", "metric", "before", "after", "value", "improvement_rate", "formula"]


def render_tables_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLES_HEADER)
    for row in report.rows:
        writer.writerow(row.as_csv_row())
    return buf.getvalue()


def render_metrics_csv(metrics: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in sorted(_flatten(metrics).items()):
        writer.writerow([key, value])
    return buf.getvalue()


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, prefix=f"{name}."))
        else:
            out[name] = value
    return out


def write_report_files(result: SimulationResult, out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "tables": os.path.join(out_dir, "tables.csv"),
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "manifest": os.path.join(out_dir, "run-manifest.json"),
    }
    with open(paths["tables"], "w", encoding="utf-8", newline="") as f:
        f.write(render_tables_csv(result.report))
    with open(paths["metrics"], "w", encoding="utf-8", newline="") as f:
        f.write(render_metrics_csv(result.metrics))
    scenario_blob = canonical_json(result.scenario.to_json_dict())
    manifest = {
        "scenario": result.scenario.name,
        "seed": result.scenario.seed,
        "event_count": result.scenario.event_count,
        "config_hash": hashlib.sha256(scenario_blob.encode("utf-8")).hexdigest(),
        "engine_state_hash": result.engine.state_hash(),
        "versions": {"autocomply": __version__, "numpy": np.__version__},
    }
    with open(paths["manifest"], "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return paths
