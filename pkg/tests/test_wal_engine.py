import os

import numpy as np
import pytest

from autocomply import engine as engine_mod
from autocomply import wal as wal_mod
from autocomply.domain import (
    CaseStatus,
    DecisionAction,
    DecisionSource,
    Verdict,
)
from autocomply.engine import DuplicateEvent, Engine, UnknownCase, VirtualClock
from autocomply.rules import parse_rules
from autocomply.simulate import build_models
from autocomply.workload import Scenario, demo_ruleset_text, generate_workload


def small_scenario(count=300, seed=5) -> Scenario:
    return Scenario(name="unit", seed=seed, event_count=count, feature_dim=16,
                    projected_dim=4, doc_text_prob=0.2, n_accounts=40)


@pytest.fixture(scope="module")
def fitted_models():
    scenario = small_scenario()
    events, labels = generate_workload(scenario)
    return build_models(scenario, events, labels, train_rows=150, seq_epochs=1)


def fresh_engine(tmp_path, models=None, name="engine.wal") -> Engine:
    return Engine(
        ruleset=parse_rules(demo_ruleset_text()),
        models=models,
        wal_path=str(tmp_path / name),
        clock=VirtualClock(),
    )


# ---------------------------------------------------------------------------
# WAL mechanics
# ---------------------------------------------------------------------------

def test_wal_round_trip(tmp_path):
    path = str(tmp_path / "w.wal")
    writer = wal_mod.WalWriter(path)
    writer.append(wal_mod.KIND_EVENT, {"id": "e1"})
    writer.append(wal_mod.KIND_DECISION, {"case_id": "c1", "nested": {"x": 1}})
    writer.close()
    records = list(wal_mod.read_wal(path))
    assert [r.seq for r in records] == [1, 2]
    assert records[1].payload["nested"]["x"] == 1


def test_wal_corrupt_record_detected(tmp_path):
    path = str(tmp_path / "w.wal")
    writer = wal_mod.WalWriter(path)
    for i in range(5):
        writer.append(wal_mod.KIND_EVENT, {"id": f"e{i}"})
    writer.close()
    lines = open(path).read().splitlines()
    lines[2] = lines[2].replace('"id":"e2"', '"id":"tampered"')
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    with pytest.raises(wal_mod.CorruptRecord) as err:
        list(wal_mod.read_wal(path))
    assert err.value.seq == 3


def test_wal_gap_detected_with_index(tmp_path):
    path = str(tmp_path / "w.wal")
    writer = wal_mod.WalWriter(path)
    for i in range(7):
        writer.append(wal_mod.KIND_EVENT, {"id": f"e{i}"})
    writer.close()
    lines = open(path).read().splitlines()
    del lines[4]  # remove record 5
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    with pytest.raises(wal_mod.GapDetected) as err:
        list(wal_mod.read_wal(path))
    assert err.value.seq == 5


def test_wal_unknown_kind_rejected():
    writer = wal_mod.WalWriter(os.devnull)
    with pytest.raises(ValueError):
        writer.append("mystery", {})


# ---------------------------------------------------------------------------
# Engine pipeline
# ---------------------------------------------------------------------------

def test_rule_short_circuit_never_touches_models(tmp_path):
    # models=None means no scoring path; rules-decided events never need one
    engine = fresh_engine(tmp_path, models=None)
    events, _ = generate_workload(small_scenario(count=50))
    low = [ev for ev in events if ev.amount <= 100][:3]
    cases = engine.ingest_many(low)
    for case in cases:
        assert case.status is CaseStatus.AUTO_APPROVED
        assert case.decided_by is DecisionSource.RULES
        assert case.risk_score is None  # models never ran


def test_unmatched_without_models_parks_pending_score(tmp_path):
    engine = fresh_engine(tmp_path, models=None)
    events, _ = generate_workload(small_scenario(count=400))
    gray = [ev for ev in events
            if 2000 < ev.amount <= 20000 and ev.region == "offshore"][:2]
    assert gray, "scenario should contain uncovered events"
    cases = engine.ingest_many(gray)
    for case in cases:
        assert case.status is CaseStatus.PENDING_SCORE


def test_duplicate_event_rejected_store_unchanged(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=10))
    engine.ingest(events[0])
    before = engine.state_hash()
    with pytest.raises(DuplicateEvent):
        engine.ingest(events[0])
    assert engine.state_hash() == before
    # duplicates inside one batch also reject atomically
    with pytest.raises(DuplicateEvent):
        engine.ingest_many([events[1], events[1]])
    assert engine.state_hash() == before


def test_scored_path_sets_scores_and_routes(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=400))
    engine.ingest_many(events)
    scored = [c for c in engine.cases.values()
              if c.risk_score is not None]
    assert scored, "some cases must reach the model stage"
    for case in scored:
        assert 0.0 < case.risk_score < 1.0
        assert case.anomaly_flag is not None
    assert set(engine.queue) == {
        c.case_id for c in engine.cases.values()
        if c.status is CaseStatus.PENDING_REVIEW}


def test_verdict_path_and_labels(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=400))
    engine.ingest_many(events)
    if not engine.queue:
        pytest.skip("no escalations under this seed")
    depth = len(engine.queue)
    case_id = engine.queue[0]
    case = engine.get_case(case_id)
    updated = engine.submit_verdict(Verdict(
        case_id=case_id, decision=DecisionAction.APPROVE,
        source=DecisionSource.HUMAN, reviewer_id="r1",
        timestamp=case.created_at + 1000))
    assert updated.status is CaseStatus.RESOLVED_APPROVED
    assert len(engine.queue) == depth - 1
    assert len([l for l in engine.labels if l.case_id == case_id]) == 1
    with pytest.raises(UnknownCase):
        engine.submit_verdict(Verdict(case_id="case-missing",
                                      decision=DecisionAction.APPROVE,
                                      source=DecisionSource.HUMAN,
                                      reviewer_id="r1",
                                      timestamp=case.created_at + 1000))


def test_conservation_across_buckets(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=500))
    engine.ingest_many(events)
    m = engine.metrics_snapshot()
    assert m["total_cases"] == 500
    assert sum(m["by_status"].values()) == 500
    assert m["pending_review_depth"] == m["by_status"]["pending_review"]
    # every ingest contributed exactly one latency sample
    assert engine.latency.count == 500


def test_metrics_recount_oracle(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=400))
    engine.ingest_many(events)
    m = engine.metrics_snapshot()
    # recount straight from the case store
    recount_auto = sum(1 for c in engine.cases.values()
                       if c.status in (CaseStatus.AUTO_APPROVED, CaseStatus.AUTO_REJECTED))
    assert m["auto_decided"] == recount_auto
    recount_matched = sum(1 for c in engine.cases.values()
                          if c.matched_rule_id is not None)
    assert m["rule_matched"] == recount_matched
    assert m["rule_coverage"] == pytest.approx(recount_matched / 400)


def test_fresh_engine_metrics_all_zero(tmp_path):
    engine = fresh_engine(tmp_path, models=None)
    m = engine.metrics_snapshot()
    assert m["total_cases"] == 0
    assert m["auto_decided"] == 0
    assert all(v == 0 for v in m["by_status"].values())
    assert m["p99_ms"] == 0.0


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def test_empty_wal_replays_to_empty_state(tmp_path):
    path = str(tmp_path / "empty.wal")
    open(path, "w").close()
    replayed = engine_mod.replay(path)
    fresh = Engine()
    assert replayed.state_hash() == fresh.state_hash()


def test_replay_hash_matches_live(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, labels = generate_workload(small_scenario(count=300))
    for start in range(0, 300, 64):
        engine.ingest_many(events[start:start + 64])
    while engine.queue:
        cid = engine.queue[0]
        case = engine.get_case(cid)
        engine.submit_verdict(Verdict(case_id=cid, decision=DecisionAction.REJECT,
                                      source=DecisionSource.HUMAN, reviewer_id="r2",
                                      timestamp=case.created_at + 5))
    engine.wal.flush()
    replayed = engine_mod.replay(str(tmp_path / "engine.wal"))
    assert replayed.state_hash() == engine.state_hash()
    assert list(replayed.queue) == list(engine.queue)
    assert replayed.counters == engine.counters


def test_replay_uses_snapshots(tmp_path, fitted_models):
    engine = Engine(ruleset=parse_rules(demo_ruleset_text()), models=fitted_models,
                    wal_path=str(tmp_path / "engine.wal"), clock=VirtualClock())
    engine.wal.snapshot_every = 400  # force snapshots without 10k events
    events, _ = generate_workload(small_scenario(count=600, seed=6))
    for start in range(0, 600, 100):
        engine.ingest_many(events[start:start + 100])
    engine.wal.flush()
    snapshots = [f for f in os.listdir(tmp_path) if f.startswith("snapshot-")]
    assert snapshots, "snapshot cadence should have produced files"
    replayed = engine_mod.replay(str(tmp_path / "engine.wal"), use_snapshot=True)
    assert replayed.state_hash() == engine.state_hash()


def test_rules_loaded_record_replays(tmp_path):
    engine = fresh_engine(tmp_path, models=None)
    engine.load_rules("R1 1 amount >= 0 -> approve")
    events, _ = generate_workload(small_scenario(count=5))
    engine.ingest_many(events)
    engine.wal.flush()
    replayed = engine_mod.replay(str(tmp_path / "engine.wal"))
    assert len(replayed.ruleset) == 1
    assert replayed.state_hash() == engine.state_hash()


def test_wal_records_written_before_response(tmp_path, fitted_models):
    engine = fresh_engine(tmp_path, fitted_models)
    events, _ = generate_workload(small_scenario(count=3))
    engine.ingest_many(events)
    engine.wal.flush()
    kinds = [r.kind for r in wal_mod.read_wal(str(tmp_path / "engine.wal"))]
    assert kinds == [wal_mod.KIND_EVENT, wal_mod.KIND_DECISION] * 3


def test_gray_zone_route_matches_independent_stage_run(tmp_path, fitted_models):
    """An uncovered event's route equals what the pipeline stages produce
    when run one by one outside the engine."""
    from autocomply import dqn as dqn_mod
    from autocomply import rules as rules_mod
    from autocomply.domain import Channel, Event
    from autocomply.svm import decision_scores

    models = fitted_models
    ruleset = parse_rules(demo_ruleset_text())
    rng = np.random.default_rng(123)
    event = Event(id="gray-1", timestamp=1_700_000_500_000, account="ACC-0999",
                  amount=15_000.0, channel=Channel.API, region="offshore",
                  features=rng.normal(size=16))

    # stage 1: no rule covers mid-band offshore traffic
    fields = {"amount": event.amount, "timestamp": float(event.timestamp),
              "region": event.region, "channel": event.channel.value,
              "account": event.account}
    assert not rules_mod.evaluate(ruleset, fields).matched

    # stage 2 by hand: project, anomaly-score, sequence-score
    projected = models.pipeline.transform(event.features[None, :])
    svm_score = float(decision_scores(models.svm, projected)[0])
    expected_flag = "inlier" if svm_score >= 0 else "outlier"
    seq = np.repeat(projected, models.seq_len, axis=0)  # first event: padded history
    expected_risk = float(models.sequence.batch_scores(seq[None, :, :])[0])

    # stage 3 by hand: the policy routes from the composed state
    state = dqn_mod.ComplianceState(
        risk=dqn_mod.risk_bucket(expected_risk),
        anomaly=(dqn_mod.AnomalyFlag.INLIER if expected_flag == "inlier"
                 else dqn_mod.AnomalyFlag.OUTLIER),
        load=dqn_mod.QueueLoad.LIGHT)
    expected_route = models.policy.greedy_action(state)

    engine = fresh_engine(tmp_path, models, name="gray.wal")
    case = engine.ingest(event)
    assert case.matched_rule_id is None
    assert case.risk_score == pytest.approx(expected_risk, abs=1e-9)
    assert (case.anomaly_flag.value == expected_flag)
    if expected_route is dqn_mod.Action.ESCALATE:
        assert case.status is CaseStatus.PENDING_REVIEW
        assert case.case_id in engine.queue
    elif expected_route is dqn_mod.Action.AUTO_APPROVE:
        assert case.status is CaseStatus.AUTO_APPROVED
    else:
        assert case.status is CaseStatus.AUTO_REJECTED


def test_explicit_escalate_rule_forces_review_without_models(tmp_path):
    from autocomply.domain import Channel, Event

    engine = Engine(ruleset=parse_rules("E1 1 amount > 100 -> escalate"),
                    models=None, wal_path=str(tmp_path / "esc.wal"),
                    clock=VirtualClock())
    case = engine.ingest(Event(id="esc-1", timestamp=1000, account="x",
                               amount=500.0, channel=Channel.ONLINE, region="eu"))
    assert case.status is CaseStatus.PENDING_REVIEW
    assert case.matched_rule_id == "E1"
    assert list(engine.queue) == [case.case_id]
