import json

import pytest
from fastapi.testclient import TestClient

from autocomply.engine import Engine, VirtualClock
from autocomply.rules import parse_rules
from autocomply.service import create_app
from autocomply.simulate import build_models
from autocomply.workload import Scenario, demo_ruleset_text, generate_workload


def scenario(count=400, seed=21):
    return Scenario(name="svc", seed=seed, event_count=count, feature_dim=16,
                    projected_dim=4, doc_text_prob=0.2, n_accounts=40)


@pytest.fixture(scope="module")
def stack(tmp_path_factory):
    sc = scenario()
    events, labels = generate_workload(sc)
    models = build_models(sc, events, labels, train_rows=150, seq_epochs=1)
    wal_dir = tmp_path_factory.mktemp("svc")
    engine = Engine(ruleset=parse_rules(demo_ruleset_text()), models=models,
                    wal_path=str(wal_dir / "engine.wal"), clock=VirtualClock())
    client = TestClient(create_app(engine))
    return engine, client, events


def event_body(ev):
    return ev.to_json_dict()


def test_health(stack):
    _, client, _ = stack
    resp = client.get("/v1/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_single_event_ingest_and_fetch(stack):
    engine, client, events = stack
    resp = client.post("/v1/events", json=event_body(events[0]))
    assert resp.status_code == 200
    case = resp.json()
    assert case["event_ref"] == events[0].id
    got = client.get(f"/v1/cases/{case['case_id']}")
    assert got.status_code == 200
    assert got.json()["case_id"] == case["case_id"]
    assert got.json()["event"]["amount"] == events[0].amount


def test_array_ingest(stack):
    _, client, events = stack
    resp = client.post("/v1/events", json=[event_body(e) for e in events[1:4]])
    assert resp.status_code == 200
    assert len(resp.json()) == 3


def test_duplicate_event_conflicts(stack):
    _, client, events = stack
    assert client.post("/v1/events", json=event_body(events[10])).status_code == 200
    resp = client.post("/v1/events", json=event_body(events[10]))
    assert resp.status_code == 409
    assert resp.json()["error_code"] == "DuplicateEvent"


def test_malformed_event_is_400(stack):
    _, client, _ = stack
    resp = client.post("/v1/events", json={"id": "x"})
    assert resp.status_code == 400
    assert resp.json()["error_code"] == "ValidationError"


def test_unknown_case_404(stack):
    _, client, _ = stack
    resp = client.get("/v1/cases/case-nope")
    assert resp.status_code == 404
    assert resp.json()["error_code"] == "UnknownCase"


def test_queue_verdict_flow(stack):
    engine, client, events = stack
    client.post("/v1/events", json=[event_body(e) for e in events[20:300]])
    listing = client.get("/v1/cases", params={"status": "pending_review", "limit": 500})
    assert listing.status_code == 200
    pending = listing.json()["cases"]
    assert pending, "expected some escalations"
    assert pending == sorted(pending, key=lambda c: c["created_at"])
    target = pending[0]["case_id"]

    resp = client.post(f"/v1/cases/{target}/verdict",
                       json={"decision": "approve", "reviewer_id": "rev-7"})
    assert resp.status_code == 200
    assert resp.json()["status"] == "resolved_approved"

    again = client.post(f"/v1/cases/{target}/verdict",
                        json={"decision": "reject", "reviewer_id": "rev-7"})
    assert again.status_code == 409
    assert again.json()["error_code"] == "AlreadyResolved"

    after = client.get("/v1/cases", params={"status": "pending_review", "limit": 500})
    assert len(after.json()["cases"]) == len(pending) - 1

    export = client.get("/v1/labels/export")
    assert export.status_code == 200
    rows = [json.loads(line) for line in export.text.splitlines() if line]
    mine = [r for r in rows if r["case_id"] == target]
    assert len(mine) == 1
    assert mine[0]["origin"] == "human_review"
    assert mine[0]["ground_truth"] == "compliant"


def test_verdict_requires_reviewer(stack):
    _, client, _ = stack
    resp = client.post("/v1/cases/case-x/verdict", json={"decision": "approve"})
    assert resp.status_code == 400


def test_metrics_endpoint_consistency(stack):
    engine, client, _ = stack
    resp = client.get("/v1/metrics")
    assert resp.status_code == 200
    m = resp.json()
    assert m["total_cases"] == sum(m["by_status"].values())
    assert m["pending_review_depth"] == m["by_status"]["pending_review"]


def test_alerts_since_seq(stack):
    engine, client, _ = stack
    engine.flush_windows()
    resp = client.get("/v1/alerts", params={"since_seq": 0})
    assert resp.status_code == 200
    body = resp.json()
    seqs = [a["seq"] for a in body["alerts"]]
    assert seqs == sorted(seqs)
    if seqs:
        later = client.get("/v1/alerts", params={"since_seq": seqs[0]}).json()
        assert all(a["seq"] > seqs[0] for a in later["alerts"])


def test_rules_upload_and_validation(stack):
    engine, client, _ = stack
    good = "Z1 5 amount <= 10 -> approve\n"
    resp = client.post("/v1/rules", content=good.encode())
    assert resp.status_code == 200
    assert resp.json()["rules"] == 1
    bad = "Z1 5 amount > -> approve\n"
    resp = client.post("/v1/rules", content=bad.encode())
    assert resp.status_code == 400
    assert resp.json()["error_code"] == "RuleSyntaxError"
    # restore the demo set for other tests
    assert client.post("/v1/rules",
                       content=demo_ruleset_text().encode()).status_code == 200


def test_admin_model_hot_load(stack, tmp_path):
    engine, client, _ = stack
    path = str(tmp_path / "svm.json")
    engine.models.svm.save(path)
    resp = client.post("/v1/admin/models", json={"kind": "svm", "checkpoint_path": path})
    assert resp.status_code == 200
    resp = client.post("/v1/admin/models", json={"kind": "zzz", "checkpoint_path": path})
    assert resp.status_code == 400


def test_bearer_token_auth(tmp_path):
    engine = Engine(ruleset=parse_rules("R1 1 amount >= 0 -> approve"))
    client = TestClient(create_app(engine, bearer_token="sesame"))
    assert client.get("/v1/health").status_code == 200  # health stays open
    assert client.get("/v1/metrics").status_code == 401
    ok = client.get("/v1/metrics", headers={"Authorization": "Bearer sesame"})
    assert ok.status_code == 200
