"""Drive the HTTP service end to end: ingest, review queue, verdict, labels.

Starts uvicorn on a local port, submits a batch of events, resolves one
escalated case the way the review console would, and exports labels.
"""
import json
import tempfile
import threading
import time

import httpx
import uvicorn

from autocomply.engine import Engine
from autocomply.rules import parse_rules
from autocomply.service import create_app
from autocomply.simulate import build_models
from autocomply.workload import Scenario, demo_ruleset_text, generate_workload

scenario = Scenario(name="demo", seed=17, event_count=600, feature_dim=16,
                    projected_dim=4, n_accounts=50)
events, labels = generate_workload(scenario)
models = build_models(scenario, events, labels, train_rows=150, seq_epochs=1)

with tempfile.TemporaryDirectory() as wal_dir:
    engine = Engine(ruleset=parse_rules(demo_ruleset_text()), models=models,
                    wal_path=f"{wal_dir}/engine.wal")
    server = uvicorn.Server(uvicorn.Config(create_app(engine), host="127.0.0.1",
                                           port=8765, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)

    with httpx.Client(base_url="http://127.0.0.1:8765") as client:
        print("health:", client.get("/v1/health").json())
        body = [e.to_json_dict() for e in events]
        cases = client.post("/v1/events", json=body).json()
        print(f"ingested {len(cases)} events")

        queue = client.get("/v1/cases", params={"status": "pending_review"}).json()
        print(f"pending review: {queue['pending_review_depth']}")

        if queue["cases"]:
            target = queue["cases"][0]["case_id"]
            verdict = client.post(f"/v1/cases/{target}/verdict",
                                  json={"decision": "approve",
                                        "reviewer_id": "demo-reviewer"}).json()
            print(f"resolved {target} -> {verdict['status']}")
            exported = client.get("/v1/labels/export").text.strip().splitlines()
            print("labels exported:", [json.loads(x)["case_id"] for x in exported])

        print("metrics:", {k: v for k, v in client.get("/v1/metrics").json().items()
                           if k in ("total_cases", "rule_coverage", "auto_rate",
                                    "pending_review_depth")})
    server.should_exit = True
    thread.join(timeout=5)
