"""Bench harness and service lifecycle tests against a live uvicorn."""

import json
import threading
import time

import pytest
import uvicorn

from autocomply import bench as bench_mod
from autocomply.dqn import DqnTrainConfig, save_policy, train_dqn
from autocomply.engine import Engine
from autocomply.rules import parse_rules
from autocomply.seqmodel import SeqModelConfig, SequenceModel
from autocomply.service import ServiceConfig, build_engine, create_app, load_models
from autocomply.streaming import percentile
from autocomply.svm import KernelParams, train as train_svm
from autocomply.features import fit_pipeline
from autocomply.workload import demo_ruleset_text

import numpy as np

PORT = 8923
BASE = f"http://127.0.0.1:{PORT}"


@pytest.fixture(scope="module")
def live_service():
    engine = Engine(ruleset=parse_rules(demo_ruleset_text()), models=None)
    server = uvicorn.Server(uvicorn.Config(create_app(engine), host="127.0.0.1",
                                           port=PORT, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started and time.time() < deadline:
        time.sleep(0.05)
    assert server.started, "uvicorn did not start"
    yield engine
    server.should_exit = True
    thread.join(timeout=5)


def test_bench_levels_and_files(tmp_path, live_service):
    results = bench_mod.bench(BASE, levels=[2, 4], duration_s=1.5,
                              out_dir=str(tmp_path))
    assert len(results) == 2
    for r in results:
        assert r.requests > 0
        assert 0.0 <= r.success_rate <= 1.0
        assert r.tps >= 0.0
        # the report's percentiles equal nearest-rank over the raw log
        p = r.percentiles()
        for q in (50, 95, 99):
            assert p[f"p{q}"] == percentile(r.latencies_ms, q)

    csv_lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert csv_lines[0].split(",") == bench_mod.BENCH_CSV_HEADER
    assert len(csv_lines) == 3  # header + one row per level
    first_row = csv_lines[1].split(",")
    assert first_row[0] == "2"
    assert len(first_row) == 6

    detail = json.loads((tmp_path / "bench_detail.json").read_text())
    assert [d["concurrency"] for d in detail] == [2, 4]
    assert all(d["success_rate"] == 1.0 for d in detail)


def test_bench_unreachable_target():
    with pytest.raises(bench_mod.TargetUnreachable):
        bench_mod.bench("http://127.0.0.1:1", levels=[1], duration_s=0.5)


def _write_bundle(tmp_path) -> dict:
    rng = np.random.default_rng(0)
    pipeline = fit_pipeline(rng.normal(size=(60, 16)), k=4)
    pipeline.save(str(tmp_path / "pipeline.json"))
    svm_model = train_svm(pipeline.transform(rng.normal(size=(40, 16))), nu=0.2,
                          kernel=KernelParams(0.5))
    svm_model.save(str(tmp_path / "svm.json"))
    seq = SequenceModel(SeqModelConfig(input_dim=4, conv_channels=(4, 4, 4),
                                       lstm_hidden=(4, 4)))
    seq.save(str(tmp_path / "seq"))
    policy = train_dqn(DqnTrainConfig(episodes=5, seed=1))
    save_policy(policy, str(tmp_path / "policy.json"))
    return {
        "pipeline": str(tmp_path / "pipeline.json"),
        "svm": str(tmp_path / "svm.json"),
        "sequence": str(tmp_path / "seq"),
        "policy": str(tmp_path / "policy.json"),
    }


def test_load_models_from_checkpoints(tmp_path):
    paths = _write_bundle(tmp_path)
    bundle = load_models(paths)
    assert bundle is not None
    assert bundle.pipeline.output_dim == 4
    assert bundle.doc is None
    # an incomplete map yields no bundle rather than a partial one
    assert load_models({"svm": paths["svm"]}) is None


def test_build_engine_recovers_from_wal(tmp_path):
    rules_path = tmp_path / "rules.txt"
    rules_path.write_text("E1 1 amount > 50 -> escalate\nA1 2 amount <= 50 -> approve\n")
    config = ServiceConfig(wal_dir=str(tmp_path / "wal"),
                           rules_path=str(rules_path))
    engine = build_engine(config)
    from autocomply.domain import Channel, Event

    engine.ingest_many([
        Event(id="r1", timestamp=1000, account="a", amount=500.0,
              channel=Channel.ONLINE, region="eu"),
        Event(id="r2", timestamp=2000, account="a", amount=10.0,
              channel=Channel.ONLINE, region="eu"),
    ])
    engine.wal.close()
    live_hash = engine.state_hash()
    last_seq = engine.wal.last_seq

    recovered = build_engine(config)
    assert recovered.state_hash() == live_hash
    assert recovered.wal.next_seq == last_seq + 1
    # the recovered engine keeps appending with contiguous sequence numbers
    recovered.ingest_many([
        Event(id="r3", timestamp=3000, account="b", amount=5.0,
              channel=Channel.API, region="eu"),
    ])
    recovered.wal.flush()
    assert recovered.wal.last_seq == last_seq + 2
    assert recovered.cases["case-r3"].status.value == "auto_approved"
