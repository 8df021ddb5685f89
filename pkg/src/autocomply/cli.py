"""Command-line entry point.

Verbs: train-svm, train-seq, train-doc, train-dqn, generate, simulate,
serve, bench, report, rules. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        return args.func(args) or 0
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autocomply",
        description="Compliance automation engine: training, simulation, serving, benching.")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train-svm", help="fit the one-class anomaly detector")
    p.add_argument("--nu", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=None,
                   help="kernel bandwidth; default = median heuristic")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--input", required=True, help=".npy or .csv matrix of rows")
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("train-seq", help="train the sequential risk scorer")
    p.add_argument("--config", required=True, help="JSON with model/training settings")
    p.add_argument("--data", required=True, help="directory with train.npz and valid.npz")
    p.add_argument("--out", required=True, help="checkpoint base path")
    p.set_defaults(func=cmd_train_seq)

    p = sub.add_parser("train-doc", help="train the document classifier")
    p.add_argument("--data", required=True, help="directory with train.jsonl and test.jsonl")
    p.add_argument("--out", required=True, help="checkpoint base path")
    p.add_argument("--epochs", type=int, default=60)
    p.set_defaults(func=cmd_train_doc)

    p = sub.add_parser("train-dqn", help="train the escalation-routing policy")
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--mode", choices=["tabular", "network"], default="tabular")
    p.add_argument("--out", required=True, help="output policy JSON")
    p.set_defaults(func=cmd_train_dqn)

    p = sub.add_parser("generate", help="emit synthetic workloads and training data")
    p.add_argument("--scenario", default="dataset-shape",
                   help="preset name or scenario JSON path")
    p.add_argument("--kind", choices=["events", "seq-task", "doc-corpus", "anomaly", "rules"],
                   default="events")
    p.add_argument("--count", type=int, default=None, help="override event/sample count")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="end-to-end seeded run with report files")
    p.add_argument("--scenario", default="securities-firm")
    p.add_argument("--count", type=int, default=None, help="override the event count")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-wal", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="closed-loop load bench against a service")
    p.add_argument("--url", default="http://127.0.0.1:8500")
    p.add_argument("--levels", default="5,20",
                   help="comma-separated concurrency levels")
    p.add_argument("--duration", type=float, default=10.0, help="seconds per level")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="render report files from a metrics snapshot")
    p.add_argument("--metrics", required=True, help="metrics snapshot JSON")
    p.add_argument("--scenario", default="securities-firm")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rules", help="rule-file tools")
    rsub = p.add_subparsers(dest="rules_command")
    pc = rsub.add_parser("check", help="validate a rule file and print canonical form")
    pc.add_argument("file")
    pc.set_defaults(func=cmd_rules_check)

    return parser


def _load_matrix(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


def cmd_train_svm(args) -> int:
    from .svm import KernelParams, train

    data = _load_matrix(args.input)
    kernel = KernelParams(args.gamma) if args.gamma is not None else None
    model = train(data, nu=args.nu, kernel=kernel, tol=args.tol)
    model.save(args.out)
    print(f"trained on {data.shape[0]} rows: {len(model.alphas)} support vectors, "
          f"rho={model.rho:.6f} -> {args.out}")
    return 0


def cmd_train_seq(args) -> int:
    from .domain import GroundTruth
    from .seqmodel import SeqModelConfig, SequenceSample, train_sequence_model

    with open(args.config, "r", encoding="utf-8") as f:
        raw = json.load(f)
    config = SeqModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in raw.items()})

    def load_split(name: str) -> list[SequenceSample]:
        blob = np.load(os.path.join(args.data, f"{name}.npz"))
        return [
            SequenceSample(seq, GroundTruth.VIOLATION if y else GroundTruth.COMPLIANT)
            for seq, y in zip(blob["sequences"], blob["labels"])
        ]

    model, history = train_sequence_model(config, load_split("train"), load_split("valid"))
    model.save(args.out)
    print(f"final train loss {history.train_loss[-1]:.4f}, "
          f"validation accuracy {history.valid_accuracy[-1]:.4f} -> {args.out}")
    return 0


def cmd_train_doc(args) -> int:
    from .docclf import train_doc_classifier

    def load_split(name: str):
        texts, labels = [], []
        with open(os.path.join(args.data, f"{name}.jsonl"), "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    row = json.loads(line)
                    texts.append(row["text"])
                    labels.append(row["label"])
        return texts, labels

    train_texts, train_labels = load_split("train")
    classes = tuple(sorted(set(train_labels)))
    model, history = train_doc_classifier(train_texts, train_labels,
                                          classes=classes, epochs=args.epochs)
    test_path = os.path.join(args.data, "test.jsonl")
    acc_note = ""
    if os.path.exists(test_path):
        test_texts, test_labels = load_split("test")
        hits = sum(1 for t, y in zip(test_texts, test_labels)
                   if model.classify(t)[0] == y)
        acc_note = f", test accuracy {hits / len(test_texts):.4f}"
    model.save(args.out)
    print(f"vocabulary {len(model.vocab)} terms, final loss {history[-1]:.4f}{acc_note} "
          f"-> {args.out}")
    return 0


def cmd_train_dqn(args) -> int:
    from .dqn import DqnTrainConfig, save_policy, state_from_index, train_dqn

    config = DqnTrainConfig(episodes=args.episodes, seed=args.seed, mode=args.mode)
    q = train_dqn(config)
    save_policy(q, args.out)
    greedy = {i: q.greedy_action(state_from_index(i)).value for i in range(12)}
    print(f"trained {args.episodes} episodes ({args.mode}); greedy policy: {greedy}")
    print(f"-> {args.out}")
    return 0


def cmd_generate(args) -> int:
    from . import workload
    from .wal import canonical_json

    os.makedirs(args.out_dir, exist_ok=True)
    scenario = workload.load_preset(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.count is not None:
        scenario.event_count = args.count

    if args.kind == "events":
        events, labels = workload.generate_workload(scenario)
        with open(os.path.join(args.out_dir, "events.jsonl"), "w", encoding="utf-8") as f:
            for ev in events:
                f.write(canonical_json(ev.to_json_dict()) + "\n")
        with open(os.path.join(args.out_dir, "labels.jsonl"), "w", encoding="utf-8") as f:
            for lbl in labels:
                f.write(canonical_json(lbl.to_json_dict()) + "\n")
        print(f"{len(events)} events -> {args.out_dir}")
    elif args.kind == "seq-task":
        count = args.count or 2500
        samples = workload.make_sequence_task(count, seed=scenario.seed)
        split = int(count * 0.8)
        for name, chunk in (("train", samples[:split]), ("valid", samples[split:])):
            np.savez(
                os.path.join(args.out_dir, f"{name}.npz"),
                sequences=np.stack([s.sequence for s in chunk]),
                labels=np.asarray([1 if s.label.value == "violation" else 0
                                   for s in chunk]))
        print(f"{split} train / {count - split} valid sequences -> {args.out_dir}")
    elif args.kind == "doc-corpus":
        count = args.count or 1000
        texts, labels = workload.make_doc_corpus(count, seed=scenario.seed)
        split = int(count * 0.8)
        for name, sl in (("train", slice(0, split)), ("test", slice(split, None))):
            with open(os.path.join(args.out_dir, f"{name}.jsonl"), "w", encoding="utf-8") as f:
                for text, label in zip(texts[sl], labels[sl]):
                    f.write(json.dumps({"text": text, "label": label}) + "\n")
        print(f"{count} documents -> {args.out_dir}")
    elif args.kind == "anomaly":
        train, test_x, is_anom = workload.make_anomaly_benchmark(seed=scenario.seed)
        np.savez(os.path.join(args.out_dir, "anomaly.npz"),
                 train=train, test=test_x, is_anomaly=is_anom)
        print(f"anomaly benchmark -> {args.out_dir}")
    elif args.kind == "rules":
        from .rules import generate_rules

        count = args.count or 2000
        path = os.path.join(args.out_dir, f"synthetic-{count}.rules")
        with open(path, "w", encoding="utf-8") as f:
            f.write(generate_rules(count, seed=scenario.seed))
        print(f"{count} rules -> {path}")
    return 0


def cmd_simulate(args) -> int:
    from .simulate import run_simulation
    from .workload import load_preset

    scenario = load_preset(args.scenario)
    if args.count is not None:
        scenario.event_count = args.count
    result = run_simulation(scenario, out_dir=args.out_dir, use_wal=not args.no_wal)
    m = result.metrics
    print(f"scenario {scenario.name}: {m['total_cases']} cases, "
          f"rule coverage {m['rule_coverage']:.3f}, auto rate {m['auto_rate']:.3f}, "
          f"pending {m['pending_review_depth']}")
    print(f"report files -> {args.out_dir}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.config)
    return 0


def cmd_bench(args) -> int:
    from .bench import bench

    levels = [int(x) for x in args.levels.split(",") if x.strip()]
    results = bench(args.url, levels, duration_s=args.duration, out_dir=args.out_dir)
    for r in results:
        p = r.percentiles()
        print(f"level {r.concurrency}: {r.requests} reqs, mean {r.mean_ms:.1f} ms, "
              f"p95 {p['p95']:.1f} ms, {r.tps:.0f} tps, "
              f"success {r.success_rate * 100:.2f}%")
    print(f"bench files -> {args.out_dir}")
    return 0


def cmd_report(args) -> int:
    import hashlib

    from . import __version__
    from .simulate import MetricsReport, render_metrics_csv, render_tables_csv, simulate_process
    from .wal import canonical_json
    from .workload import load_preset

    scenario = load_preset(args.scenario)
    with open(args.metrics, "r", encoding="utf-8") as f:
        metrics = json.load(f)
    if scenario.stage_table:
        report = simulate_process(scenario)
    else:
        report = MetricsReport()
    if metrics.get("total_cases"):
        report.add_value("module_kpis", "auto_approval_coverage_rate",
                         round(metrics["rule_coverage"], 4))
        report.add_value("module_kpis", "auto_decided_rate", round(metrics["auto_rate"], 4))
        report.add_value("module_kpis", "human_review_rate",
                         round(metrics["by_decided_by"]["human"] / metrics["total_cases"], 4))
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "tables.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(render_tables_csv(report))
    with open(os.path.join(args.out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(render_metrics_csv(metrics))
    manifest = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "config_hash": hashlib.sha256(
            canonical_json(scenario.to_json_dict()).encode("utf-8")).hexdigest(),
        "metrics_source": os.path.abspath(args.metrics),
        "versions": {"autocomply": __version__, "numpy": np.__version__},
    }
    with open(os.path.join(args.out_dir, "run-manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"report files -> {args.out_dir}")
    return 0


def cmd_rules_check(args) -> int:
    from .rules import DuplicateId, RuleSyntaxError, TypeMismatch, UnknownField, parse_rules_file

    try:
        ruleset = parse_rules_file(args.file)
    except (RuleSyntaxError, DuplicateId, UnknownField, TypeMismatch) as e:
        print(f"invalid: {e}", file=sys.stderr)
        return 1
    print(f"# {len(ruleset)} rules, canonical order")
    for line in ruleset.canonical_lines():
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
