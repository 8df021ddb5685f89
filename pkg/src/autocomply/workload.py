"""Synthetic workload generation: event streams, labels, and the dedicated
training tasks for each model.

Everything is seeded; a scenario with the same seed produces a
byte-identical stream. Violation signal is planted in the feature vectors
and document keywords, while amounts, regions and channels are drawn
independently of the label, so rule-coverage tuning and model-signal
tuning never interfere (each preset records its tuning constants).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .domain import Channel, Event, GroundTruth, Label, LabelOrigin
from .seqmodel import SequenceSample

EPOCH_MS = 1_700_000_000_000

REGIONS = ("domestic", "eu", "apac", "offshore")
CHANNELS = (Channel.ONLINE, Channel.API, Channel.BRANCH)

# document vocabulary: one disjoint keyword pool per class plus shared filler
DOC_KEYWORDS = {
    "data_security": ["encryption", "keyvault", "breach", "firewall", "cipher",
                      "intrusion", "hardening", "rotation", "credentials", "tokenized"],
    "privacy": ["consent", "gdpr", "subject", "erasure", "anonymization",
                "minimization", "profiling", "portability", "dpo", "cookies"],
    "operational": ["uptime", "maintenance", "sla", "rollout", "capacity",
                    "runbook", "failover", "staffing", "escrow", "audit_trail"],
    "non_compliance_risk": ["laundering", "sanctions", "structuring", "shell",
                            "smurfing", "kickback", "bribery", "evasion",
                            "mule", "layering"],
}
DOC_FILLER = ["the", "report", "review", "account", "quarter", "policy", "team",
              "update", "system", "client", "process", "record", "status", "item"]


@dataclass
class StageRow:
    """One process stage: manual hours per month vs hours after automation."""

    name: str
    before: float
    after: float


@dataclass
class ProcessMetricRow:
    """A before/after process metric with its improvement formula."""

    name: str
    before: float
    after: float
    formula: str  # reduction_pct_int | reduction_pct_1dp | relative_gain_pct_1dp


@dataclass
class Scenario:
    name: str
    seed: int
    event_count: int = 10_000
    event_rate_eps: float = 200.0
    violation_rate: float = 0.52
    n_accounts: int = 400
    feature_dim: int = 128
    projected_dim: int = 64
    violation_shift: float = 2.5
    shifted_dims: int = 6
    doc_text_prob: float = 0.25
    amount_bands: tuple = ((0.38, 1.0, 2_000.0),
                           (0.34, 2_000.0, 20_000.0),
                           (0.20, 20_000.0, 200_000.0),
                           (0.08, 200_000.0, 500_000.0))
    region_probs: tuple = (0.55, 0.20, 0.15, 0.10)
    channel_probs: tuple = (0.60, 0.25, 0.15)
    automation_coverage: float = 0.80
    stage_table: list = field(default_factory=list)  # StageRow list
    process_metrics: list = field(default_factory=list)  # ProcessMetricRow list
    resolve_queue: bool = True
    tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("scenario seed is mandatory")
        for p in (self.violation_rate, self.doc_text_prob, self.automation_coverage):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")

    @classmethod
    def from_json_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["amount_bands"] = tuple(tuple(b) for b in d.get("amount_bands", cls.amount_bands))
        d["region_probs"] = tuple(d.get("region_probs", cls.region_probs))
        d["channel_probs"] = tuple(d.get("channel_probs", cls.channel_probs))
        d["stage_table"] = [StageRow(**row) for row in d.get("stage_table", [])]
        d["process_metrics"] = [ProcessMetricRow(**row) for row in d.get("process_metrics", [])]
        return cls(**d)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "event_count": self.event_count,
            "event_rate_eps": self.event_rate_eps,
            "violation_rate": self.violation_rate,
            "n_accounts": self.n_accounts,
            "feature_dim": self.feature_dim,
            "projected_dim": self.projected_dim,
            "violation_shift": self.violation_shift,
            "shifted_dims": self.shifted_dims,
            "doc_text_prob": self.doc_text_prob,
            "amount_bands": [list(b) for b in self.amount_bands],
            "region_probs": list(self.region_probs),
            "channel_probs": list(self.channel_probs),
            "automation_coverage": self.automation_coverage,
            "stage_table": [vars(r) for r in self.stage_table],
            "process_metrics": [vars(r) for r in self.process_metrics],
            "resolve_queue": self.resolve_queue,
            "tuning": self.tuning,
        }


def load_preset(name: str) -> Scenario:
    """A preset bundled with the package, or a path to a scenario JSON file."""
    if name.endswith(".json"):
        with open(name, "r", encoding="utf-8") as f:
            return Scenario.from_json_dict(json.load(f))
    ref = resources.files("autocomply.data").joinpath(f"presets/{name}.json")
    with ref.open("r", encoding="utf-8") as f:
        return Scenario.from_json_dict(json.load(f))


def demo_ruleset_text() -> str:
    ref = resources.files("autocomply.data").joinpath("securities_firm.rules")
    with ref.open("r", encoding="utf-8") as f:
        return f.read()


# ---------------------------------------------------------------------------
# Event stream
# ---------------------------------------------------------------------------

def generate_workload(scenario: Scenario) -> tuple[list[Event], list[Label]]:
    """Seeded event stream plus ground-truth labels.

    Violations get a mean shift on the leading feature dimensions and
    violation-flavored document keywords; transaction attributes are drawn
    independently so rule coverage depends only on the band constants.
    """
    rng = np.random.default_rng(scenario.seed)
    n = scenario.event_count
    band_probs = np.asarray([b[0] for b in scenario.amount_bands])
    band_lo = np.asarray([b[1] for b in scenario.amount_bands])
    band_hi = np.asarray([b[2] for b in scenario.amount_bands])
    band_idx = rng.choice(len(band_probs), size=n, p=band_probs / band_probs.sum())
    amounts = band_lo[band_idx] + rng.random(n) * (band_hi[band_idx] - band_lo[band_idx])
    regions = rng.choice(len(REGIONS), size=n, p=np.asarray(scenario.region_probs))
    channels = rng.choice(len(CHANNELS), size=n, p=np.asarray(scenario.channel_probs))
    accounts = rng.integers(0, scenario.n_accounts, size=n)
    is_violation = rng.random(n) < scenario.violation_rate

    features = rng.normal(0.0, 1.0, size=(n, scenario.feature_dim))
    shift_cols = min(scenario.shifted_dims, scenario.feature_dim)
    features[is_violation, :shift_cols] += scenario.violation_shift

    gap_ms = max(1.0, 1000.0 / scenario.event_rate_eps)
    increments = rng.integers(0, max(int(2 * gap_ms), 2), size=n)
    timestamps = EPOCH_MS + np.cumsum(increments)

    doc_draw = rng.random(n) < scenario.doc_text_prob
    benign_classes = ["data_security", "privacy", "operational"]

    events: list[Event] = []
    labels: list[Label] = []
    for i in range(n):
        doc_text = None
        if doc_draw[i]:
            if is_violation[i]:
                pool = DOC_KEYWORDS["non_compliance_risk"]
            else:
                pool = DOC_KEYWORDS[benign_classes[int(rng.integers(0, 3))]]
            kw = [pool[int(rng.integers(0, len(pool)))] for _ in range(6)]
            filler = [DOC_FILLER[int(rng.integers(0, len(DOC_FILLER)))] for _ in range(5)]
            doc_text = " ".join(kw + filler)
        event_id = f"E{i:08d}"
        events.append(Event(
            id=event_id,
            timestamp=int(timestamps[i]),
            account=f"ACC-{accounts[i]:04d}",
            amount=float(np.round(amounts[i], 2)),
            channel=CHANNELS[channels[i]],
            region=REGIONS[regions[i]],
            features=features[i],
            doc_text=doc_text,
        ))
        labels.append(Label(
            case_id=f"case-{event_id}",
            ground_truth=GroundTruth.VIOLATION if is_violation[i] else GroundTruth.COMPLIANT,
            origin=LabelOrigin.SYNTHETIC,
        ))
    return events, labels


# ---------------------------------------------------------------------------
# Dedicated training tasks
# ---------------------------------------------------------------------------

def make_sequence_task(
    n: int,
    seq_len: int = 16,
    feature_dim: int = 8,
    burst_height: float = 3.5,
    seed: int = 0,
) -> list[SequenceSample]:
    """Burst-detection task: violation iff 3 consecutive high-amount steps.

    Negatives carry isolated spikes of the same height so the classifier
    must learn the run length, not just the peak value.
    """
    rng = np.random.default_rng(seed)
    samples: list[SequenceSample] = []
    for i in range(n):
        seq = rng.normal(0.0, 1.0, size=(seq_len, feature_dim))
        violation = bool(rng.random() < 0.5)
        if violation:
            start = int(rng.integers(0, seq_len - 2))
            seq[start:start + 3, 0] += burst_height
        else:
            # up to two isolated spikes, kept >= 2 steps apart
            spots = [int(p) for p in rng.choice(seq_len, size=2, replace=False)]
            spots.sort()
            seq[spots[0], 0] += burst_height
            if spots[1] - spots[0] >= 2:
                seq[spots[1], 0] += burst_height
        samples.append(SequenceSample(
            sequence=seq,
            label=GroundTruth.VIOLATION if violation else GroundTruth.COMPLIANT,
        ))
    return samples


def make_doc_corpus(n: int, seed: int = 0) -> tuple[list[str], list[str]]:
    """Disjoint-keyword corpus over the four compliance classes."""
    rng = np.random.default_rng(seed)
    classes = list(DOC_KEYWORDS)
    texts: list[str] = []
    labels: list[str] = []
    for i in range(n):
        cls = classes[int(rng.integers(0, len(classes)))]
        pool = DOC_KEYWORDS[cls]
        n_kw = int(rng.integers(4, 9))
        n_fill = int(rng.integers(3, 8))
        words = [pool[int(rng.integers(0, len(pool)))] for _ in range(n_kw)]
        words += [DOC_FILLER[int(rng.integers(0, len(DOC_FILLER)))] for _ in range(n_fill)]
        perm = rng.permutation(len(words))
        texts.append(" ".join(words[j] for j in perm))
        labels.append(cls)
    return texts, labels


def make_anomaly_benchmark(
    n_train: int = 400,
    n_test: int = 400,
    anomaly_rate: float = 0.15,
    dim: int = 8,
    distance: float = 5.0,
    seed: int = 0,
):
    """Gaussian inlier blob with injected far anomalies.

    Returns (train, test_x, test_is_anomaly); train is clean inlier data.
    """
    rng = np.random.default_rng(seed)
    train = rng.normal(0.0, 1.0, size=(n_train, dim))
    n_anom = int(round(n_test * anomaly_rate))
    test_in = rng.normal(0.0, 1.0, size=(n_test - n_anom, dim))
    directions = rng.normal(0.0, 1.0, size=(n_anom, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    test_out = directions * distance + rng.normal(0.0, 0.5, size=(n_anom, dim))
    test_x = np.vstack([test_in, test_out])
    is_anom = np.concatenate([np.zeros(n_test - n_anom, bool), np.ones(n_anom, bool)])
    order = rng.permutation(n_test)
    return train, test_x[order], is_anom[order]


def roc_auc(anomaly_scores: np.ndarray, is_anomaly: np.ndarray) -> float:
    """Rank-based AUC: P(score_anomaly > score_inlier), ties counted half."""
    scores = np.asarray(anomaly_scores, dtype=np.float64)
    pos = scores[np.asarray(is_anomaly, dtype=bool)]
    neg = scores[~np.asarray(is_anomaly, dtype=bool)]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both classes for AUC")
    order = np.argsort(np.concatenate([pos, neg]), kind="mergesort")
    ranks = np.empty(len(order), dtype=np.float64)
    ranks[order] = np.arange(1, len(order) + 1)
    # average ranks for ties
    all_scores = np.concatenate([pos, neg])
    sorted_scores = all_scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            avg = (i + j) / 2.0 + 1.0
            ranks[order[i:j + 1]] = avg
        i = j + 1
    rank_pos = ranks[:len(pos)].sum()
    n_pos, n_neg = len(pos), len(neg)
    return float((rank_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
