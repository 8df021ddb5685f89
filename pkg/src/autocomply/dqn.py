"""Escalation-routing policy learned with Q-learning.

The workflow is modeled as a 12-state MDP: risk bucket (low/med/high,
cut at scores 0.33/0.66) x anomaly flag x queue load. Actions are
auto_approve / escalate / reject. The tabular learner applies the
standard one-step update
    Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))
with the gamma term dropped on terminal transitions. A small dense
network backend (same update target, squared TD error) is available for
the non-tabular mode.

Every environment constant lives in MdpConfig so the exact transition
and reward tensors can be rebuilt in closed form for testing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import nn
from .domain import AnomalyFlag

RISK_BUCKET_LOW_MAX = 0.33
RISK_BUCKET_MED_MAX = 0.66


class RiskBucket(str, Enum):
    LOW = "low"
    MED = "med"
    HIGH = "high"


class QueueLoad(str, Enum):
    LIGHT = "light"
    HEAVY = "heavy"


class Action(str, Enum):
    AUTO_APPROVE = "auto_approve"
    ESCALATE = "escalate"
    REJECT = "reject"


ACTIONS = (Action.AUTO_APPROVE, Action.ESCALATE, Action.REJECT)
RISK_BUCKETS = (RiskBucket.LOW, RiskBucket.MED, RiskBucket.HIGH)
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}


def risk_bucket(score: float) -> RiskBucket:
    if score < RISK_BUCKET_LOW_MAX:
        return RiskBucket.LOW
    if score < RISK_BUCKET_MED_MAX:
        return RiskBucket.MED
    return RiskBucket.HIGH


@dataclass(frozen=True)
class ComplianceState:
    risk: RiskBucket
    anomaly: AnomalyFlag
    load: QueueLoad

    def index(self) -> int:
        return _STATE_INDEX[(self.risk, self.anomaly, self.load)]


_STATE_INDEX: dict = {}
_STATES: list = []
for _r, _risk in enumerate(RISK_BUCKETS):
    for _a, _anom in enumerate((AnomalyFlag.INLIER, AnomalyFlag.OUTLIER)):
        for _q, _load in enumerate((QueueLoad.LIGHT, QueueLoad.HEAVY)):
            _STATE_INDEX[(_risk, _anom, _load)] = _r * 4 + _a * 2 + _q
            _STATES.append(ComplianceState(_risk, _anom, _load))


def state_from_index(idx: int) -> ComplianceState:
    return _STATES[idx]


N_STATES = 12
N_ACTIONS = 3
_ACTION_INDEX = {}


@dataclass(frozen=True)
class Transition:
    s: ComplianceState
    a: Action
    r: float
    s_next: ComplianceState
    terminal: bool


@dataclass(frozen=True)
class MdpConfig:
    """All workflow-environment constants in one block."""

    # chance a case is truly a violation, by risk bucket; outliers add a bump
    violation_prob: tuple[float, float, float] = (0.05, 0.40, 0.90)
    outlier_bump: float = 0.05
    violation_cap: float = 0.99
    # rewards: correct auto-decisions earn +1; mistakes are asymmetric
    # (approving a violation is far worse than rejecting a clean case);
    # escalation always pays the flat review cost and resolves correctly
    reward_approve_ok: float = 1.0
    reward_approve_bad: float = -10.0
    reward_reject_ok: float = 1.0
    reward_reject_bad: float = -5.0
    reward_escalate: float = -0.2
    # arrival mix for the next case
    bucket_dist: tuple[float, float, float] = (0.5, 0.3, 0.2)
    outlier_prob: tuple[float, float, float] = (0.10, 0.25, 0.50)
    # queue pressure: escalation pushes toward heavy, auto-decisions relieve it
    p_heavy_after_escalate: tuple[float, float] = (0.60, 0.90)  # from (light, heavy)
    p_heavy_after_auto: tuple[float, float] = (0.10, 0.40)
    # episodes end by a per-step stop chance; mean length = 1/episode_end_prob
    episode_end_prob: float = 1.0 / 64.0

    def violation_probability(self, risk: RiskBucket, anomaly: AnomalyFlag) -> float:
        p = self.violation_prob[RISK_BUCKETS.index(risk)]
        if anomaly is AnomalyFlag.OUTLIER:
            p += self.outlier_bump
        return min(p, self.violation_cap)

    def expected_reward(self, state: ComplianceState, action: Action) -> float:
        p = self.violation_probability(state.risk, state.anomaly)
        if action is Action.AUTO_APPROVE:
            return (1 - p) * self.reward_approve_ok + p * self.reward_approve_bad
        if action is Action.REJECT:
            return p * self.reward_reject_ok + (1 - p) * self.reward_reject_bad
        return self.reward_escalate


def env_step(
    state: ComplianceState,
    action: Action,
    rng: np.random.Generator,
    cfg: MdpConfig = MdpConfig(),
) -> tuple[float, ComplianceState, bool]:
    """Sample (reward, next_state, terminal) for one case decision."""
    p = cfg.violation_probability(state.risk, state.anomaly)
    is_violation = rng.random() < p
    if action is Action.AUTO_APPROVE:
        reward = cfg.reward_approve_bad if is_violation else cfg.reward_approve_ok
    elif action is Action.REJECT:
        reward = cfg.reward_reject_ok if is_violation else cfg.reward_reject_bad
    else:
        reward = cfg.reward_escalate

    load_idx = 0 if state.load is QueueLoad.LIGHT else 1
    if action is Action.ESCALATE:
        p_heavy = cfg.p_heavy_after_escalate[load_idx]
    else:
        p_heavy = cfg.p_heavy_after_auto[load_idx]
    next_load = QueueLoad.HEAVY if rng.random() < p_heavy else QueueLoad.LIGHT

    u = rng.random()
    acc = 0.0
    bucket_idx = len(RISK_BUCKETS) - 1
    for bi, prob in enumerate(cfg.bucket_dist):
        acc += prob
        if u < acc:
            bucket_idx = bi
            break
    next_risk = RISK_BUCKETS[bucket_idx]
    p_out = cfg.outlier_prob[bucket_idx]
    next_anom = AnomalyFlag.OUTLIER if rng.random() < p_out else AnomalyFlag.INLIER

    terminal = rng.random() < cfg.episode_end_prob
    return reward, ComplianceState(next_risk, next_anom, next_load), terminal


@dataclass
class QFunction:
    """Tabular state-action values with the update hyperparameters."""

    table: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, N_ACTIONS)))
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05

    def __post_init__(self):
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must be in [0, 1)")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")

    def greedy_action(self, state: ComplianceState) -> Action:
        return ACTIONS[int(np.argmax(self.table[state.index()]))]

    def epsilon(self, progress: float) -> float:
        progress = min(max(progress, 0.0), 1.0)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress


def q_update(q: QFunction, t: Transition, alpha: float | None = None) -> None:
    """One-step value update; the discounted max term is dropped when terminal."""
    a = q.learning_rate if alpha is None else alpha
    si, ai = t.s.index(), ACTION_INDEX[t.a]
    future = 0.0 if t.terminal else q.discount * float(np.max(q.table[t.s_next.index()]))
    q.table[si, ai] += a * (t.r + future - q.table[si, ai])


class ReplayBuffer:
    """Bounded ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity: int = 10_000, seed: int = 0):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._pos] = t
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        idx = self._rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


@dataclass
class DqnTrainConfig:
    episodes: int = 2000
    seed: int = 7
    mode: str = "tabular"  # or "network"
    learning_rate: float = 0.1
    discount: float = 0.9
    batch_size: int = 32
    # the trainer keeps full history: with only 36 state-action pairs, a
    # small ring would hold so few distinct transitions per pair that
    # minibatches replay identical rewards and Q chases the ring's
    # empirical mean instead of the true one
    buffer_capacity: int = 1_000_000
    # per-pair harmonic step-size decay keeps late updates small so the
    # table settles instead of chattering around the fixed point
    alpha_decay_tau: float = 200.0
    mdp: MdpConfig = field(default_factory=MdpConfig)
    # network mode
    hidden_size: int = 32
    net_lr: float = 5e-3
    target_sync_every: int = 100


def _initial_state(rng: np.random.Generator) -> ComplianceState:
    # exploring starts: uniform over the 12 states keeps rarely-reached
    # queue-load corners trained instead of starving them
    return state_from_index(int(rng.integers(0, N_STATES)))


def train_dqn(config: DqnTrainConfig = DqnTrainConfig()) -> QFunction:
    if config.episodes < 1:
        raise ValueError("episode budget must be >= 1")
    if config.mode == "network":
        return _train_network(config)
    return _train_tabular(config)


def _train_tabular(config: DqnTrainConfig) -> QFunction:
    rng = np.random.default_rng(config.seed)
    q = QFunction(learning_rate=config.learning_rate, discount=config.discount)
    buffer = ReplayBuffer(capacity=config.buffer_capacity, seed=config.seed + 1)
    visits = np.zeros((N_STATES, N_ACTIONS), dtype=np.int64)

    for episode in range(config.episodes):
        eps = q.epsilon(episode / max(config.episodes - 1, 1))
        state = _initial_state(rng)
        terminal = False
        while not terminal:
            if rng.random() < eps:
                action = ACTIONS[int(rng.integers(0, N_ACTIONS))]
            else:
                action = q.greedy_action(state)
            reward, nxt, terminal = env_step(state, action, rng, config.mdp)
            buffer.push(Transition(state, action, reward, nxt, terminal))
            # inlined q_update loop: same arithmetic, per-pair decayed alpha
            table = q.table
            gamma = q.discount
            base_alpha = config.learning_rate
            tau = config.alpha_decay_tau
            for t in buffer.sample(config.batch_size):
                si, ai = t.s.index(), ACTION_INDEX[t.a]
                visits[si, ai] += 1
                alpha = base_alpha * tau / (tau + visits[si, ai])
                future = 0.0 if t.terminal else gamma * table[t.s_next.index()].max()
                table[si, ai] += alpha * (t.r + future - table[si, ai])
            state = nxt
    return q


def _train_network(config: DqnTrainConfig) -> QFunction:
    """Dense net over one-hot states; same TD target, squared-error gradient."""
    rng = np.random.default_rng(config.seed)
    init = nn.SplitMix64(config.seed)
    w1 = nn.parameter(nn.xavier_uniform((N_STATES, config.hidden_size),
                                        N_STATES, config.hidden_size, init), name="w1")
    b1 = nn.parameter(np.zeros(config.hidden_size), name="b1")
    w2 = nn.parameter(nn.xavier_uniform((config.hidden_size, N_ACTIONS),
                                        config.hidden_size, N_ACTIONS, init), name="w2")
    b2 = nn.parameter(np.zeros(N_ACTIONS), name="b2")
    params = [w1, b1, w2, b2]
    opt = nn.Adam(params, lr=config.net_lr)
    target_weights = [p.data.copy() for p in params]
    eye = np.eye(N_STATES)

    def q_values(weights: list[np.ndarray], idx: np.ndarray) -> np.ndarray:
        h = np.maximum(eye[idx] @ weights[0] + weights[1], 0.0)
        return h @ weights[2] + weights[3]

    buffer = ReplayBuffer(capacity=config.buffer_capacity, seed=config.seed + 1)
    q = QFunction(learning_rate=config.learning_rate, discount=config.discount)
    steps = 0
    for episode in range(config.episodes):
        eps = q.epsilon(episode / max(config.episodes - 1, 1))
        state = _initial_state(rng)
        terminal = False
        while not terminal:
            if rng.random() < eps:
                action = ACTIONS[int(rng.integers(0, N_ACTIONS))]
            else:
                live = q_values([p.data for p in params], np.array([state.index()]))
                action = ACTIONS[int(np.argmax(live[0]))]
            reward, nxt, terminal = env_step(state, action, rng, config.mdp)
            buffer.push(Transition(state, action, reward, nxt, terminal))

            batch = buffer.sample(config.batch_size)
            s_idx = np.array([t.s.index() for t in batch])
            a_idx = np.array([ACTIONS.index(t.a) for t in batch])
            r = np.array([t.r for t in batch])
            ns_idx = np.array([t.s_next.index() for t in batch])
            alive = np.array([0.0 if t.terminal else 1.0 for t in batch])
            target = r + alive * config.discount * q_values(target_weights, ns_idx).max(axis=1)

            nn.zero_grads(params)
            h = nn.relu(nn.Tensor(eye[s_idx]) @ w1 + b1)
            qs = h @ w2 + b2
            mask = np.zeros((len(batch), N_ACTIONS))
            mask[np.arange(len(batch)), a_idx] = 1.0
            picked = nn.tsum(qs * nn.Tensor(mask) - nn.Tensor(mask * target[:, None]))
            # squared TD error, mean over batch
            diff = qs * nn.Tensor(mask) - nn.Tensor(mask * target[:, None])
            loss = nn.tmean(diff * diff)
            nn.backward(loss)
            opt.step()
            steps += 1
            if steps % config.target_sync_every == 0:
                target_weights = [p.data.copy() for p in params]
            state = nxt

    q.table = q_values([p.data for p in params], np.arange(N_STATES))
    return q


def save_policy(q: QFunction, path: str) -> None:
    policy = {
        state_key(state_from_index(i)): q.greedy_action(state_from_index(i)).value
        for i in range(N_STATES)
    }
    blob = {
        "policy": policy,
        "q_values": q.table.tolist(),
        "learning_rate": q.learning_rate,
        "discount": q.discount,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(blob, f, indent=1)


def load_policy(path: str) -> QFunction:
    with open(path, "r", encoding="utf-8") as f:
        blob = json.load(f)
    return QFunction(
        table=np.asarray(blob["q_values"], dtype=np.float64),
        learning_rate=float(blob.get("learning_rate", 0.1)),
        discount=float(blob.get("discount", 0.9)),
    )


def state_key(state: ComplianceState) -> str:
    return f"{state.risk.value}|{state.anomaly.value}|{state.load.value}"
