"""Shared vocabulary: events, cases, verdicts, alerts, labels.

Everything here is a plain value type. Mutation of authoritative state
happens only inside the engine's single-writer store; these objects are
safe to copy across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np


class Channel(str, Enum):
    ONLINE = "online"
    BRANCH = "branch"
    API = "api"


class AnomalyFlag(str, Enum):
    INLIER = "inlier"
    OUTLIER = "outlier"


class CaseStatus(str, Enum):
    PENDING_SCORE = "pending_score"
    AUTO_APPROVED = "auto_approved"
    AUTO_REJECTED = "auto_rejected"
    PENDING_REVIEW = "pending_review"
    RESOLVED_APPROVED = "resolved_approved"
    RESOLVED_REJECTED = "resolved_rejected"


TERMINAL_STATUSES = frozenset(
    {
        CaseStatus.AUTO_APPROVED,
        CaseStatus.AUTO_REJECTED,
        CaseStatus.RESOLVED_APPROVED,
        CaseStatus.RESOLVED_REJECTED,
    }
)


class DecisionSource(str, Enum):
    RULES = "rules"
    MODEL = "model"
    HUMAN = "human"


class DecisionAction(str, Enum):
    APPROVE = "approve"
    REJECT = "reject"


class Severity(str, Enum):
    INFO = "info"
    WARNING = "warning"
    HIGH = "high"


class GroundTruth(str, Enum):
    COMPLIANT = "compliant"
    VIOLATION = "violation"


class LabelOrigin(str, Enum):
    SYNTHETIC = "synthetic"
    HUMAN_REVIEW = "human_review"


class AlreadyResolved(Exception):
    """Verdict targets a case already in a terminal status."""


class SourceMismatch(Exception):
    """Verdict source is not legal for the case's current status."""


@dataclass(slots=True)
class Event:
    """One ingested transaction record (structured + optional document)."""

    id: str
    timestamp: int  # milliseconds since epoch
    account: str
    amount: float
    channel: Channel
    region: str
    features: Optional[np.ndarray] = None
    doc_text: Optional[str] = None

    def validate(self) -> None:
        if not self.id:
            raise ValueError("event id must be non-empty")
        if self.amount < 0:
            raise ValueError(f"event {self.id}: amount must be >= 0")
        if self.timestamp < 0:
            raise ValueError(f"event {self.id}: timestamp must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "timestamp": self.timestamp,
            "account": self.account,
            "amount": self.amount,
            "channel": self.channel.value,
            "region": self.region,
            "features": None if self.features is None else np.asarray(self.features, dtype=np.float64).tolist(),
            "doc_text": self.doc_text,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Event":
        feats = d.get("features")
        return cls(
            id=d["id"],
            timestamp=int(d["timestamp"]),
            account=d["account"],
            amount=float(d["amount"]),
            channel=Channel(d["channel"]),
            region=d["region"],
            features=None if feats is None else np.asarray(feats, dtype=np.float64),
            doc_text=d.get("doc_text"),
        )


@dataclass(slots=True)
class ComplianceCase:
    """Lifecycle wrapper around one event: scored, auto-decided or escalated, resolved."""

    case_id: str
    event_ref: str
    status: CaseStatus
    created_at: int
    risk_score: Optional[float] = None
    anomaly_flag: Optional[AnomalyFlag] = None
    doc_class: Optional[str] = None
    decided_by: Optional[DecisionSource] = None
    resolved_at: Optional[int] = None
    matched_rule_id: Optional[str] = None

    @property
    def is_terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES

    def to_json_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "event_ref": self.event_ref,
            "status": self.status.value,
            "created_at": self.created_at,
            "risk_score": self.risk_score,
            "anomaly_flag": None if self.anomaly_flag is None else self.anomaly_flag.value,
            "doc_class": self.doc_class,
            "decided_by": None if self.decided_by is None else self.decided_by.value,
            "resolved_at": self.resolved_at,
            "matched_rule_id": self.matched_rule_id,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ComplianceCase":
        return cls(
            case_id=d["case_id"],
            event_ref=d["event_ref"],
            status=CaseStatus(d["status"]),
            created_at=int(d["created_at"]),
            risk_score=d.get("risk_score"),
            anomaly_flag=None if d.get("anomaly_flag") is None else AnomalyFlag(d["anomaly_flag"]),
            doc_class=d.get("doc_class"),
            decided_by=None if d.get("decided_by") is None else DecisionSource(d["decided_by"]),
            resolved_at=d.get("resolved_at"),
            matched_rule_id=d.get("matched_rule_id"),
        )


@dataclass(slots=True)
class Verdict:
    """A single approve/reject decision on a case. At most one per case."""

    case_id: str
    decision: DecisionAction
    source: DecisionSource
    timestamp: int
    reviewer_id: Optional[str] = None

    def validate(self) -> None:
        if self.source is DecisionSource.HUMAN and not self.reviewer_id:
            raise ValueError("human verdicts must carry a reviewer_id")

    def to_json_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "decision": self.decision.value,
            "source": self.source.value,
            "reviewer_id": self.reviewer_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Verdict":
        return cls(
            case_id=d["case_id"],
            decision=DecisionAction(d["decision"]),
            source=DecisionSource(d["source"]),
            reviewer_id=d.get("reviewer_id"),
            timestamp=int(d["timestamp"]),
        )


@dataclass(slots=True)
class Alert:
    alert_id: str
    case_id: str
    severity: Severity
    reason: str
    emitted_at: int
    seq: int = 0

    def to_json_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "case_id": self.case_id,
            "severity": self.severity.value,
            "reason": self.reason,
            "emitted_at": self.emitted_at,
            "seq": self.seq,
        }


@dataclass(slots=True)
class Label:
    case_id: str
    ground_truth: GroundTruth
    origin: LabelOrigin

    def to_json_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "ground_truth": self.ground_truth.value,
            "origin": self.origin.value,
        }


# Legal (status, source) pairs for an incoming verdict. Terminal statuses
# are absorbing; escalated cases accept only human verdicts and fresh cases
# only automated ones.
_VERDICT_SOURCES_BY_STATUS = {
    CaseStatus.PENDING_SCORE: (DecisionSource.RULES, DecisionSource.MODEL),
    CaseStatus.PENDING_REVIEW: (DecisionSource.HUMAN,),
}

_RESULT_STATUS = {
    (CaseStatus.PENDING_SCORE, DecisionAction.APPROVE): CaseStatus.AUTO_APPROVED,
    (CaseStatus.PENDING_SCORE, DecisionAction.REJECT): CaseStatus.AUTO_REJECTED,
    (CaseStatus.PENDING_REVIEW, DecisionAction.APPROVE): CaseStatus.RESOLVED_APPROVED,
    (CaseStatus.PENDING_REVIEW, DecisionAction.REJECT): CaseStatus.RESOLVED_REJECTED,
}


def transition(case: ComplianceCase, verdict: Verdict) -> ComplianceCase:
    """Apply a verdict to a case, returning the resolved copy.

    Raises AlreadyResolved for terminal cases and SourceMismatch when the
    verdict source is not legal for the case's status.
    """
    if case.is_terminal:
        raise AlreadyResolved(f"case {case.case_id} already {case.status.value}")
    allowed = _VERDICT_SOURCES_BY_STATUS.get(case.status, ())
    if verdict.source not in allowed:
        raise SourceMismatch(
            f"case {case.case_id} in {case.status.value} cannot accept a "
            f"{verdict.source.value} verdict"
        )
    verdict.validate()
    if verdict.timestamp < case.created_at:
        raise ValueError(
            f"verdict timestamp {verdict.timestamp} precedes case creation {case.created_at}"
        )
    new_status = _RESULT_STATUS[(case.status, verdict.decision)]
    return replace(
        case,
        status=new_status,
        decided_by=verdict.source,
        resolved_at=verdict.timestamp,
    )
