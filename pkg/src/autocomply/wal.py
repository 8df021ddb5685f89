"""Append-only write-ahead log with checksummed JSON-lines records.

Record kinds: event_ingested, decision, verdict, rules_loaded. Sequence
numbers are dense from 1; each record carries a CRC32 of its canonical
payload bytes, so corruption and gaps are both detectable and reported
with the exact record index. A full state snapshot is written every
`snapshot_every` records to bound replay time.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

KIND_EVENT = "event_ingested"
KIND_DECISION = "decision"
KIND_VERDICT = "verdict"
KIND_RULES = "rules_loaded"
KINDS = (KIND_EVENT, KIND_DECISION, KIND_VERDICT, KIND_RULES)

SNAPSHOT_EVERY = 10_000


class CorruptRecord(Exception):
    def __init__(self, seq: int, message: str = ""):
        super().__init__(f"record {seq}: {message or 'checksum mismatch'}")
        self.seq = seq


class GapDetected(Exception):
    def __init__(self, seq: int):
        super().__init__(f"missing record {seq}")
        self.seq = seq


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class WriteAheadRecord:
    seq: int
    kind: str
    payload: dict


def _encode_record(seq: int, kind: str, payload: dict) -> str:
    body = canonical_json(payload)
    crc = zlib.crc32(body.encode("utf-8"))
    return f'{{"seq":{seq},"kind":"{kind}","crc":{crc},"payload":{body}}}'


class WalWriter:
    """Single-writer appender; `flush` makes records durable in batches."""

    def __init__(self, path: str, snapshot_every: int = SNAPSHOT_EVERY,
                 snapshot_fn: Optional[Callable[[int], None]] = None,
                 start_seq: int = 1):
        self.path = path
        self.snapshot_every = snapshot_every
        self.snapshot_fn = snapshot_fn
        self.next_seq = start_seq
        self._buffer: list[str] = []
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        return self.next_seq - 1

    def append(self, kind: str, payload: dict) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown WAL kind {kind!r}")
        seq = self.next_seq
        self.next_seq += 1
        self._buffer.append(_encode_record(seq, kind, payload))
        if len(self._buffer) >= 512:
            self._drain()
        if self.snapshot_fn is not None and seq % self.snapshot_every == 0:
            self.flush()
            self.snapshot_fn(seq)
        return seq

    def _drain(self) -> None:
        if self._buffer:
            self._fh.write("\n".join(self._buffer) + "\n")
            self._buffer.clear()

    def flush(self) -> None:
        self._drain()
        self._fh.flush()

    def close(self) -> None:
        self.flush()
        self._fh.close()


def read_wal(path: str, start_seq: int = 1) -> Iterator[WriteAheadRecord]:
    """Yield verified records in order; checksum or contiguity failures raise."""
    expected = start_seq
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorruptRecord(expected, f"unparseable line {line_no}: {e}") from None
            seq = raw.get("seq")
            if not isinstance(seq, int):
                raise CorruptRecord(expected, f"line {line_no} lacks a sequence number")
            if seq < start_seq:
                continue
            if seq != expected:
                raise GapDetected(expected if seq > expected else seq)
            body = canonical_json(raw["payload"])
            if zlib.crc32(body.encode("utf-8")) != raw.get("crc"):
                raise CorruptRecord(seq)
            kind = raw.get("kind")
            if kind not in KINDS:
                raise CorruptRecord(seq, f"unknown kind {kind!r}")
            yield WriteAheadRecord(seq=seq, kind=kind, payload=raw["payload"])
            expected += 1
