"""Append-only offer journal.

One record per line::

    INSERT <id> <s> <t> <epsilon> [window=<earliest>,<latest>] [<key>=<value> ...]
    REMOVE <id>

``s`` and ``t`` are external node ids, ``epsilon`` an exact rational written
as ``p/q``, an integer or a decimal string. A record counts only once its
terminating newline is on disk; a torn final line (crash mid-append) is
dropped on recovery and truncated away so later appends start clean.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Union

from .graph import RoadGraph
from .index import OfferIndex
from .model import ConstraintSet, format_fraction, to_fraction

log = logging.getLogger(__name__)


class JournalError(ValueError):
    pass


@dataclass(frozen=True)
class JournalRecord:
    op: str
    offer_id: int
    source: Optional[int] = None
    target: Optional[int] = None
    epsilon: Optional[Fraction] = None
    constraints: Optional[ConstraintSet] = None

    def to_line(self) -> str:
        if self.op == "REMOVE":
            return f"REMOVE {self.offer_id}\n"
        tokens = ["INSERT", str(self.offer_id), str(self.source), str(self.target), format_fraction(self.epsilon)]
        if self.constraints is not None:
            tokens.extend(self.constraints.to_tokens())
        return " ".join(tokens) + "\n"

    @classmethod
    def parse(cls, line: str, lineno: int = 0) -> "JournalRecord":
        parts = line.split()
        try:
            if parts and parts[0] == "REMOVE" and len(parts) == 2:
                return cls("REMOVE", int(parts[1]))
            if parts and parts[0] == "INSERT" and len(parts) >= 5:
                return cls(
                    "INSERT",
                    int(parts[1]),
                    int(parts[2]),
                    int(parts[3]),
                    to_fraction(parts[4]),
                    ConstraintSet.from_tokens(parts[5:]),
                )
        except (ValueError, ZeroDivisionError) as exc:
            raise JournalError(f"journal line {lineno}: {exc}") from None
        raise JournalError(f"journal line {lineno}: malformed record {line.strip()!r}")


def read_journal(path: Union[str, Path]) -> tuple[list[JournalRecord], int, bool]:
    """Parse complete records; returns (records, valid byte length, torn tail seen)."""
    path = Path(path)
    if not path.exists():
        return [], 0, False
    data = path.read_bytes()
    end = data.rfind(b"\n") + 1
    torn = end < len(data)
    records = []
    for lineno, raw in enumerate(data[:end].decode("utf-8").splitlines(), 1):
        if raw.strip():
            records.append(JournalRecord.parse(raw, lineno))
    return records, end, torn


def apply_records(records: Iterable[JournalRecord], index: OfferIndex, graph: RoadGraph) -> None:
    for rec in records:
        if rec.op == "INSERT":
            index.insert_offer(
                graph.node(rec.source), graph.node(rec.target), rec.epsilon, rec.constraints, offer_id=rec.offer_id
            )
        else:
            index.remove_offer(rec.offer_id)


class Journal:
    """Durable writer; recovers the existing file on open."""

    def __init__(self, path: Union[str, Path], fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.records, valid, torn = read_journal(self.path)
        if torn:
            log.warning("journal %s: dropping torn record after byte %d", self.path, valid)
            with open(self.path, "r+b") as fh:
                fh.truncate(valid)
                os.fsync(fh.fileno())
        self.recovered_torn = torn
        self._fh = open(self.path, "ab")

    def append(self, record: JournalRecord) -> None:
        self._fh.write(record.to_line().encode("utf-8"))
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
