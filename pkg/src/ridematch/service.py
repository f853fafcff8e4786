"""Matching service: engine wrapper, journal-backed startup and a JSON-lines TCP server.

Protocol: each request is one JSON object on one line, each response too.

    {"op": "add_offer", "source": 12, "target": 40, "epsilon": "1/10",
     "constraints": {"window": [32400, 36000], "attributes": {"smoking": "false"}}}
    {"op": "remove_offer", "id": 3}
    {"op": "match", "source": 17, "target": 33, "max_results": 5}
    {"op": "stats"}
    {"op": "health"}

Node ids on the wire are the graph file's external ids. Successful responses
carry ``"ok": true``; failures carry ``"ok": false``, an HTTP-like
``status`` and ``error: {code, message}``.
"""
from __future__ import annotations

import json
import logging
import signal
import socketserver
import sys
import threading
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .ch import ContractionHierarchy, SnapshotError, build_ch, load_snapshot, save_snapshot
from .graph import RoadGraph, load_graph
from .index import IndexConfig, OfferError, OfferIndex
from .journal import Journal, JournalRecord, apply_records
from .matching import Match, MatchConfig, match_request
from .model import ConstraintSet, Request, to_fraction

log = logging.getLogger(__name__)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        super().__init__(message)


class RWLock:
    """Many readers or one writer; waiting writers block new readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._waiting = 0

    def acquire_read(self):
        with self._cond:
            while self._writer or self._waiting:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if not self._readers:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            self._waiting += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting -= 1
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _Held:
    def __init__(self, acquire, release):
        self._acquire, self._release = acquire, release

    def __enter__(self):
        self._acquire()

    def __exit__(self, *exc):
        self._release()


@dataclass
class ServiceStats:
    offers: int
    forward_entries: int
    backward_entries: int
    mean_bucket_size: float
    latency_histogram_us: dict[str, int]
    matches_served: int
    uptime_seconds: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class LatencyHistogram:
    """Counts per power-of-two microsecond bucket, labelled by upper bound."""

    def __init__(self):
        self.counts: dict[int, int] = {}
        self.total = 0
        self._lock = threading.Lock()

    def record(self, seconds: float) -> None:
        us = max(1, int(seconds * 1e6))
        upper = 1 << (us - 1).bit_length()
        with self._lock:
            self.counts[upper] = self.counts.get(upper, 0) + 1
            self.total += 1

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {f"<={k}": v for k, v in sorted(self.counts.items())}


class Engine:
    """Graph, hierarchy and offer index behind a reader/writer lock.

    Mutations are journaled before they are acknowledged: an insert is
    applied, then appended (and fsynced), and rolled back if the append
    fails; a removal is appended first and applied after.
    """

    def __init__(
        self,
        graph: RoadGraph,
        ch: ContractionHierarchy,
        index: Optional[OfferIndex] = None,
        match_config: Optional[MatchConfig] = None,
        journal: Optional[Journal] = None,
        max_results: Optional[int] = None,
    ):
        self.graph = graph
        self.ch = ch
        self.index = index or OfferIndex(ch)
        self.match_config = match_config or MatchConfig()
        self.journal = journal
        self.max_results = max_results
        self.latency = LatencyHistogram()
        self.started = time.monotonic()
        self._lock = RWLock()
        self.reading = _Held(self._lock.acquire_read, self._lock.release_read)
        self.writing = _Held(self._lock.acquire_write, self._lock.release_write)

    def _node(self, external_id) -> int:
        try:
            return self.graph.node(int(external_id))
        except (KeyError, ValueError, TypeError):
            raise ServiceError(404, "unknown_node", f"unknown node id {external_id!r}") from None

    def add_offer(self, source, target, epsilon, constraints: Optional[ConstraintSet] = None) -> int:
        s, t = self._node(source), self._node(target)
        try:
            eps = to_fraction(epsilon)
        except (ValueError, ZeroDivisionError, TypeError):
            raise ServiceError(400, "bad_epsilon", f"bad epsilon {epsilon!r}") from None
        constraints = constraints or ConstraintSet()
        with self.writing:
            try:
                oid = self.index.insert_offer(s, t, eps, constraints)
            except OfferError as exc:
                raise ServiceError(422, exc.code, str(exc)) from None
            if self.journal is not None:
                rec = JournalRecord("INSERT", oid, self.graph.external(s), self.graph.external(t), eps, constraints)
                try:
                    self.journal.append(rec)
                except Exception:
                    self.index.remove_offer(oid)
                    raise
        return oid

    def remove_offer(self, offer_id: int) -> bool:
        with self.writing:
            if offer_id not in self.index:
                return False
            if self.journal is not None:
                self.journal.append(JournalRecord("REMOVE", offer_id))
            return self.index.remove_offer(offer_id)

    def match(self, req: Request, cfg: Optional[MatchConfig] = None) -> list[Match]:
        if req.max_results is None and self.max_results is not None:
            req.max_results = self.max_results
        with self.reading:
            t0 = time.perf_counter()
            out = match_request(self.index, self.ch, req, cfg or self.match_config)
            self.latency.record(time.perf_counter() - t0)
        return out

    def request(self, source, target, constraints=None, max_results=None) -> Request:
        return Request(self._node(source), self._node(target), constraints or ConstraintSet(), max_results)

    def stats(self) -> ServiceStats:
        with self.reading:
            fwd, bwd = self.index.entry_counts()
            buckets = self.index.bucket_count()
            k = len(self.index)
        return ServiceStats(
            offers=k,
            forward_entries=fwd,
            backward_entries=bwd,
            mean_bucket_size=(fwd + bwd) / buckets if buckets else 0.0,
            latency_histogram_us=self.latency.snapshot(),
            matches_served=self.latency.total,
            uptime_seconds=time.monotonic() - self.started,
        )

    # -- wire handling

    def handle(self, message: dict) -> dict:
        op = message.get("op")
        if op == "health":
            return {"ok": True, "status": "up"}
        if op == "stats":
            return {"ok": True, "stats": self.stats().to_dict()}
        if op == "add_offer":
            _require(message, "source", "target", "epsilon")
            cons = _constraints(message.get("constraints"))
            oid = self.add_offer(message["source"], message["target"], message["epsilon"], cons)
            return {"ok": True, "id": oid}
        if op == "remove_offer":
            _require(message, "id")
            try:
                oid = int(message["id"])
            except (TypeError, ValueError):
                raise ServiceError(400, "bad_request", "id must be an integer") from None
            return {"ok": True, "removed": self.remove_offer(oid)}
        if op == "match":
            _require(message, "source", "target")
            max_results = message.get("max_results")
            try:
                req = self.request(message["source"], message["target"], _constraints(message.get("constraints")), max_results)
                cfg = None
                if any(k in message for k in ("driver_weight", "passenger_weight", "epsilon")):
                    base = self.match_config
                    cfg = MatchConfig(
                        message.get("driver_weight", base.driver_weight),
                        message.get("passenger_weight", base.passenger_weight),
                        message.get("epsilon", base.epsilon_override),
                    )
            except (ValueError, ZeroDivisionError, TypeError) as exc:
                raise ServiceError(400, "bad_request", str(exc)) from None
            matches = self.match(req, cfg)
            return {"ok": True, "matches": [m.to_dict() for m in matches]}
        raise ServiceError(400, "unknown_op", f"unknown op {op!r}")

    def handle_line(self, line: str) -> str:
        try:
            message = json.loads(line)
            if not isinstance(message, dict):
                raise ServiceError(400, "bad_request", "request must be a JSON object")
            response = self.handle(message)
        except json.JSONDecodeError as exc:
            response = _error(400, "bad_json", str(exc))
        except ServiceError as exc:
            response = _error(exc.status, exc.code, str(exc))
        except Exception as exc:  # keep serving on engine bugs
            log.exception("request failed")
            response = _error(500, "internal", str(exc))
        return json.dumps(response, separators=(",", ":"))


def _error(status, code, message):
    return {"ok": False, "status": status, "error": {"code": code, "message": message}}


def _require(message: dict, *keys):
    missing = [k for k in keys if k not in message]
    if missing:
        raise ServiceError(400, "bad_request", f"missing fields {missing}")


def _constraints(data) -> ConstraintSet:
    try:
        return ConstraintSet.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ServiceError(400, "bad_constraints", str(exc)) from None


# ---------------------------------------------------------------- startup


@dataclass
class ServiceConfig:
    graph: str = ""
    graph_format: str = "dimacs-gr"
    symmetric: bool = False
    ch_snapshot: str = ""
    journal: str = "offers.journal"
    host: str = "127.0.0.1"
    port: int = 7878
    driver_weight: str = "1"
    passenger_weight: str = "0"
    max_results: int = 0
    fsync: bool = True
    shard_by_day: bool = False

    def __post_init__(self):
        if not 0 <= int(self.port) <= 65535:
            raise ValueError(f"port {self.port} out of range")

    @classmethod
    def from_mapping(cls, values: dict) -> "ServiceConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            default = known[key].default
            if isinstance(default, bool):
                kwargs[key] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def match_config(self) -> MatchConfig:
        return MatchConfig(self.driver_weight, self.passenger_weight)


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def load_hierarchy(graph: RoadGraph, snapshot: Optional[str]) -> ContractionHierarchy:
    """Reuse the snapshot if it was built from this exact graph, else rebuild (and save)."""
    if snapshot and Path(snapshot).exists():
        try:
            with open(snapshot, "rb") as fh:
                ch = load_snapshot(fh)
            if ch.fingerprint == graph.fingerprint() and ch.node_count == graph.node_count:
                return ch
            log.warning("snapshot %s does not match graph; rebuilding", snapshot)
        except (SnapshotError, OSError, ValueError) as exc:
            log.warning("snapshot %s unreadable (%s); rebuilding", snapshot, exc)
    ch = build_ch(graph)
    if snapshot:
        tmp = Path(str(snapshot) + ".tmp")
        with open(tmp, "wb") as fh:
            save_snapshot(ch, fh)
        tmp.replace(snapshot)
    return ch


def open_engine(cfg: ServiceConfig) -> Engine:
    graph = load_graph(cfg.graph, cfg.graph_format, cfg.symmetric)
    ch = load_hierarchy(graph, cfg.ch_snapshot or None)
    index = OfferIndex(ch, IndexConfig(shard_by_day=cfg.shard_by_day))
    journal = Journal(cfg.journal, fsync=cfg.fsync)
    apply_records(journal.records, index, graph)
    log.info("replayed %d journal records, %d live offers", len(journal.records), len(index))
    return Engine(graph, ch, index, cfg.match_config(), journal, cfg.max_results or None)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        engine: Engine = self.server.engine
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            self.wfile.write((engine.handle_line(line) + "\n").encode("utf-8"))
            self.wfile.flush()


class MatchServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, engine: Engine, address: tuple[str, int]):
        self.engine = engine
        super().__init__(address, _Handler)


def serve(cfg: ServiceConfig, ready=None) -> None:
    """Start up (graph, hierarchy, journal replay) and serve until SIGINT/SIGTERM."""
    engine = open_engine(cfg)
    server = MatchServer(engine, (cfg.host, cfg.port))
    host, port = server.server_address[:2]
    stop = threading.Event()

    def _shutdown(*_):
        stop.set()

    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGTERM, _shutdown)
        signal.signal(signal.SIGINT, _shutdown)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    print(f"listening {host} {port}", flush=True, file=sys.stdout)
    if ready is not None:
        ready(server)
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        engine.journal.close()
