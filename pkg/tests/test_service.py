import json
import socket
import subprocess
import sys
import threading

import pytest

from ridematch.graph import write_dimacs
from ridematch.service import (
    Engine,
    LatencyHistogram,
    MatchServer,
    ServiceConfig,
    ServiceError,
    load_hierarchy,
    open_engine,
    read_config_file,
)
from ridematch.synthetic import chain_graph, grid_graph


def call(engine, **message):
    return json.loads(engine.handle_line(json.dumps(message)))


@pytest.fixture
def chain_engine(chain4, chain4_ch):
    return Engine(chain4, chain4_ch)


def test_health(chain_engine):
    assert call(chain_engine, op="health") == {"ok": True, "status": "up"}


def test_add_and_match(chain_engine):
    oid = call(chain_engine, op="add_offer", source=0, target=3, epsilon="1/2")["id"]
    got = call(chain_engine, op="match", source=1, target=2)
    assert got["ok"]
    (m,) = got["matches"]
    assert (m["offer"], m["pickup"], m["shared"], m["dropoff"], m["driver_detour"]) == (oid, 1, 1, 1, "0")


def test_request_with_identical_endpoints(chain_engine):
    oid = call(chain_engine, op="add_offer", source=0, target=3, epsilon=0)["id"]
    (m,) = call(chain_engine, op="match", source=1, target=1)["matches"]
    assert m["offer"] == oid and m["shared"] == 0


def test_remove_then_match(chain_engine):
    oid = call(chain_engine, op="add_offer", source=0, target=3, epsilon="1/2")["id"]
    assert call(chain_engine, op="remove_offer", id=oid) == {"ok": True, "removed": True}
    assert call(chain_engine, op="remove_offer", id=oid) == {"ok": True, "removed": False}
    assert call(chain_engine, op="match", source=1, target=2)["matches"] == []


def test_stats_after_inserts(chain_engine):
    for s, t in [(0, 3), (0, 2), (1, 3)]:
        call(chain_engine, op="add_offer", source=s, target=t, epsilon="0.1")
    call(chain_engine, op="match", source=1, target=2)
    stats = call(chain_engine, op="stats")["stats"]
    assert stats["offers"] == 3
    assert stats["forward_entries"] > 0 and stats["backward_entries"] > 0
    assert stats["matches_served"] == 1
    assert sum(stats["latency_histogram_us"].values()) == 1


def test_match_options_and_constraints(chain_engine):
    call(chain_engine, op="add_offer", source=0, target=3, epsilon="1/2", constraints={"window": [0, 100], "smoking": False})
    assert call(chain_engine, op="match", source=2, target=1)["matches"] == []
    assert len(call(chain_engine, op="match", source=2, target=1, epsilon="2/3")["matches"]) == 1
    assert call(chain_engine, op="match", source=1, target=2, constraints={"smoking": True})["matches"] == []
    assert len(call(chain_engine, op="match", source=1, target=2, constraints={"window": [50, 60]})["matches"]) == 1
    assert call(chain_engine, op="match", source=1, target=2, constraints={"window": [500, 600]})["matches"] == []


@pytest.mark.parametrize(
    "message, status, code",
    [
        ({"op": "add_offer", "source": 0, "target": 99, "epsilon": "0.1"}, 404, "unknown_node"),
        ({"op": "match", "source": 42, "target": 1}, 404, "unknown_node"),
        ({"op": "add_offer", "source": 0, "target": 3, "epsilon": "x"}, 400, "bad_epsilon"),
        ({"op": "add_offer", "source": 0, "target": 3, "epsilon": "-1"}, 422, "bad_epsilon"),
        ({"op": "add_offer", "source": 2, "target": 2, "epsilon": "0"}, 422, "degenerate_offer"),
        ({"op": "add_offer", "source": 0}, 400, "bad_request"),
        ({"op": "remove_offer", "id": "abc"}, 400, "bad_request"),
        ({"op": "fly"}, 400, "unknown_op"),
    ],
)
def test_errors(chain_engine, message, status, code):
    got = call(chain_engine, **message)
    assert not got["ok"]
    assert (got["status"], got["error"]["code"]) == (status, code)


def test_bad_json(chain_engine):
    got = json.loads(chain_engine.handle_line("{not json"))
    assert (got["status"], got["error"]["code"]) == (400, "bad_json")
    got = json.loads(chain_engine.handle_line("[1, 2]"))
    assert got["status"] == 400


def test_engine_errors_raise(chain_engine):
    with pytest.raises(ServiceError) as err:
        chain_engine.add_offer(0, 77, "0")
    assert err.value.status == 404


def test_latency_histogram_buckets():
    h = LatencyHistogram()
    for s in (0.0000005, 0.0015, 0.0015, 0.3):
        h.record(s)
    assert h.total == 4
    assert sum(h.snapshot().values()) == 4


@pytest.fixture
def grid_files(tmp_path):
    g = grid_graph(8, 8, seed=2)
    path = tmp_path / "g.gr"
    with open(path, "w") as fh:
        write_dimacs(g, fh)
    return g, path


def test_restart_replays_journal(tmp_path, grid_files):
    _, gpath = grid_files
    cfg = ServiceConfig(graph=str(gpath), journal=str(tmp_path / "j"), ch_snapshot=str(tmp_path / "ch.bin"))
    engine = open_engine(cfg)
    ids = [engine.add_offer(s, 65 - s, "1/5") for s in range(1, 20)]
    for oid in ids[::3]:
        engine.remove_offer(oid)
    before = engine.index.state_bytes()
    answers = [[m.to_dict() for m in engine.match(engine.request(s, 60 - s))] for s in range(1, 10)]
    engine.journal.close()
    assert (tmp_path / "ch.bin").exists()

    again = open_engine(cfg)
    assert again.index.state_bytes() == before
    assert [[m.to_dict() for m in again.match(again.request(s, 60 - s))] for s in range(1, 10)] == answers
    # ids keep increasing across restarts
    assert again.add_offer(1, 64, "0") > max(ids)
    again.journal.close()


def test_restart_after_torn_write(tmp_path, grid_files, caplog):
    _, gpath = grid_files
    journal = tmp_path / "j"
    cfg = ServiceConfig(graph=str(gpath), journal=str(journal))
    engine = open_engine(cfg)
    engine.add_offer(1, 64, "1/5")
    engine.journal.close()
    with open(journal, "ab") as fh:
        fh.write(b"INSERT 1 2 6")
    with caplog.at_level("WARNING"):
        again = open_engine(cfg)
    assert "torn" in caplog.text
    assert len(again.index) == 1
    again.journal.close()


def test_snapshot_mismatch_rebuilds(tmp_path, grid_files, caplog):
    g, gpath = grid_files
    snap = tmp_path / "ch.bin"
    load_hierarchy(chain_graph(5), str(snap))
    with caplog.at_level("WARNING"):
        ch = load_hierarchy(g, str(snap))
    assert "does not match" in caplog.text
    assert ch.fingerprint == g.fingerprint()


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "svc.conf"
    path.write_text("# service\ngraph = roads.gr\nport = 9000\nfsync = false\nmax_results = 5\n")
    values = read_config_file(path)
    cfg = ServiceConfig.from_mapping(values)
    assert (cfg.graph, cfg.port, cfg.fsync, cfg.max_results) == ("roads.gr", 9000, False, 5)
    with pytest.raises(ValueError):
        ServiceConfig.from_mapping({"colour": "blue"})
    path.write_text("port 9000\n")
    with pytest.raises(ValueError):
        read_config_file(path)


def _roundtrip(sock_file, message):
    sock_file.write((json.dumps(message) + "\n").encode())
    sock_file.flush()
    return json.loads(sock_file.readline())


def test_tcp_server_in_process(chain_engine):
    server = MatchServer(chain_engine, ("127.0.0.1", 0))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with socket.create_connection(server.server_address[:2], timeout=5) as sock:
            fh = sock.makefile("rwb")
            oid = _roundtrip(fh, {"op": "add_offer", "source": 0, "target": 3, "epsilon": "0.5"})["id"]
            assert _roundtrip(fh, {"op": "match", "source": 1, "target": 2})["matches"][0]["offer"] == oid
    finally:
        server.shutdown()
        server.server_close()


def test_serve_subprocess(tmp_path, grid_files):
    _, gpath = grid_files
    proc = subprocess.Popen(
        [sys.executable, "-m", "ridematch", "serve", "--graph", str(gpath), "--journal", str(tmp_path / "j"), "--port", "0"],
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        _, host, port = proc.stdout.readline().split()
        with socket.create_connection((host, int(port)), timeout=10) as sock:
            fh = sock.makefile("rwb")
            assert _roundtrip(fh, {"op": "health"})["ok"]
            assert _roundtrip(fh, {"op": "add_offer", "source": 1, "target": 64, "epsilon": "1/10"})["id"] == 0
    finally:
        proc.terminate()
        assert proc.wait(timeout=10) == 0
    assert (tmp_path / "j").read_text().startswith("INSERT 0 1 64 1/10")
