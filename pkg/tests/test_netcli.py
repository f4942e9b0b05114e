"""Server/client over TCP and in process, plus the command-line interface."""

import socket
import struct

import numpy as np
import pytest

from sidepir import client, wire
from sidepir.capacity import SchemeParams
from sidepir.cli import main as cli_main
from sidepir.errors import CorruptionError
from sidepir.field import standard_field
from sidepir.server import DatabaseServer, ServerCore
from sidepir.store import random_store

SECRET = bytes(range(32))


@pytest.fixture(scope="module")
def golden1_store():
    return random_store(standard_field(4), 3, 8, np.random.default_rng(100))


def tcp_transports(servers):
    return [client.TcpTransport("127.0.0.1", s.port) for s in servers]


def test_tcp_retrieval_golden_1(golden1_store):
    params = SchemeParams(3, 1, 2, 1)
    servers = [DatabaseServer(golden1_store).start() for _ in range(2)]
    try:
        transports = tcp_transports(servers)
        result = client.retrieve(transports, params, theta=1,
                                 side=golden1_store.side_information({3}), seed=5)
        for t in transports:
            t.close()
    finally:
        for s in servers:
            s.stop()
    assert np.array_equal(result.message, golden1_store.message(1))
    assert result.downloaded_symbols == 12
    assert [len(wire.parse_answer(standard_field(4), t.answer_received)[1])
            for t in result.transcripts] == [6, 6]
    assert result.rate == result.capacity


def test_transcripts_identical_tcp_vs_local(golden1_store):
    params = SchemeParams(3, 1, 2, 1)
    side = golden1_store.side_information({3})
    servers = [DatabaseServer(golden1_store).start() for _ in range(2)]
    try:
        transports = tcp_transports(servers)
        over_tcp = client.retrieve(transports, params, theta=2, side=side, seed=77)
        for t in transports:
            t.close()
    finally:
        for s in servers:
            s.stop()
    sims = client.local_simulator(golden1_store, 2)
    local = client.retrieve(sims, params, theta=2, side=side, seed=77)
    assert over_tcp.transcripts == local.transcripts
    assert np.array_equal(over_tcp.message, local.message)


def test_replica_mismatch_aborts(golden1_store):
    params = SchemeParams(3, 1, 2, 1)
    other = random_store(standard_field(4), 3, 8, np.random.default_rng(101))
    sims = [client.LocalTransport(ServerCore(golden1_store)),
            client.LocalTransport(ServerCore(other))]
    with pytest.raises(CorruptionError):
        client.retrieve(sims, params, theta=1,
                        side=golden1_store.side_information({3}), seed=1)


def test_wrong_side_file_detected_in_raw_mode(golden1_store):
    params = SchemeParams(3, 1, 2, 1)
    sims = client.local_simulator(golden1_store, 2)
    wrong = golden1_store.message(3).copy()
    wrong[2] ^= 3
    with pytest.raises(CorruptionError):
        client.retrieve(sims, params, theta=1, side={3: wrong}, seed=2, raw=True)


def test_stpir_retrieval_and_shortcut():
    f4 = standard_field(4)
    store = random_store(f4, 3, 2, np.random.default_rng(102))
    params = SchemeParams(3, 0, 3, 1)
    servers = [DatabaseServer(store, role="stpir", secret=SECRET).start()
               for _ in range(3)]
    try:
        transports = tcp_transports(servers)
        result = client.retrieve(transports, params, theta=3, side={},
                                 seed=9, scheme="stpir")
        for t in transports:
            t.close()
        shortcut_params = SchemeParams(3, 2, 3, 1)
        tr = tcp_transports(servers[:1])
        short = client.retrieve(tr, shortcut_params, theta=1,
                                side=store.side_information({2, 3}),
                                seed=10, scheme="stpir")
        tr[0].close()
    finally:
        for s in servers:
            s.stop()
    assert np.array_equal(result.message, store.message(3))
    assert result.downloaded_symbols == 3
    assert np.array_equal(short.message, store.message(1))
    assert short.rate == 1


def test_server_error_frames(golden1_store):
    core = ServerCore(golden1_store)
    session = core.new_session()
    # query before params
    ftype, payload = core.handle_frame(session, wire.TYPE_QUERY, b"\x01")
    assert ftype == wire.TYPE_ERROR
    assert wire.parse_error_payload(payload)[0] == wire.ERR_PROTOCOL
    # unknown frame type leaves the session usable
    ftype, payload = core.handle_frame(session, 0x66, b"")
    assert ftype == wire.TYPE_ERROR
    ok = wire.params_payload({"scheme": "tpir", "endpoint": 1, "n_db": 2,
                              "k": 3, "m": 1, "t": 1, "w": 4,
                              "message_length": 8})
    ftype, payload = core.handle_frame(session, wire.TYPE_PARAMS, ok)
    assert ftype == wire.TYPE_PARAMS
    # malformed query -> 0x02, session still open
    ftype, payload = core.handle_frame(session, wire.TYPE_QUERY, b"\x01trunc")
    assert ftype == wire.TYPE_ERROR
    assert wire.parse_error_payload(payload)[0] == wire.ERR_MALFORMED_QUERY


def test_out_of_range_symbol_reference(golden1_store):
    """A slot naming a message the store does not hold is refused."""
    from sidepir.tpir_psi import build_plan, database_queries
    import dataclasses
    core = ServerCore(golden1_store)
    session = core.new_session()
    core.handle_frame(session, wire.TYPE_PARAMS, wire.params_payload(
        {"scheme": "tpir", "endpoint": 1, "n_db": 2, "k": 3, "m": 1, "t": 1,
         "w": 4, "message_length": 8}))
    plan, state = build_plan(SchemeParams(3, 1, 2, 1), 1, 11)
    q = database_queries(plan, state)[0]
    bad = dataclasses.replace(q, slot_members=((7,),) + q.slot_members[1:])
    ftype, payload = core.handle_frame(session, wire.TYPE_QUERY,
                                       wire.serialize_database_query(bad))
    assert ftype == wire.TYPE_ERROR
    assert wire.parse_error_payload(payload)[0] == wire.ERR_MALFORMED_QUERY


def test_params_mismatch(golden1_store):
    core = ServerCore(golden1_store)
    bad = wire.params_payload({"scheme": "tpir", "endpoint": 1, "n_db": 2,
                               "k": 5, "m": 1, "t": 1, "w": 4,
                               "message_length": 8})
    ftype, payload = core.handle_frame(core.new_session(), wire.TYPE_PARAMS, bad)
    assert ftype == wire.TYPE_ERROR
    assert wire.parse_error_payload(payload)[0] == wire.ERR_STORE_MISMATCH


def test_truncated_frame_over_tcp(golden1_store):
    server = DatabaseServer(golden1_store).start()
    try:
        sock = socket.create_connection(("127.0.0.1", server.port), timeout=5)
        sock.sendall(b"PIR1" + bytes([wire.TYPE_QUERY]) + struct.pack("<I", 50) + b"xx")
        sock.shutdown(socket.SHUT_WR)
        data = sock.makefile("rb").read()
        sock.close()
    finally:
        server.stop()
    ftype, payload = wire.read_frame(__import__("io").BytesIO(data))
    assert ftype == wire.TYPE_ERROR
    assert wire.parse_error_payload(payload)[0] == wire.ERR_MALFORMED_FRAME


# ---------------------------------------------------------------------------
# command-line interface


def test_cli_capacity(capsys):
    assert cli_main(["capacity", "--K", "4", "--M", "1", "--N", "1", "--T", "1"]) == 0
    assert capsys.readouterr().out.strip() == "1/3"
    assert cli_main(["capacity", "--K", "3", "--M", "0", "--N", "3", "--T", "1",
                     "--symmetric", "--rho", "1/4"]) == 0
    assert capsys.readouterr().out.strip() == "0"
    assert cli_main(["capacity", "--K", "3", "--M", "0", "--N", "3", "--T", "1",
                     "--symmetric", "--rho", "1/2"]) == 0
    assert capsys.readouterr().out.strip() == "2/3"


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        cli_main(["capacity", "--K", "3"])
    assert err.value.code == 2


def test_cli_store_serve_retrieve(tmp_path, capsys):
    store_path = tmp_path / "store.pir"
    side_path = tmp_path / "side.pir"
    out_path = tmp_path / "msg.bin"
    assert cli_main(["gen-store", "--scheme", "tpir", "--K", "3", "--M", "1",
                     "--N", "2", "--T", "1", "--seed", "7",
                     "--out", str(store_path),
                     "--extract-side", "3", "--side-out", str(side_path)]) == 0
    capsys.readouterr()
    store = wire.read_store(store_path)
    servers = [DatabaseServer(store).start() for _ in range(2)]
    try:
        endpoints = ",".join(f"127.0.0.1:{s.port}" for s in servers)
        code = cli_main(["retrieve", "--endpoints", endpoints, "--K", "3",
                         "--M", "1", "--N", "2", "--T", "1", "--theta", "1",
                         "--S", "3", "--side-file", str(side_path),
                         "--seed", "42", "--out", str(out_path)])
    finally:
        for s in servers:
            s.stop()
    assert code == 0
    out = capsys.readouterr().out
    assert "rate 2/3 matches capacity 2/3" in out
    field = standard_field(4)
    assert out_path.read_bytes() == field.pack(store.message(1))


def test_cli_audit_and_bench(tmp_path, capsys):
    assert cli_main(["audit", "correctness", "--K", "2", "--M", "0", "--N", "2",
                     "--T", "1", "--sessions", "10", "--seed", "0"]) == 0
    capsys.readouterr()
    json_path = tmp_path / "report.json"
    assert cli_main(["audit", "rate", "--K", "3", "--M", "2", "--N", "3",
                     "--T", "2", "--sessions", "3", "--seed", "0",
                     "--json", str(json_path)]) == 0
    capsys.readouterr()
    assert json_path.exists()
    csv_path = tmp_path / "bench.csv"
    assert cli_main(["bench", "--grid", "K<=2,N<=2", "--csv", str(csv_path)]) == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("K,M,N,T,scheme,rate_num")
    assert len(lines) > 2
    capsys.readouterr()


def test_cli_audit_grid(capsys):
    assert cli_main(["audit", "rate", "--grid", "--sessions", "2", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
