"""Database server: a replicated store behind the framed TCP protocol.

The protocol logic lives in :class:`ServerCore`, which maps one inbound
frame to one reply frame given per-connection session state. The TCP server
and the client's in-process simulator both drive that core, which is what
makes network and simulated transcripts byte-identical.

Sessions are one QUERY each: a connection first announces itself with a
PARAMS frame (carrying its assigned endpoint index, which the symmetric
scheme needs for its evaluation point), then sends the QUERY. Servers keep
no state across sessions beyond the store and the shared secret.
"""

from __future__ import annotations

import hashlib
import socketserver
import threading

import numpy as np

from . import wire
from .errors import MalformedQueryError, ParameterError, PirError, ProtocolError
from .store import MessageStore
from .stpir_psi import derive_common_randomness, sym_answer
from .tpir_psi import answer_raw, compress

ROLES = ("tpir", "stpir")


class ServerCore:
    """Frame-level protocol logic for one database."""

    def __init__(self, store: MessageStore, role: str = "tpir",
                 secret: bytes | None = None):
        if role not in ROLES:
            raise ParameterError(f"role must be one of {ROLES}")
        if role == "stpir" and not secret:
            raise ParameterError("the symmetric role needs a shared secret")
        self.store = store
        self.role = role
        self.secret = secret
        self.store_digest = hashlib.sha256(wire.store_bytes(store)).hexdigest()

    def new_session(self) -> dict:
        return {}

    def handle_frame(self, session: dict, ftype: int, payload: bytes) -> tuple[int, bytes]:
        try:
            if ftype == wire.TYPE_PARAMS:
                return self._handle_params(session, payload)
            if ftype == wire.TYPE_QUERY:
                return self._handle_query(session, payload)
            return wire.TYPE_ERROR, wire.error_payload(
                wire.ERR_PROTOCOL, f"unexpected frame type {ftype:#x}")
        except MalformedQueryError as exc:
            return wire.TYPE_ERROR, wire.error_payload(wire.ERR_MALFORMED_QUERY, str(exc))
        except ProtocolError as exc:
            return wire.TYPE_ERROR, wire.error_payload(wire.ERR_MALFORMED_FRAME, str(exc))
        except PirError as exc:
            return wire.TYPE_ERROR, wire.error_payload(wire.ERR_INTERNAL, str(exc))

    def _handle_params(self, session: dict, payload: bytes) -> tuple[int, bytes]:
        req = wire.parse_params_payload(payload)
        problems = []
        if req.get("scheme") != self.role:
            problems.append(f"server role is {self.role!r}, client wants {req.get('scheme')!r}")
        if req.get("k") != self.store.num_messages:
            problems.append(f"store holds {self.store.num_messages} messages")
        if req.get("message_length") != self.store.message_length:
            problems.append(f"store messages have length {self.store.message_length}")
        if req.get("w") != self.store.field.w:
            problems.append(f"store symbols are {self.store.field.w}-bit")
        endpoint = req.get("endpoint")
        n_db = req.get("n_db")
        if not isinstance(endpoint, int) or not isinstance(n_db, int) \
                or not 1 <= endpoint <= n_db:
            problems.append(f"bad endpoint assignment {endpoint}/{n_db}")
        if problems:
            return wire.TYPE_ERROR, wire.error_payload(
                wire.ERR_STORE_MISMATCH, "; ".join(problems))
        session["endpoint"] = endpoint
        session["t"] = req.get("t")
        session["n_db"] = n_db
        reply = wire.params_payload({
            "ok": True,
            "store_digest": self.store_digest,
            "k": self.store.num_messages,
            "message_length": self.store.message_length,
            "w": self.store.field.w,
        })
        return wire.TYPE_PARAMS, reply

    def _handle_query(self, session: dict, payload: bytes) -> tuple[int, bytes]:
        if "endpoint" not in session:
            return wire.TYPE_ERROR, wire.error_payload(
                wire.ERR_PROTOCOL, "QUERY before PARAMS")
        try:
            query = wire.parse_query_payload(payload, db_index=session["endpoint"] - 1)
        except ProtocolError as exc:
            return wire.TYPE_ERROR, wire.error_payload(wire.ERR_MALFORMED_QUERY, str(exc))
        field = self.store.field
        if isinstance(query, wire.SymQueryWire):
            if self.role != "stpir":
                return wire.TYPE_ERROR, wire.error_payload(
                    wire.ERR_MALFORMED_QUERY, "symmetric query sent to a tpir server")
            if query.w != field.w:
                raise MalformedQueryError(f"query width {query.w}, store width {field.w}")
            # the mask length is the session's declared threshold, never the
            # query's word: a shorter mask would weaken database privacy
            if query.t != session["t"] or not 1 <= query.t < session["n_db"]:
                raise MalformedQueryError(
                    f"query threshold {query.t} does not match the session")
            cr = derive_common_randomness(self.secret, query.session_id,
                                          query.t, field)
            lam = session["endpoint"]  # evaluation point = field encoding of n
            value = sym_answer(query.coords, self.store, cr, lam)
            body = wire.serialize_answer(field, wire.FORM_SYMMETRIC,
                                         np.array([value], dtype=field.dtype))
            return wire.TYPE_ANSWER, body
        if isinstance(query, wire.SumQueryWire):
            if query.w != field.w or query.num_messages != self.store.num_messages \
                    or query.message_length != self.store.message_length:
                raise MalformedQueryError("sum query does not match the store")
            total = np.bitwise_xor.reduce(self.store.messages, axis=0)
            body = wire.serialize_answer(field, wire.FORM_SUM, total)
            return wire.TYPE_ANSWER, body
        # layered query
        raw = answer_raw(query, self.store)
        if query.compress and query.p2 > 0:
            parity = compress(raw, field, query.num_slots, query.p2)
            body = wire.serialize_answer(field, wire.FORM_COMPRESSED, parity)
        else:
            body = wire.serialize_answer(field, wire.FORM_RAW, raw)
        return wire.TYPE_ANSWER, body


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        core: ServerCore = self.server.core  # type: ignore[attr-defined]
        session = core.new_session()
        while True:
            try:
                frame = wire.read_frame_or_eof(self.rfile)
            except ProtocolError as exc:
                try:
                    self.wfile.write(wire.encode_frame(
                        wire.TYPE_ERROR,
                        wire.error_payload(wire.ERR_MALFORMED_FRAME, str(exc))))
                except OSError:
                    pass
                return
            if frame is None:
                return
            ftype, payload = core.handle_frame(session, *frame)
            try:
                self.wfile.write(wire.encode_frame(ftype, payload))
            except OSError:
                return


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DatabaseServer:
    """A TCP database server bound to a local port.

    Usable as a context manager; ``port`` is the bound port (useful when
    constructed with port 0).
    """

    def __init__(self, store: MessageStore, role: str = "tpir",
                 secret: bytes | None = None, host: str = "127.0.0.1",
                 port: int = 0):
        self.core = ServerCore(store, role=role, secret=secret)
        self._server = _ThreadingServer((host, port), _Handler)
        self._server.core = self.core  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> "DatabaseServer":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name=f"sidepir-db-{self.port}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def __enter__(self) -> "DatabaseServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
