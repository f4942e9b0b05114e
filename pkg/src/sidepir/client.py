"""Retrieving client: drives N databases over TCP or in process.

Both transports exchange the same frames with the same server core, so a
retrieval records a transcript (the four payloads per endpoint) that is
byte-identical between a real network run and the in-process simulator for
the same seed. Answers are collected concurrently and matched to endpoints
by position; any endpoint failure aborts the retrieval.
"""

from __future__ import annotations

import dataclasses
import socket
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import wire
from .capacity import SchemeParams, capacity_stpir_psi, capacity_tpir_psi
from .errors import CorruptionError, ParameterError, ProtocolError
from .server import ServerCore
from .store import MessageStore
from .stpir_psi import (
    SESSION_ID_BYTES,
    make_sym_params,
    queries_from_masks,
    sym_decode,
)
from .tpir_psi import AnswerBundle, build_plan, database_queries, decode


class TcpTransport:
    """One framed TCP connection to a database."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def request(self, ftype: int, payload: bytes) -> tuple[int, bytes]:
        self._file.write(wire.encode_frame(ftype, payload))
        self._file.flush()
        return wire.read_frame(self._file)

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


class LocalTransport:
    """In-process simulator: drives a ServerCore directly, same frames."""

    def __init__(self, core: ServerCore):
        self._core = core
        self._session = core.new_session()

    def request(self, ftype: int, payload: bytes) -> tuple[int, bytes]:
        return self._core.handle_frame(self._session, ftype, payload)

    def close(self) -> None:
        pass


def local_simulator(store: MessageStore, n: int, role: str = "tpir",
                    secret: bytes | None = None) -> list[LocalTransport]:
    """N in-process databases over one replicated store."""
    return [LocalTransport(ServerCore(store, role=role, secret=secret))
            for _ in range(n)]


def tcp_endpoints(spec: str | list[tuple[str, int]]) -> list[tuple[str, int]]:
    """Parse "host:port,host:port,..." into address tuples."""
    if not isinstance(spec, str):
        return list(spec)
    out = []
    for part in spec.split(","):
        host, _, port = part.strip().rpartition(":")
        if not host or not port.isdigit():
            raise ParameterError(f"bad endpoint {part!r}, want host:port")
        out.append((host, int(port)))
    return out


@dataclass(frozen=True)
class EndpointTranscript:
    endpoint: int  # 1-based position
    params_sent: bytes
    params_received: bytes
    query_sent: bytes
    answer_received: bytes


@dataclass(frozen=True)
class RetrievalResult:
    message: np.ndarray
    form: str
    downloaded_symbols: int
    downloaded_bits: int
    rate: Fraction
    capacity: Fraction
    store_digest: str
    transcripts: tuple[EndpointTranscript, ...]


def _exchange(transport, endpoint: int, params_payload: bytes,
              query_payload: bytes) -> EndpointTranscript:
    ftype, reply = transport.request(wire.TYPE_PARAMS, params_payload)
    if ftype == wire.TYPE_ERROR:
        code, msg = wire.parse_error_payload(reply)
        raise ProtocolError(f"endpoint {endpoint} rejected params ({code:#x}): {msg}")
    if ftype != wire.TYPE_PARAMS:
        raise ProtocolError(f"endpoint {endpoint} answered params with type {ftype:#x}")
    params_received = reply
    ftype, answer = transport.request(wire.TYPE_QUERY, query_payload)
    if ftype == wire.TYPE_ERROR:
        code, msg = wire.parse_error_payload(answer)
        raise ProtocolError(f"endpoint {endpoint} rejected query ({code:#x}): {msg}")
    if ftype != wire.TYPE_ANSWER:
        raise ProtocolError(f"endpoint {endpoint} answered query with type {ftype:#x}")
    return EndpointTranscript(endpoint=endpoint, params_sent=params_payload,
                              params_received=params_received,
                              query_sent=query_payload, answer_received=answer)


def _run_endpoints(transports, params_payloads, query_payloads):
    with ThreadPoolExecutor(max_workers=len(transports)) as pool:
        futures = [
            pool.submit(_exchange, tr, i + 1, params_payloads[i], query_payloads[i])
            for i, tr in enumerate(transports)
        ]
        return [f.result() for f in futures]


def _check_replicas(transcripts) -> str:
    digests = set()
    for t in transcripts:
        ack = wire.parse_params_payload(t.params_received)
        digests.add(ack.get("store_digest"))
    if len(digests) != 1:
        raise CorruptionError(f"store replicas differ: {sorted(digests)}")
    return digests.pop()


def _params_frames(params: SchemeParams, scheme: str, w: int,
                   message_length: int, n_endpoints: int) -> list[bytes]:
    return [
        wire.params_payload({
            "scheme": scheme,
            "endpoint": i + 1,
            "n_db": n_endpoints,
            "k": params.K,
            "m": params.M,
            "t": params.T,
            "w": w,
            "message_length": message_length,
        })
        for i in range(n_endpoints)
    ]


def retrieve(transports, params: SchemeParams, theta: int, side,
             seed: int | np.random.Generator, scheme: str = "tpir",
             raw: bool = False) -> RetrievalResult:
    """Run one full retrieval over already-connected transports.

    ``side`` maps cached 1-based message indices to their symbol vectors
    (empty for M = 0). ``raw`` disables redundancy removal, which also arms
    the cached-value consistency check on the raw answers.
    """
    rng = np.random.default_rng(seed) if isinstance(seed, (int, np.integer)) else seed
    side = {int(i): v for i, v in (side or {}).items()}
    if scheme == "tpir":
        return _retrieve_layered(transports, params, theta, side, rng, raw)
    if scheme == "stpir":
        if params.M == params.K - 1:
            return _retrieve_sum(transports, params, theta, side)
        return _retrieve_symmetric(transports, params, theta, side, rng)
    raise ParameterError(f"unknown scheme {scheme!r}")


def _retrieve_layered(transports, params, theta, side, rng, raw) -> RetrievalResult:
    plan, state = build_plan(params, theta, rng)
    if len(transports) != params.N:
        raise ParameterError(f"need {params.N} endpoints, got {len(transports)}")
    queries = database_queries(plan, state)
    if raw:
        queries = [dataclasses.replace(q, compress=False) for q in queries]
    params_frames = _params_frames(params, "tpir", plan.field.w,
                                   plan.profile.L, params.N)
    query_frames = [wire.serialize_database_query(q) for q in queries]
    transcripts = _run_endpoints(transports, params_frames, query_frames)
    digest = _check_replicas(transcripts)
    vectors, forms = [], set()
    for t in transcripts:
        form, symbols = wire.parse_answer(plan.field, t.answer_received)
        forms.add(form)
        vectors.append(symbols)
    if len(forms) != 1:
        raise ProtocolError("databases disagree on the answer form")
    form = "compressed" if forms.pop() == wire.FORM_COMPRESSED else "raw"
    bundle = AnswerBundle(form=form, per_db=tuple(vectors))
    message = decode(bundle, plan, state, side)
    downloaded = bundle.downloaded_symbols
    rate = Fraction(plan.profile.L, downloaded)
    return RetrievalResult(
        message=message, form=form, downloaded_symbols=downloaded,
        downloaded_bits=downloaded * plan.field.w, rate=rate,
        capacity=capacity_tpir_psi(params), store_digest=digest,
        transcripts=tuple(transcripts),
    )


def _retrieve_symmetric(transports, params, theta, side, rng) -> RetrievalResult:
    sym = make_sym_params(params)
    if len(transports) != params.N:
        raise ParameterError(f"need {params.N} endpoints, got {len(transports)}")
    session_id = rng.bytes(SESSION_ID_BYTES)
    masks = sym.field.random_symbols(
        rng, (params.K, sym.message_length, params.T))
    queries = queries_from_masks(sym, theta, masks)
    params_frames = _params_frames(params, "stpir", sym.field.w,
                                   sym.message_length, params.N)
    query_frames = [
        wire.serialize_sym_query(sym.field.w, session_id, params.T, queries[n])
        for n in range(params.N)
    ]
    transcripts = _run_endpoints(transports, params_frames, query_frames)
    digest = _check_replicas(transcripts)
    answers = []
    for t in transcripts:
        form, symbols = wire.parse_answer(sym.field, t.answer_received)
        if form != wire.FORM_SYMMETRIC or len(symbols) != 1:
            raise ProtocolError(f"endpoint {t.endpoint} sent a malformed answer")
        answers.append(int(symbols[0]))
    message = sym_decode(np.array(answers, dtype=sym.field.dtype), sym)
    downloaded = params.N
    rate = Fraction(sym.message_length, downloaded)
    rho = Fraction(params.T, params.N - params.T)
    return RetrievalResult(
        message=message, form="symmetric", downloaded_symbols=downloaded,
        downloaded_bits=downloaded * sym.field.w, rate=rate,
        capacity=capacity_stpir_psi(params, rho), store_digest=digest,
        transcripts=tuple(transcripts),
    )


def _retrieve_sum(transports, params, theta, side) -> RetrievalResult:
    """All-but-one cached: one database, one sum, rate 1, no randomness."""
    if len(side) != params.K - 1:
        raise ParameterError("sum retrieval needs the K-1 other messages cached")
    lengths = {len(v) for v in side.values()}
    if len(lengths) != 1:
        raise ParameterError("cached messages must share one length")
    length = lengths.pop()
    field = make_sym_params(params).field
    params_frames = _params_frames(params, "stpir", field.w, length, 1)
    query = wire.serialize_sum_query(field.w, params.K, length)
    transcripts = _run_endpoints(transports[:1], params_frames[:1], [query])
    digest = _check_replicas(transcripts)
    form, symbols = wire.parse_answer(field, transcripts[0].answer_received)
    if form != wire.FORM_SUM or len(symbols) != length:
        raise ProtocolError("malformed sum answer")
    message = symbols.copy()
    for i, vec in side.items():
        if int(i) == theta:
            raise ParameterError("the desired message cannot be cached")
        message ^= np.asarray(vec, dtype=field.dtype)
    return RetrievalResult(
        message=message, form="sum", downloaded_symbols=length,
        downloaded_bits=length * field.w, rate=Fraction(1),
        capacity=capacity_stpir_psi(params, Fraction(0)), store_digest=digest,
        transcripts=tuple(transcripts),
    )
