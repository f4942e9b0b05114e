"""Framed wire protocol and on-disk store format.

Frames: magic "PIR1", one type byte, a little-endian u32 payload length,
then the payload. All integers on the wire are little-endian; symbols pack
per the field rules (two nibbles per byte at w = 4, low nibble first).

Store files: magic "PIRSTOR1", u8 width, u16 message count, u64 message
length, then each message's symbols packed independently so every message
starts on a byte boundary.

The byte layouts here are the canonical serialization everywhere: the
auditor hashes exactly these query payloads, and the in-process simulator
and the TCP path produce identical transcripts because both emit them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Mapping

import numpy as np

from .errors import ParameterError, ProtocolError
from .field import GF, standard_field
from .store import MessageStore
from .tpir_psi import DatabaseQuery

FRAME_MAGIC = b"PIR1"
TYPE_QUERY = 0x01
TYPE_ANSWER = 0x02
TYPE_ERROR = 0x03
TYPE_PARAMS = 0x04

SCHEME_LAYERED = 0x01
SCHEME_SYMMETRIC = 0x02
SCHEME_SUM = 0x03

FORM_RAW = 0x00
FORM_COMPRESSED = 0x01
FORM_SYMMETRIC = 0x02
FORM_SUM = 0x03

ERR_MALFORMED_FRAME = 0x01
ERR_MALFORMED_QUERY = 0x02
ERR_STORE_MISMATCH = 0x03
ERR_INTERNAL = 0x04
ERR_PROTOCOL = 0x05

_MAX_PAYLOAD = 1 << 30

STORE_MAGIC = b"PIRSTOR1"
_STORE_HEADER = struct.Struct("<8sBHQ")


# ---------------------------------------------------------------------------
# frames

def encode_frame(ftype: int, payload: bytes) -> bytes:
    if len(payload) > _MAX_PAYLOAD:
        raise ProtocolError("payload exceeds the 1 GiB frame limit")
    return FRAME_MAGIC + bytes([ftype]) + struct.pack("<I", len(payload)) + payload


def read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise ProtocolError(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


def read_frame(stream: BinaryIO) -> tuple[int, bytes]:
    head = read_exact(stream, 9)
    if head[:4] != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {head[:4]!r}")
    ftype = head[4]
    (length,) = struct.unpack("<I", head[5:9])
    if length > _MAX_PAYLOAD:
        raise ProtocolError("declared payload exceeds the frame limit")
    return ftype, read_exact(stream, length)


def read_frame_or_eof(stream: BinaryIO) -> tuple[int, bytes] | None:
    """Like read_frame, but a clean end of stream returns None."""
    first = stream.read(1)
    if not first:
        return None
    head = first + read_exact(stream, 8)
    if head[:4] != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {head[:4]!r}")
    (length,) = struct.unpack("<I", head[5:9])
    if length > _MAX_PAYLOAD:
        raise ProtocolError("declared payload exceeds the frame limit")
    return head[4], read_exact(stream, length)


# ---------------------------------------------------------------------------
# params (JSON, canonical form)

def params_payload(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def parse_params_payload(data: bytes) -> dict:
    try:
        obj = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed params payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("params payload must be a JSON object")
    return obj


# ---------------------------------------------------------------------------
# error payloads

def error_payload(code: int, message: str) -> bytes:
    return bytes([code]) + message.encode()


def parse_error_payload(data: bytes) -> tuple[int, str]:
    if not data:
        raise ProtocolError("empty error payload")
    return data[0], data[1:].decode(errors="replace")


# ---------------------------------------------------------------------------
# layered-scheme query payloads

_LAYERED_HEAD = struct.Struct("<BBBHIII")


def query_layout(w: int, num_messages: int, message_length: int, p2: int,
                 compress: bool, slot_members) -> tuple[bytearray, np.ndarray]:
    """Payload template with zeroed coefficient rows, plus the byte positions
    the packed rows occupy (in slot-member order).

    The batched auditor fills thousands of copies of the template per
    second; ``serialize_database_query`` is the reference implementation the
    template output must match byte for byte.
    """
    field = standard_field(w)
    row_bytes = field.packed_size(message_length)
    head = _LAYERED_HEAD.pack(SCHEME_LAYERED, w, 1 if compress else 0,
                              num_messages, message_length, len(slot_members), p2)
    buf = bytearray(head)
    spans = []
    for members in slot_members:
        buf.append(len(members))
        for msg in members:
            buf += struct.pack("<H", msg)
            spans.append((len(buf), row_bytes))
            buf += bytes(row_bytes)
    positions = np.concatenate(
        [np.arange(start, start + size, dtype=np.int64) for start, size in spans]
    )
    return buf, positions


def serialize_database_query(q: DatabaseQuery) -> bytes:
    field = standard_field(q.w)
    template, positions = query_layout(q.w, q.num_messages, q.message_length,
                                       q.p2, q.compress, q.slot_members)
    packed = pack_rows(field, q.rows, q.message_length)
    out = np.frombuffer(bytes(template), dtype=np.uint8).copy()
    out[positions] = np.frombuffer(packed, dtype=np.uint8)
    return out.tobytes()


def pack_rows(field: GF, rows: np.ndarray, length: int) -> bytes:
    """Pack a (num_rows, length) block row by row, each row byte-aligned."""
    rows = np.ascontiguousarray(rows, dtype=field.dtype)
    if field.w == 4 and length % 2:
        rows = np.concatenate(
            [rows, np.zeros((rows.shape[0], 1), dtype=field.dtype)], axis=1
        )
    return field.pack(rows)


def parse_query_payload(data: bytes, db_index: int = -1):
    """Decode a QUERY payload into the matching scheme's query object."""
    if not data:
        raise ProtocolError("empty query payload")
    scheme = data[0]
    if scheme == SCHEME_LAYERED:
        return _parse_layered(data, db_index)
    if scheme == SCHEME_SYMMETRIC:
        return _parse_symmetric(data)
    if scheme == SCHEME_SUM:
        return _parse_sum(data)
    raise ProtocolError(f"unknown query scheme {scheme:#x}")


def _parse_layered(data: bytes, db_index: int) -> DatabaseQuery:
    try:
        scheme, w, compress, k, length, p1, p2 = _LAYERED_HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise ProtocolError(f"truncated query header: {exc}") from exc
    if w not in (4, 8, 16):
        raise ProtocolError(f"unsupported symbol width {w}")
    field = standard_field(w)
    row_bytes = field.packed_size(length)
    pos = _LAYERED_HEAD.size
    members: list[tuple[int, ...]] = []
    rows: list[np.ndarray] = []
    for _ in range(p1):
        if pos >= len(data):
            raise ProtocolError("query payload truncated in slot table")
        nmem = data[pos]
        pos += 1
        slot = []
        for _ in range(nmem):
            if pos + 2 + row_bytes > len(data):
                raise ProtocolError("query payload truncated in a slot row")
            (msg,) = struct.unpack_from("<H", data, pos)
            pos += 2
            row = field.unpack(data[pos:pos + row_bytes],
                               length if field.w != 4 else 2 * row_bytes)[:length]
            pos += row_bytes
            slot.append(msg)
            rows.append(row)
        members.append(tuple(slot))
    if pos != len(data):
        raise ProtocolError(f"{len(data) - pos} trailing bytes after slot table")
    block = np.stack(rows) if rows else np.zeros((0, length), dtype=field.dtype)
    block.flags.writeable = False
    return DatabaseQuery(db_index=db_index, num_messages=k, message_length=length,
                         w=w, p2=p2, compress=bool(compress),
                         slot_members=tuple(members), rows=block)


# ---------------------------------------------------------------------------
# symmetric-scheme query payloads

_SYM_HEAD = struct.Struct("<BBHHH16s")


@dataclass(frozen=True)
class SymQueryWire:
    w: int
    num_messages: int
    message_length: int
    t: int
    session_id: bytes
    coords: np.ndarray  # (num_messages, message_length)


def serialize_sym_query(w: int, session_id: bytes, t: int,
                        coords: np.ndarray) -> bytes:
    field = standard_field(w)
    k, ell = coords.shape
    head = _SYM_HEAD.pack(SCHEME_SYMMETRIC, w, k, ell, t, session_id)
    return head + field.pack(coords.reshape(-1))


def _parse_symmetric(data: bytes) -> SymQueryWire:
    try:
        scheme, w, k, ell, t, sid = _SYM_HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise ProtocolError(f"truncated query header: {exc}") from exc
    if w not in (4, 8, 16):
        raise ProtocolError(f"unsupported symbol width {w}")
    field = standard_field(w)
    body = data[_SYM_HEAD.size:]
    expected = field.packed_size(k * ell)
    if len(body) != expected:
        raise ProtocolError(
            f"symmetric query body holds {len(body)} bytes, expected {expected}"
        )
    coords = field.unpack(body, k * ell).reshape(k, ell)
    coords.flags.writeable = False
    return SymQueryWire(w=w, num_messages=k, message_length=ell, t=t,
                        session_id=sid, coords=coords)


# ---------------------------------------------------------------------------
# sum-download query (the all-but-one-cached shortcut)

_SUM_HEAD = struct.Struct("<BBHQ")


@dataclass(frozen=True)
class SumQueryWire:
    w: int
    num_messages: int
    message_length: int


def serialize_sum_query(w: int, num_messages: int, message_length: int) -> bytes:
    return _SUM_HEAD.pack(SCHEME_SUM, w, num_messages, message_length)


def _parse_sum(data: bytes) -> SumQueryWire:
    try:
        scheme, w, k, length = _SUM_HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise ProtocolError(f"truncated query header: {exc}") from exc
    if len(data) != _SUM_HEAD.size:
        raise ProtocolError("trailing bytes after sum query header")
    return SumQueryWire(w=w, num_messages=k, message_length=length)


# ---------------------------------------------------------------------------
# answers

_ANSWER_HEAD = struct.Struct("<BI")


def serialize_answer(field: GF, form: int, symbols: np.ndarray) -> bytes:
    return _ANSWER_HEAD.pack(form, len(symbols)) + field.pack(symbols)


def parse_answer(field: GF, data: bytes) -> tuple[int, np.ndarray]:
    try:
        form, count = _ANSWER_HEAD.unpack_from(data, 0)
    except struct.error as exc:
        raise ProtocolError(f"truncated answer header: {exc}") from exc
    body = data[_ANSWER_HEAD.size:]
    if len(body) != field.packed_size(count):
        raise ProtocolError(
            f"answer body holds {len(body)} bytes, expected {field.packed_size(count)}"
        )
    return form, field.unpack(body, count)


# ---------------------------------------------------------------------------
# store files

def store_bytes(store: MessageStore) -> bytes:
    k, length = store.messages.shape
    head = _STORE_HEADER.pack(STORE_MAGIC, store.field.w, k, length)
    parts = [head]
    for row in store.messages:
        parts.append(store.field.pack(row))
    return b"".join(parts)


def parse_store(data: bytes) -> MessageStore:
    if len(data) < _STORE_HEADER.size:
        raise ParameterError("store file shorter than its header")
    magic, w, k, length = _STORE_HEADER.unpack_from(data, 0)
    if magic != STORE_MAGIC:
        raise ParameterError(f"bad store magic {magic!r}")
    if w not in (4, 8, 16):
        raise ParameterError(f"store has unsupported symbol width {w}")
    field = standard_field(w)
    per_message = field.packed_size(length)
    expected = _STORE_HEADER.size + k * per_message
    if len(data) != expected:
        raise ParameterError(
            f"store file holds {len(data)} bytes, expected {expected}"
        )
    rows = []
    pos = _STORE_HEADER.size
    for _ in range(k):
        rows.append(field.unpack(data[pos:pos + per_message], length))
        pos += per_message
    messages = np.stack(rows) if rows else np.zeros((0, length), dtype=field.dtype)
    messages.flags.writeable = False
    return MessageStore(field=field, messages=messages)


def write_store(path, store: MessageStore) -> None:
    with open(path, "wb") as fh:
        fh.write(store_bytes(store))


def read_store(path) -> MessageStore:
    with open(path, "rb") as fh:
        return parse_store(fh.read())


# ---------------------------------------------------------------------------
# collusion views

def collusion_view_bytes(subset, query_payloads: Mapping[int, bytes]) -> bytes:
    """Canonical serialization of the queries a database subset observes."""
    parts = [b"VIEW1", struct.pack("<H", len(tuple(subset)))]
    for n in sorted(subset):
        payload = query_payloads[n]
        parts.append(struct.pack("<HI", n, len(payload)))
        parts.append(payload)
    return b"".join(parts)
