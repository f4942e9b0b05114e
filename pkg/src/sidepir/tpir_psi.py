"""The layered retrieval scheme with cache-aware redundancy removal.

Query structure: each database serves p1 slots, organised in layers. A slot
in layer k downloads the field sum of one precoded symbol from each of k
distinct messages, and every subset of size k gets the same number of slots
per database, so the slot structure itself carries no information about the
desired index.

The desired message is precoded with a private uniform full-rank mixer and
every one of its L symbols is consumed exactly once across all databases.
Each undesired message is precoded per "context" (the set of undesired
messages it is summed with): the member streams of a context share one
public MDS generator, so their sums are codewords of the same code. Any
colluding set of T databases sees exactly one full information set of each
context code, which makes its view an invertible transform of uniformly
mixed rows, indistinguishable across desired indices.

Redundancy removal: with M cached messages the client already knows the p2
slots built only from cached messages, so each database re-encodes its p1
slot values with a public systematic (2*p1-p2, p1) MDS code and ships only
the p1-p2 parity symbols. The client completes the codeword with its p2
known values and inverts.

Decoding peels contexts independently: the slots that avoid the desired
message supply one full information set per context, the reconstructed
codeword is evaluated at the coordinates used inside desired-bearing slots
and subtracted, and the mixer inverse recovers the message.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import linalg
from .capacity import CountProfile, SchemeParams, count_profile
from .coding import (
    GeneratorMatrix,
    erasure_decode,
    make_mds,
    make_systematic_mds,
    sample_full_rank,
)
from .errors import (
    CorruptionError,
    FieldTooSmallError,
    InvalidSideInformationError,
    MalformedQueryError,
    ParameterError,
    ProtocolError,
)
from .field import GF, standard_field
from .store import MessageStore


@dataclass(frozen=True)
class QuerySlot:
    """One downloaded symbol: a k-wise sum identified by (db, subset, instance)."""

    db: int                        # 0-based database index
    layer: int                     # k = |subset|
    subset: tuple[int, ...]        # 1-based message indices, ascending
    instance: int                  # 0-based instance within (db, subset)
    desired_offset: int | None     # position in the desired precoded stream
    context: int | None            # index into the plan's context table
    coord: int | None              # coordinate of the context group codeword


@dataclass(frozen=True)
class ContextGroup:
    """An undesired-stream MDS group shared by the member messages."""

    members: tuple[int, ...]           # 1-based message indices, ascending
    length: int                        # e: codeword coordinates
    dim: int                           # f: information symbols per member
    block_rows: dict[int, tuple[int, int]]  # member -> mixer row span


class _Gather:
    """Precomputed index arrays for one (params, theta) skeleton."""

    def __init__(self):
        self.member_msgs: list[np.ndarray] = []    # per db, 0-based message ids
        self.member_ctx: list[np.ndarray] = []     # per db, -1 for desired
        self.member_src: list[np.ndarray] = []     # desired offset / ctx coord
        self.member_counts: list[np.ndarray] = []  # per db, |subset| per slot
        self.ctx_free: list[tuple[np.ndarray, np.ndarray]] = []   # (flat dbslot, coord)
        self.ctx_bear: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self.singles: tuple[np.ndarray, np.ndarray] | None = None


class _Skeleton:
    """Deterministic plan structure for fixed (params, theta); no randomness."""

    def __init__(self, params: SchemeParams, theta: int):
        K, M, N, T = params.K, params.M, params.N, params.T
        profile = count_profile(params)
        self.params = params
        self.theta = theta
        self.profile = profile

        others = [i for i in range(1, K + 1) if i != theta]
        contexts: list[ContextGroup] = []
        ctx_index: dict[tuple[int, ...], int] = {}
        block_cursor = {i: 0 for i in others}
        for size in range(1, K):
            free_per_db = (N - T) ** (size - 1) * T ** (K - size)
            bear_per_db = (N - T) ** size * T ** (K - size - 1)
            if free_per_db == 0:
                continue
            dim = N * free_per_db
            length = dim + N * bear_per_db
            for members in combinations(others, size):
                spans = {}
                for i in members:
                    spans[i] = (block_cursor[i], block_cursor[i] + dim)
                    block_cursor[i] += dim
                ctx_index[members] = len(contexts)
                contexts.append(ContextGroup(members=members, length=length,
                                             dim=dim, block_rows=spans))
        self.contexts = tuple(contexts)

        desired_cursor = 0
        coord_cursor = [0] * len(contexts)
        slots_per_db: list[tuple[QuerySlot, ...]] = []
        for db in range(N):
            slots: list[QuerySlot] = []
            for k in range(1, K + 1):
                instances = (N - T) ** (k - 1) * T ** (K - k)
                for subset in combinations(range(1, K + 1), k):
                    for j in range(instances):
                        if theta in subset:
                            offset = desired_cursor
                            desired_cursor += 1
                            members = tuple(i for i in subset if i != theta)
                        else:
                            offset = None
                            members = subset
                        if members:
                            ci = ctx_index[members]
                            coord = coord_cursor[ci]
                            coord_cursor[ci] += 1
                        else:
                            ci = coord = None
                        slots.append(QuerySlot(db=db, layer=k, subset=subset,
                                               instance=j, desired_offset=offset,
                                               context=ci, coord=coord))
            slots_per_db.append(tuple(slots))
        self.slots_per_db = tuple(slots_per_db)

        # construction-time invariants: counts must match the closed forms
        assert desired_cursor == profile.L
        assert all(len(s) == profile.p1 for s in self.slots_per_db)
        for ci, ctx in enumerate(contexts):
            assert coord_cursor[ci] == ctx.length
        for slots in self.slots_per_db:
            assert sum(1 for s in slots if theta in s.subset) == profile.m

        self._build_gather()

    def _build_gather(self) -> None:
        g = _Gather()
        p1 = self.profile.p1
        free: list[list[tuple[int, int]]] = [[] for _ in self.contexts]
        bear: list[list[tuple[int, int, int]]] = [[] for _ in self.contexts]
        singles: list[tuple[int, int]] = []
        for db, slots in enumerate(self.slots_per_db):
            msgs, ctxs, srcs, counts = [], [], [], []
            for idx, slot in enumerate(slots):
                counts.append(len(slot.subset))
                flat = db * p1 + idx
                if slot.context is None:
                    singles.append((flat, slot.desired_offset))
                elif slot.desired_offset is None:
                    free[slot.context].append((flat, slot.coord))
                else:
                    bear[slot.context].append((flat, slot.coord, slot.desired_offset))
                for i in slot.subset:
                    msgs.append(i - 1)
                    if i == self.theta:
                        ctxs.append(-1)
                        srcs.append(slot.desired_offset)
                    else:
                        ctxs.append(slot.context)
                        srcs.append(slot.coord)
            g.member_msgs.append(np.array(msgs, dtype=np.int64))
            g.member_ctx.append(np.array(ctxs, dtype=np.int64))
            g.member_src.append(np.array(srcs, dtype=np.int64))
            g.member_counts.append(np.array(counts, dtype=np.int64))
        for ci, ctx in enumerate(self.contexts):
            fl, co = zip(*free[ci])
            g.ctx_free.append((np.array(fl), np.array(co)))
            assert len(fl) == ctx.dim
            if bear[ci]:
                bf, bc, bo = zip(*bear[ci])
                g.ctx_bear.append((np.array(bf), np.array(bc), np.array(bo)))
            else:
                empty = np.array([], dtype=np.int64)
                g.ctx_bear.append((empty, empty, empty))
        if singles:
            sf, so = zip(*singles)
            g.singles = (np.array(sf), np.array(so))
        else:
            g.singles = (np.array([], dtype=np.int64), np.array([], dtype=np.int64))
        self.gather = g


@lru_cache(maxsize=None)
def _skeleton(params: SchemeParams, theta: int) -> _Skeleton:
    return _Skeleton(params, theta)


def max_group_length(params: SchemeParams) -> int:
    """Longest context codeword over all group sizes (0 if K = 1)."""
    K, N, T = params.K, params.N, params.T
    best = 0
    for size in range(1, K):
        free = N * (N - T) ** (size - 1) * T ** (K - size)
        if free == 0:
            continue
        bear = N * (N - T) ** size * T ** (K - size - 1)
        best = max(best, free + bear)
    return best


def minimum_field_width(params: SchemeParams) -> int:
    """Smallest protocol width hosting every code the scheme instantiates."""
    profile = count_profile(params)
    required = max(max_group_length(params), 2 * profile.p1 - profile.p2) + 1
    for w in (4, 8, 16):
        if (1 << w) >= required:
            return w
    raise FieldTooSmallError(
        f"{params.label()} needs a field with at least {required} elements "
        f"({required.bit_length()} bits); the largest protocol field is GF(2^16)",
        min_width=required.bit_length(),
    )


@dataclass(frozen=True)
class DownloadPlan:
    """Client-private query plan: the slot table plus the context groups."""

    params: SchemeParams
    theta: int
    field: GF
    skeleton: _Skeleton

    @property
    def profile(self) -> CountProfile:
        return self.skeleton.profile

    @property
    def slots_per_db(self) -> tuple[tuple[QuerySlot, ...], ...]:
        return self.skeleton.slots_per_db

    @property
    def contexts(self) -> tuple[ContextGroup, ...]:
        return self.skeleton.contexts


@dataclass(frozen=True)
class PrecodingState:
    """Everything the client must keep to decode: private mixers, the public
    generators, and the seed used (when known) for replay."""

    field: GF
    mixers: tuple[np.ndarray, ...]          # one (L, L) full-rank matrix per message
    generators: dict[tuple[int, int], GeneratorMatrix]
    seed: int | None


@dataclass(frozen=True)
class DatabaseQuery:
    """The public per-database query: slot structure and coefficient rows.

    A database never sees mixers or stream labels, only one coefficient row
    per (slot, member message) resolved against that message's symbols.
    """

    db_index: int
    num_messages: int
    message_length: int
    w: int
    p2: int
    compress: bool
    slot_members: tuple[tuple[int, ...], ...]
    rows: np.ndarray  # (sum of member counts, message_length)

    @property
    def num_slots(self) -> int:
        return len(self.slot_members)


@dataclass(frozen=True)
class AnswerBundle:
    """Per-database answer vectors, raw (p1) or compressed (p1 - p2)."""

    form: str  # "raw" or "compressed"
    per_db: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.form not in ("raw", "compressed"):
            raise ParameterError(f"unknown answer form {self.form!r}")
        lengths = {len(v) for v in self.per_db}
        if len(lengths) > 1:
            raise ProtocolError("databases returned answers of different lengths")

    @property
    def downloaded_symbols(self) -> int:
        return sum(len(v) for v in self.per_db)


def build_plan(params: SchemeParams, theta: int,
               rng: np.random.Generator | int) -> tuple[DownloadPlan, PrecodingState]:
    """Construct the query plan and the private precoding state.

    ``theta`` is the 1-based desired index. The cached set plays no role
    here: plans are a function of (params, theta, randomness) only, which is
    what makes the cached set invisible on the wire.
    """
    if not params.constructible:
        raise ParameterError(
            f"{params.label()}: the layered scheme needs T < N (or M = K-1)"
        )
    if not 1 <= theta <= params.K:
        raise ParameterError(f"desired index {theta} outside 1..{params.K}")
    w_needed = minimum_field_width(params)
    if params.w is not None and params.w < w_needed:
        raise FieldTooSmallError(
            f"width {params.w} too small for {params.label()}; need {w_needed}",
            min_width=w_needed,
        )
    field = standard_field(params.w or w_needed)
    seed: int | None = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng) if isinstance(rng, (int, np.integer)) else None
        rng = np.random.default_rng(rng)
    sk = _skeleton(params, theta)
    profile = sk.profile
    mixers = tuple(
        sample_full_rank(profile.L, field, rng).entries for _ in range(params.K)
    )
    generators: dict[tuple[int, int], GeneratorMatrix] = {}
    for ctx in sk.contexts:
        generators.setdefault((ctx.length, ctx.dim), make_mds(ctx.length, ctx.dim, field))
    if params.M >= 1:
        dims = (2 * profile.p1 - profile.p2, profile.p1)
        generators[dims] = make_systematic_mds(*dims, field)
    plan = DownloadPlan(params=params, theta=theta, field=field, skeleton=sk)
    state = PrecodingState(field=field, mixers=mixers, generators=generators, seed=seed)
    return plan, state


def _context_coefficients(plan: DownloadPlan, state: PrecodingState):
    """Per (context, member): the (e, L) matrix mapping the member message to
    its contribution at every group coordinate."""
    out = {}
    for ci, ctx in enumerate(plan.contexts):
        gen = state.generators[(ctx.length, ctx.dim)]
        for i in ctx.members:
            lo, hi = ctx.block_rows[i]
            out[(ci, i)] = linalg.matmul(plan.field, gen.entries, state.mixers[i - 1][lo:hi, :])
    return out


def database_queries(plan: DownloadPlan, state: PrecodingState) -> list[DatabaseQuery]:
    """Resolve the plan into the N public wire queries."""
    params, field = plan.params, plan.field
    profile = plan.profile
    gather = plan.skeleton.gather
    coef = _context_coefficients(plan, state)
    desired = state.mixers[plan.theta - 1]
    queries = []
    for db in range(params.N):
        msgs = gather.member_msgs[db]
        ctxs = gather.member_ctx[db]
        srcs = gather.member_src[db]
        rows = np.empty((len(msgs), profile.L), dtype=field.dtype)
        mask = ctxs == -1
        rows[mask] = desired[srcs[mask]]
        for (ci, i), mat in coef.items():
            sel = (ctxs == ci) & (msgs == i - 1)
            if sel.any():
                rows[sel] = mat[srcs[sel]]
        rows.flags.writeable = False
        queries.append(DatabaseQuery(
            db_index=db,
            num_messages=params.K,
            message_length=profile.L,
            w=field.w,
            p2=profile.p2,
            compress=params.M >= 1,
            slot_members=tuple(s.subset for s in plan.slots_per_db[db]),
            rows=rows,
        ))
    return queries


def answer_raw(query: DatabaseQuery, store: MessageStore) -> np.ndarray:
    """The database side: evaluate each slot's linear combination."""
    field = store.field
    if field.w != query.w:
        raise MalformedQueryError(
            f"query width {query.w} does not match store width {field.w}"
        )
    if store.num_messages < query.num_messages:
        raise MalformedQueryError("query references more messages than stored")
    if store.message_length != query.message_length:
        raise MalformedQueryError(
            f"query expects messages of length {query.message_length}, "
            f"store has {store.message_length}"
        )
    counts = np.array([len(m) for m in query.slot_members])
    if counts.size == 0 or counts.min() < 1:
        raise MalformedQueryError("every slot must reference at least one message")
    flat_members = np.concatenate([np.asarray(m) for m in query.slot_members])
    if flat_members.min() < 1 or flat_members.max() > query.num_messages:
        raise MalformedQueryError("slot references an out-of-range message index")
    if query.rows.shape != (int(counts.sum()), query.message_length):
        raise MalformedQueryError("coefficient row block has the wrong shape")
    vecs = store.messages[flat_members - 1]
    terms = np.bitwise_xor.reduce(field.mul(query.rows, vecs), axis=1)
    starts = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    return np.bitwise_xor.reduceat(terms, starts)


def compress(raw: np.ndarray, field: GF, p1: int, p2: int) -> np.ndarray:
    """Redundancy removal: the p1 - p2 parity symbols of the public
    systematic (2*p1 - p2, p1) code applied to the raw slot values."""
    if len(raw) != p1:
        raise ParameterError(f"raw answer has {len(raw)} symbols, expected {p1}")
    gen = make_systematic_mds(2 * p1 - p2, p1, field)
    return linalg.matvec(field, gen.entries[: p1 - p2, :], np.asarray(raw, dtype=field.dtype))


def answer_all(queries: list[DatabaseQuery], store: MessageStore) -> AnswerBundle:
    """Convenience: run every database on a replicated store."""
    compress_all = queries[0].compress and queries[0].p2 > 0
    per_db = []
    for q in queries:
        raw = answer_raw(q, store)
        if compress_all:
            raw = compress(raw, store.field, q.num_slots, q.p2)
        per_db.append(raw)
    return AnswerBundle(form="compressed" if compress_all else "raw",
                        per_db=tuple(per_db))


def _check_side(plan: DownloadPlan, side) -> dict[int, np.ndarray]:
    params = plan.params
    side = {int(i): np.asarray(v, dtype=plan.field.dtype) for i, v in side.items()}
    if len(side) != params.M:
        raise InvalidSideInformationError(
            f"cache holds {len(side)} messages, parameters say {params.M}"
        )
    if plan.theta in side:
        raise InvalidSideInformationError("the desired message cannot be cached")
    for i, vec in side.items():
        if not 1 <= i <= params.K:
            raise InvalidSideInformationError(f"cached index {i} outside 1..{params.K}")
        if vec.shape != (plan.profile.L,):
            raise InvalidSideInformationError(
                f"cached message {i} has length {vec.shape}, expected {plan.profile.L}"
            )
    return side


def _known_context_codewords(plan: DownloadPlan, state: PrecodingState,
                             side: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Full codewords of every context whose members are all cached."""
    cached = set(side)
    out = {}
    for ci, ctx in enumerate(plan.contexts):
        if not set(ctx.members) <= cached:
            continue
        gen = state.generators[(ctx.length, ctx.dim)]
        total = np.zeros(ctx.length, dtype=plan.field.dtype)
        for i in ctx.members:
            lo, hi = ctx.block_rows[i]
            info = linalg.matvec(plan.field, state.mixers[i - 1][lo:hi, :], side[i])
            total ^= linalg.matvec(plan.field, gen.entries, info)
        out[ci] = total
    return out


def known_positions(plan: DownloadPlan, state: PrecodingState,
                    side) -> list[list[tuple[int, int]]]:
    """Per database: the (slot index, value) pairs the client can evaluate
    from its cache alone (slots built only from cached messages)."""
    side = _check_side(plan, side)
    codewords = _known_context_codewords(plan, state, side)
    p1 = plan.profile.p1
    out: list[list[tuple[int, int]]] = [[] for _ in range(plan.params.N)]
    gather = plan.skeleton.gather
    for ci in codewords:
        flat, coords = gather.ctx_free[ci]
        values = codewords[ci][coords]
        for pos, val in zip(flat.tolist(), values.tolist()):
            out[pos // p1].append((pos % p1, int(val)))
    for entries in out:
        entries.sort()
        if len(entries) != plan.profile.p2:
            raise AssertionError(
                f"cache covers {len(entries)} slots per database, expected {plan.profile.p2}"
            )
    return out


def decode(answers: AnswerBundle, plan: DownloadPlan, state: PrecodingState,
           side) -> np.ndarray:
    """Recover the desired message exactly from the N answers.

    Compressed answers are first completed per database with the cached slot
    values and erasure-decoded back to the raw slot vectors. Raw answers
    with a nonempty cache are cross-checked against the cached slot values,
    which catches corrupted side files or wire corruption.
    """
    params, field, profile = plan.params, plan.field, plan.profile
    side = _check_side(plan, side)
    if len(answers.per_db) != params.N:
        raise ProtocolError(f"expected {params.N} answers, got {len(answers.per_db)}")
    p1, p2 = profile.p1, profile.p2
    known = known_positions(plan, state, side) if side else [[] for _ in range(params.N)]

    raw = np.empty((params.N, p1), dtype=field.dtype)
    if answers.form == "compressed":
        gen = state.generators[(2 * p1 - p2, p1)]
        parity = p1 - p2
        for db, vec in enumerate(answers.per_db):
            if len(vec) != parity:
                raise ProtocolError(
                    f"database {db} shipped {len(vec)} symbols, expected {parity}"
                )
            pairs = [(r, int(v)) for r, v in enumerate(vec)]
            pairs += [(parity + slot, val) for slot, val in known[db]]
            raw[db] = erasure_decode(gen, pairs)
    else:
        for db, vec in enumerate(answers.per_db):
            if len(vec) != p1:
                raise ProtocolError(
                    f"database {db} shipped {len(vec)} symbols, expected {p1}"
                )
            raw[db] = np.asarray(vec, dtype=field.dtype)
            for slot, val in known[db]:
                if int(raw[db, slot]) != val:
                    raise CorruptionError(
                        f"database {db} slot {slot} disagrees with the cached value"
                    )

    gather = plan.skeleton.gather
    flat = raw.reshape(-1)
    desired = np.zeros(profile.L, dtype=field.dtype)
    sing_flat, sing_off = gather.singles
    desired[sing_off] = flat[sing_flat]
    for ci, ctx in enumerate(plan.contexts):
        free_flat, free_coord = gather.ctx_free[ci]
        gen = state.generators[(ctx.length, ctx.dim)]
        info = linalg.solve(field, gen.entries[free_coord, :], flat[free_flat])
        codeword = linalg.matvec(field, gen.entries, info)
        bear_flat, bear_coord, bear_off = gather.ctx_bear[ci]
        if bear_flat.size:
            desired[bear_off] = flat[bear_flat] ^ codeword[bear_coord]
    return linalg.solve(field, state.mixers[plan.theta - 1], desired)
