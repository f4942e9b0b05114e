"""Executable audits: correctness, user privacy, database privacy, rate.

The privacy constraints are information-theoretic, so they are checked in
two layers. Exact layer: the wire-visible query structure must be byte
identical across desired indices, and query generation must be a
deterministic function of (desired index, seed) alone, which rules out any
dependence on the cached set. Statistical layer: Monte-Carlo estimates of
the total-variation distance between collusion-view distributions, plus
chi-square uniformity tests on what the client can reconstruct beyond its
own message.

Views live in enormous spaces, so raw empirical TV between two samples of
the same distribution would be near 1 and meaningless. The estimator is
therefore adaptive: when the observed digest support is small the raw
histogram TV is consistent and is used directly (this catches deterministic
leaks like a direct download); otherwise each 16-byte view digest is folded
to a single bit, whose histogram TV concentrates well below the threshold
for identical distributions while still exposing gross support mismatches.

Rates are measured as exact rationals from actual downloaded symbol counts
and compared with the capacity formulas by equality; a measured rate above
capacity is a hard failure, since it can only mean an accounting bug.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy import stats

from . import linalg, wire
from .capacity import (
    SchemeParams,
    capacity_stpir_psi,
    capacity_tpir_psi,
    count_profile,
)
from .coding import erasure_decode, make_mds, sample_full_rank_batched
from .errors import AuditInvariantError, ParameterError
from .field import standard_field
from .store import MessageStore, random_store
from .stpir_psi import (
    SESSION_ID_BYTES,
    CommonRandomness,
    derive_common_randomness,
    make_sym_params,
    queries_from_masks,
    sym_answer,
    sym_decode,
    sym_sum_shortcut,
)
from .tpir_psi import (
    _skeleton,
    answer_all,
    build_plan,
    database_queries,
    decode,
    known_positions,
    minimum_field_width,
)

DEFAULT_TV_THRESHOLD = 0.01
DEFAULT_CHI_P = 0.001
SMALL_SUPPORT_CUTOFF = 8
DIGEST_SIZE = 16

# Fixed server-shared secret for in-process audits of the symmetric scheme.
AUDIT_SECRET = bytes(range(32))


def subseed(*parts) -> tuple[int, ...]:
    """Map a mixed tuple of ints and labels to a numpy-compatible seed."""
    out = []
    for p in parts:
        if isinstance(p, (int, np.integer)):
            out.append(int(p) & (2**63 - 1))
        else:
            h = hashlib.blake2b(str(p).encode(), digest_size=8).digest()
            out.append(int.from_bytes(h, "little"))
    return tuple(out)


def view_digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=DIGEST_SIZE).digest()


def _fold_bit(digest: bytes) -> int:
    acc = 0
    for b in digest:
        acc ^= b
    return acc & 1


def tv_between_digests(sample_a, sample_b,
                       small_support: int = SMALL_SUPPORT_CUTOFF) -> tuple[float, str]:
    """Total-variation estimate between two digest samples.

    Returns (tv, estimator): "raw" over the digest histogram when the joint
    support is small enough for that estimator to be consistent, else
    "folded" over the 1-bit digest fold.
    """
    support = set(sample_a) | set(sample_b)
    if len(support) <= small_support:
        keys = sorted(support)
        ca = {k: 0 for k in keys}
        cb = {k: 0 for k in keys}
        for d in sample_a:
            ca[d] += 1
        for d in sample_b:
            cb[d] += 1
        tv = 0.5 * sum(
            abs(ca[k] / len(sample_a) - cb[k] / len(sample_b)) for k in keys
        )
        return tv, "raw"
    ones_a = sum(_fold_bit(d) for d in sample_a)
    ones_b = sum(_fold_bit(d) for d in sample_b)
    tv = abs(ones_a / len(sample_a) - ones_b / len(sample_b))
    return tv, "folded"


def chi_square_uniform_p(values: np.ndarray, cells: int) -> float:
    """p-value of a chi-square test of uniformity over 0..cells-1."""
    counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=cells)
    return float(stats.chisquare(counts).pvalue)


@dataclass(frozen=True)
class CollusionView:
    """The queries one database subset observes in a session, canonically
    serialized so views compare as opaque byte strings."""

    subset: tuple[int, ...]
    transcript: bytes

    @classmethod
    def from_payloads(cls, subset, payloads) -> "CollusionView":
        subset = tuple(sorted(subset))
        return cls(subset=subset,
                   transcript=wire.collusion_view_bytes(subset, payloads))

    def digest(self) -> bytes:
        return view_digest(self.transcript)


@dataclass
class AuditReport:
    test: str
    scheme: str
    params: SchemeParams
    sessions: int
    seed: int
    passed: bool
    statistics: dict
    failures: list[str] = dataclass_field(default_factory=list)
    measured_rate: Fraction | None = None
    capacity: Fraction | None = None

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, Fraction):
                return str(v)
            if isinstance(v, bytes):
                return v.hex()
            if isinstance(v, dict):
                return {str(k): enc(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (np.floating,)):
                return float(v)
            return v

        return {
            "test": self.test,
            "scheme": self.scheme,
            "params": {"K": self.params.K, "M": self.params.M,
                       "N": self.params.N, "T": self.params.T,
                       "w": self.params.w},
            "sessions": self.sessions,
            "seed": self.seed,
            "verdict": "pass" if self.passed else "fail",
            "statistics": enc(self.statistics),
            "failures": list(self.failures),
            "rate": str(self.measured_rate) if self.measured_rate is not None else None,
            "capacity": str(self.capacity) if self.capacity is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = ""
        if self.measured_rate is not None:
            extra = f" rate={self.measured_rate} capacity={self.capacity}"
        line = (f"[{verdict}] {self.test} {self.scheme} {self.params.label()} "
                f"sessions={self.sessions} seed={self.seed}{extra}")
        for f in self.failures[:5]:
            line += f"\n    - {f}"
        return line


@dataclass(frozen=True)
class SessionOutcome:
    ok: bool
    downloaded_symbols: int
    desired_symbols: int
    randomness_symbols: int
    note: str


# ---------------------------------------------------------------------------
# scheme adapters


class LayeredScheme:
    """Audit adapter for the layered scheme with redundancy removal."""

    name = "tpir-psi"

    def __init__(self, params: SchemeParams):
        if not params.constructible:
            raise ParameterError(f"{params.label()} is not constructible")
        self.params = params
        self.profile = count_profile(params)
        self.field = standard_field(params.w or minimum_field_width(params))

    def capacity(self) -> Fraction:
        return capacity_tpir_psi(self.params)

    def _draw_theta_side(self, rng) -> tuple[int, tuple[int, ...]]:
        k, m = self.params.K, self.params.M
        theta = int(rng.integers(1, k + 1))
        others = [i for i in range(1, k + 1) if i != theta]
        side = tuple(sorted(int(i) for i in rng.choice(others, size=m, replace=False))) if m else ()
        return theta, side

    def run_session(self, rng) -> SessionOutcome:
        theta, side_idx = self._draw_theta_side(rng)
        plan, state = build_plan(self.params, theta, rng)
        store = random_store(self.field, self.params.K, self.profile.L, rng)
        bundle = answer_all(database_queries(plan, state), store)
        got = decode(bundle, plan, state, store.side_information(side_idx))
        ok = np.array_equal(got, store.message(theta))
        return SessionOutcome(ok=ok, downloaded_symbols=bundle.downloaded_symbols,
                              desired_symbols=self.profile.L, randomness_symbols=0,
                              note=f"theta={theta} cached={side_idx}")

    def query_payloads(self, theta: int, seed) -> dict[int, bytes]:
        plan, state = build_plan(self.params, theta, np.random.default_rng(seed))
        return {q.db_index + 1: wire.serialize_database_query(q)
                for q in database_queries(plan, state)}

    def structure_fingerprint(self, theta: int) -> bytes:
        sk = _skeleton(self.params, theta)
        parts = []
        for db in range(self.params.N):
            members = tuple(s.subset for s in sk.slots_per_db[db])
            tmpl, _ = wire.query_layout(self.field.w, self.params.K,
                                        self.profile.L, self.profile.p2,
                                        self.params.M >= 1, members)
            parts.append(bytes(tmpl))
        return view_digest(b"".join(parts))

    # -- batched collusion-view sampling ------------------------------------

    def view_digests(self, theta: int, subsets, sessions: int, master_seed: int,
                     batch: int = 512, crosscheck: int = 3) -> dict[tuple[int, ...], list[bytes]]:
        """Digest of every subset's collusion view for ``sessions`` fresh seeds.

        Sessions are batched so the full-rank sampling and the coefficient
        products run as stacked array operations; the first few sessions are
        cross-checked byte for byte against the reference single-session
        path (build_plan + serialize).
        """
        params, fieldq = self.params, self.field
        sk = _skeleton(params, theta)
        profile = sk.profile
        subsets = [tuple(sorted(s)) for s in subsets]
        templates, positions = [], []
        for db in range(params.N):
            members = tuple(s.subset for s in sk.slots_per_db[db])
            tmpl, pos = wire.query_layout(fieldq.w, params.K, profile.L,
                                          profile.p2, params.M >= 1, members)
            templates.append(np.frombuffer(bytes(tmpl), dtype=np.uint8))
            positions.append(pos)
        generators = {}
        for ctx in sk.contexts:
            dims = (ctx.length, ctx.dim)
            generators.setdefault(dims, make_mds(*dims, fieldq))
        gather = sk.gather
        row_bytes = fieldq.packed_size(profile.L)
        out: dict[tuple[int, ...], list[bytes]] = {s: [] for s in subsets}
        done = 0
        checked = False
        while done < sessions:
            size = min(batch, sessions - done)
            seeds = [(master_seed, theta, done + j) for j in range(size)]
            rngs = [np.random.default_rng(s) for s in seeds]
            mixers = [sample_full_rank_batched(profile.L, fieldq, rngs)
                      for _ in range(params.K)]
            coef = {}
            for ci, ctx in enumerate(sk.contexts):
                gen = generators[(ctx.length, ctx.dim)].entries
                for i in ctx.members:
                    lo, hi = ctx.block_rows[i]
                    coef[(ci, i)] = linalg.matmul(fieldq, gen,
                                                  mixers[i - 1][:, lo:hi, :])
            payloads: list[dict[int, bytes]] = [dict() for _ in range(size)]
            for db in range(params.N):
                msgs = gather.member_msgs[db]
                ctxs = gather.member_ctx[db]
                srcs = gather.member_src[db]
                rows = np.empty((size, len(msgs), profile.L), dtype=fieldq.dtype)
                mask = ctxs == -1
                rows[:, mask, :] = mixers[theta - 1][:, srcs[mask], :]
                for (ci, i), mat in coef.items():
                    sel = (ctxs == ci) & (msgs == i - 1)
                    if sel.any():
                        rows[:, sel, :] = mat[:, srcs[sel], :]
                packed = wire.pack_rows(fieldq, rows.reshape(size * len(msgs), profile.L),
                                        profile.L)
                packed = np.frombuffer(packed, dtype=np.uint8)
                packed = packed.reshape(size, len(msgs) * row_bytes)
                block = np.tile(templates[db], (size, 1))
                block[:, positions[db]] = packed
                for j in range(size):
                    payloads[j][db + 1] = block[j].tobytes()
            if not checked and crosscheck:
                self._crosscheck(theta, seeds[:crosscheck], payloads[:crosscheck])
                checked = True
            for pmap in payloads:
                for s in subsets:
                    out[s].append(CollusionView.from_payloads(s, pmap).digest())
            done += size
        return out

    def _crosscheck(self, theta, seeds, payload_maps) -> None:
        for seed, pmap in zip(seeds, payload_maps):
            ref = self.query_payloads(theta, seed)
            if ref != pmap:
                raise AuditInvariantError(
                    "batched view sampler diverged from the reference query path"
                )

    # -- what the client reconstructs beyond its own message ----------------

    def residual_session(self, rng, store: MessageStore, theta: int,
                         side_idx) -> np.ndarray:
        """Interference streams the client reconstructs during decoding,
        minus everything derivable from its cache: a direct exhibit of the
        symbols this non-symmetric scheme leaks about other messages."""
        plan, state = build_plan(self.params, theta, rng)
        bundle = answer_all(database_queries(plan, state), store)
        side = store.side_information(side_idx)
        p1, p2 = self.profile.p1, self.profile.p2
        fieldq = self.field
        raw = np.empty((self.params.N, p1), dtype=fieldq.dtype)
        if bundle.form == "compressed":
            kp = known_positions(plan, state, side)
            gen = state.generators[(2 * p1 - p2, p1)]
            for db, vec in enumerate(bundle.per_db):
                pairs = [(r, int(v)) for r, v in enumerate(vec)]
                pairs += [(p1 - p2 + slot, val) for slot, val in kp[db]]
                raw[db] = erasure_decode(gen, pairs)
        else:
            raw = np.stack(bundle.per_db)
        flat = raw.reshape(-1)
        cached = set(side)
        pieces = []
        for ci, ctx in enumerate(plan.contexts):
            if set(ctx.members) <= cached:
                continue
            free_flat, free_coord = plan.skeleton.gather.ctx_free[ci]
            gen = state.generators[(ctx.length, ctx.dim)]
            info = linalg.solve(fieldq, gen.entries[free_coord, :], flat[free_flat])
            for i in ctx.members:
                if i in cached:
                    lo, hi = ctx.block_rows[i]
                    info = info ^ linalg.matvec(fieldq, state.mixers[i - 1][lo:hi, :],
                                                side[i])
            pieces.append(info)
        return np.concatenate(pieces) if pieces else np.zeros(0, dtype=fieldq.dtype)


class SymmetricScheme:
    """Audit adapter for the symmetric (database-private) scheme."""

    def __init__(self, params: SchemeParams, masked: bool = True,
                 secret: bytes = AUDIT_SECRET):
        self.params = params
        self.sym = make_sym_params(params)
        self.field = self.sym.field
        self.masked = masked
        self.secret = secret
        self.name = "stpir-psi" if masked else "stpir-psi-unmasked"

    @property
    def shortcut(self) -> bool:
        return self.params.M == self.params.K - 1

    def capacity(self) -> Fraction:
        return capacity_stpir_psi(self.params, self.rho())

    def rho(self) -> Fraction:
        """Shared randomness consumed per desired symbol."""
        if self.shortcut:
            return Fraction(0)
        return Fraction(self.params.T, self.params.N - self.params.T)

    def _draw_theta_side(self, rng):
        k, m = self.params.K, self.params.M
        theta = int(rng.integers(1, k + 1))
        others = [i for i in range(1, k + 1) if i != theta]
        side = tuple(sorted(int(i) for i in rng.choice(others, size=m, replace=False))) if m else ()
        return theta, side

    def _common_randomness(self, session_id: bytes) -> CommonRandomness:
        cr = derive_common_randomness(self.secret, session_id, self.params.T,
                                      self.field)
        if self.masked:
            return cr
        zero = np.zeros_like(cr.sigma)
        zero.flags.writeable = False
        return CommonRandomness(session_id=cr.session_id, sigma=zero)

    def session_queries(self, theta: int, rng) -> tuple[bytes, np.ndarray, np.ndarray]:
        """(session id, masks, queries); the session id is drawn first."""
        session_id = rng.bytes(SESSION_ID_BYTES)
        masks = self.field.random_symbols(
            rng, (self.params.K, self.sym.message_length, self.params.T))
        return session_id, masks, queries_from_masks(self.sym, theta, masks)

    def run_session(self, rng) -> SessionOutcome:
        theta, side_idx = self._draw_theta_side(rng)
        ell = self.sym.message_length
        store = random_store(self.field, self.params.K, ell, rng)
        if self.shortcut:
            got = sym_sum_shortcut(store, store.side_information(side_idx), theta)
            return SessionOutcome(ok=bool(np.array_equal(got, store.message(theta))),
                                  downloaded_symbols=ell, desired_symbols=ell,
                                  randomness_symbols=0,
                                  note=f"theta={theta} shortcut")
        session_id, _, queries = self.session_queries(theta, rng)
        cr = self._common_randomness(session_id)
        answers = np.array(
            [sym_answer(queries[n], store, cr, int(self.sym.lambdas[n]))
             for n in range(self.params.N)],
            dtype=self.field.dtype,
        )
        got = sym_decode(answers, self.sym)
        ok = bool(np.array_equal(got, store.message(theta)))
        return SessionOutcome(ok=ok, downloaded_symbols=self.params.N,
                              desired_symbols=ell,
                              randomness_symbols=self.params.T,
                              note=f"theta={theta}")

    def query_payloads(self, theta: int, seed) -> dict[int, bytes]:
        rng = np.random.default_rng(seed)
        session_id, _, queries = self.session_queries(theta, rng)
        return {n + 1: wire.serialize_sym_query(self.field.w, session_id,
                                                self.params.T, queries[n])
                for n in range(self.params.N)}

    def structure_fingerprint(self, theta: int) -> bytes:
        head = (self.field.w, self.params.K, self.sym.message_length,
                self.params.T, self.params.N)
        return view_digest(repr(head).encode())

    def view_digests(self, theta: int, subsets, sessions: int, master_seed: int,
                     batch: int = 4096, crosscheck: int = 3) -> dict[tuple[int, ...], list[bytes]]:
        params, fieldq, sym = self.params, self.field, self.sym
        ell, t = sym.message_length, params.T
        subsets = [tuple(sorted(s)) for s in subsets]
        out: dict[tuple[int, ...], list[bytes]] = {s: [] for s in subsets}
        head_prefix = wire.serialize_sym_query(
            fieldq.w, bytes(SESSION_ID_BYTES), t,
            np.zeros((params.K, ell), dtype=fieldq.dtype))[:8]
        done = 0
        checked = False
        while done < sessions:
            size = min(batch, sessions - done)
            seeds = [(master_seed, theta, done + j) for j in range(size)]
            sids, mask_list = [], []
            for s in seeds:
                rng = np.random.default_rng(s)
                sids.append(rng.bytes(SESSION_ID_BYTES))
                mask_list.append(fieldq.random_symbols(rng, (params.K, ell, t)))
            masks = np.stack(mask_list)                       # (B, K, ell, T)
            low = np.stack([fieldq.pow(sym.lambdas, j) for j in range(t)], axis=1)
            evaluated = linalg.matmul(
                fieldq, masks.reshape(size * params.K * ell, t), low.T
            ).reshape(size, params.K, ell, params.N)
            queries = np.moveaxis(evaluated, 3, 1)            # (B, N, K, ell)
            indicator = np.stack(
                [fieldq.pow(sym.lambdas, t + i) for i in range(ell)], axis=1)
            queries[:, :, theta - 1, :] ^= indicator[None, :, :]
            payloads: list[dict[int, bytes]] = [dict() for _ in range(size)]
            for j in range(size):
                for n in range(params.N):
                    body = fieldq.pack(queries[j, n].reshape(-1))
                    payloads[j][n + 1] = head_prefix + sids[j] + body
            if not checked and crosscheck:
                for seed, pmap in zip(seeds[:crosscheck], payloads[:crosscheck]):
                    if self.query_payloads(theta, seed) != pmap:
                        raise AuditInvariantError(
                            "batched symmetric view sampler diverged from reference"
                        )
                checked = True
            for pmap in payloads:
                for s in subsets:
                    out[s].append(CollusionView.from_payloads(s, pmap).digest())
            done += size
        return out

    def residual_session(self, rng, store: MessageStore, theta: int,
                         side_idx) -> np.ndarray:
        """Low coefficients of the interpolated answer polynomial, minus the
        contributions the client can compute itself (its masks applied to the
        desired and cached messages). Uniform exactly when the shared mask
        does its job; a deterministic function of the other messages when it
        does not."""
        session_id, masks, queries = self.session_queries(theta, rng)
        cr = self._common_randomness(session_id)
        answers = np.array(
            [sym_answer(queries[n], store, cr, int(self.sym.lambdas[n]))
             for n in range(self.params.N)],
            dtype=self.field.dtype,
        )
        vander = np.stack([self.field.pow(self.sym.lambdas, j)
                           for j in range(self.params.N)], axis=1)
        coeffs = linalg.solve(self.field, vander, answers)
        low = coeffs[: self.params.T].copy()
        known = set(side_idx) | {theta}
        for k in known:
            w_k = store.message(k)
            # contribution of message k to coefficient j: sum_i W_k[i] * masks[k,i,j]
            contrib = np.bitwise_xor.reduce(
                self.field.mul(masks[k - 1], w_k[:, None]), axis=0)
            low ^= contrib
        return low



class DirectDownloadScheme:
    """Negative control: asks database 1 for the desired message by name."""

    name = "direct-download"

    def __init__(self, params: SchemeParams):
        self.params = params

    def query_payloads(self, theta: int, seed) -> dict[int, bytes]:
        return {n + 1: b"\x7fGIVE" + bytes([theta, n + 1])
                for n in range(self.params.N)}

    def structure_fingerprint(self, theta: int) -> bytes:
        return view_digest(b"".join(self.query_payloads(theta, 0).values()))

    def view_digests(self, theta: int, subsets, sessions: int, master_seed: int,
                     **_) -> dict[tuple[int, ...], list[bytes]]:
        out = {}
        pmap = self.query_payloads(theta, 0)
        for s in subsets:
            s = tuple(sorted(s))
            digest = CollusionView.from_payloads(s, pmap).digest()
            out[s] = [digest] * sessions
        return out


# ---------------------------------------------------------------------------
# audit procedures


def _session_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng((seed, index))


def audit_correctness(scheme, sessions: int, seed: int) -> AuditReport:
    """Full round trips over random (theta, cache, store); pass iff every
    decode is exact. Failures record the session index for replay."""
    failures = []
    for i in range(sessions):
        try:
            outcome = scheme.run_session(_session_rng(seed, i))
        except Exception as exc:  # scheme-level error counts as failure
            failures.append(f"session {i}: {type(exc).__name__}: {exc}")
            continue
        if not outcome.ok:
            failures.append(f"session {i}: wrong message ({outcome.note})")
        if len(failures) >= 10:
            break
    return AuditReport(test="correctness", scheme=scheme.name, params=scheme.params,
                       sessions=sessions, seed=seed, passed=not failures,
                       statistics={}, failures=failures)


def all_collusion_subsets(params: SchemeParams) -> list[tuple[int, ...]]:
    return [tuple(c) for c in combinations(range(1, params.N + 1), params.T)]


def audit_user_privacy(scheme, sessions: int, seed: int,
                       tv_threshold: float = DEFAULT_TV_THRESHOLD,
                       subsets=None) -> AuditReport:
    """Two layers: exact structure/determinism checks, then Monte-Carlo TV
    between collusion-view distributions for every desired-index pair."""
    params = scheme.params
    failures = []
    stats_out: dict = {}

    fingerprints = {t: scheme.structure_fingerprint(t).hex()
                    for t in range(1, params.K + 1)}
    if len(set(fingerprints.values())) != 1:
        failures.append(f"plan structure varies with the desired index: {fingerprints}")
    stats_out["structure_fingerprint"] = fingerprints[1]

    probe_seed = subseed(seed, "determinism")
    probe = scheme.query_payloads(1, probe_seed)
    if probe != scheme.query_payloads(1, probe_seed):
        failures.append("query generation is not deterministic in (theta, seed)")

    subsets = subsets or all_collusion_subsets(params)
    tv_stats = {}
    max_tv = 0.0
    digests = {t: scheme.view_digests(t, subsets, sessions, seed)
               for t in range(1, params.K + 1)}
    for s in [tuple(sorted(x)) for x in subsets]:
        for ta, tb in combinations(range(1, params.K + 1), 2):
            tv, kind = tv_between_digests(digests[ta][s], digests[tb][s])
            tv_stats[f"T={s} theta={ta}/{tb}"] = {"tv": tv, "estimator": kind}
            max_tv = max(max_tv, tv)
            if tv >= tv_threshold:
                failures.append(
                    f"collusion view for subset {s} separates theta {ta} vs {tb}: "
                    f"tv={tv:.4f} ({kind})"
                )
    stats_out["tv"] = tv_stats
    stats_out["max_tv"] = max_tv
    stats_out["tv_threshold"] = tv_threshold
    return AuditReport(test="user-privacy", scheme=scheme.name, params=params,
                       sessions=sessions, seed=seed, passed=not failures,
                       statistics=stats_out, failures=failures)


def audit_db_privacy(scheme, sessions: int, seed: int,
                     tv_threshold: float = DEFAULT_TV_THRESHOLD,
                     chi_p_threshold: float = DEFAULT_CHI_P) -> AuditReport:
    """What can the client learn beyond its message and its cache?

    Runs the scheme's residual extractor (the client-computable statistic
    that must be independent of all other messages) under three arms:

    Z: stores whose non-retrieved, non-cached messages are all zero;
    R: fully random stores;
    F: the R stores with one symbol of one non-retrieved message flipped.

    Requires the residual to be per-coordinate uniform on Z and R, and the
    digest distributions of (Z, R) and (R, F) to be indistinguishable. A
    scheme that exposes other-message content fails on Z (the residual
    collapses) or on the two-sample comparisons.
    """
    params = scheme.params
    fieldq = scheme.field
    theta = 1
    side_idx = tuple(range(2, 2 + params.M))
    undesired = [i for i in range(1, params.K + 1)
                 if i != theta and i not in side_idx]
    if not undesired:
        raise ParameterError("database-privacy audit needs at least one "
                             "non-retrieved, non-cached message")
    flip_msg = undesired[0]

    message_length = (scheme.sym.message_length if hasattr(scheme, "sym")
                      else scheme.profile.L)

    def make_store(rng, zero_undesired: bool, flip: bool) -> MessageStore:
        data = fieldq.random_symbols(rng, (params.K, message_length))
        if zero_undesired:
            for i in undesired:
                data[i - 1] = 0
        if flip:
            data[flip_msg - 1, 0] ^= 1
        return MessageStore(field=fieldq, messages=data)

    arms: dict[str, list[np.ndarray]] = {"Z": [], "R": [], "F": []}
    for arm, zero, flip in (("Z", True, False), ("R", False, False),
                            ("F", False, True)):
        for i in range(sessions):
            store_rng = np.random.default_rng(subseed(seed, "store", arm if arm == "Z" else "RF", i))
            store = make_store(store_rng, zero, flip)
            rng = np.random.default_rng(subseed(seed, arm, i))
            arms[arm].append(scheme.residual_session(rng, store, theta, side_idx))

    failures = []
    stats_out: dict = {"theta": theta, "cached": side_idx,
                       "flip_message": flip_msg}
    res_len = len(arms["R"][0])
    stats_out["residual_symbols"] = res_len
    chi = {}
    for arm in ("Z", "R"):
        block = np.stack(arms[arm])
        for j in range(res_len):
            p = chi_square_uniform_p(block[:, j], fieldq.q)
            chi[f"{arm}[{j}]"] = p
            if p <= chi_p_threshold:
                failures.append(
                    f"residual coordinate {j} is not uniform on arm {arm} (p={p:.2e})"
                )
    stats_out["chi_square_p"] = chi
    for pair in (("Z", "R"), ("R", "F")):
        da = [view_digest(v.tobytes()) for v in arms[pair[0]]]
        db = [view_digest(v.tobytes()) for v in arms[pair[1]]]
        tv, kind = tv_between_digests(da, db)
        stats_out[f"tv_{pair[0]}{pair[1]}"] = {"tv": tv, "estimator": kind}
        if tv >= tv_threshold:
            failures.append(
                f"client residual distinguishes store arms {pair}: tv={tv:.4f} ({kind})"
            )
    return AuditReport(test="db-privacy", scheme=scheme.name, params=params,
                       sessions=sessions, seed=seed, passed=not failures,
                       statistics=stats_out, failures=failures)


def measure_rate(scheme, sessions: int, seed: int) -> AuditReport:
    """Exact measured rate (desired bits / downloaded bits) vs capacity.

    A measured rate above capacity raises :class:`AuditInvariantError`
    immediately: no feasible scheme can beat the bound, so exceeding it can
    only mean the download accounting is broken.
    """
    downloads = set()
    desired = set()
    randomness = set()
    failures = []
    for i in range(sessions):
        outcome = scheme.run_session(_session_rng(seed, i))
        downloads.add(outcome.downloaded_symbols)
        desired.add(outcome.desired_symbols)
        randomness.add(outcome.randomness_symbols)
        if not outcome.ok:
            failures.append(f"session {i} failed to decode ({outcome.note})")
    if len(downloads) != 1 or len(desired) != 1:
        failures.append(f"download counts vary across sessions: {sorted(downloads)}")
    rate = Fraction(min(desired), min(downloads))
    cap = scheme.capacity()
    if rate > cap:
        raise AuditInvariantError(
            f"measured rate {rate} exceeds capacity {cap} for {scheme.params.label()}"
        )
    if rate != cap:
        failures.append(f"measured rate {rate} below capacity {cap}")
    stats_out = {
        "downloaded_symbols": min(downloads),
        "desired_symbols": min(desired),
        "randomness_symbols": min(randomness),
    }
    return AuditReport(test="rate", scheme=scheme.name, params=scheme.params,
                       sessions=sessions, seed=seed, passed=not failures,
                       statistics=stats_out, failures=failures,
                       measured_rate=rate, capacity=cap)
