"""MDS (Reed-Solomon) generator matrices and full-rank matrix sampling.

Generators are deterministic Vandermonde matrices on the evaluation points
0..e-1 (in field encoding), so every process reconstructs the same matrix
from (e, f, field) with no negotiation. The systematic variant places the
identity block on the LAST f rows; rows 0..e-f-1 are parity.

Only erasure decoding is provided (no error correction): pick any f known
coordinates, invert, and check the remaining known coordinates against the
reconstructed codeword.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import linalg
from .errors import (
    CorruptionError,
    FieldTooSmallError,
    InsufficientSymbolsError,
    ParameterError,
)
from .field import GF

# Exhaustive minor verification is affordable up to this code length; longer
# codes are spot-checked with random row subsets.
_EXHAUSTIVE_MDS_LIMIT = 12
_SPOT_CHECK_SUBSETS = 24


@dataclass(frozen=True)
class GeneratorMatrix:
    """An (e, f) MDS generator: every f-row submatrix is invertible."""

    field: GF
    entries: np.ndarray  # shape (e, f), read-only
    systematic: bool

    @property
    def length(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def __repr__(self):
        tag = "systematic " if self.systematic else ""
        return f"GeneratorMatrix({tag}{self.length}x{self.dim}, GF(2^{self.field.w}))"


@dataclass(frozen=True)
class FullRankMatrix:
    field: GF
    entries: np.ndarray  # shape (n, n), invertible

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _vandermonde(e: int, f: int, field: GF) -> np.ndarray:
    points = np.arange(e, dtype=field.dtype)
    cols = [np.ones(e, dtype=field.dtype)]
    for _ in range(f - 1):
        cols.append(field.mul(cols[-1], points))
    return np.stack(cols, axis=1)


def _verify_mds(field: GF, entries: np.ndarray) -> None:
    e, f = entries.shape
    if e <= _EXHAUSTIVE_MDS_LIMIT:
        subsets = combinations(range(e), f)
    else:
        rng = np.random.default_rng(0)
        subsets = (
            tuple(rng.choice(e, size=f, replace=False))
            for _ in range(_SPOT_CHECK_SUBSETS)
        )
    for rows in subsets:
        if linalg.rank(field, entries[list(rows), :]) != f:
            raise ParameterError(
                f"({e},{f}) generator lost the MDS property on rows {rows}"
            )


def _check_dims(e: int, f: int, field: GF) -> None:
    if not 1 <= f <= e:
        raise ParameterError(f"need 1 <= dimension <= length, got ({e},{f})")
    if e > field.q:
        raise FieldTooSmallError(
            f"code length {e} needs {e} distinct evaluation points but "
            f"GF(2^{field.w}) has only {field.q}",
            min_width=next((w for w in (4, 8, 16) if (1 << w) >= e), None),
        )


@lru_cache(maxsize=None)
def make_mds(e: int, f: int, field: GF) -> GeneratorMatrix:
    """Deterministic (e, f) Reed-Solomon generator (not systematic)."""
    _check_dims(e, f, field)
    entries = _vandermonde(e, f, field)
    _verify_mds(field, entries)
    entries.flags.writeable = False
    return GeneratorMatrix(field=field, entries=entries, systematic=False)


@lru_cache(maxsize=None)
def make_systematic_mds(e: int, f: int, field: GF) -> GeneratorMatrix:
    """Deterministic systematic (e, f) generator; last f rows are identity."""
    _check_dims(e, f, field)
    vander = _vandermonde(e, f, field)
    tail_inv = linalg.inv_matrix(field, vander[e - f:, :])
    entries = linalg.matmul(field, vander, tail_inv)
    _verify_mds(field, entries)
    entries.flags.writeable = False
    return GeneratorMatrix(field=field, entries=entries, systematic=True)


def encode(g: GeneratorMatrix, x: np.ndarray) -> np.ndarray:
    """Codeword y = G x for an information vector of length dim."""
    x = np.asarray(x, dtype=g.field.dtype)
    if x.shape != (g.dim,):
        raise ParameterError(f"information vector must have length {g.dim}")
    return linalg.matvec(g.field, g.entries, x)


def erasure_decode(g: GeneratorMatrix, known) -> np.ndarray:
    """Recover the information vector from >= dim known coordinates.

    ``known`` is an iterable of (row index, symbol) pairs. Any dim of them
    determine the codeword (MDS property); the surplus coordinates are
    checked against the reconstruction and a mismatch raises
    :class:`CorruptionError`.
    """
    seen: dict[int, int] = {}
    for row, value in known:
        row, value = int(row), int(value)
        if not 0 <= row < g.length:
            raise ParameterError(f"coordinate {row} outside code length {g.length}")
        if row in seen:
            if seen[row] != value:
                raise CorruptionError(f"coordinate {row} supplied twice with different values")
            continue
        seen[row] = value
    if len(seen) < g.dim:
        raise InsufficientSymbolsError(
            f"got {len(seen)} distinct coordinates, need {g.dim}"
        )
    rows = sorted(seen)
    base, rest = rows[: g.dim], rows[g.dim:]
    values = np.array([seen[r] for r in base], dtype=g.field.dtype)
    x = linalg.solve(g.field, g.entries[base, :], values)
    if rest:
        recoded = linalg.matvec(g.field, g.entries[rest, :], x)
        expected = np.array([seen[r] for r in rest], dtype=g.field.dtype)
        if not np.array_equal(recoded, expected):
            bad = [r for r, a, b in zip(rest, recoded, expected) if a != b]
            raise CorruptionError(f"over-determined coordinates disagree at rows {bad}")
    return x


def sample_candidates(n: int, field: GF, rngs) -> np.ndarray:
    """One uniform n x n candidate per random source, stacked."""
    return np.stack([field.random_symbols(rng, (n, n)) for rng in rngs])


def sample_full_rank_batched(n: int, field: GF, rngs) -> np.ndarray:
    """Uniform invertible n x n matrix per source, by rejection sampling.

    Each source draws its own candidates sequentially, so the result for a
    given source is identical whether it is sampled alone or in a batch.
    """
    rngs = list(rngs)
    out = sample_candidates(n, field, rngs)
    pending = np.nonzero(linalg.rank_batched(field, out) < n)[0]
    while pending.size:
        out[pending] = sample_candidates(n, field, (rngs[i] for i in pending))
        still = linalg.rank_batched(field, out[pending]) < n
        pending = pending[still]
    return out


def sample_full_rank(n: int, field: GF, rng: np.random.Generator) -> FullRankMatrix:
    """Uniform over all invertible n x n matrices (exact, via rejection)."""
    if n < 1:
        raise ParameterError("dimension must be positive")
    entries = sample_full_rank_batched(n, field, [rng])[0]
    entries.flags.writeable = False
    return FullRankMatrix(field=field, entries=entries)
