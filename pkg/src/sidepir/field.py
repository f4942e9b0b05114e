"""GF(2^w) arithmetic for protocol symbols.

Elements are plain integers in [0, 2^w). A :class:`GF` instance carries the
log/antilog tables and all operations; every operation accepts either scalars
or numpy arrays, and the array forms are the hot path for the rest of the
package. Protocol fields are the binary extension fields with w in
{4, 8, 16}; other widths can be constructed explicitly for test harnesses.

Wire packing: symbols serialize little-endian in ceil(w/8) bytes, except
w = 4 which packs two symbols per byte, low nibble first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FieldMismatchError, ParameterError

# Standard reduction polynomials (bit i = coefficient of x^i, bit w set).
DEFAULT_POLYNOMIALS = {
    4: 0x13,       # x^4 + x + 1
    8: 0x11B,      # x^8 + x^4 + x^3 + x + 1
    16: 0x1100B,   # x^16 + x^12 + x^3 + x + 1
}

STANDARD_WIDTHS = (4, 8, 16)


def _poly_degree(p: int) -> int:
    return p.bit_length() - 1


def _poly_mod(a: int, m: int) -> int:
    """Remainder of a modulo m, both polynomials over GF(2)."""
    dm = _poly_degree(m)
    while a and _poly_degree(a) >= dm:
        a ^= m << (_poly_degree(a) - dm)
    return a


def is_irreducible(poly: int, w: int) -> bool:
    """Exhaustive divisor check: no monic factor of degree 1..w//2."""
    if _poly_degree(poly) != w:
        return False
    for k in range(1, w // 2 + 1):
        for low in range(1 << k):
            if _poly_mod(poly, (1 << k) | low) == 0:
                return False
    return True


def _slow_mul(a: int, b: int, poly: int, w: int) -> int:
    """Shift-and-reduce polynomial product, used only to build tables."""
    result = 0
    for i in range(w):
        if (b >> i) & 1:
            result ^= a << i
    for i in range(2 * w - 2, w - 1, -1):
        if (result >> i) & 1:
            result ^= poly << (i - w)
    return result & ((1 << w) - 1)


class GF:
    """Finite field GF(2^w) defined by an irreducible reduction polynomial.

    Immutable after construction; all operations are pure functions, so one
    instance may be shared freely across threads.
    """

    def __init__(self, w: int, poly: int | None = None):
        if not 1 <= w <= 16:
            raise ParameterError(f"unsupported field width {w} (need 1..16)")
        if poly is None:
            if w not in DEFAULT_POLYNOMIALS:
                raise ParameterError(f"no default reduction polynomial for width {w}")
            poly = DEFAULT_POLYNOMIALS[w]
        if not is_irreducible(poly, w):
            raise ParameterError(
                f"polynomial {poly:#x} is not irreducible of degree {w}"
            )
        self.w = w
        self.q = 1 << w
        self.poly = poly
        self.dtype = np.uint8 if w <= 8 else np.uint16
        self._build_tables()

    def _build_tables(self) -> None:
        q = self.q
        order = q - 1
        if q == 2:
            generator, alog = 1, [1]
        else:
            generator = None
            for g in range(2, q):
                x, powers = 1, []
                for _ in range(order):
                    powers.append(x)
                    x = _slow_mul(x, g, self.poly, self.w)
                    if x == 1:
                        break
                if len(powers) == order:
                    generator, alog = g, powers
                    break
            if generator is None:  # unreachable for an irreducible polynomial
                raise ParameterError(f"no generator found for {self!r}")
        self.generator = generator
        # alog doubled-and-padded so mul needs no modular reduction: indices
        # past 2*order land in the zero region reached via the log-0 sentinel.
        table = np.zeros(4 * order + 1, dtype=self.dtype)
        exps = np.array(alog, dtype=self.dtype)
        table[:order] = exps
        table[order:2 * order] = exps[: order]
        self._alog = table
        log = np.full(q, 2 * order, dtype=np.int32)  # sentinel for 0
        log[exps] = np.arange(order, dtype=np.int32)
        self._log = log
        self._order = order
        inv = np.zeros(q, dtype=self.dtype)
        nz = np.arange(1, q)
        inv[nz] = self._alog[(order - self._log[nz]) % order]
        self._inv = inv

    # -- element operations (scalars or arrays) -----------------------------

    def add(self, a, b):
        """Characteristic-2 addition: bitwise XOR."""
        return a ^ b

    sub = add

    def mul(self, a, b):
        out = self._alog[self._log[a] + self._log[b]]
        if np.ndim(out) == 0:
            return int(out)
        return out

    def inv(self, a):
        if np.ndim(a) == 0:
            if a == 0:
                raise ZeroDivisionError("0 has no multiplicative inverse")
            return int(self._inv[a])
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return self._inv[a]

    def pow(self, a, e: int):
        """a raised to a nonnegative integer power (scalar or array a)."""
        if e < 0:
            raise ParameterError("negative exponent; use inv() first")
        scalar = np.ndim(a) == 0
        arr = np.atleast_1d(np.asarray(a, dtype=self.dtype))
        if e == 0:
            out = np.ones_like(arr)
        else:
            out = np.zeros_like(arr)
            nz = arr != 0
            out[nz] = self._alog[
                (self._log[arr[nz]].astype(np.int64) * e) % self._order
            ]
        return int(out[0]) if scalar else out

    def element(self, value: int) -> "FieldElement":
        return FieldElement(int(value), self)

    def random_symbols(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=self.dtype)

    def validate_symbols(self, arr) -> np.ndarray:
        out = np.asarray(arr)
        if out.size and int(out.max()) >= self.q:
            raise ParameterError(f"symbol out of range for GF(2^{self.w})")
        return out.astype(self.dtype, copy=False)

    # -- wire packing --------------------------------------------------------

    def packed_size(self, count: int) -> int:
        if self.w == 4:
            return (count + 1) // 2
        return count * (2 if self.w == 16 else 1)

    def pack(self, symbols) -> bytes:
        arr = np.ascontiguousarray(symbols, dtype=self.dtype).ravel()
        if self.w == 4:
            if arr.size % 2:
                arr = np.concatenate([arr, np.zeros(1, dtype=self.dtype)])
            return (arr[0::2] | (arr[1::2] << 4)).astype(np.uint8).tobytes()
        if self.w == 16:
            return arr.astype("<u2").tobytes()
        return arr.astype(np.uint8).tobytes()

    def unpack(self, data: bytes, count: int) -> np.ndarray:
        if len(data) != self.packed_size(count):
            raise ParameterError(
                f"packed data holds {len(data)} bytes, expected "
                f"{self.packed_size(count)} for {count} symbols"
            )
        if self.w == 4:
            raw = np.frombuffer(data, dtype=np.uint8)
            out = np.empty(raw.size * 2, dtype=self.dtype)
            out[0::2] = raw & 0x0F
            out[1::2] = raw >> 4
            return out[:count]
        if self.w == 16:
            return np.frombuffer(data, dtype="<u2").astype(self.dtype)[:count]
        return np.frombuffer(data, dtype=np.uint8).astype(self.dtype)[:count]

    # -- identity ------------------------------------------------------------

    def __eq__(self, other):
        return isinstance(other, GF) and (self.w, self.poly) == (other.w, other.poly)

    def __hash__(self):
        return hash((self.w, self.poly))

    def __repr__(self):
        return f"GF(2^{self.w}, poly={self.poly:#x})"


@lru_cache(maxsize=None)
def standard_field(w: int) -> GF:
    """The protocol field of width w with its default polynomial (cached)."""
    if w not in STANDARD_WIDTHS:
        raise ParameterError(f"protocol field width must be one of {STANDARD_WIDTHS}")
    return GF(w)


@dataclass(frozen=True)
class FieldElement:
    """A single symbol tagged with its field, for the scalar API.

    Bulk operations should use numpy arrays with the :class:`GF` methods
    directly; this wrapper exists for the element-level contract (width
    checks, operator syntax).
    """

    value: int
    field: GF

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ParameterError(
                f"value {self.value} out of range for GF(2^{self.field.w})"
            )

    def _check(self, other: "FieldElement") -> None:
        if not isinstance(other, FieldElement):
            raise TypeError(f"cannot combine FieldElement with {type(other).__name__}")
        if other.field != self.field:
            raise FieldMismatchError(
                f"width mismatch: GF(2^{self.field.w}) vs GF(2^{other.field.w})"
            )

    def __add__(self, other):
        self._check(other)
        return FieldElement(self.value ^ other.value, self.field)

    __sub__ = __add__

    def __mul__(self, other):
        self._check(other)
        return FieldElement(self.field.mul(self.value, other.value), self.field)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"FieldElement({self.value:#x}, GF(2^{self.field.w}))"
