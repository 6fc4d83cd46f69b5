"""Fixed-width ring arithmetic and Galois-ring extensions.

Base values live in Z_2^ell for 1 <= ell <= 64, with wrapping semantics
(ell=1 behaves as Z_2: add is XOR, mul is AND).  Extension values live in
GR(2^ell, d) = Z_2^ell[x]/f(x), where f is a fixed per-degree binary
irreducible polynomial lifted to Z_2^ell.  Coefficients are stored and
serialized little-endian, constant term first.

Division is never implemented in general; the only "division" is the exact
halving used by `quad_eval`, which requires an even evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class RingError(ValueError):
    """Operands with mismatched widths or moduli."""


class ConfigError(ValueError):
    """Unsupported ring/extension parameter."""


MAX_WIDTH = 64


def ring_mask(width: int) -> int:
    if not 1 <= width <= MAX_WIDTH:
        raise ConfigError(f"ring width must be in 1..{MAX_WIDTH}, got {width}")
    return (1 << width) - 1


# ---------------------------------------------------------------------------
# GF(2)[x] helpers (polynomials as int bitmasks, bit i = coefficient of x^i)
# ---------------------------------------------------------------------------

def gf2_degree(p: int) -> int:
    return p.bit_length() - 1


def gf2_mulmod(a: int, b: int, mod: int) -> int:
    res = 0
    deg = gf2_degree(mod)
    while b:
        if b & 1:
            res ^= a
        b >>= 1
        a <<= 1
        if a >> deg & 1:
            a ^= mod
    return res


def gf2_powmod(a: int, n: int, mod: int) -> int:
    res = 1
    while n:
        if n & 1:
            res = gf2_mulmod(res, a, mod)
        a = gf2_mulmod(a, a, mod)
        n >>= 1
    return res


def gf2_gcd(a: int, b: int) -> int:
    while b:
        da, db = gf2_degree(a), gf2_degree(b)
        if da < db:
            a, b = b, a
            continue
        a ^= b << (da - db)
    return a


def gf2_is_irreducible(f: int) -> bool:
    """Rabin's deterministic irreducibility criterion over GF(2).

    f of degree d is irreducible iff x^(2^d) == x (mod f) and, for every
    prime p dividing d, gcd(x^(2^(d/p)) - x, f) == 1.
    """
    d = gf2_degree(f)
    if d <= 0:
        return False
    if d == 1:
        return True
    x = 0b10
    if gf2_powmod(x, 1 << d, f) != x:
        return False
    n, primes = d, []
    q = 2
    while q * q <= n:
        if n % q == 0:
            primes.append(q)
            while n % q == 0:
                n //= q
        q += 1
    if n > 1:
        primes.append(n)
    for p in primes:
        h = gf2_powmod(x, 1 << (d // p), f) ^ x
        if gf2_gcd(h, f) != 1:
            return False
    return True


# ---------------------------------------------------------------------------
# Base ring elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingElem:
    """An element of Z_2^width; all arithmetic wraps mod 2^width."""

    value: int
    width: int

    def __post_init__(self):
        object.__setattr__(self, "value", self.value & ring_mask(self.width))

    def _check(self, other: "RingElem") -> None:
        if not isinstance(other, RingElem):
            raise TypeError("expected RingElem")
        if other.width != self.width:
            raise RingError(f"width mismatch: {self.width} vs {other.width}")

    def __add__(self, other):
        self._check(other)
        return RingElem(self.value + other.value, self.width)

    def __sub__(self, other):
        self._check(other)
        return RingElem(self.value - other.value, self.width)

    def __mul__(self, other):
        self._check(other)
        return RingElem(self.value * other.value, self.width)

    def __neg__(self):
        return RingElem(-self.value, self.width)

    def shl(self, n: int) -> "RingElem":
        if not 0 <= n < self.width:
            raise RingError(f"shift {n} out of range for width {self.width}")
        return RingElem(self.value << n, self.width)

    def shr(self, n: int) -> "RingElem":
        """Logical right shift."""
        if not 0 <= n < self.width:
            raise RingError(f"shift {n} out of range for width {self.width}")
        return RingElem(self.value >> n, self.width)

    def sar(self, n: int) -> "RingElem":
        """Arithmetic right shift (replicates the sign bit)."""
        if not 0 <= n < self.width:
            raise RingError(f"shift {n} out of range for width {self.width}")
        if n == 0:
            return self
        sign = self.value >> (self.width - 1)
        out = self.value >> n
        if sign:
            out |= ((1 << n) - 1) << (self.width - n)
        return RingElem(out, self.width)

    def signed(self) -> int:
        """Two's-complement interpretation."""
        half = 1 << (self.width - 1)
        return self.value - (1 << self.width) if self.value >= half else self.value


# ---------------------------------------------------------------------------
# Galois-ring moduli
# ---------------------------------------------------------------------------

# Fixed low-weight binary irreducibles, one per supported degree.  d=1 is the
# degenerate no-extension case used by control experiments.
_MODULUS_BITS = {
    1: 0b11,                                          # x + 1
    2: 0b111,                                         # x^2 + x + 1
    4: 0b10011,                                       # x^4 + x + 1
    8: 0x11B,                                         # x^8 + x^4 + x^3 + x + 1
    16: (1 << 16) | (1 << 5) | (1 << 3) | (1 << 1) | 1,
    32: (1 << 32) | (1 << 7) | (1 << 3) | (1 << 2) | 1,
    64: (1 << 64) | (1 << 4) | (1 << 3) | (1 << 1) | 1,
}


@dataclass(frozen=True)
class GrModulus:
    """Monic degree-d polynomial, irreducible over GF(2), lifted to Z_2^ell."""

    degree: int
    f_bits: int

    def __post_init__(self):
        d = self.degree
        if d < 1 or gf2_degree(self.f_bits) != d:
            raise ConfigError(f"modulus bits do not have degree {d}")
        if not self.f_bits >> d & 1:
            raise ConfigError("modulus must be monic")
        if not gf2_is_irreducible(self.f_bits):
            raise ConfigError(f"f_bits={self.f_bits:#x} is reducible over GF(2)")

    @property
    def low_terms(self) -> tuple[int, ...]:
        """Exponents below `degree` where f has coefficient 1."""
        return tuple(j for j in range(self.degree) if self.f_bits >> j & 1)

    @lru_cache(maxsize=None)
    def reduction_rows(self, width: int) -> np.ndarray:
        """(d-1, d) uint64 matrix R with row i = coeffs of x^(d+i) mod f.

        Reduces a schoolbook product: low + high @ R, everything mod 2^width.
        """
        d = self.degree
        mask = ring_mask(width)
        rows = []
        # x^d == -(sum of low terms)
        base = [0] * d
        for j in self.low_terms:
            base[j] = (-1) & mask
        row = base[:]
        for _ in range(d - 1):
            rows.append(row[:])
            top = row[d - 1]
            nxt = [0] + row[: d - 1]
            for j in self.low_terms:
                nxt[j] = (nxt[j] - top) & mask
            row = nxt
        return np.array(rows, dtype=np.uint64).reshape(d - 1, d)


def modulus_for_degree(d: int) -> GrModulus:
    """Fixed, documented modulus per supported degree (deterministic)."""
    if d not in _MODULUS_BITS:
        raise ConfigError(
            f"unsupported extension degree {d}; supported: {sorted(_MODULUS_BITS)}")
    return GrModulus(d, _MODULUS_BITS[d])


# ---------------------------------------------------------------------------
# Galois-ring elements (scalar API; bulk work uses ring3pc.grvec directly)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrElem:
    """Element of GR(2^width, d): d base-ring coefficients, constant first."""

    coeffs: tuple[int, ...]
    width: int
    modulus: GrModulus

    def __post_init__(self):
        if len(self.coeffs) != self.modulus.degree:
            raise RingError(
                f"expected {self.modulus.degree} coefficients, got {len(self.coeffs)}")
        mask = ring_mask(self.width)
        object.__setattr__(self, "coeffs", tuple(c & mask for c in self.coeffs))

    @classmethod
    def embed(cls, value: int, width: int, modulus: GrModulus) -> "GrElem":
        """Embed a base-ring constant: coeffs = [value, 0, ..., 0]."""
        return cls((value,) + (0,) * (modulus.degree - 1), width, modulus)

    @classmethod
    def zero(cls, width: int, modulus: GrModulus) -> "GrElem":
        return cls.embed(0, width, modulus)

    @classmethod
    def one(cls, width: int, modulus: GrModulus) -> "GrElem":
        return cls.embed(1, width, modulus)

    def _check(self, other: "GrElem") -> None:
        if not isinstance(other, GrElem):
            raise TypeError("expected GrElem")
        if other.width != self.width or other.modulus != self.modulus:
            raise RingError("GrElem modulus/width mismatch")

    def _arr(self) -> np.ndarray:
        return np.array([self.coeffs], dtype=np.uint64)

    def _from_arr(self, a: np.ndarray) -> "GrElem":
        return GrElem(tuple(int(v) for v in a.reshape(-1)), self.width, self.modulus)

    def __add__(self, other):
        self._check(other)
        mask = ring_mask(self.width)
        return GrElem(tuple((a + b) & mask for a, b in zip(self.coeffs, other.coeffs)),
                      self.width, self.modulus)

    def __sub__(self, other):
        self._check(other)
        mask = ring_mask(self.width)
        return GrElem(tuple((a - b) & mask for a, b in zip(self.coeffs, other.coeffs)),
                      self.width, self.modulus)

    def __neg__(self):
        return GrElem(tuple(-c for c in self.coeffs), self.width, self.modulus)

    def __mul__(self, other):
        from . import grvec
        self._check(other)
        out = grvec.gr_mul(self._arr(), other._arr(), self.width, self.modulus)
        return self._from_arr(out)

    def scale(self, c: int) -> "GrElem":
        """Multiply by a base-ring constant (coefficient-wise)."""
        mask = ring_mask(self.width)
        c &= mask
        return GrElem(tuple(a * c for a in self.coeffs), self.width, self.modulus)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)


def line_eval(p0: GrElem, p1: GrElem, zeta: GrElem) -> GrElem:
    """Evaluate the line through (0, p0), (1, p1) at zeta: zeta*p1 - (zeta-1)*p0."""
    p0._check(p1)
    p0._check(zeta)
    one = GrElem.one(p0.width, p0.modulus)
    return zeta * p1 - (zeta - one) * p0


def quad_eval(h0: GrElem, h1: GrElem, h2: GrElem, zeta_even: GrElem) -> GrElem:
    """Evaluate the quadratic through (0,h0), (1,h1), (2,h2) at an even point.

    The Lagrange denominators of 2 are handled by exact halving of the even
    point; an odd point has no well-defined half in Z_2^ell and is rejected.
    """
    h0._check(h1)
    h0._check(h2)
    h0._check(zeta_even)
    if any(c & 1 for c in zeta_even.coeffs):
        raise RingError("quad_eval requires an even evaluation point")
    w, mod = h0.width, h0.modulus
    u = GrElem(tuple(c >> 1 for c in zeta_even.coeffs), w, mod)
    one = GrElem.one(w, mod)
    two = GrElem.embed(2, w, mod)
    l0 = (zeta_even - one) * (u - one)       # (z-1)(z-2)/2
    l1 = zeta_even * (two - zeta_even)       # z(2-z)
    l2 = u * (zeta_even - one)               # z(z-1)/2
    return l0 * h0 + l1 * h1 + l2 * h2
