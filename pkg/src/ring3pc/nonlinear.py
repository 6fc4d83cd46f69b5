"""Bit machinery: daBits/edaBits, arithmetic<->boolean conversion, adders,
and the derived sign-based gates (DReLU, ReLU, MaxPool).

Boolean values are shares over Z_2 (ell=1): addition is XOR, multiplication
is AND, and AND gates enter the boolean multiplication log like any other
gate.  Conversions rely on bit material shared consistently over both rings:
a daBit is one random bit in both rings, edaBits are a random ring element
together with boolean shares of its bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grvec
from .gates import DotGate, _bit_share, dot_finish, dot_prepare, _sum_axis0
from .sharing import AShare, MVal, Ring, rec
BOOL = Ring(1)


def _reshape(v: MVal, shape) -> MVal:
    return MVal(v.mask._map(lambda a: a.reshape(shape)),
                None if v.m is None else v.m.reshape(shape), v.sealed)


def _xor_arith(party, a: MVal, b: MVal, ring: Ring) -> MVal:
    """a xor b over Z_2^ell for bit-valued shares: a + b - 2ab (one mul)."""
    gate = dot_prepare(party, a.mask._map(lambda t: t[None]),
                       b.mask._map(lambda t: t[None]), a.lanes)
    prod = dot_finish(party, gate,
                      MVal(a.mask._map(lambda t: t[None]),
                           None if a.m is None else a.m[None]),
                      MVal(b.mask._map(lambda t: t[None]),
                           None if b.m is None else b.m[None]))
    two = np.uint64(2 & ring.mask)
    return a + b - prod.scale_pub(two)


@dataclass
class DaBit:
    """One random bit shared over Z_2 and Z_2^ell consistently."""

    bit: MVal    # over Z_2
    arith: MVal  # over Z_2^ell


@dataclass
class EdaBits:
    """Random r over Z_2^ell plus boolean shares of each of its ell bits."""

    arith: MVal        # (lanes,)
    bits: MVal         # (ell, lanes) over Z_2


def dabit_prepare(party, lanes: int, ring: Ring) -> DaBit:
    """Three pairwise random bits, XORed in both rings; two logged muls."""
    role = party.role
    r1 = party.prg("01", "dab.r1").draw_bits(lanes) if role in (0, 1) else None
    r2 = party.prg("02", "dab.r2").draw_bits(lanes) if role in (0, 2) else None
    r3 = party.prg("12", "dab.r3").draw_bits(lanes) if role in (1, 2) else None

    # boolean share: m = r3 known to P1/P2, halves r1/r2 held pairwise with P0
    if role == 0:
        bmask = AShare(BOOL, 0, s1=r1, s2=r2, total=(r1 + r2) & np.uint64(1))
        bit = MVal(bmask, None)
    else:
        bmask = AShare(BOOL, role, **{f"s{role}": r1 if role == 1 else r2})
        bit = MVal(bmask, r3)

    a1 = _bit_share(party, r1, 1, lanes, ring)
    a2 = _bit_share(party, r2, 2, lanes, ring)
    if role == 0:
        a3 = MVal(AShare(ring, 0, s1=ring.zeros(lanes), s2=ring.zeros(lanes),
                         total=ring.zeros(lanes)), None)
    else:
        a3 = MVal(AShare(ring, role, **{f"s{role}": ring.zeros(lanes)}),
                  r3.astype(np.uint64))
    u = _xor_arith(party, a1, a2, ring)
    arith = _xor_arith(party, u, a3, ring)
    return DaBit(bit, arith)


def edabits_prepare(party, lanes: int, ring: Ring) -> EdaBits:
    """edaBits generation: ell first-layer muls plus one inner product."""
    ell = ring.ell
    role = party.role
    n = ell * lanes
    b1 = party.prg("01", "eda.b1").draw_bits(n) if role in (0, 1) else None
    b2 = party.prg("02", "eda.b2").draw_bits(n) if role in (0, 2) else None
    mm = party.prg("12", "eda.m").draw_bits(n) if role in (1, 2) else None

    if role == 0:
        bmask = AShare(BOOL, 0, s1=b1.reshape(ell, lanes),
                       s2=b2.reshape(ell, lanes),
                       total=((b1 + b2) & np.uint64(1)).reshape(ell, lanes))
        bits = MVal(bmask, None)
    else:
        half = (b1 if role == 1 else b2).reshape(ell, lanes)
        bits = MVal(AShare(BOOL, role, **{f"s{role}": half}),
                    mm.reshape(ell, lanes))

    sb1 = _bit_share(party, b1, 1, n, ring)
    sb2 = _bit_share(party, b2, 2, n, ring)
    rp = _xor_arith(party, sb1, sb2, ring)          # r'[i] = b1 xor b2, (n,)
    if role == 0:
        sm = MVal(AShare(ring, 0, s1=ring.zeros(n), s2=ring.zeros(n),
                         total=ring.zeros(n)), None)
    else:
        sm = MVal(AShare(ring, role, **{f"s{role}": ring.zeros(n)}),
                  mm.astype(np.uint64))

    # <r> = sum 2^i (m_i + r'_i - 2 m_i r'_i): linear part local, products as
    # one inner product of dimension ell with the -2^(i+1) weights folded in.
    pow2 = np.array([(1 << i) & ring.mask for i in range(ell)],
                    dtype=np.uint64).reshape(ell, 1)
    shape = (ell, lanes)
    sm2, rp2 = _reshape(sm, shape), _reshape(rp, shape)
    lin = (sm2 + rp2).scale_pub(pow2)
    coeff = grvec.vmask(np.zeros_like(pow2) - (pow2 + pow2), ring.ell)
    xs = sm2.scale_pub(coeff)
    gate = dot_prepare(party, xs.mask, rp2.mask, lanes=lanes)
    prod = dot_finish(party, gate, xs, rp2)
    arith = _sum_axis0(lin, ring) + prod
    return EdaBits(arith, bits)


# ---------------------------------------------------------------------------
# Adders over boolean shares
# ---------------------------------------------------------------------------

def bit_add_public(party, pub_bits: np.ndarray, shared: MVal,
                   msb_only: bool = False, topology: str = "ripple") -> MVal:
    """Add public bits (ell, lanes) to shared bits.

    The ripple adder spends one AND per carry stage (sequential rounds, the
    auditable baseline); topology "prefix" runs a Kogge-Stone carry scan in
    log2(ell) levels of two ANDs each.  msb_only returns just the top sum.
    """
    if topology == "prefix":
        return _bit_add_public_prefix(party, pub_bits, shared, msb_only)
    ell, lanes = pub_bits.shape
    sums = []
    carry = None
    for j in range(ell):
        a = pub_bits[j]
        b = shared.take(j)
        if carry is None:
            s = b.add_pub(a)
            carry = b.scale_pub(a)          # a*b, local: carry into stage 1
        else:
            s = (b + carry).add_pub(a)
            if j < ell - 1:
                t = _and(party, b, carry)
                carry = t + (b + carry).scale_pub(a)
        if not msb_only or j == ell - 1:
            sums.append(s)
    out = sums[-1] if msb_only else _stack(sums)
    return out


def _bit_add_public_prefix(party, pub_bits: np.ndarray, shared: MVal,
                           msb_only: bool) -> MVal:
    """Kogge-Stone variant: generate g_j = a_j*b_j (local, a public) and
    propagate p_j = a_j + b_j; carry scan combines
    (G, P) o (G', P') = (G + P*G', P*P') at doubling distances, so the
    positions below the shift distance keep their accumulated pair."""
    ell = pub_bits.shape[0]
    g = shared.scale_pub(pub_bits)
    p = shared.add_pub(pub_bits)
    G, P = g, p
    dist = 1
    while dist < ell:
        g2 = G + _and2d(party, P, _shift_rows(G, dist))
        p2 = _and2d(party, P, _shift_rows(P, dist))
        G = _splice_rows(G, g2, dist)
        P = _splice_rows(P, p2, dist)
        dist *= 2
    carries = _shift_rows(G, 1)     # carry into j is the scan at j-1; c_0 = 0
    sums = p + carries
    return sums.take(ell - 1) if msb_only else sums


def _and2d(party, a: MVal, b: MVal) -> MVal:
    """AND of (rows, lanes) bit shares, one batched gate over all entries."""
    shape = _shape_of(a)
    flat = lambda v: _reshape(v, (-1,))
    return _reshape(_and(party, flat(a), flat(b)), shape)


def _shape_of(v: MVal):
    for arr in (v.m, v.mask.s1, v.mask.s2, v.mask.total):
        if arr is not None:
            return arr.shape
    raise RuntimeError("empty share view")


def _shift_rows(v: MVal, by: int) -> MVal:
    """Rows shifted toward higher indices; vacated low rows are zero."""
    def sh(a):
        out = np.zeros_like(a)
        out[by:] = a[:-by]
        return out
    return MVal(v.mask._map(sh), None if v.m is None else sh(v.m))


def _splice_rows(old: MVal, new: MVal, k: int) -> MVal:
    """Rows [0, k) from old, the rest from new."""
    comb = lambda o, n: np.concatenate([o[:k], n[k:]], axis=0)
    return MVal(old.mask._map(comb, new.mask),
                None if old.m is None else comb(old.m, new.m))


def bit_add_shared(party, a: MVal, b: MVal) -> MVal:
    """Ripple-carry add of two shared bit vectors (ell, lanes); 2 ANDs/stage."""
    ell = _rows(a)
    sums = []
    carry = None
    for j in range(ell):
        aj, bj = a.take(j), b.take(j)
        if carry is None:
            sums.append(aj + bj)
            carry = _and(party, aj, bj)
        else:
            sums.append(aj + bj + carry)
            if j < ell - 1:
                carry = _and(party, aj, bj) + _and(party, carry, aj + bj)
    return _stack(sums)


def _and(party, a: MVal, b: MVal) -> MVal:
    gate = dot_prepare(party, a.mask._map(lambda t: t[None]),
                       b.mask._map(lambda t: t[None]), a.lanes)
    return dot_finish(party, gate,
                      MVal(a.mask._map(lambda t: t[None]),
                           None if a.m is None else a.m[None]),
                      MVal(b.mask._map(lambda t: t[None]),
                           None if b.m is None else b.m[None]))


def _rows(v: MVal) -> int:
    for a in (v.m, v.mask.s1, v.mask.s2, v.mask.total):
        if a is not None:
            return a.shape[0]
    raise RuntimeError("empty share view")


def _stack(vals: list[MVal]) -> MVal:
    st = lambda arrs: np.stack(arrs, axis=0)
    fields = {}
    for f in ("s1", "s2", "total"):
        if getattr(vals[0].mask, f) is not None:
            fields[f] = st([getattr(v.mask, f) for v in vals])
        else:
            fields[f] = None
    mask = AShare(vals[0].ring, vals[0].role, p0_halves=vals[0].mask.p0_halves,
                  **fields)
    m = None if vals[0].m is None else st([v.m for v in vals])
    return MVal(mask, m)


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------

def a2b(party, x: MVal, eda: EdaBits, msb_only: bool = False) -> MVal:
    """Arithmetic-to-boolean: open Delta = x - r (masked by the fresh r),
    then add its public bits to the shared bits of r with a full adder."""
    ring = x.ring
    delta = rec(party, x - eda.arith, "a2b.delta")
    ell = ring.ell
    pub_bits = (delta[None, :] >> np.arange(ell, dtype=np.uint64)[:, None]) & np.uint64(1)
    return bit_add_public(party, pub_bits, eda.bits, msb_only=msb_only)


def b2a(party, b: MVal, dab: DaBit, ring: Ring) -> MVal:
    """Boolean-to-arithmetic via Delta = b xor r: out = D + (1-2D) * <r>."""
    delta = rec(party, b - dab.bit, "b2a.delta")
    one_m2d = grvec.vmask(np.uint64(1) - (delta + delta), ring.ell)
    return dab.arith.scale_pub(one_m2d).add_pub(delta.astype(np.uint64))


# ---------------------------------------------------------------------------
# Sign-based gates
# ---------------------------------------------------------------------------

@dataclass
class ReluMaterial:
    eda: EdaBits
    dab: DaBit
    wgate: DotGate   # preprocessed product <r_dab * x>


def relu_prepare(party, x_mask: AShare, lanes: int, ring: Ring) -> ReluMaterial:
    eda = edabits_prepare(party, lanes, ring)
    dab = dabit_prepare(party, lanes, ring)
    wgate = dot_prepare(party, dab.arith.mask._map(lambda a: a[None]),
                        x_mask._map(lambda a: a[None]), lanes)
    return ReluMaterial(eda, dab, wgate)


def drelu_online(party, x: MVal, eda: EdaBits) -> MVal:
    """1 - msb(x): 1 for x >= 0 in two's complement."""
    msb = a2b(party, x, eda, msb_only=True)
    return msb.add_pub(np.uint64(1))


def relu_online(party, x: MVal, mat: ReluMaterial) -> MVal:
    """relu(x) = b*x for b = drelu(x), evaluated as D*x + (1-2D)*(r*x) with
    D = b xor r_dab public; the product r_dab*x is the preprocessed gate."""
    ring = x.ring
    b = drelu_online(party, x, mat.eda)
    delta = rec(party, b - mat.dab.bit, "relu.delta")
    lift = lambda v: MVal(v.mask._map(lambda a: a[None]),
                          None if v.m is None else v.m[None])
    w = dot_finish(party, mat.wgate, lift(mat.dab.arith), lift(x))
    one_m2d = grvec.vmask(np.uint64(1) - (delta + delta), ring.ell)
    return x.scale_pub(delta.astype(np.uint64)) + w.scale_pub(one_m2d)


def maxpool_online(party, vals: MVal, ring: Ring) -> MVal:
    """Tournament max over axis 0 of (n, lanes): max(a,b) = relu(a-b) + b.

    Later rounds prepare their ReLU material on demand (the masks of
    intermediate maxima depend on opened bits, so their cross terms are
    shared in the online phase).
    """
    rows = [vals.take(i) for i in range(_rows(vals))]
    while len(rows) > 1:
        nxt = []
        for i in range(0, len(rows) - 1, 2):
            a, b = rows[i], rows[i + 1]
            diff = a - b
            mat = relu_prepare(party, diff.mask, diff.lanes, ring)
            nxt.append(relu_online(party, diff, mat) + b)
        if len(rows) % 2 == 1:
            nxt.append(rows[-1])
        rows = nxt
    return rows[0]
