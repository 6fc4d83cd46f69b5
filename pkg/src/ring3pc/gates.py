"""Semi-honest arithmetic gates with additive security: mul, dot, trunc.

A multiplication is the n=1 case of the inner product, so both share one
code path and produce byte-identical traffic for n=1.  Gates follow the
prepare/finish split: `dot_prepare` runs with masks only (the circuit-
dependent offline part: fresh output mask plus the cross-term share from
P0), `dot_finish` consumes the masked inputs online and exchanges the two
result-share legs between P1 and P2.

Truncation generates, from pairwise-shared bits, a mask pair (r, r >> t)
whose low mask is assigned to the producer of the input wire; online it is
a local arithmetic shift of m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grvec
from .sharing import AShare, MVal, Ring, sha_input, sha_random
from .transport import PAYLOAD, Phase
from .rings import RingError


@dataclass
class DotGate:
    """Offline material for one batched inner-product gate."""

    ring: Ring
    gid: int
    n: int
    lanes: int
    gamma: AShare
    out_mask: AShare
    kind: str = "dot"
    phase: Phase | None = None


def _pair_sum(party, x_masks: AShare, y_masks: AShare, ring: Ring) -> np.ndarray:
    """P0's sum of mask cross-products over the dot dimension (axis 0)."""
    if ring.mod is None:
        prods = grvec.vmask(x_masks.total * y_masks.total, ring.ell)
        return grvec.vmask(np.add.reduce(prods, axis=0), ring.ell)
    prods = grvec.gr_mul(x_masks.total.reshape(-1, ring.d),
                         y_masks.total.reshape(-1, ring.d), ring.ell, ring.mod)
    prods = prods.reshape(x_masks.total.shape)
    return grvec.vmask(np.add.reduce(prods, axis=0), ring.ell)


def dot_prepare(party, x_masks: AShare, y_masks: AShare, lanes: int,
                out_mask: AShare | None = None, kind: str = "dot",
                gamma_cls: str = PAYLOAD) -> DotGate:
    """Offline part: draw the output mask, share the cross term from P0.

    x_masks/y_masks hold arrays of shape (n, lanes) (base ring) or
    (n, lanes, d); mul is n=1 with arrays (1, lanes[, d]).
    """
    ring = x_masks.ring
    gid = party.next_id(kind)
    if out_mask is None:
        out_mask = sha_random(party, lanes, ring)
    n = None
    for a in (x_masks.s1, x_masks.s2, x_masks.total):
        if a is not None:
            n = a.shape[0]
    gamma_clear = None
    if party.role == 0:
        cross = _pair_sum(party, x_masks, y_masks, ring)
        gamma_clear = grvec.vmask(cross + out_mask.total, ring.ell)
    gamma = sha_input(party, gamma_clear, lanes, ring, f"{kind}.gamma.{gid}",
                      site=f"{kind}.gamma", gate=gid, cls=gamma_cls)
    return DotGate(ring, gid, n, lanes, gamma, out_mask, kind, party.phase)


def dot_finish(party, gate: DotGate, x: MVal, y: MVal, log: bool = True,
               leg2_cls: str = PAYLOAD) -> MVal:
    """Online part: P1/P2 locally fold m- and r-terms, exchange result legs.

    leg2_cls controls the accounting class of the P2->P1 leg (the
    postprocessing cost formulas count verification multiplications once).
    """
    ring = gate.ring
    label = f"{gate.kind}.mz.{gate.gid}"
    if party.role == 0:
        out = MVal(gate.out_mask, None)
        if log:
            _log_dot(party, gate, x, y, out)
        return out

    def fold(ms, rs):
        if ring.mod is None:
            return grvec.vmask(np.add.reduce(grvec.vmask(ms * rs, ring.ell),
                                             axis=0), ring.ell)
        p = grvec.gr_mul(ms.reshape(-1, ring.d), rs.reshape(-1, ring.d),
                         ring.ell, ring.mod).reshape(ms.shape)
        return grvec.vmask(np.add.reduce(p, axis=0), ring.ell)

    if party.role == 1:
        leg = grvec.vmask(gate.gamma.s1 - fold(x.m, y.mask.s1)
                          - fold(y.m, x.mask.s1), ring.ell)
    else:
        leg = grvec.vmask(fold(x.m, y.m) + gate.gamma.s2
                          - fold(x.m, y.mask.s2) - fold(y.m, x.mask.s2),
                          ring.ell)
    leg = party.local_inject(f"{gate.kind}.z", gate.gid, leg, ring)
    peer = 3 - party.role
    cls = PAYLOAD if party.role == 1 else leg2_cls
    party.send(peer, f"{label}.leg{party.role}", leg, ring,
               cls=cls, site=f"{gate.kind}.mz", gate=gate.gid)
    other = party.recv(peer, f"{label}.leg{peer}", ring, gate.lanes)
    m_z = grvec.vmask(leg + other, ring.ell)
    out = MVal(gate.out_mask, m_z)
    if log:
        _log_dot(party, gate, x, y, out)
    return out


@dataclass
class MulBatchRec:
    x: MVal
    y: MVal
    z: MVal
    lanes: int


@dataclass
class DotBatchRec:
    xs: MVal  # (n, lanes[, d]) component arrays
    ys: MVal
    z: MVal   # (lanes[, d])
    n: int
    lanes: int


def _log_dot(party, gate: DotGate, x: MVal, y: MVal, z: MVal) -> None:
    log = party.log_for(gate.ring)
    if log.frozen:
        raise RuntimeError("gate log is frozen; no gates may run in postprocessing")
    if gate.n == 1:
        log.muls.append(MulBatchRec(x.take(0), y.take(0), z, gate.lanes))
    else:
        log.dots.append(DotBatchRec(x, y, z, gate.n, gate.lanes))


def mul_prepare(party, x_mask: AShare, y_mask: AShare, lanes: int,
                out_mask: AShare | None = None, kind: str = "dot") -> DotGate:
    """Multiplication = inner product of dimension 1."""
    return dot_prepare(party, x_mask._map(lambda a: a[None]),
                       y_mask._map(lambda a: a[None]), lanes, out_mask, kind)


def mul_finish(party, gate: DotGate, x: MVal, y: MVal, log: bool = True) -> MVal:
    lift = lambda v: MVal(v.mask._map(lambda a: a[None]),
                          None if v.m is None else v.m[None])
    return dot_finish(party, gate, lift(x), lift(y), log=log)


def mul(party, x: MVal, y: MVal, out_mask: AShare | None = None,
        log: bool = True) -> MVal:
    """Prepare+finish in the current phase (gadgets that live in one phase)."""
    gate = mul_prepare(party, x.mask, y.mask, x.lanes, out_mask)
    return mul_finish(party, gate, x, y, log=log)


def dot(party, x: MVal, y: MVal, out_mask: AShare | None = None,
        log: bool = True) -> MVal:
    gate = dot_prepare(party, x.mask, y.mask, _dot_lanes(x), out_mask)
    return dot_finish(party, gate, x, y, log=log)


def _dot_lanes(x: MVal) -> int:
    for a in (x.m, x.mask.s1, x.mask.s2, x.mask.total):
        if a is not None:
            return a.shape[1]
    raise RuntimeError("empty dot operand")


# ---------------------------------------------------------------------------
# Maliciously secure probabilistic truncation
# ---------------------------------------------------------------------------

@dataclass
class TruncMaterial:
    """Mask pair (r, r >> t): r goes to the input wire, r >> t to the output."""

    t: int
    rx_mask: AShare   # P0 knows only the sum
    rz_mask: AShare
    rx_clear: np.ndarray | None  # P0 only, for invariant checks
    rz_clear: np.ndarray | None


def embedded_bit_share(party, bits: np.ndarray | None, holder: int,
                       ring: Ring) -> MVal:
    """Masked view of a pairwise-known bit b: m=0 and the holder's mask half
    set to -b, so the share reconstructs to +b and P0 knows the mask sum."""
    role = party.role
    lanes = None if bits is None else bits.shape[0]
    neg = None if bits is None else grvec.vneg(bits.astype(np.uint64), ring.ell)
    if role == 0:
        mask = AShare(ring, 0, s1=neg if holder == 1 else ring.zeros(lanes),
                      s2=neg if holder == 2 else ring.zeros(lanes),
                      total=neg.copy())
        return MVal(mask, None)
    if role == holder:
        mask = AShare(ring, role, **{f"s{role}": neg})
        return MVal(mask, np.zeros_like(neg))
    # other online party: its half is zero; lane count comes from the caller
    raise RuntimeError("embedded_bit_share needs explicit lanes for non-holders")


def _bit_share(party, bits, holder, lanes, ring) -> MVal:
    role = party.role
    if role == 0 or role == holder:
        return embedded_bit_share(party, bits, holder, ring)
    mask = AShare(ring, role, **{f"s{role}": ring.zeros(lanes)})
    return MVal(mask, ring.zeros(lanes))


def _xor_dot(party, b1: MVal, b2: MVal, weights: np.ndarray, ring: Ring,
             sel: np.ndarray) -> MVal:
    """<v> = sum_j w_j * (b1_sel[j] xor b2_sel[j]) via one logged dot.

    b1/b2 hold (ell, lanes) bit shares; sel picks the bit row per position.
    XOR is realized arithmetically: a + b - 2ab, products folded into a
    single inner product with the -2*w_j coefficients on the x side.
    """
    w = weights.reshape(-1, 1)
    b1s = b1.take(sel)
    b2s = b2.take(sel)
    lin = (b1s + b2s).scale_pub(w)
    coeff = grvec.vmask(np.zeros_like(weights) - (weights * np.uint64(2)),
                        ring.ell).reshape(-1, 1)
    xs = b1s.scale_pub(coeff)
    gate = dot_prepare(party, xs.mask, b2s.mask, lanes=_dot_lanes(xs))
    prod = dot_finish(party, gate, xs, b2s)
    return _sum_axis0(lin, ring) + prod


def _sum_axis0(v: MVal, ring: Ring) -> MVal:
    red = lambda a: grvec.vmask(np.add.reduce(a, axis=0), ring.ell)
    mask = v.mask._map(red)
    return MVal(mask, None if v.m is None else red(v.m))


def trunc_prepare(party, lanes: int, t: int, ring: Ring) -> TruncMaterial:
    """Preprocessing of the truncation pair; 1 round, two logged dots."""
    ell = ring.ell
    if not 0 < t < ell:
        raise RingError(f"truncation bits {t} out of range for ell={ell}")
    b1 = b2 = None
    if party.role in (0, 1):
        b1 = party.prg("01", "trunc.b1").draw_bits(ell * lanes).reshape(ell, lanes)
    if party.role in (0, 2):
        b2 = party.prg("02", "trunc.b2").draw_bits(ell * lanes).reshape(ell, lanes)
    sb1 = _bit_share(party, b1.reshape(-1) if b1 is not None else None, 1,
                     ell * lanes, ring)
    sb2 = _bit_share(party, b2.reshape(-1) if b2 is not None else None, 2,
                     ell * lanes, ring)
    reshape = lambda v: MVal(v.mask._map(lambda a: a.reshape(ell, lanes)),
                             None if v.m is None else v.m.reshape(ell, lanes),
                             v.sealed)
    sb1, sb2 = reshape(sb1), reshape(sb2)

    pow2 = np.array([(1 << j) & ring.mask for j in range(ell)], dtype=np.uint64)
    idx = np.arange(ell)
    src = np.where(idx < ell - t, np.minimum(idx + t, ell - 1), ell - 1)

    vx = _xor_dot(party, sb1, sb2, pow2, ring, idx)
    vz = _xor_dot(party, sb1, sb2, pow2, ring, src)

    def derived_mask(v: MVal, clear: np.ndarray | None) -> AShare:
        role = party.role
        if role == 0:
            return AShare(ring, 0, total=clear, p0_halves=False)
        if role == 1:
            return AShare(ring, 1, s1=grvec.vmask(v.m - v.mask.s1, ring.ell),
                          p0_halves=False)
        return AShare(ring, 2, s2=grvec.vneg(v.mask.s2, ring.ell),
                      p0_halves=False)

    rx_clear = rz_clear = None
    if party.role == 0:
        xor = (b1 ^ b2).astype(np.uint64)
        rx_clear = grvec.vmask(np.add.reduce(xor * pow2[:, None], axis=0), ell)
        rz_clear = grvec.arith_rshift(rx_clear, t, ell)
    rx_mask = derived_mask(vx, rx_clear)
    rz_mask = derived_mask(vz, rz_clear)
    party.round_barrier()
    return TruncMaterial(t, rx_mask, rz_mask, rx_clear, rz_clear)


def trunc_online(party, x: MVal, mat: TruncMaterial) -> MVal:
    """m_z = arithmetic shift of m_x; zero communication, zero rounds."""
    if x.mask is not mat.rx_mask:
        raise RuntimeError("truncation input wire does not carry the assigned mask")
    m = None
    if party.role in (1, 2):
        m = grvec.arith_rshift(x.m, mat.t, x.ring.ell)
    return MVal(mat.rz_mask, m)
