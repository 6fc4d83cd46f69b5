"""Postprocessing batch verification over the extension ring.

Pipeline: compress the logged multiplication triples into one inner-product
triple over GR(2^ell, d) with challenge powers, halve its dimension R times
by line interpolation at a random even point, then check the remaining
relation with a random multiplier and a verifiable opening of the result
(which must be zero).  Inner-product gates are consolidated the same way and
fed through the identical tail.

Slot assignment in the halving step matters: h(1) and h(2) come from inner
products and h(0) is derived from the compressed result.  Deriving h(1)
instead would weight result errors by the middle Lagrange factor, which
vanishes mod 4 at every even evaluation point, silently erasing any
injected error divisible by 2^(ell-2) (including the classic 2^(ell-1)
ring attack); h(0)'s weight keeps a unit factor.

Challenge shares are generated in the preprocessing phase and sealed: they
can only be opened after the gate logs freeze in postprocessing.

Accounting: verification-internal cross-term shares are tagged "offline"
(the closed forms book them to the offline phase); the second leg of the
challenge-multiplier products and the opening of the final zero value are
tagged "aux" because the online closed form counts each reconstructed value
once.  Payload-class bytes in postprocessing then match
(5R + 3 + G/2^R) * ell * d bits exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grvec
from .gates import dot_finish, dot_prepare
from .rings import ConfigError, modulus_for_degree
from .sharing import AShare, MVal, Ring, rec, shc_random
from .transport import AUX, PAYLOAD, Phase

CHALLENGE_KINDS = ("mul.arith", "dot.arith", "mul.bool")
DEFAULT_R_MAX = 24


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------

def online_bits(gates: int, R: int, ell: int, d: int) -> int:
    return (5 * R + 3 + math.ceil(gates / 2 ** R)) * ell * d


def offline_bits(gates: int, R: int, ell: int, d: int) -> int:
    return (R + math.ceil(gates / 2 ** R)) * ell * d


def rounds(R: int) -> int:
    return R + 2


NETWORK_PROFILES = {
    # (round-trip time in ms, bandwidth in bits/s)
    "lan": (0.2, 1e9),
    "man": (12.0, 1e8),
    "wan": (80.0, 4e7),
}


def latency_estimate(n_rounds: int, bits: int, profile: str) -> float:
    """Report-side model: rounds * RTT + bits / bandwidth, in milliseconds."""
    rtt, bw = NETWORK_PROFILES[profile]
    return n_rounds * rtt + bits / bw * 1000.0


def pick_r(gates: int, ell: int, d: int, profile: str = "lan",
           r_max: int = DEFAULT_R_MAX) -> int:
    """Latency-minimizing reduction count for a verification of `gates`."""
    if gates <= 1:
        return 0
    hi = min(r_max, int(math.log2(gates)))
    best, best_cost = 0, None
    for R in range(hi + 1):
        bits = online_bits(gates, R, ell, d) + offline_bits(gates, R, ell, d)
        cost = latency_estimate(rounds(R), bits, profile)
        if best_cost is None or cost < best_cost:
            best, best_cost = R, cost
    return best


# ---------------------------------------------------------------------------
# Challenge material
# ---------------------------------------------------------------------------

@dataclass
class Challenges:
    r: MVal
    alpha: MVal
    zetas: list[MVal]


def prepare_verification(party, d: int, r_max: int = DEFAULT_R_MAX) -> None:
    """Draw sealed extension-ring challenges for every log kind (no bytes).

    Must run in the preprocessing phase so no party can know a challenge
    before the circuit has been evaluated.
    """
    if party.phase is not Phase.PRE:
        raise ConfigError("verification challenges must be drawn in preprocessing")
    mod = modulus_for_degree(d)
    ctx = {}
    for kind in CHALLENGE_KINDS:
        ell = 1 if kind.endswith("bool") else party.ell
        gr = Ring(ell, mod)
        ctx[kind] = Challenges(
            r=shc_random(party, 1, gr, seal=True),
            alpha=shc_random(party, 1, gr, seal=True),
            zetas=[shc_random(party, 1, gr, seal=True) for _ in range(r_max)],
        )
    party.verify_ctx = ctx


# ---------------------------------------------------------------------------
# Share plumbing over the extension ring
# ---------------------------------------------------------------------------

def _lift(v: MVal, gr: Ring) -> MVal:
    """Base-ring share -> extension share with the constant coefficient set.

    P0 drops its mask halves here: the verification only ever needs its mask
    sums (for cross terms), and nothing derived from the log is opened with
    the half-based reconstruction.
    """
    emb = lambda a: grvec.gr_embed(a, gr.mod)
    p0 = v.mask.role == 0
    mask = AShare(gr, v.mask.role,
                  s1=None if p0 or v.mask.s1 is None else emb(v.mask.s1),
                  s2=None if p0 or v.mask.s2 is None else emb(v.mask.s2),
                  total=None if v.mask.total is None else emb(v.mask.total),
                  p0_halves=False if p0 else v.mask.p0_halves)
    return MVal(mask, None if v.m is None else emb(v.m))


def _zero_lanes(party, gr: Ring, lanes: int) -> MVal:
    mask = AShare.zero(gr, party.role, lanes)
    m = gr.zeros(lanes) if party.role in (1, 2) else None
    return MVal(mask, m)


def _sum_lanes(v: MVal, gr: Ring) -> MVal:
    red = lambda a: grvec.vmask(np.add.reduce(a, axis=0, keepdims=True), gr.ell)
    return MVal(v.mask._map(red), None if v.m is None else red(v.m))


def _gr_dot(party, xs: MVal, ys: MVal, gr: Ring, leg2_cls: str = PAYLOAD) -> MVal:
    """One (N,d)x(N,d) -> (1,d) inner product; cross-term share is "offline"."""
    unsq = lambda v: MVal(v.mask._map(lambda a: a[:, None]),
                          None if v.m is None else v.m[:, None], v.sealed)
    x2, y2 = unsq(xs), unsq(ys)
    gate = dot_prepare(party, x2.mask, y2.mask, lanes=1, kind="vfy.dot",
                       gamma_cls="offline")
    return dot_finish(party, gate, x2, y2, log=False, leg2_cls=leg2_cls)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def compress_mul_triples(party, xs: MVal, ys: MVal, zs: MVal, gr: Ring,
                         chal: Challenges):
    """Scale triple i by the i-th challenge power (powers start at r^0) and
    fold the results into one inner-product triple of dimension N."""
    r = rec(party, chal.r, "vfy.r", style="challenge")
    party.round_barrier()
    n = xs.lanes
    powers = grvec.gr_powers(r.reshape(gr.d), n, gr.ell, gr.mod)
    xg = _lift(xs, gr).scale_gr(powers)
    yg = _lift(ys, gr)
    zg = _sum_lanes(_lift(zs, gr).scale_gr(powers), gr)
    return xg, yg, zg


def consolidate_dot_triples(party, batches, gr: Ring, chal: Challenges):
    """Fold logged inner-product triples into a single one: triple j has its
    x vector and result scaled by the j-th challenge power, then all vectors
    are concatenated."""
    r = rec(party, chal.r, "vfy.r", style="challenge")
    party.round_barrier()
    total_triples = sum(b.lanes for b in batches)
    powers = grvec.gr_powers(r.reshape(gr.d), total_triples, gr.ell, gr.mod)
    xs_parts, ys_parts, z_acc = [], [], None
    pos = 0
    for b in batches:
        pw = powers[pos:pos + b.lanes]          # (L, d)
        pos += b.lanes
        # (n, L, d) -> (L*n, d), lane-major so each triple stays contiguous
        flat = lambda v: MVal(
            v.mask._map(lambda a: a.transpose(1, 0, 2).reshape(-1, gr.d)),
            None if v.m is None else v.m.transpose(1, 0, 2).reshape(-1, gr.d))
        xflat = flat(_lift(b.xs, gr))
        yflat = flat(_lift(b.ys, gr))
        pw_rep = np.repeat(pw, b.n, axis=0)
        xs_parts.append(xflat.scale_gr(pw_rep))
        ys_parts.append(yflat)
        zg = _sum_lanes(_lift(b.z, gr).scale_gr(pw), gr)
        z_acc = zg if z_acc is None else z_acc + zg
    xs = xs_parts[0]
    ys = ys_parts[0]
    for p in xs_parts[1:]:
        xs = xs.concat(p)
    for p in ys_parts[1:]:
        ys = ys.concat(p)
    return xs, ys, z_acc


def reduce_dimension(party, xs: MVal, ys: MVal, z: MVal, gr: Ring, zeta: MVal):
    """Halve the triple: interpolate pair lines at 0/1, re-evaluate at a
    random even point.  h(1), h(2) come from inner products; h(0) is derived
    from the result so that result errors carry a unit-bearing Lagrange
    weight (see module docstring)."""
    if xs.lanes % 2 == 1:
        pad = _zero_lanes(party, gr, 1)
        xs, ys = xs.concat(pad), ys.concat(pad)
    f0, f1 = xs.take(slice(0, None, 2)), xs.take(slice(1, None, 2))
    g0, g1 = ys.take(slice(0, None, 2)), ys.take(slice(1, None, 2))
    two = np.uint64(2)
    f2 = f1.scale_pub(two) - f0
    g2 = g1.scale_pub(two) - g0

    h1 = _gr_dot(party, f1, g1, gr)
    h2 = _gr_dot(party, f2, g2, gr)
    h0 = z - h1

    ze = rec(party, zeta.scale_pub(two), "vfy.zeta", style="challenge")
    party.round_barrier()

    l0, l1, l2 = grvec.gr_quad_coeffs(ze, gr.ell, gr.mod)
    z_out = h0.scale_gr(l0) + h1.scale_gr(l1) + h2.scale_gr(l2)
    # line through (0,f0),(1,f1) at ze, as f0 + ze*(f1-f0): one product
    xs_out = f0 + (f1 - f0).scale_gr(ze)
    ys_out = g0 + (g1 - g0).scale_gr(ze)
    return xs_out, ys_out, z_out


def check_inner_product(party, xs: MVal, ys: MVal, z: MVal, gr: Ring,
                        alpha: MVal) -> bool:
    """Multiply the x side by a secret random factor, fold the claimed result
    in as the extra pair (alpha, -z), open the combination, accept iff zero."""
    n = xs.lanes
    bcast = lambda a: np.broadcast_to(a, (n,) + a.shape[1:]).copy()
    alpha_n = MVal(alpha.mask._map(bcast),
                   None if alpha.m is None else bcast(alpha.m), alpha.sealed)
    unsq = lambda v: MVal(v.mask._map(lambda a: a[None]),
                          None if v.m is None else v.m[None], v.sealed)
    gate = dot_prepare(party, unsq(xs).mask, unsq(alpha_n).mask, lanes=n,
                       kind="vfy.amul", gamma_cls="offline")
    xprime = dot_finish(party, gate, unsq(xs), unsq(alpha_n), log=False,
                        leg2_cls=AUX)
    pairs_x = xprime.concat(alpha)
    pairs_y = ys.concat(-z)
    delta = _gr_dot(party, pairs_x, pairs_y, gr)
    opened = rec(party, delta, "vfy.delta", style="aux")
    party.round_barrier()
    return bool(np.all(opened == 0))


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def _concat_all(recs, pick):
    out = None
    for r in recs:
        v = pick(r)
        out = v if out is None else out.concat(v)
    return out


def batch_verify_muls(party, base_ell: int, d: int, R: int,
                      kind_key: str | None = None) -> bool:
    """Verify every logged multiplication gate of the given base ring."""
    kind = "bool" if base_ell == 1 else "arith"
    log = party.logs[kind]
    if not log.muls:
        return True
    ctx = _require_ctx(party, kind_key or f"mul.{kind}")
    gr = Ring(base_ell, modulus_for_degree(d))
    xs = _concat_all(log.muls, lambda b: b.x)
    ys = _concat_all(log.muls, lambda b: b.y)
    zs = _concat_all(log.muls, lambda b: b.z)
    xg, yg, zg = compress_mul_triples(party, xs, ys, zs, gr, ctx)
    return _verify_tail(party, xg, yg, zg, gr, ctx, R)


def batch_verify_dots(party, base_ell: int, d: int, R: int) -> bool:
    """Verify every logged inner-product gate of the given base ring."""
    kind = "bool" if base_ell == 1 else "arith"
    log = party.logs[kind]
    if not log.dots:
        return True
    ctx = _require_ctx(party, f"dot.{kind}")
    gr = Ring(base_ell, modulus_for_degree(d))
    xs, ys, z = consolidate_dot_triples(party, log.dots, gr, ctx)
    return _verify_tail(party, xs, ys, z, gr, ctx, R)


def _verify_tail(party, xs, ys, z, gr, ctx: Challenges, R: int) -> bool:
    if R > len(ctx.zetas):
        raise ConfigError(f"R={R} exceeds prepared challenge budget {len(ctx.zetas)}")
    for k in range(R):
        xs, ys, z = reduce_dimension(party, xs, ys, z, gr, ctx.zetas[k])
    return check_inner_product(party, xs, ys, z, gr, ctx.alpha)


def _require_ctx(party, key: str) -> Challenges:
    if party.verify_ctx is None or key not in party.verify_ctx:
        raise ConfigError("verification challenges were not prepared "
                          "in the preprocessing phase")
    return party.verify_ctx[key]


def verify_session(party, d: int, R: int | str = "auto",
                   profile: str = "lan") -> dict[str, bool]:
    """Freeze the logs and run every applicable verification; returns the
    per-log verdicts.  Callers abort before revealing outputs on any False."""
    if party.phase is not Phase.POST:
        raise ConfigError("verification runs in the postprocessing phase")
    party.freeze_logs()
    results: dict[str, bool] = {}
    for kind, base_ell in (("arith", party.ell), ("bool", 1)):
        log = party.logs[kind]
        if log.muls:
            r_eff = pick_r(log.mul_count(), base_ell, d, profile) if R == "auto" else int(R)
            results[f"mul.{kind}"] = batch_verify_muls(party, base_ell, d, r_eff)
        if log.dots:
            n_total = sum(b.lanes * b.n for b in log.dots)
            r_eff = pick_r(n_total, base_ell, d, profile) if R == "auto" else int(R)
            results[f"dot.{kind}"] = batch_verify_dots(party, base_ell, d, r_eff)
    return results
