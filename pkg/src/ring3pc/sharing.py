"""Secret-sharing forms, seeded share generation, and verifiable opening.

Two views exist per value x in Z_2^ell (or its extension):

* additive: P1 holds s1, P2 holds s2, x = s1 + s2; P0 knows the halves when
  it dealt them, and always knows the sum when the share is used as a mask.
* masked: the mask [r] as an additive share plus the masked value m = x + r
  replicated at P1 and P2; reconstruction is x = m - r.

All arrays are uint64, shaped (lanes,) for base-ring values and (lanes, d)
for extension values.  The wire format is ceil(ell/8) little-endian bytes
per coefficient.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import grvec
from .rings import ConfigError, GrModulus, RingError, ring_mask
from .transport import AUX, PAYLOAD, HarnessError, Phase


@dataclass(frozen=True)
class Ring:
    """Value domain tag: Z_2^ell when mod is None, else GR(2^ell, d)."""

    ell: int
    mod: GrModulus | None = None

    def __post_init__(self):
        ring_mask(self.ell)

    @property
    def mask(self) -> int:
        return ring_mask(self.ell)

    @property
    def d(self) -> int:
        return 1 if self.mod is None else self.mod.degree

    @property
    def elem_bytes(self) -> int:
        return math.ceil(self.ell / 8) * self.d

    def zeros(self, lanes: int) -> np.ndarray:
        shape = (lanes,) if self.mod is None else (lanes, self.d)
        return np.zeros(shape, dtype=np.uint64)

    def const(self, value: int, lanes: int) -> np.ndarray:
        out = self.zeros(lanes)
        v = np.uint64(value & self.mask)
        if self.mod is None:
            out += v
        else:
            out[:, 0] = v
        return out


def encode_array(arr: np.ndarray, ring: Ring) -> bytes:
    nb = math.ceil(ring.ell / 8)
    flat = np.ascontiguousarray(arr, dtype="<u8").reshape(-1)
    if nb == 8:
        return flat.tobytes()
    return flat.view(np.uint8).reshape(-1, 8)[:, :nb].tobytes()


def decode_array(buf: bytes, ring: Ring, lanes: int) -> np.ndarray:
    nb = math.ceil(ring.ell / 8)
    count = lanes * ring.d
    if len(buf) != nb * count:
        raise HarnessError(f"bad frame: {len(buf)} bytes for {count} x {nb}")
    if nb == 8:
        flat = np.frombuffer(buf, dtype="<u8").copy()
    else:
        raw = np.frombuffer(buf, dtype=np.uint8).reshape(count, nb)
        full = np.zeros((count, 8), dtype=np.uint8)
        full[:, :nb] = raw
        flat = full.view("<u8").reshape(-1).copy()
    return flat.reshape((lanes,) if ring.mod is None else (lanes, ring.d))


def digest(salt: bytes, label: str, payload: bytes) -> bytes:
    return hashlib.sha256(salt + label.encode() + payload).digest()


# ---------------------------------------------------------------------------
# Share views
# ---------------------------------------------------------------------------

def _scale_pub(arr, c, ring: Ring):
    c = np.asarray(c, dtype=np.uint64)
    if ring.mod is not None and c.ndim == arr.ndim - 1:
        c = c[..., None]
    return grvec.vmask(arr * c, ring.ell)


@dataclass
class AShare:
    """One party's view of an additive share / mask.

    p0_halves records whether P0 knows both halves (the default) or only the
    sum (masks produced by the truncation preprocessing); reconstruction
    message flow differs between the two.
    """

    ring: Ring
    role: int
    s1: np.ndarray | None = None
    s2: np.ndarray | None = None
    total: np.ndarray | None = None
    p0_halves: bool = True

    def _map(self, fn, other: "AShare | None" = None) -> "AShare":
        if other is None:
            one = lambda a: None if a is None else fn(a)
            return replace(self, s1=one(self.s1), s2=one(self.s2),
                           total=one(self.total))
        if other.ring != self.ring:
            raise RingError("ring mismatch")
        # Combining with a sum-only mask drops P0's halves (field intersection).
        two = lambda a, b: None if a is None or b is None else fn(a, b)
        return replace(self, s1=two(self.s1, other.s1), s2=two(self.s2, other.s2),
                       total=two(self.total, other.total),
                       p0_halves=self.p0_halves and other.p0_halves)

    def __add__(self, other):
        return self._map(lambda a, b: grvec.vmask(a + b, self.ring.ell), other)

    def __sub__(self, other):
        return self._map(lambda a, b: grvec.vmask(a - b, self.ring.ell), other)

    def __neg__(self):
        return self._map(lambda a: grvec.vneg(a, self.ring.ell))

    def scale_pub(self, c):
        return self._map(lambda a: _scale_pub(a, c, self.ring))

    def scale_gr(self, c: np.ndarray):
        mod = self.ring.mod
        if mod is None:
            raise RingError("scale_gr needs an extension ring")
        return self._map(lambda a: grvec.gr_mul(a, c, self.ring.ell, mod))

    def take(self, idx):
        return self._map(lambda a: a[idx])

    @classmethod
    def zero(cls, ring: Ring, role: int, lanes: int) -> "AShare":
        z = ring.zeros(lanes)
        if role == 0:
            return cls(ring, role, s1=z, s2=z.copy(), total=z.copy())
        if role == 1:
            return cls(ring, role, s1=z)
        return cls(ring, role, s2=z)

    def concat(self, other: "AShare") -> "AShare":
        return self._map(lambda a, b: np.concatenate([a, b]), other)


@dataclass
class MVal:
    """One party's view of a masked share (mask [r] plus m = x + r)."""

    mask: AShare
    m: np.ndarray | None = None
    sealed: bool = False

    @property
    def ring(self) -> Ring:
        return self.mask.ring

    @property
    def role(self) -> int:
        return self.mask.role

    @property
    def lanes(self) -> int:
        for a in (self.m, self.mask.s1, self.mask.s2, self.mask.total):
            if a is not None:
                return a.shape[0]
        raise HarnessError("empty share view")

    def _m_op(self, fn, other_m=None):
        if self.m is None:
            return None
        return fn(self.m) if other_m is None else fn(self.m, other_m)

    def __add__(self, other: "MVal"):
        return MVal(self.mask + other.mask,
                    self._m_op(lambda a, b: grvec.vmask(a + b, self.ring.ell), other.m))

    def __sub__(self, other: "MVal"):
        return MVal(self.mask - other.mask,
                    self._m_op(lambda a, b: grvec.vmask(a - b, self.ring.ell), other.m))

    def __neg__(self):
        return MVal(-self.mask, self._m_op(lambda a: grvec.vneg(a, self.ring.ell)))

    def scale_pub(self, c):
        return MVal(self.mask.scale_pub(c),
                    self._m_op(lambda a: _scale_pub(a, c, self.ring)))

    def scale_gr(self, c):
        mod = self.ring.mod
        return MVal(self.mask.scale_gr(c),
                    self._m_op(lambda a: grvec.gr_mul(a, c, self.ring.ell, mod)))

    def add_pub(self, c):
        """x + c: m shifts, mask unchanged."""
        return MVal(self.mask, self._m_op(lambda a: grvec.vmask(a + _as_arr(c, self.ring), self.ring.ell)))

    def take(self, idx):
        return MVal(self.mask.take(idx), self._m_op(lambda a: a[idx]), self.sealed)

    def concat(self, other: "MVal"):
        return MVal(self.mask.concat(other.mask),
                    self._m_op(lambda a, b: np.concatenate([a, b]), other.m))

    @classmethod
    def public(cls, ring: Ring, role: int, values: np.ndarray) -> "MVal":
        """A public constant as a shared value: m = c, mask = 0."""
        lanes = values.shape[0]
        mask = AShare.zero(ring, role, lanes)
        m = grvec.vmask(np.asarray(values, dtype=np.uint64), ring.ell)
        return cls(mask, m if role in (1, 2) else None)


def _as_arr(c, ring: Ring):
    c = np.asarray(c, dtype=np.uint64)
    return c


def dump_share(gate_id: int, v: "MVal | AShare") -> str:
    """Debug line for one share: gate_id, kind, ring tag, local fields in hex."""
    if isinstance(v, MVal):
        kind, mask, m = "MASK", v.mask, v.m
    else:
        kind, mask, m = "ADD", v, None
    ring = mask.ring
    tag = f"{ring.ell}" if ring.mod is None else f"{ring.ell}[x]{ring.d}"
    fields = []
    for name, arr in (("m", m), ("s1", mask.s1), ("s2", mask.s2),
                      ("rsum", mask.total)):
        if arr is not None:
            fields.append(f"{name}={encode_array(arr, ring).hex()}")
    return f"{gate_id}, {kind}, {tag}, " + " ".join(fields)


def reconstruct_clear(views: list[MVal]) -> np.ndarray:
    """Test helper: combine the three honest party views into the plaintext."""
    ring = views[1].ring
    m = views[1].m
    s1 = views[1].mask.s1
    s2 = views[2].mask.s2
    return grvec.vmask(m - s1 - s2, ring.ell)


def mask_sum_clear(views: list[AShare]) -> np.ndarray:
    ring = views[1].ring
    return grvec.vmask(views[1].s1 + views[2].s2, ring.ell)


# ---------------------------------------------------------------------------
# Share-generation protocols
# ---------------------------------------------------------------------------

def _draw(party, pair: str, domain: str, lanes: int, ring: Ring) -> np.ndarray:
    p = party.prg(pair, domain)
    if ring.mod is None:
        return p.draw_base(lanes, ring.ell)
    return p.draw_gr(lanes, ring.ell, ring.mod)


def sha_random(party, lanes: int, ring: Ring, domain: str = "sha") -> AShare:
    """Additive share of a random value; zero communication, P0 learns it."""
    if party.role == 0:
        s1 = _draw(party, "01", domain, lanes, ring)
        s2 = _draw(party, "02", domain, lanes, ring)
        return AShare(ring, 0, s1=s1, s2=s2,
                      total=grvec.vmask(s1 + s2, ring.ell))
    if party.role == 1:
        return AShare(ring, 1, s1=_draw(party, "01", domain, lanes, ring))
    return AShare(ring, 2, s2=_draw(party, "02", domain, lanes, ring))


def sha_input(party, x: np.ndarray | None, lanes: int, ring: Ring, tag: str,
              site: str | None = None, gate: int | None = None,
              cls: str = PAYLOAD, domain: str = "sha") -> AShare:
    """P0 deals an additive share of x: s1 from the pairwise stream, s2 sent."""
    label = f"sha.{tag}"
    if party.role == 0:
        s1 = _draw(party, "01", domain, lanes, ring)
        x = grvec.vmask(np.asarray(x, dtype=np.uint64), ring.ell)
        s2 = grvec.vmask(x - s1, ring.ell)
        party.send(2, label, s2, ring, cls=cls, site=site, gate=gate)
        return AShare(ring, 0, s1=s1, s2=s2, total=x)
    if party.role == 1:
        return AShare(ring, 1, s1=_draw(party, "01", domain, lanes, ring))
    return AShare(ring, 2, s2=party.recv(0, label, ring, lanes))


def shc_random(party, lanes: int, ring: Ring, seal: bool = False,
               domain: str = "sha") -> MVal:
    """Masked share of a random value unknown to every single party; no bytes."""
    mask = sha_random(party, lanes, ring, domain=domain)
    m = None
    if party.role in (1, 2):
        m = _draw(party, "12", domain + ".m", lanes, ring)
    return MVal(mask, m, sealed=seal)


def shc_input_mask(party, owner: int, lanes: int, ring: Ring) -> AShare:
    """Mask for an owner's input wire: halves chosen so the owner knows r and
    P0 keeps its full mask view (the non-owner half is zero for P1/P2)."""
    role = party.role
    zero = ring.zeros(lanes)
    if owner == 0:
        return sha_random(party, lanes, ring)
    if owner == 1:
        s1 = _draw(party, "01", "sha", lanes, ring) if role in (0, 1) else None
        return AShare(ring, role, s1=s1, s2=zero if role in (0, 2) else None,
                      total=s1.copy() if role == 0 else None)
    if owner == 2:
        s2 = _draw(party, "02", "sha", lanes, ring) if role in (0, 2) else None
        return AShare(ring, role, s1=zero if role in (0, 1) else None, s2=s2,
                      total=s2.copy() if role == 0 else None)
    raise ConfigError(f"bad owner {owner}")


def shc_input_online(party, owner: int, x: np.ndarray | None, mask: AShare,
                     lanes: int, ring: Ring, tag: str) -> MVal:
    """Online part of input sharing: the owner sends m = x + r."""
    label = f"shc.{tag}"
    role = party.role
    if role == owner:
        x = grvec.vmask(np.asarray(x, dtype=np.uint64), ring.ell)
        r = mask.total if role == 0 else (mask.s1 if role == 1 else mask.s2)
        m = grvec.vmask(x + r, ring.ell)
        for peer in (1, 2):
            if peer != role:
                party.send(peer, label, m, ring)
        return MVal(mask, m if role in (1, 2) else None)
    if role == 0:
        return MVal(mask, None)
    return MVal(mask, party.recv(owner, label, ring, lanes))


def shc_input(party, owner: int, x: np.ndarray | None, lanes: int, ring: Ring,
              tag: str) -> MVal:
    """Owner shares x in masked form (mask draw + online m in one call)."""
    mask = shc_input_mask(party, owner, lanes, ring)
    return shc_input_online(party, owner, x, mask, lanes, ring, tag)


# ---------------------------------------------------------------------------
# Verifiable reconstruction
# ---------------------------------------------------------------------------

def rec(party, v: MVal, tag: str, style: str = "open") -> np.ndarray:
    """Open v to all parties with cross-checked digests; abort on mismatch.

    style "open": all value legs count as payload.  style "challenge": only
    the m leg counts, the mask-opening legs are accounting-auxiliary (the
    cost formulas amortize them).  style "aux": every leg is auxiliary.
    """
    if v.sealed and party.phase is not Phase.POST:
        raise HarnessError("challenge opened before the gate log was frozen")
    cls_m = AUX if style == "aux" else PAYLOAD
    cls_r = PAYLOAD if style == "open" else AUX
    tag = f"{tag}#{party.next_id('rec')}"
    ring, lanes, role = v.ring, v.lanes, party.role
    mask = v.mask

    if mask.p0_halves:
        if role == 0:
            party.send(2, f"rec.{tag}.r1", mask.s1, ring, cls=cls_r)
            party.send(1, f"rec.{tag}.r2", mask.s2, ring, cls=cls_r)
            m = party.recv(1, f"rec.{tag}.m", ring, lanes)
            party.check_digest(2, f"rec.{tag}.m", m, ring, f"rec {tag} m")
            return grvec.vmask(m - mask.s1 - mask.s2, ring.ell)
        if role == 1:
            party.send(0, f"rec.{tag}.m", v.m, ring, cls=cls_m)
            party.send_digest(2, f"rec.{tag}.r1", mask.s1, ring)
            s2 = party.recv(0, f"rec.{tag}.r2", ring, lanes)
            party.check_digest(2, f"rec.{tag}.r2", s2, ring, f"rec {tag} r2")
            return grvec.vmask(v.m - mask.s1 - s2, ring.ell)
        party.send_digest(0, f"rec.{tag}.m", v.m, ring)
        party.send_digest(1, f"rec.{tag}.r2", mask.s2, ring)
        s1 = party.recv(0, f"rec.{tag}.r1", ring, lanes)
        party.check_digest(1, f"rec.{tag}.r1", s1, ring, f"rec {tag} r1")
        return grvec.vmask(v.m - s1 - mask.s2, ring.ell)

    # P0 knows only the mask sum (truncation-generated masks).
    if role == 0:
        party.send_digest(1, f"rec.{tag}.rsum", mask.total, ring)
        party.send_digest(2, f"rec.{tag}.rsum", mask.total, ring)
        m = party.recv(1, f"rec.{tag}.m", ring, lanes)
        party.check_digest(2, f"rec.{tag}.m", m, ring, f"rec {tag} m")
        return grvec.vmask(m - mask.total, ring.ell)
    if role == 1:
        party.send(2, f"rec.{tag}.r1", mask.s1, ring, cls=cls_r)
        party.send(0, f"rec.{tag}.m", v.m, ring, cls=cls_m)
        s2 = party.recv(2, f"rec.{tag}.r2", ring, lanes)
        party.check_digest(0, f"rec.{tag}.rsum",
                           grvec.vmask(mask.s1 + s2, ring.ell), ring,
                           f"rec {tag} rsum")
        return grvec.vmask(v.m - mask.s1 - s2, ring.ell)
    party.send(1, f"rec.{tag}.r2", mask.s2, ring, cls=cls_r)
    party.send_digest(0, f"rec.{tag}.m", v.m, ring)
    s1 = party.recv(1, f"rec.{tag}.r1", ring, lanes)
    party.check_digest(0, f"rec.{tag}.rsum",
                       grvec.vmask(s1 + mask.s2, ring.ell), ring,
                       f"rec {tag} rsum")
    return grvec.vmask(v.m - s1 - mask.s2, ring.ell)


def rec_to(party, v: MVal, tag: str, k: int) -> np.ndarray | None:
    """Open v to P_k only; the others send shares or digests to P_k."""
    if v.sealed and party.phase is not Phase.POST:
        raise HarnessError("challenge opened before the gate log was frozen")
    tag = f"{tag}#{party.next_id('rec')}"
    ring, lanes, role = v.ring, v.lanes, party.role
    mask = v.mask
    if k == 0:
        if role == 1:
            party.send(0, f"rec.{tag}.m", v.m, ring)
            return None
        if role == 2:
            party.send_digest(0, f"rec.{tag}.m", v.m, ring)
            return None
        m = party.recv(1, f"rec.{tag}.m", ring, lanes)
        party.check_digest(2, f"rec.{tag}.m", m, ring, f"rec {tag} m")
        r = mask.total if not mask.p0_halves else grvec.vmask(mask.s1 + mask.s2, ring.ell)
        return grvec.vmask(m - r, ring.ell)
    if k in (1, 2):
        other = 3 - k
        want = "s2" if k == 1 else "s1"
        if role == k:
            if mask.p0_halves:
                s = party.recv(0, f"rec.{tag}.{want}", ring, lanes)
                party.check_digest(other, f"rec.{tag}.{want}", s, ring,
                                   f"rec {tag} {want}")
            else:
                s = party.recv(other, f"rec.{tag}.{want}", ring, lanes)
                own = mask.s1 if k == 1 else mask.s2
                party.check_digest(0, f"rec.{tag}.rsum",
                                   grvec.vmask(own + s, ring.ell), ring,
                                   f"rec {tag} rsum")
            own = mask.s1 if k == 1 else mask.s2
            return grvec.vmask(v.m - own - s, ring.ell)
        if role == 0:
            if mask.p0_halves:
                party.send(k, f"rec.{tag}.{want}",
                           mask.s2 if k == 1 else mask.s1, ring)
            else:
                party.send_digest(k, f"rec.{tag}.rsum", mask.total, ring)
            return None
        # role == other
        if mask.p0_halves:
            party.send_digest(k, f"rec.{tag}.{want}",
                              mask.s2 if k == 1 else mask.s1, ring)
        else:
            party.send(k, f"rec.{tag}.{want}",
                       mask.s2 if k == 1 else mask.s1, ring)
        return None
    raise ConfigError(f"bad receiver {k}")
