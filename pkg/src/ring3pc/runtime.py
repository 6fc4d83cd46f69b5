"""Party runtime and session driver.

A Session owns the seeds, transcript and router; ``run`` executes one
program on three party threads.  Each Party exposes pairwise PRG streams,
array send/recv with adversary hooks, round barriers, phase control, and the
multiplication/inner-product gate logs consumed by postprocessing
verification.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import prg as prg_mod
from .prg import CapabilityError, Prg
from .transport import (DIGEST, PAYLOAD, AbortError, AdversaryConfig,
                        CoopRouter, HarnessError, InMemoryRouter, Phase,
                        SessionAborted, Transcript)
from .sharing import Ring, decode_array, digest, encode_array


@dataclass
class GateLogs:
    """Per ring-kind logs of multiplication and inner-product batches."""

    muls: list = field(default_factory=list)
    dots: list = field(default_factory=list)
    frozen: bool = False

    def mul_count(self) -> int:
        return sum(b.lanes for b in self.muls)

    def dot_count(self) -> int:
        return sum(b.lanes for b in self.dots)


class Party:
    def __init__(self, role: int, sess: "Session"):
        self.role = role
        self.sess = sess
        self._prgs: dict[tuple[str, str], Prg] = {}
        self._ids: dict[str, int] = {}
        self.logs: dict[str, GateLogs] = {"arith": GateLogs(), "bool": GateLogs()}
        self.verify_ctx = None

    # -- configuration -------------------------------------------------------

    @property
    def ell(self) -> int:
        return self.sess.ell

    @property
    def phase(self) -> Phase:
        return self.sess.router.phase

    def next_id(self, kind: str) -> int:
        n = self._ids.get(kind, 0)
        self._ids[kind] = n + 1
        return n

    # -- randomness ----------------------------------------------------------

    def prg(self, pair: str, domain: str) -> Prg:
        """Stream for pairwise seed eta_<pair>; only its two holders may ask."""
        if str(self.role) not in pair:
            raise CapabilityError(f"P{self.role} does not hold eta_{pair}")
        key = (pair, domain)
        if key not in self._prgs:
            self._prgs[key] = Prg(self.sess.pair_seeds[pair], domain)
        return self._prgs[key]

    # -- messaging ------------------------------------------------------------

    def _apply_adversary(self, label: str, site: str | None, gate: int | None,
                         arr: np.ndarray, ring: Ring) -> np.ndarray:
        adv = self.sess.adversary
        if adv is None or adv.corrupted != self.role:
            return arr
        out = arr
        for inj in adv.injections:
            if site is None or not inj.matches(site, gate):
                continue
            out = out.copy()
            delta = np.uint64(inj.delta & ring.mask)
            view = out if ring.mod is None else out[..., inj.coeff]
            sel = slice(None) if inj.lane is None else slice(inj.lane, inj.lane + 1)
            view[sel] = (view[sel] + delta) & np.uint64(ring.mask)
        if adv.tamper is not None:
            out = adv.tamper(label, out, ring)
        return out

    def local_inject(self, site: str, gate: int | None, arr: np.ndarray,
                     ring: Ring) -> np.ndarray:
        """Adversarial rewrite of a local value (consistent-state attacks)."""
        return self._apply_adversary(f"local.{site}", site, gate, arr, ring)

    def send(self, to: int, label: str, arr: np.ndarray, ring: Ring,
             cls: str = PAYLOAD, site: str | None = None,
             gate: int | None = None) -> None:
        # bytes count pre-tamper: a payload-rewriting adversary still pays
        # for the honest serialization
        honest_len = arr.size * (ring.elem_bytes // ring.d)
        arr = self._apply_adversary(label, site, gate, arr, ring)
        self.sess.router.send(self.role, to, self.phase, label,
                              encode_array(arr, ring), cls,
                              count_bytes=honest_len)

    def recv(self, frm: int, label: str, ring: Ring, lanes: int) -> np.ndarray:
        buf = self.sess.router.recv(self.role, frm, label)
        return decode_array(buf, ring, lanes)

    def send_digest(self, to: int, label: str, arr: np.ndarray, ring: Ring) -> None:
        d = digest(self.sess.salt, label, encode_array(arr, ring))
        self.sess.router.send(self.role, to, self.phase, "h:" + label, d, DIGEST)

    def check_digest(self, frm: int, label: str, arr: np.ndarray, ring: Ring,
                     what: str) -> None:
        got = self.sess.router.recv(self.role, frm, "h:" + label)
        want = digest(self.sess.salt, label, encode_array(arr, ring))
        if got != want:
            self.abort(f"{what}: digest from P{frm} does not match {label}")

    # -- control ---------------------------------------------------------------

    def round_barrier(self) -> None:
        self.sess.router.round_barrier()

    def enter_phase(self, phase: Phase) -> None:
        self.sess.router.enter_phase(phase)

    def abort(self, reason: str) -> None:
        err = AbortError(self.role, reason)
        self.sess.router.kill(err)
        raise err

    # -- gate logs --------------------------------------------------------------

    def log_for(self, ring: Ring) -> GateLogs:
        return self.logs["bool" if ring.ell == 1 else "arith"]

    def freeze_logs(self) -> None:
        for log in self.logs.values():
            log.frozen = True


class Session:
    """One three-party execution with shared seeds and transcript.

    engine "coop" (default) drives the parties as coroutines under a
    deterministic round-robin scheduler; engine "threads" runs one OS thread
    per party and is required for the socket-backed transport.
    """

    def __init__(self, seed: int | bytes = 0, ell: int = 64,
                 adversary: AdversaryConfig | None = None,
                 keep_messages: bool = False, engine: str = "coop",
                 router_cls=None):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "little")
        if len(seed) != 16:
            raise ValueError("session seed must be 16 bytes")
        self.ell = ell
        self.master = seed
        self.pair_seeds = prg_mod.derive_pair_seeds(seed)
        self.salt = prg_mod.derive_salt(seed)
        self.adversary = adversary
        self.engine = engine
        self.transcript = Transcript(keep_messages=keep_messages)
        if router_cls is None:
            router_cls = CoopRouter if engine == "coop" else InMemoryRouter
        self.router = router_cls(self.transcript)
        self.parties = [Party(i, self) for i in range(3)]

    def run(self, program, *args):
        """Run program(party, *args) on the three parties; list of results.

        Raises AbortError if any party aborted, re-raises harness errors.
        """
        out: list = [None, None, None]

        def worker(party: Party):
            try:
                out[party.role] = ("ok", program(party, *args))
            except AbortError as e:
                out[party.role] = ("abort", e)
            except SessionAborted:
                out[party.role] = ("peer-abort", None)
            except BaseException as e:  # noqa: BLE001 - propagated below
                out[party.role] = ("error", e)
                self.router.kill()

        if isinstance(self.router, CoopRouter):
            self._run_coop(worker)
        else:
            self._run_threads(worker)
        for status, val in out:
            if status == "error":
                raise val
        for status, val in out:
            if status == "abort":
                raise val
        if self.router.abort_info:
            raise self.router.abort_info[0]
        return [val for _status, val in out]

    def _run_coop(self, worker) -> None:
        import greenlet

        main = greenlet.getcurrent()
        self.router.yield_fn = main.switch
        glets = [greenlet.greenlet(worker) for _ in range(3)]
        while True:
            progressed = False
            alive = False
            for g, p in zip(glets, self.parties):
                if g.dead:
                    continue
                before = self.router.activity
                g.switch(p)
                if g.dead or self.router.activity != before:
                    progressed = True
                alive = alive or not g.dead
            if not alive:
                return
            if not progressed and not self.router.poison:
                self.router.kill()
                raise HarnessError("deadlock: no party can make progress")

    def _run_threads(self, worker) -> None:
        threads = [threading.Thread(target=worker, args=(p,), daemon=True)
                   for p in self.parties]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=600)
            if t.is_alive():
                self.router.kill()
                raise HarnessError("party thread did not finish")
