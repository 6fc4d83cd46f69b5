"""Three-party message fabric with per-phase accounting and fault injection.

Byte counters are exact and keyed by (from, to, phase, class).  Classes:
``payload`` for protocol data that the closed-form costs count, ``digest``
for 32-byte consistency hashes, and ``aux`` for redundant/mask-opening legs
of postprocessing reveals that the closed-form counts amortize away.  Raw
totals are always payload+digest+aux; reports expose the split.

Rounds advance only at explicit barriers that all three parties reach.
"""

from __future__ import annotations

import csv
import enum
import io
import socket
import struct
import threading
from dataclasses import dataclass, field
from queue import Empty, SimpleQueue

P0, P1, P2 = 0, 1, 2
PARTIES = (P0, P1, P2)

PAYLOAD = "payload"
DIGEST = "digest"
AUX = "aux"

_RECV_TIMEOUT = 60.0


class Phase(enum.Enum):
    PRE = "preprocessing"
    ONLINE = "online"
    POST = "postprocessing"


_PHASE_ORDER = {Phase.PRE: 0, Phase.ONLINE: 1, Phase.POST: 2}


class HarnessError(RuntimeError):
    """Protocol-harness bug: phase violation, deadlock, label mismatch."""


class AbortError(RuntimeError):
    """An honest party detected inconsistent messages and aborted."""

    def __init__(self, party: int, reason: str):
        super().__init__(f"P{party} abort: {reason}")
        self.party = party
        self.reason = reason


class SessionAborted(RuntimeError):
    """Raised in the other party threads once someone aborted."""


# ---------------------------------------------------------------------------
# Adversary configuration
# ---------------------------------------------------------------------------

@dataclass
class Injection:
    """Additive tamper on messages (or local state) at a named hook site.

    site matches the message label prefix, e.g. "gamma", "mz", "z".
    gate/lane restrict to one batch occurrence / vector lane; None = all.
    delta is added to the targeted ring value (constant coefficient for
    extension-ring messages unless coeff says otherwise).
    """

    site: str
    delta: int
    gate: int | None = None
    lane: int | None = None
    coeff: int = 0

    def matches(self, site: str, gate: int | None) -> bool:
        # Bare sites ("gamma") target circuit gates only; verification-
        # internal hooks must be named in full ("vfy.dot.gamma").
        if self.site != site and f"dot.{self.site}" != site:
            return False
        return self.gate is None or gate is None or self.gate == gate


@dataclass
class AdversaryConfig:
    corrupted: int | None = None
    injections: list[Injection] = field(default_factory=list)
    tamper: object | None = None  # callable(label, arr, meta) -> arr
    abort_on_detect: bool = True  # False: report failed verdicts, keep going

    @classmethod
    def parse(cls, spec: str) -> "AdversaryConfig":
        """Parse "P0:gamma:+1[:gate[:lane]]" command-line adversary specs."""
        parts = spec.split(":")
        if len(parts) < 3:
            raise ValueError(f"bad adversary spec {spec!r}")
        who = parts[0].upper()
        if who not in ("P0", "P1", "P2"):
            raise ValueError(f"bad party in adversary spec {spec!r}")
        delta = int(parts[2], 0)
        gate = int(parts[3]) if len(parts) > 3 and parts[3] != "" else None
        lane = int(parts[4]) if len(parts) > 4 and parts[4] != "" else None
        return cls(corrupted=int(who[1]),
                   injections=[Injection(parts[1], delta, gate, lane)])


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------

class Transcript:
    """Per-channel, per-phase byte counters plus round counters."""

    MESSAGE_LOG_CAP = 1 << 20

    def __init__(self, keep_messages: bool = False):
        self._lock = threading.Lock()
        self.counters: dict[tuple[int, int, Phase, str], int] = {}
        self.rounds: dict[Phase, int] = {p: 0 for p in Phase}
        self.messages: list[tuple[int, int, Phase, str, int, str]] | None = (
            [] if keep_messages else None)

    def add(self, frm: int, to: int, phase: Phase, cls: str, nbytes: int,
            label: str = "") -> None:
        with self._lock:
            key = (frm, to, phase, cls)
            self.counters[key] = self.counters.get(key, 0) + nbytes
            if (self.messages is not None
                    and len(self.messages) < self.MESSAGE_LOG_CAP):
                self.messages.append((frm, to, phase, label, nbytes, cls))

    def bump_round(self, phase: Phase) -> None:
        with self._lock:
            self.rounds[phase] += 1

    def bytes_sent(self, frm: int | None = None, to: int | None = None,
                   phase: Phase | None = None,
                   cls: str | tuple[str, ...] | None = PAYLOAD) -> int:
        if isinstance(cls, str):
            cls = (cls,)
        total = 0
        with self._lock:
            for (f, t, p, c), n in self.counters.items():
                if frm is not None and f != frm:
                    continue
                if to is not None and t != to:
                    continue
                if phase is not None and p != phase:
                    continue
                if cls is not None and c not in cls:
                    continue
                total += n
        return total

    def total_bytes(self, phase: Phase | None = None) -> int:
        return self.bytes_sent(phase=phase, cls=None)

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self.counters)

    def to_csv(self) -> str:
        """Channel totals, columns (from, to, phase, bytes, rounds)."""
        agg: dict[tuple[int, int, Phase], int] = {}
        with self._lock:
            for (f, t, p, _c), n in self.counters.items():
                agg[(f, t, p)] = agg.get((f, t, p), 0) + n
            rounds = dict(self.rounds)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["from", "to", "phase", "bytes", "rounds"])
        for (f, t, p) in sorted(agg, key=lambda k: (_PHASE_ORDER[k[2]], k[0], k[1])):
            w.writerow([f"P{f}", f"P{t}", p.value, agg[(f, t, p)], rounds[p]])
        return buf.getvalue()


def delta_bytes(after: dict, before: dict, phase: Phase,
                cls: str | tuple[str, ...] = PAYLOAD) -> int:
    if isinstance(cls, str):
        cls = (cls,)
    tot = 0
    for (f, t, p, c), n in after.items():
        if p is phase and c in cls:
            tot += n - before.get((f, t, p, c), 0)
    return tot


# ---------------------------------------------------------------------------
# Routers
# ---------------------------------------------------------------------------

class Channel:
    """FIFO byte channel between an ordered party pair."""

    def __init__(self):
        self.q: SimpleQueue = SimpleQueue()


class InMemoryRouter:
    """Deterministic in-process fabric: FIFO per ordered pair, barrier rounds."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.channels = {(f, t): Channel() for f in PARTIES for t in PARTIES if f != t}
        self.poison = threading.Event()
        self.abort_info: list[AbortError] = []
        self._phase = Phase.PRE
        self._intents: list[tuple[str, object]] = []
        self._barrier = threading.Barrier(3, action=self._barrier_action)

    @property
    def phase(self) -> Phase:
        return self._phase

    # -- data plane ---------------------------------------------------------

    def send(self, frm: int, to: int, phase: Phase, label: str, payload: bytes,
             cls: str = PAYLOAD, count_bytes: int | None = None) -> None:
        if self.poison.is_set():
            raise SessionAborted()
        if phase is not self._phase:
            raise HarnessError(f"send in phase {phase} but session is in {self._phase}")
        if frm == to:
            raise HarnessError("self-send")
        self.transcript.add(frm, to, phase, cls,
                            len(payload) if count_bytes is None else count_bytes,
                            label)
        self.channels[(frm, to)].q.put((label, payload))

    def recv(self, to: int, frm: int, label: str) -> bytes:
        q = self.channels[(frm, to)].q
        waited = 0.0
        while True:
            if self.poison.is_set():
                raise SessionAborted()
            try:
                got_label, payload = q.get(timeout=0.05)
                break
            except Empty:
                waited += 0.05
                if waited >= _RECV_TIMEOUT:
                    raise HarnessError(
                        f"P{to} timed out waiting for {label!r} from P{frm}")
        if got_label != label:
            raise HarnessError(f"label mismatch: expected {label!r}, got {got_label!r}")
        return payload

    # -- control plane ------------------------------------------------------

    def _barrier_action(self):
        kinds = {k for k, _ in self._intents}
        if len(kinds) != 1:
            raise HarnessError(f"mismatched barrier intents: {self._intents}")
        kind, arg = self._intents[0]
        if kind == "round":
            self.transcript.bump_round(self._phase)
        elif kind == "phase":
            new = arg
            if _PHASE_ORDER[new] < _PHASE_ORDER[self._phase]:
                raise HarnessError(f"phase may not go back: {self._phase} -> {new}")
            self._phase = new
        self._intents.clear()

    def _sync(self, kind: str, arg=None):
        if self.poison.is_set():
            raise SessionAborted()
        self._intents.append((kind, arg))
        try:
            self._barrier.wait(timeout=_RECV_TIMEOUT)
        except threading.BrokenBarrierError:
            raise SessionAborted()

    def round_barrier(self):
        self._sync("round")

    def enter_phase(self, phase: Phase):
        self._sync("phase", phase)

    def kill(self, err: AbortError | None = None):
        if err is not None:
            self.abort_info.append(err)
        self.poison.set()
        self._barrier.abort()


class CoopRouter:
    """Single-threaded fabric for the deterministic round-robin scheduler.

    Parties run as coroutines; a recv on an empty channel or an incomplete
    barrier yields to the scheduler.  Counters and semantics match
    InMemoryRouter; scheduling is fully deterministic.
    """

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.queues: dict[tuple[int, int], list] = {
            (f, t): [] for f in PARTIES for t in PARTIES if f != t}
        self.poison = False
        self.abort_info: list[AbortError] = []
        self._phase = Phase.PRE
        self._intents: list[tuple[str, object]] = []
        self._arrived = 0
        self._gen = 0
        self.activity = 0
        self.yield_fn = None  # installed by the session scheduler

    @property
    def phase(self) -> Phase:
        return self._phase

    def _wait(self):
        if self.poison:
            raise SessionAborted()
        self.yield_fn()
        if self.poison:
            raise SessionAborted()

    def send(self, frm: int, to: int, phase: Phase, label: str, payload: bytes,
             cls: str = PAYLOAD, count_bytes: int | None = None) -> None:
        if self.poison:
            raise SessionAborted()
        if phase is not self._phase:
            raise HarnessError(f"send in phase {phase} but session is in {self._phase}")
        if frm == to:
            raise HarnessError("self-send")
        self.transcript.add(frm, to, phase, cls,
                            len(payload) if count_bytes is None else count_bytes,
                            label)
        self.queues[(frm, to)].append((label, payload))
        self.activity += 1

    def recv(self, to: int, frm: int, label: str) -> bytes:
        q = self.queues[(frm, to)]
        while not q:
            self._wait()
        got_label, payload = q.pop(0)
        if got_label != label:
            raise HarnessError(f"label mismatch: expected {label!r}, got {got_label!r}")
        return payload

    def _barrier_action(self):
        kinds = {k for k, _ in self._intents}
        if len(kinds) != 1:
            raise HarnessError(f"mismatched barrier intents: {self._intents}")
        kind, arg = self._intents[0]
        if kind == "round":
            self.transcript.bump_round(self._phase)
        elif kind == "phase":
            new = arg
            if _PHASE_ORDER[new] < _PHASE_ORDER[self._phase]:
                raise HarnessError(f"phase may not go back: {self._phase} -> {new}")
            self._phase = new
        self._intents.clear()

    def _sync(self, kind: str, arg=None):
        if self.poison:
            raise SessionAborted()
        gen = self._gen
        self._intents.append((kind, arg))
        self._arrived += 1
        self.activity += 1
        if self._arrived == 3:
            self._barrier_action()
            self._arrived = 0
            self._gen += 1
            return
        while self._gen == gen:
            self._wait()

    def round_barrier(self):
        self._sync("round")

    def enter_phase(self, phase: Phase):
        self._sync("phase", phase)

    def kill(self, err: AbortError | None = None):
        if err is not None:
            self.abort_info.append(err)
        self.poison = True


class SocketRouter(InMemoryRouter):
    """Same interface over loopback TCP sockets (length-prefixed frames).

    Control plane (barriers, phases) stays in-process; only the data plane
    moves through real sockets.
    """

    _LEN = struct.Struct("<I")

    def __init__(self, transcript: Transcript):
        super().__init__(transcript)
        self.socks: dict[tuple[int, int], socket.socket] = {}
        self._locks = {}
        for f in PARTIES:
            for t in PARTIES:
                if f == t:
                    continue
                a, b = socket.socketpair()
                self.socks[(f, t)] = a   # writer end, held by f
                self.socks[(t, f, "r")] = b  # reader end, held by t
                self._locks[(f, t)] = threading.Lock()

    def send(self, frm, to, phase, label, payload, cls=PAYLOAD,
             count_bytes=None):
        if phase is not self._phase:
            raise HarnessError(f"send in phase {phase} but session is in {self._phase}")
        self.transcript.add(frm, to, phase, cls,
                            len(payload) if count_bytes is None else count_bytes,
                            label)
        lab = label.encode()
        frame = self._LEN.pack(len(lab)) + lab + self._LEN.pack(len(payload)) + payload
        with self._locks[(frm, to)]:
            self.socks[(frm, to)].sendall(frame)

    def _read_exact(self, sock, n):
        buf = b""
        while len(buf) < n:
            chunk = sock.recv(n - len(buf))
            if not chunk:
                raise HarnessError("socket closed")
            buf += chunk
        return buf

    def recv(self, to, frm, label):
        sock = self.socks[(to, frm, "r")]
        (llen,) = self._LEN.unpack(self._read_exact(sock, 4))
        got_label = self._read_exact(sock, llen).decode()
        (plen,) = self._LEN.unpack(self._read_exact(sock, 4))
        payload = self._read_exact(sock, plen)
        if got_label != label:
            raise HarnessError(f"label mismatch: expected {label!r}, got {got_label!r}")
        return payload

    def close(self):
        for k, s in self.socks.items():
            s.close()
