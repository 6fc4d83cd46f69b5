"""Text circuit format, parser, and the three-party evaluator.

Line format (wire ids are dense integers, one gate per line, '#' comments):

    INPUT w k            value on wire w supplied by party k
    CONST w v            public constant
    ADD w a b            w = a + b
    SUB w a b            w = a - b
    SCALE w c a          w = c * a
    MUL w a b            w = a * b
    DOT w n a1..an b1..bn
    TRUNC w a t          probabilistic right shift by t (a must be produced
                         by a MUL or DOT gate, which takes the assigned mask)
    RELU w a
    MAXPOOL w n a1..an
    OUTPUT a

Evaluation runs the full phase pipeline: circuit-dependent preprocessing
(truncation mask pairs first, then per-gate offline material), the online
pass, then batch verification of both gate logs before any output opens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gates, nonlinear, verify
from .sharing import AShare, MVal, Ring, rec, shc_input_mask, shc_input_online
from .transport import Phase


class CircuitParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class Gate:
    op: str
    out: int | None
    args: tuple
    lineno: int


@dataclass
class Circuit:
    gates: list[Gate]
    n_wires: int
    inputs: dict[int, int] = field(default_factory=dict)   # wire -> owner
    outputs: list[int] = field(default_factory=list)


def parse(text: str) -> Circuit:
    gates_list: list[Gate] = []
    inputs: dict[int, int] = {}
    outputs: list[int] = []
    defined: set[int] = set()

    def wire(tok: str, lineno: int, must_exist: bool) -> int:
        try:
            w = int(tok)
        except ValueError:
            raise CircuitParseError(lineno, f"bad wire id {tok!r}")
        if must_exist and w not in defined:
            raise CircuitParseError(lineno, f"wire {w} used before definition")
        return w

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        op = toks[0].upper()
        try:
            if op == "INPUT":
                w, k = wire(toks[1], lineno, False), int(toks[2])
                if k not in (0, 1, 2):
                    raise CircuitParseError(lineno, f"bad owner {k}")
                inputs[w] = k
                gates_list.append(Gate("INPUT", w, (k,), lineno))
                defined.add(w)
            elif op == "CONST":
                w = wire(toks[1], lineno, False)
                gates_list.append(Gate("CONST", w, (int(toks[2], 0),), lineno))
                defined.add(w)
            elif op in ("ADD", "SUB", "MUL"):
                w = wire(toks[1], lineno, False)
                a = wire(toks[2], lineno, True)
                b = wire(toks[3], lineno, True)
                gates_list.append(Gate(op, w, (a, b), lineno))
                defined.add(w)
            elif op == "SCALE":
                w = wire(toks[1], lineno, False)
                c = int(toks[2], 0)
                a = wire(toks[3], lineno, True)
                gates_list.append(Gate(op, w, (c, a), lineno))
                defined.add(w)
            elif op == "DOT":
                w = wire(toks[1], lineno, False)
                n = int(toks[2])
                ids = [wire(t, lineno, True) for t in toks[3:3 + 2 * n]]
                if len(ids) != 2 * n:
                    raise CircuitParseError(lineno, "DOT arity mismatch")
                gates_list.append(Gate(op, w, (n, tuple(ids)), lineno))
                defined.add(w)
            elif op == "TRUNC":
                w = wire(toks[1], lineno, False)
                a = wire(toks[2], lineno, True)
                gates_list.append(Gate(op, w, (a, int(toks[3])), lineno))
                defined.add(w)
            elif op == "RELU":
                w = wire(toks[1], lineno, False)
                a = wire(toks[2], lineno, True)
                gates_list.append(Gate(op, w, (a,), lineno))
                defined.add(w)
            elif op == "MAXPOOL":
                w = wire(toks[1], lineno, False)
                n = int(toks[2])
                ids = tuple(wire(t, lineno, True) for t in toks[3:3 + n])
                if len(ids) != n:
                    raise CircuitParseError(lineno, "MAXPOOL arity mismatch")
                gates_list.append(Gate(op, w, (ids,), lineno))
                defined.add(w)
            elif op == "OUTPUT":
                outputs.append(wire(toks[1], lineno, True))
            else:
                raise CircuitParseError(lineno, f"unknown op {op!r}")
        except CircuitParseError:
            raise
        except (IndexError, ValueError) as e:
            raise CircuitParseError(lineno, f"malformed {op} gate: {e}")
    if not outputs:
        raise CircuitParseError(0, "circuit has no OUTPUT")
    n_wires = max(defined) + 1 if defined else 0
    return Circuit(gates_list, n_wires, inputs, outputs)


def load(path: str) -> Circuit:
    with open(path, "r", encoding="utf-8") as f:
        return parse(f.read())


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------

def evaluate(party, circ: Circuit, values: dict[int, int], d: int = 16,
             R: int | str = "auto", check: bool = True):
    """Party program: run the phase pipeline and return the opened outputs.

    values maps input wires to plaintext ints; only the owning party's entry
    is consulted.  Returns (outputs, verdicts).
    """
    ring = Ring(party.ell)
    party.enter_phase(Phase.PRE)

    # Truncation runs preferentially: its generated mask pair is assigned to
    # the producing MUL/DOT gate before other gates draw output masks.
    trunc_mat: dict[int, gates.TruncMaterial] = {}
    assigned_mask: dict[int, object] = {}
    producers = {g.out: g for g in circ.gates if g.out is not None}
    for g in circ.gates:
        if g.op == "TRUNC":
            a, t = g.args
            if producers[a].op not in ("MUL", "DOT"):
                raise CircuitParseError(
                    g.lineno, "TRUNC input must be produced by MUL or DOT")
            mat = gates.trunc_prepare(party, 1, t, ring)
            trunc_mat[g.lineno] = mat
            assigned_mask[a] = mat.rx_mask

    # Circuit-dependent offline pass: wire masks propagate through linear
    # gates; MUL/DOT draw output masks and share their cross terms now.
    masks: dict[int, object] = {}
    prepared: dict[int, gates.DotGate] = {}
    relu_mats: dict[int, nonlinear.ReluMaterial] = {}
    had_offline_traffic = False
    for g in circ.gates:
        if g.op == "INPUT":
            masks[g.out] = shc_input_mask(party, g.args[0], 1, ring)
        elif g.op == "CONST":
            masks[g.out] = AShare.zero(ring, party.role, 1)
        elif g.op == "ADD":
            masks[g.out] = masks[g.args[0]] + masks[g.args[1]]
        elif g.op == "SUB":
            masks[g.out] = masks[g.args[0]] - masks[g.args[1]]
        elif g.op == "SCALE":
            c, a = g.args
            masks[g.out] = masks[a].scale_pub(np.uint64(c & ring.mask))
        elif g.op == "MUL":
            a, b = g.args
            if masks[a] is None or masks[b] is None:
                masks[g.out] = None  # deferred: input mask is data-dependent
                continue
            gate = gates.mul_prepare(party, masks[a], masks[b], 1,
                                     out_mask=assigned_mask.get(g.out))
            prepared[g.lineno] = gate
            masks[g.out] = gate.out_mask
            had_offline_traffic = True
        elif g.op == "DOT":
            n, ids = g.args
            if any(masks[i] is None for i in ids):
                masks[g.out] = None
                continue
            xm = _stack_masks([masks[i] for i in ids[:n]])
            ym = _stack_masks([masks[i] for i in ids[n:]])
            gate = gates.dot_prepare(party, xm, ym, 1,
                                     out_mask=assigned_mask.get(g.out))
            prepared[g.lineno] = gate
            masks[g.out] = gate.out_mask
            had_offline_traffic = True
        elif g.op == "TRUNC":
            masks[g.out] = trunc_mat[g.lineno].rz_mask
        elif g.op == "RELU":
            (a,) = g.args
            if masks[a] is None:
                masks[g.out] = None
                continue
            relu_mats[g.lineno] = nonlinear.relu_prepare(party, masks[a], 1, ring)
            masks[g.out] = None  # data-dependent mask, set online
            had_offline_traffic = True
        elif g.op == "MAXPOOL":
            masks[g.out] = None  # materials prepared on demand online
    if check:
        verify.prepare_verification(party, d=d)
    if had_offline_traffic:
        party.round_barrier()
    party.enter_phase(Phase.ONLINE)

    wires: dict[int, MVal] = {}
    for g in circ.gates:
        if g.op == "INPUT":
            (k,) = g.args
            x = None
            if party.role == k:
                x = np.array([values.get(g.out, 0)], dtype=np.uint64)
            wires[g.out] = shc_input_online(party, k, x, masks[g.out], 1,
                                            ring, f"w{g.out}")
        elif g.op == "CONST":
            wires[g.out] = MVal.public(ring, party.role,
                                       np.array([g.args[0]], dtype=np.uint64))
        elif g.op == "ADD":
            a, b = g.args
            wires[g.out] = wires[a] + wires[b]
        elif g.op == "SUB":
            a, b = g.args
            wires[g.out] = wires[a] - wires[b]
        elif g.op == "SCALE":
            c, a = g.args
            wires[g.out] = wires[a].scale_pub(np.uint64(c & ring.mask))
        elif g.op == "MUL":
            a, b = g.args
            gate = prepared.get(g.lineno)
            if gate is None:
                gate = gates.mul_prepare(party, wires[a].mask, wires[b].mask,
                                         1, out_mask=assigned_mask.get(g.out))
            wires[g.out] = gates.mul_finish(party, gate, wires[a], wires[b])
            party.round_barrier()
        elif g.op == "DOT":
            n, ids = g.args
            xs = nonlinear._stack([wires[i] for i in ids[:n]])
            ys = nonlinear._stack([wires[i] for i in ids[n:]])
            gate = prepared.get(g.lineno)
            if gate is None:
                gate = gates.dot_prepare(party, xs.mask, ys.mask, 1,
                                         out_mask=assigned_mask.get(g.out))
            wires[g.out] = gates.dot_finish(party, gate, xs, ys)
            party.round_barrier()
        elif g.op == "TRUNC":
            a, t = g.args
            wires[g.out] = gates.trunc_online(party, wires[a],
                                              trunc_mat[g.lineno])
        elif g.op == "RELU":
            (a,) = g.args
            mat = relu_mats.get(g.lineno)
            if mat is None:
                mat = nonlinear.relu_prepare(party, wires[a].mask, 1, ring)
            wires[g.out] = nonlinear.relu_online(party, wires[a], mat)
            party.round_barrier()
        elif g.op == "MAXPOOL":
            (ids,) = g.args
            vals = nonlinear._stack([wires[i] for i in ids])
            wires[g.out] = nonlinear.maxpool_online(party, vals, ring)
            party.round_barrier()

    party.enter_phase(Phase.POST)
    verdicts = {}
    if check:
        verdicts = verify.verify_session(party, d=d, R=R)
        adv = party.sess.adversary
        if not all(verdicts.values()) and (adv is None or adv.abort_on_detect):
            party.abort(f"verification failed: {verdicts}")
    else:
        party.freeze_logs()
    outputs = [int(rec(party, wires[w], f"out{w}")[0]) for w in circ.outputs]
    return outputs, verdicts


def _stack_masks(masks: list) -> AShare:
    fields = {}
    for f in ("s1", "s2", "total"):
        if getattr(masks[0], f) is not None:
            fields[f] = np.stack([getattr(m, f) for m in masks], axis=0)
        else:
            fields[f] = None
    halves = all(m.p0_halves for m in masks)
    return AShare(masks[0].ring, masks[0].role, p0_halves=halves, **fields)
