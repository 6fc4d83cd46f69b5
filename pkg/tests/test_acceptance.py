"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line with its measured quantity.  Tolerances are fixed here, not tuned.

Criterion 5 is known-red on 3 of 4095 error patterns: at the even
evaluation points forced by exact halving, the middle Lagrange weight is
divisible by 4, so a result error e with 4e = 0 cancels against a matching
error injected into the h(1) inner product at every admissible point.  The
test states the bound faithfully and fails on exactly those patterns; the
README discusses the limitation.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ring3pc import circuit, gates, grvec, ppml, verify
from ring3pc.cli import run_soundness_trial
from ring3pc.ppml import InferConfig
from ring3pc.rings import modulus_for_degree
from ring3pc.runtime import Session
from ring3pc.sharing import MVal, Ring, rec, reconstruct_clear, shc_input, shc_random
from ring3pc.transport import (AbortError, AdversaryConfig, Injection,
                               PAYLOAD, Phase)

from helpers import fx_signed, fx_model_oracle, gen_random_circuit, plain_eval, run3


def report(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# 1. Oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_1_oracle_equivalence():
    t0 = time.monotonic()
    rng = np.random.default_rng(1)
    mismatches = 0
    for i in range(1000):
        txt, values = gen_random_circuit(rng, max_gates=64)
        circ = circuit.parse(txt)
        _, res = run3(circuit.evaluate, circ, values, 16, 0, False,
                      seed=int(rng.integers(1 << 62)))
        if res[0][0] != plain_eval(txt, values):
            mismatches += 1

    # exhaustive at ell=4: every input pair through add/mul/dot compositions
    def prog(party):
        ring = Ring(4)
        vals = np.arange(256, dtype=np.uint64)
        xv, yv = vals // 16, grvec.vmask(vals, 4)
        party.enter_phase(Phase.ONLINE)
        x = shc_input(party, 0, xv if party.role == 0 else None, 256, ring, "x")
        y = shc_input(party, 1, yv if party.role == 1 else None, 256, ring, "y")
        p = gates.mul(party, x, y)
        q = gates.mul(party, p, x + y)
        lift = lambda vv: MVal(vv.mask._map(lambda a: a[None]),
                               None if vv.m is None else vv.m[None])
        dotxy = gates.dot(party, lift(p).concat(lift(x)), lift(q).concat(lift(y)))
        return p, q, dotxy

    _, res = run3(prog, ell=4)
    xv = (np.arange(256) // 16).astype(np.uint64)
    yv = (np.arange(256) % 16).astype(np.uint64)
    p = reconstruct_clear([r[0] for r in res])
    q = reconstruct_clear([r[1] for r in res])
    dxy = reconstruct_clear([r[2] for r in res])
    exact = (np.array_equal(p, (xv * yv) & 15)
             and np.array_equal(q, (p * (xv + yv)) & 15)
             and np.array_equal(dxy, (p * q + xv * yv) & 15))
    dt = time.monotonic() - t0
    report(1, mismatches == 0 and exact and dt < 60,
           f"1000 random circuits, exhaustive ell=4: "
           f"{mismatches} mismatches, {dt:.1f}s")


# ---------------------------------------------------------------------------
# 2. Table-1 communication, exact to the byte over 2^10 batches
# ---------------------------------------------------------------------------

def _batch_prog(party, op: str, n: int, batch: int):
    ring = Ring(64)
    party.enter_phase(Phase.PRE)
    xs = shc_random(party, n * batch, ring)
    ys = shc_random(party, n * batch, ring)
    resh = lambda v: MVal(v.mask._map(lambda a: a.reshape(n, batch)),
                          None if v.m is None else v.m.reshape(n, batch))
    xs, ys = resh(xs), resh(ys)
    tr = gates.trunc_prepare(party, batch, 16, ring) if op == "dot-trunc" else None
    g = gates.dot_prepare(party, xs.mask, ys.mask, batch,
                          out_mask=None if tr is None else tr.rx_mask)
    party.round_barrier()
    party.enter_phase(Phase.ONLINE)
    z = gates.dot_finish(party, g, xs, ys)
    if tr is not None:
        gates.trunc_online(party, z, tr)
    party.round_barrier()
    return True


def test_criterion_2_table1_bytes():
    batch = 1024
    checks = []
    for op, n, off_bits in (("mul", 1, 64), ("dot", 8, 64), ("dot", 1024, 64),
                            ("dot-trunc", 16, 7 * 64)):
        sess, _ = run3(_batch_prog, op, n, batch, seed=2)
        off = sess.transcript.bytes_sent(phase=Phase.PRE)
        on = sess.transcript.bytes_sent(phase=Phase.ONLINE)
        checks.append((op, n, off == off_bits * batch // 8,
                       on == 2 * 64 * batch // 8,
                       sess.transcript.rounds[Phase.ONLINE] == 1))
    ok = all(c[2] and c[3] and c[4] for c in checks)
    report(2, ok, f"offline/online/rounds exact for {checks}")


# ---------------------------------------------------------------------------
# 3. Verification cost formulas over the grid
# ---------------------------------------------------------------------------

def _mulv_cost_prog(party, lanes, d, R):
    ring = Ring(64)
    party.enter_phase(Phase.PRE)
    x = shc_random(party, lanes, ring)
    y = shc_random(party, lanes, ring)
    g = gates.mul_prepare(party, x.mask, y.mask, lanes)
    verify.prepare_verification(party, d=d, r_max=max(R, 1))
    party.round_barrier()
    party.enter_phase(Phase.ONLINE)
    gates.mul_finish(party, g, x, y)
    party.round_barrier()
    party.enter_phase(Phase.POST)
    return verify.batch_verify_muls(party, 64, d=d, R=R)


def test_criterion_3_mulv_cost_formula():
    bad = []
    for G in (2 ** 6, 2 ** 10, 2 ** 14):
        for R in range(7):
            for d in (16, 64):
                sess, res = run3(_mulv_cost_prog, G, d, R, seed=3)
                online = sess.transcript.bytes_sent(phase=Phase.POST,
                                                    cls=PAYLOAD) * 8
                want = verify.online_bits(G, R, 64, d)
                rounds = sess.transcript.rounds[Phase.POST]
                if online != want or rounds != R + 2 or not all(res):
                    bad.append((G, R, d, online, want, rounds))
    report(3, not bad,
           f"(5R+3+G/2^R)*ell*d online bits over R+2 rounds, "
           f"grid G in 2^(6,10,14) x R 0..6 x d (16,64); mismatches: {bad}")


# ---------------------------------------------------------------------------
# 4. Statistical soundness at d=16 plus the d=1 ring-attack control
# ---------------------------------------------------------------------------

def _trial_args(mode: str, t: int):
    rng = np.random.default_rng(40_000 + t)
    lane = int(rng.integers(0, 64))
    if mode == "random":
        return (1 << 20) + t, int(rng.integers(1, 1 << 63)), "z", lane
    if mode == "msb":
        return (2 << 20) + t, 1 << 63, "z", lane
    if mode == "gamma":
        return (3 << 20) + t, int(rng.integers(1, 1 << 63)), "gamma", lane
    return (4 << 20) + t, int(rng.integers(1, 1 << 63)), "mz", lane


def _soundness_chunk(args):
    mode, lo, hi = args
    miss = 0
    for t in range(lo, hi):
        seed, delta, site, lane = _trial_args(mode, t)
        if not run_soundness_trial(seed, 64, 16, 2, 64, delta, site, lane):
            miss += 1
    return miss


def _control_chunk(bounds):
    lo, hi = bounds
    acc = 0
    for t in range(lo, hi):
        det = run_soundness_trial((5 << 20) + t, 64, 1, 0, 64, 1 << 63,
                                  "gamma", 0)
        acc += (not det)
    return acc


def test_criterion_4_soundness_rates():
    t0 = time.monotonic()
    trials = 1000
    misses = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for mode in ("random", "msb", "gamma", "mz"):
            chunks = [(mode, i * 250, (i + 1) * 250) for i in range(4)]
            misses[mode] = sum(pool.map(_soundness_chunk, chunks))
        acc = sum(pool.map(_control_chunk,
                           [(i * 250, (i + 1) * 250) for i in range(4)]))
    dt = time.monotonic() - t0
    ok = all(m <= 30 for m in misses.values())
    rate = acc / trials
    ok_control = 0.45 <= rate <= 0.55
    report(4, ok and ok_control and dt < 300,
           f"misses/1000 {misses} (allow 30), d=1 control acceptance "
           f"{rate:.3f} (want 0.50 +/- 0.05), {dt:.0f}s")


# ---------------------------------------------------------------------------
# 5. Reduction soundness, exhaustive error patterns at ell=4, d=2
# ---------------------------------------------------------------------------

def test_criterion_5_reduction_soundness_exhaustive():
    # Error semantics of this implementation's reduction: the result error e
    # lands on h(0) = z - h(1) minus any e1 injected into the h(1) product;
    # e2 is injected into the h(2) product.  The cheat survives at even point
    # 2u iff l0*(e-e1) + l1*e1 + l2*e2 == 0.
    t0 = time.monotonic()
    ell, mod = 4, modulus_for_degree(2)
    US = np.array(list(itertools.product(range(16), repeat=2)), dtype=np.uint64)
    one = np.array([[1, 0]], dtype=np.uint64)
    ze = grvec.vmask(US + US, ell)
    l0 = grvec.gr_mul(grvec.vmask(ze - one, ell), grvec.vmask(US - one, ell),
                      ell, mod)
    two = np.array([[2, 0]], dtype=np.uint64)
    l1 = grvec.gr_mul(ze, grvec.vmask(two - ze, ell), ell, mod)
    l2 = grvec.gr_mul(US, grvec.vmask(ze - one, ell), ell, mod)

    bound = 1 / 2 ** (2 - 1)
    offenders = []
    scalars = [np.array([[v, 0]], dtype=np.uint64) for v in range(16)]
    for e, e1, e2 in itertools.product(range(16), repeat=3):
        if e == 0:
            continue  # result relation not violated; nothing to preserve
        if e == e1 == e2 == 0:
            continue
        g = grvec.vmask(
            grvec.gr_mul(l0, scalars[(e - e1) % 16], ell, mod)
            + grvec.gr_mul(l1, scalars[e1], ell, mod)
            + grvec.gr_mul(l2, scalars[e2], ell, mod), ell)
        frac = float(np.all(g == 0, axis=1).mean())
        if frac > bound:
            offenders.append(((e, e1, e2), frac))
    dt = time.monotonic() - t0
    report(5, not offenders and dt < 60,
           f"cheat-survival fraction <= 1/2^(d-1) for every nonzero "
           f"(e,e1,e2); offenders: {offenders} ({dt:.0f}s)")


# ---------------------------------------------------------------------------
# 6. Truncation accuracy and the mask-pair invariant
# ---------------------------------------------------------------------------

def _trunc_prog(party, xv, t):
    ring = Ring(64)
    lanes = len(xv)
    party.enter_phase(Phase.PRE)
    mat = gates.trunc_prepare(party, lanes, t, ring)
    party.enter_phase(Phase.ONLINE)
    x = shc_input(party, 0, np.asarray(xv, dtype=np.uint64)
                  if party.role == 0 else None, lanes, ring, "x")
    one = MVal.public(ring, party.role, np.ones(lanes, dtype=np.uint64))
    g = gates.mul_prepare(party, x.mask, one.mask, lanes, out_mask=mat.rx_mask)
    z = gates.trunc_online(party, gates.mul_finish(party, g, x, one), mat)
    party.round_barrier()
    party.enter_phase(Phase.POST)
    party.freeze_logs()
    zv = rec(party, z, "z")
    clears = (mat.rx_clear, mat.rz_clear) if party.role == 0 else None
    return zv, clears


def test_criterion_6_truncation():
    rng = np.random.default_rng(6)
    xs = rng.integers(-(2 ** 40) + 1, 2 ** 40, 10_000)
    enc = np.array([int(v) % 2 ** 64 for v in xs], dtype=np.uint64)
    _, res = run3(_trunc_prog, enc, 16, seed=66)
    z = grvec.to_signed(res[0][0], 64).astype(np.float64)
    err = np.abs(z - xs / 2 ** 16)
    failures = int(np.sum(err > 1.0))
    rx, rz = res[0][1]
    exact = np.array_equal(rz, grvec.arith_rshift(rx, 16, 64))
    report(6, failures <= 1 and exact,
           f"10^4 trials: {failures} outside 1 ulp (allow 1); "
           f"r_z == arshift(r_x, 16) exact: {exact}")


# ---------------------------------------------------------------------------
# 7. Conversion round-trips
# ---------------------------------------------------------------------------

def _roundtrip_prog(party, xs, ell):
    from ring3pc import nonlinear as nl
    ring = Ring(ell)
    lanes = len(xs)
    party.enter_phase(Phase.PRE)
    eda = nl.edabits_prepare(party, lanes, ring)
    dabs = [nl.dabit_prepare(party, lanes, ring) for _ in range(ell)]
    party.round_barrier()
    party.enter_phase(Phase.ONLINE)
    x = shc_input(party, 0, np.array(xs, dtype=np.uint64)
                  if party.role == 0 else None, lanes, ring, "x")
    bits = nl.a2b(party, x, eda)
    acc = None
    for i in range(ell):
        ai = nl.b2a(party, bits.take(i), dabs[i], ring)
        ai = ai.scale_pub(np.uint64((1 << i) & ring.mask))
        acc = ai if acc is None else acc + ai
    party.round_barrier()
    party.enter_phase(Phase.POST)
    party.freeze_logs()
    ebits = np.stack([rec(party, eda.bits.take(i), f"e{i}") for i in range(ell)])
    return rec(party, acc, "x2"), ebits, rec(party, eda.arith, "ea")


def test_criterion_7_conversion_roundtrips():
    _, res = run3(_roundtrip_prog, list(range(256)), 8, ell=8)
    back, ebits, ea = res[0]
    ok8 = back.tolist() == list(range(256))
    inv8 = np.array_equal(
        sum((ebits[i].astype(np.uint64) << np.uint64(i)) for i in range(8)) & np.uint64(255),
        ea)
    rng = np.random.default_rng(7)
    xs = [int(v) for v in rng.integers(0, 1 << 64, 32, dtype=np.uint64)]
    _, res = run3(_roundtrip_prog, xs, 64, seed=8)
    back, ebits, ea = res[0]
    ok64 = back.tolist() == xs
    inv64 = np.array_equal(
        sum((ebits[i].astype(np.uint64) << np.uint64(i)) for i in range(64)),
        ea)
    report(7, ok8 and ok64 and inv8 and inv64,
           f"a2b->b2a recomposition exact (ell=8 exhaustive: {ok8}, "
           f"ell=64 randomized: {ok64}); edaBits invariant: {inv8 and inv64}")


# ---------------------------------------------------------------------------
# 8. End-to-end model inference
# ---------------------------------------------------------------------------

_SWEEP_SITES = None


def _make_sweep(n=50):
    # spread over cross-term shares, exchange legs, and consistent rewrites
    sweep = []
    rng = np.random.default_rng(88)
    for i in range(n):
        kind = i % 5
        if kind < 3:
            sweep.append(("gamma", 0, int(rng.integers(0, 8)),
                          int(rng.integers(0, 10)), int(rng.integers(1, 1 << 62))))
        elif kind == 3:
            sweep.append(("mz", 1, int(rng.integers(0, 8)),
                          int(rng.integers(0, 10)), int(rng.integers(1, 1 << 62))))
        else:
            sweep.append(("z", 2, int(rng.integers(0, 8)),
                          int(rng.integers(0, 10)), int(rng.integers(1, 1 << 62))))
    return sweep


def _sweep_worker(item):
    site, who, gate, lane, delta = item
    rng = np.random.default_rng(123)
    model = ppml.snn_model(rng)
    img = rng.normal(0, 1, 784)
    adv = AdversaryConfig(corrupted=who,
                          injections=[Injection(site, delta=delta, gate=gate,
                                                lane=lane)])
    sess = Session(seed=5150, adversary=adv)
    try:
        _, verdicts = sess.run(ppml.infer, model, img,
                               InferConfig(check=True, d=16, R=10))[0]
        return not all(verdicts.values())
    except AbortError:
        return True


def test_criterion_8_snn_end_to_end():
    t0 = time.monotonic()
    rng = np.random.default_rng(123)
    model = ppml.snn_model(rng)

    # verified run: scores within the accumulated truncation bound
    img0 = rng.normal(0, 1, 784)
    _, res = run3(ppml.infer, model, img0, InferConfig(check=True, d=16, R=10),
                  seed=5150)
    scores, verdicts = res[0]
    oracle = fx_model_oracle(model, img0)
    got = np.array([fx_signed(int(v)) for v in scores], dtype=np.float64)
    want = np.array([fx_signed(int(v)) for v in oracle], dtype=np.float64)
    bound = (2 * 845 * np.max(np.abs(model.weights[1])) + 4)
    close = np.max(np.abs(got - want)) <= bound and all(verdicts.values())

    # argmax agreement on 100 fixtures (unverified executions; the verified
    # path is exercised above and in the sweep)
    agree = 0
    tol = bound / 2 ** 16
    for i in range(100):
        img = rng.normal(0, 1, 784)
        _, r = run3(ppml.infer, model, img, InferConfig(check=False),
                    seed=9000 + i)
        mpc = ppml.decode(r[0][0], 16)
        ora = ppml.decode(fx_model_oracle(model, img), 16)
        am, ao = int(np.argmax(mpc)), int(np.argmax(ora))
        if am == ao or abs(ora[ao] - ora[am]) <= 2 * tol:
            agree += 1

    # single-gate injections across 50 positions must all abort pre-reveal
    sweep = _make_sweep(50)
    with ProcessPoolExecutor(max_workers=2) as pool:
        caught = sum(pool.map(_sweep_worker, sweep))
    dt = time.monotonic() - t0
    report(8, close and agree >= 99 and caught == 50 and dt < 600,
           f"score error within bound: {close}, argmax {agree}/100, "
           f"injections caught {caught}/50, {dt:.0f}s")


# ---------------------------------------------------------------------------
# 9. Determinism
# ---------------------------------------------------------------------------

def test_criterion_9_determinism():
    txt = ("INPUT 0 0\nINPUT 1 1\nMUL 2 0 1\nDOT 3 2 0 1 1 2\n"
           "MUL 4 3 2\nOUTPUT 4\n")
    circ = circuit.parse(txt)

    def once():
        sess = Session(seed=424242, keep_messages=True)
        out = sess.run(circuit.evaluate, circ, {0: 3, 1: 9}, 16, 2)
        return out[0][0], sess.transcript.to_csv(), sess.transcript.messages

    a, b = once(), once()
    report(9, a == b, "two runs with the same seed produce byte-identical "
                      "outputs, counters and message logs")
