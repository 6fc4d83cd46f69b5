"""Shared test utilities: independent oracles and small session harnesses.

The oracles here deliberately avoid the package's vectorized kernels: Galois
ring arithmetic is redone with Python ints and long division, circuits are
evaluated on plaintext ints, and fixed-point layers are simulated directly.
"""

from __future__ import annotations

import numpy as np

from ring3pc.runtime import Session
from ring3pc.sharing import reconstruct_clear


# ---------------------------------------------------------------------------
# Brute-force Galois ring oracle (python ints, schoolbook + long division)
# ---------------------------------------------------------------------------

def poly_mul_mod(a, b, f_bits: int, d: int, ell: int):
    """Multiply coefficient lists mod f(x) and mod 2^ell, by long division."""
    mask = (1 << ell) - 1
    prod = [0] * (2 * d - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            prod[i + j] = (prod[i + j] + ai * bj) & mask
    for k in range(2 * d - 2, d - 1, -1):
        c = prod[k]
        if c == 0:
            continue
        prod[k] = 0
        for j in range(d):
            if f_bits >> j & 1:
                prod[k - d + j] = (prod[k - d + j] - c) & mask
    return prod[:d]


def poly_add(a, b, ell):
    mask = (1 << ell) - 1
    return [(x + y) & mask for x, y in zip(a, b)]


def gf2_trial_division_irreducible(f: int) -> bool:
    """Exhaustive factor search over GF(2), usable up to degree ~20."""
    d = f.bit_length() - 1
    for g in range(2, 1 << (d // 2 + 1)):
        if g.bit_length() - 1 < 1:
            continue
        # polynomial long division f / g over GF(2)
        r = f
        dg = g.bit_length() - 1
        while r.bit_length() - 1 >= dg and r:
            r ^= g << (r.bit_length() - 1 - dg)
        if r == 0:
            return False
    return True


# ---------------------------------------------------------------------------
# Session harness
# ---------------------------------------------------------------------------

def run3(program, *args, seed=0, ell=64, adversary=None, engine="coop",
         keep_messages=False):
    sess = Session(seed=seed, ell=ell, adversary=adversary, engine=engine,
                   keep_messages=keep_messages)
    results = sess.run(program, *args)
    return sess, results


def open_views(results, pick=lambda r: r) -> np.ndarray:
    """Reconstruct a plaintext from the three parties' MVal views."""
    views = [pick(r) for r in results]
    return reconstruct_clear(views)


# ---------------------------------------------------------------------------
# Random circuits + plaintext evaluator (independent of the MPC code)
# ---------------------------------------------------------------------------

def gen_random_circuit(rng: np.random.Generator, max_gates: int = 64):
    """Random ADD/SUB/MUL/DOT circuit text plus plaintext input values."""
    lines = []
    values = {}
    wires = []
    wid = 0
    n_inputs = int(rng.integers(2, 5))
    for _ in range(n_inputs):
        owner = int(rng.integers(0, 3))
        lines.append(f"INPUT {wid} {owner}")
        values[wid] = int(rng.integers(0, 1 << 63))
        wires.append(wid)
        wid += 1
    n_gates = int(rng.integers(1, max_gates - n_inputs + 1))
    for _ in range(n_gates):
        op = rng.choice(["ADD", "SUB", "MUL", "MUL", "DOT", "SCALE"])
        if op in ("ADD", "SUB", "MUL"):
            a, b = rng.choice(wires, size=2)
            lines.append(f"{op} {wid} {int(a)} {int(b)}")
        elif op == "SCALE":
            c = int(rng.integers(0, 1 << 32))
            a = int(rng.choice(wires))
            lines.append(f"SCALE {wid} {c} {a}")
        else:
            n = int(rng.integers(1, 5))
            ids = [int(w) for w in rng.choice(wires, size=2 * n)]
            lines.append(f"DOT {wid} {n} " + " ".join(map(str, ids)))
        wires.append(wid)
        wid += 1
    outs = rng.choice(wires, size=min(3, len(wires)), replace=False)
    for w in outs:
        lines.append(f"OUTPUT {int(w)}")
    return "\n".join(lines), values


def plain_eval(text: str, values: dict[int, int], ell: int = 64):
    """Plaintext reference evaluation of the circuit text format."""
    mask = (1 << ell) - 1
    w = {}
    outs = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        t = line.split()
        op = t[0].upper()
        if op == "INPUT":
            w[int(t[1])] = values.get(int(t[1]), 0) & mask
        elif op == "CONST":
            w[int(t[1])] = int(t[2], 0) & mask
        elif op == "ADD":
            w[int(t[1])] = (w[int(t[2])] + w[int(t[3])]) & mask
        elif op == "SUB":
            w[int(t[1])] = (w[int(t[2])] - w[int(t[3])]) & mask
        elif op == "MUL":
            w[int(t[1])] = (w[int(t[2])] * w[int(t[3])]) & mask
        elif op == "SCALE":
            w[int(t[1])] = (int(t[2], 0) * w[int(t[3])]) & mask
        elif op == "DOT":
            n = int(t[2])
            ids = [int(x) for x in t[3:3 + 2 * n]]
            acc = 0
            for a, b in zip(ids[:n], ids[n:]):
                acc += w[a] * w[b]
            w[int(t[1])] = acc & mask
        elif op == "TRUNC":
            v = w[int(t[2])]
            sign = v >> (ell - 1)
            out = v >> int(t[3])
            if sign:
                out |= ((1 << int(t[3])) - 1) << (ell - int(t[3]))
            w[int(t[1])] = out & mask
        elif op == "RELU":
            v = w[int(t[2])]
            w[int(t[1])] = v if v < (1 << (ell - 1)) else 0
        elif op == "MAXPOOL":
            n = int(t[2])
            ids = [int(x) for x in t[3:3 + n]]
            signed = [(w[i] - (1 << ell)) if w[i] >> (ell - 1) else w[i]
                      for i in ids]
            w[int(t[1])] = max(signed) & mask
        elif op == "OUTPUT":
            outs.append(w[int(t[1])])
    return outs


# ---------------------------------------------------------------------------
# Plaintext fixed-point model oracle
# ---------------------------------------------------------------------------

def fx_trunc(v: int, t: int, ell: int = 64) -> int:
    mask = (1 << ell) - 1
    sign = v >> (ell - 1)
    out = v >> t
    if sign:
        out |= ((1 << t) - 1) << (ell - t)
    return out & mask


def fx_signed(v: int, ell: int = 64) -> int:
    return v - (1 << ell) if v >> (ell - 1) else v


def fx_model_oracle(model, image: np.ndarray, k: int = 16, ell: int = 64):
    """Fixed-point plaintext simulation with the same truncation semantics."""
    from ring3pc.ppml import conv_indices, encode

    mask = (1 << ell) - 1
    x = [int(v) for v in encode(image, k, ell)]
    shape = model.input_shape
    widx = 0
    for lay, out_shape in zip(model.layers, model.shapes()):
        if lay.kind == "conv":
            p = lay.params
            idx = conv_indices(shape, p)
            wts = [int(v) for v in encode(model.weights[widx], k, ell)]
            widx += 1
            n_patch, L = idx.shape
            out = []
            aug = x + [0]
            for f in range(p["out"]):
                for pos in range(L):
                    acc = 0
                    for r in range(n_patch):
                        acc += aug[idx[r, pos]] * wts[f * n_patch + r]
                    out.append(fx_trunc(acc & mask, k, ell))
            x = out
        elif lay.kind == "relu":
            x = [v if v < (1 << (ell - 1)) else 0 for v in x]
        elif lay.kind == "fc":
            din, dout = lay.params["din"], lay.params["dout"]
            wts = [int(v) for v in encode(model.weights[widx], k, ell)]
            widx += 1
            out = []
            for o in range(dout):
                acc = 0
                for i in range(din):
                    acc += x[i] * wts[o * din + i]
                out.append(fx_trunc(acc & mask, k, ell))
            x = out
        elif lay.kind == "maxpool":
            win = lay.params["win"]
            c, h, w = shape
            out = []
            for ci in range(c):
                for oy in range(h // win):
                    for ox in range(w // win):
                        vals = [fx_signed(x[(ci * h + oy * win + ky) * w
                                            + ox * win + kx], ell)
                                for ky in range(win) for kx in range(win)]
                        out.append(max(vals) & mask)
            x = out
        shape = out_shape
    return np.array(x, dtype=np.uint64)
