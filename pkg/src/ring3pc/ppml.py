"""Fixed-point tensor layer: encoding, conv/FC as batched inner products
with truncation, and a small model runner.

Weights enter from a model-owner party and the image from a data-owner
party (P1 and P2 by default; P0 stays the helper).  Every convolution or
fully-connected layer is one batched inner-product gate (one lane per output
element) followed by a probabilistic truncation of the doubled fractional
scale; ReLU layers use the bit pipeline.  All multiplications land in the
gate logs and are batch-verified before any score is revealed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gates, nonlinear, verify
from .rings import ConfigError
from .sharing import MVal, Ring, rec, shc_input_mask, shc_input_online
from .transport import Phase


# ---------------------------------------------------------------------------
# Fixed-point encoding
# ---------------------------------------------------------------------------

def encode(x, k: int, ell: int = 64) -> np.ndarray:
    """Real -> ring integer with k fractional bits, rounding toward zero.
    Negatives are two's complement.  Overflow past 2^(ell-k-1) is rejected."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    limit = 2.0 ** (ell - k - 1)
    if np.any(np.abs(arr) >= limit):
        raise ConfigError(f"fixed-point overflow: |x| must be < 2^{ell - k - 1}")
    scaled = np.trunc(arr * (2.0 ** k))
    out = scaled.astype(np.int64).astype(np.uint64)
    if ell < 64:
        out &= np.uint64((1 << ell) - 1)
    return out


def decode(v, k: int, ell: int = 64) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=np.uint64)).astype(object)
    half = 1 << (ell - 1)
    full = 1 << ell
    signed = np.array([int(a) - full if int(a) >= half else int(a) for a in arr.reshape(-1)],
                      dtype=np.float64)
    return (signed / 2.0 ** k).reshape(arr.shape)


# ---------------------------------------------------------------------------
# Model description and fixture files
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    kind: str                 # conv | relu | maxpool | fc
    params: dict = field(default_factory=dict)


@dataclass
class ModelSpec:
    input_shape: tuple[int, int, int]      # (channels, height, width)
    layers: list[Layer]
    weights: list[np.ndarray] | None = None  # float64 per weighted layer

    def shapes(self) -> list[tuple]:
        """Per-layer output shapes; validates the chain."""
        shape = self.input_shape
        out = []
        for lay in self.layers:
            if lay.kind == "conv":
                c, h, w = shape
                p = lay.params
                oh = (h + 2 * p["pad"] - p["kh"]) // p["sh"] + 1
                ow = (w + 2 * p["pad"] - p["kw"]) // p["sw"] + 1
                shape = (p["out"], oh, ow)
            elif lay.kind in ("relu",):
                pass
            elif lay.kind == "maxpool":
                c, h, w = shape
                win = lay.params["win"]
                if h % win or w % win:
                    raise ConfigError("maxpool window must divide the extent")
                shape = (c, h // win, w // win)
            elif lay.kind == "fc":
                want = lay.params["din"]
                if int(np.prod(shape)) != want:
                    raise ConfigError(
                        f"fc expects {want} inputs, got {np.prod(shape)}")
                shape = (lay.params["dout"],)
            else:
                raise ConfigError(f"unknown layer {lay.kind}")
            out.append(shape)
        return out

    def weight_count(self, lay: Layer) -> int:
        if lay.kind == "conv":
            p = lay.params
            c = self._in_channels(lay)
            return p["out"] * c * p["kh"] * p["kw"]
        if lay.kind == "fc":
            return lay.params["din"] * lay.params["dout"]
        return 0

    def _in_channels(self, lay: Layer) -> int:
        shape = self.input_shape
        for cur, out in zip(self.layers, self.shapes()):
            if cur is lay:
                return shape[0]
            shape = out
        raise ConfigError("layer not in model")


def save_model(path: str, model: ModelSpec) -> None:
    lines = ["INPUT %d %d %d" % model.input_shape]
    for lay in model.layers:
        p = lay.params
        if lay.kind == "conv":
            lines.append(f"CONV {p['out']} {p['kh']} {p['kw']} {p['sh']} {p['sw']} {p['pad']}")
        elif lay.kind == "relu":
            lines.append("RELU")
        elif lay.kind == "maxpool":
            lines.append(f"MAXPOOL {p['win']}")
        elif lay.kind == "fc":
            lines.append(f"FC {p['din']} {p['dout']}")
    blob = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes()
                    for w in (model.weights or []))
    lines.append(f"BLOB {len(blob)}")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())
        f.write(blob)


def load_model(path: str) -> ModelSpec:
    with open(path, "rb") as f:
        data = f.read()
    layers: list[Layer] = []
    input_shape = None
    pos = 0
    blob_len = None
    while True:
        nl = data.index(b"\n", pos)
        line = data[pos:nl].decode().strip()
        pos = nl + 1
        toks = line.split()
        if toks[0] == "INPUT":
            input_shape = tuple(int(t) for t in toks[1:4])
        elif toks[0] == "CONV":
            o, kh, kw, sh, sw, pad = (int(t) for t in toks[1:7])
            layers.append(Layer("conv", dict(out=o, kh=kh, kw=kw, sh=sh, sw=sw, pad=pad)))
        elif toks[0] == "RELU":
            layers.append(Layer("relu"))
        elif toks[0] == "MAXPOOL":
            layers.append(Layer("maxpool", dict(win=int(toks[1]))))
        elif toks[0] == "FC":
            layers.append(Layer("fc", dict(din=int(toks[1]), dout=int(toks[2]))))
        elif toks[0] == "BLOB":
            blob_len = int(toks[1])
            break
        else:
            raise ConfigError(f"bad model header line: {line!r}")
    if input_shape is None or blob_len is None:
        raise ConfigError("incomplete model header")
    blob = data[pos:pos + blob_len]
    model = ModelSpec(input_shape, layers)
    weights = []
    off = 0
    for lay in layers:
        n = model.weight_count(lay)
        if n:
            weights.append(np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy())
            off += 8 * n
    model.weights = weights
    return model


def load_image(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return np.array([float(t) for t in f.read().split()], dtype=np.float64)


def snn_model(rng: np.random.Generator | None = None) -> ModelSpec:
    """The small reference topology: 28x28 -> conv(5 kernels 5x5, stride 2,
    pad 1) -> ReLU -> FC(845 -> 10)."""
    model = ModelSpec((1, 28, 28), [
        Layer("conv", dict(out=5, kh=5, kw=5, sh=2, sw=2, pad=1)),
        Layer("relu"),
        Layer("fc", dict(din=845, dout=10)),
    ])
    if rng is not None:
        model.weights = [
            rng.normal(0, 0.2, 5 * 1 * 5 * 5),
            rng.normal(0, 0.05, 845 * 10),
        ]
    return model


def lenet_model() -> ModelSpec:
    """LeNet topology (ReLU activations), 32x32 input; weights not included —
    shipped as a configuration, exercised at desk scale only."""
    return ModelSpec((1, 32, 32), [
        Layer("conv", dict(out=6, kh=5, kw=5, sh=1, sw=1, pad=0)),
        Layer("relu"),
        Layer("maxpool", dict(win=2)),
        Layer("conv", dict(out=16, kh=5, kw=5, sh=1, sw=1, pad=0)),
        Layer("relu"),
        Layer("maxpool", dict(win=2)),
        Layer("fc", dict(din=400, dout=120)),
        Layer("relu"),
        Layer("fc", dict(din=120, dout=84)),
        Layer("relu"),
        Layer("fc", dict(din=84, dout=10)),
    ])


def vgg16_model() -> ModelSpec:
    """VGG-16 topology at 64x64 input; configuration only."""
    chans = [64, 64, "p", 128, 128, "p", 256, 256, 256, "p",
             512, 512, 512, "p", 512, 512, 512, "p"]
    layers: list[Layer] = []
    for c in chans:
        if c == "p":
            layers.append(Layer("maxpool", dict(win=2)))
        else:
            layers.append(Layer("conv", dict(out=c, kh=3, kw=3, sh=1, sw=1,
                                             pad=1)))
            layers.append(Layer("relu"))
    layers += [
        Layer("fc", dict(din=2 * 2 * 512, dout=4096)),
        Layer("relu"),
        Layer("fc", dict(din=4096, dout=4096)),
        Layer("relu"),
        Layer("fc", dict(din=4096, dout=10)),
    ]
    return ModelSpec((3, 64, 64), layers)


# ---------------------------------------------------------------------------
# Patch gathering
# ---------------------------------------------------------------------------

def conv_indices(shape, p) -> np.ndarray:
    """(n_patch, L) indices into the flat input extended by one zero slot at
    index -1 for padding."""
    c, h, w = shape
    oh = (h + 2 * p["pad"] - p["kh"]) // p["sh"] + 1
    ow = (w + 2 * p["pad"] - p["kw"]) // p["sw"] + 1
    zero_slot = c * h * w
    idx = np.full((c * p["kh"] * p["kw"], oh * ow), zero_slot, dtype=np.int64)
    col = 0
    for oy in range(oh):
        for ox in range(ow):
            row = 0
            for ci in range(c):
                for ky in range(p["kh"]):
                    for kx in range(p["kw"]):
                        iy = oy * p["sh"] + ky - p["pad"]
                        ix = ox * p["sw"] + kx - p["pad"]
                        if 0 <= iy < h and 0 <= ix < w:
                            idx[row, col] = (ci * h + iy) * w + ix
                        row += 1
            col += 1
    return idx


def _gather(v: MVal, idx: np.ndarray) -> MVal:
    """Fancy-gather a flat share vector into (n, L), with a zero slot
    appended so padding indices resolve to zero shares."""
    def g(a):
        aug = np.concatenate([a, np.zeros(1, dtype=np.uint64)])
        return aug[idx]
    return MVal(v.mask._map(g), None if v.m is None else g(v.m))


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

@dataclass
class InferConfig:
    k: int = 16
    d: int = 16
    R: int | str = "auto"
    model_owner: int = 1
    data_owner: int = 2
    check: bool = True
    layer_report: bool = False


def infer(party, model: ModelSpec, image: np.ndarray | None,
          cfg: InferConfig = InferConfig()):
    """Party program: returns (scores ring-values, verdicts[, layer report]).

    The model owner supplies the weights, the data owner the image; scores
    open only after both gate logs verify.  With cfg.layer_report the result
    gains a per-layer list of (kind, online payload bytes so far delta).
    """
    ring = Ring(party.ell)
    k = cfg.k
    shapes = model.shapes()
    party.enter_phase(Phase.PRE)

    n_in = int(np.prod(model.input_shape))
    img_mask = shc_input_mask(party, cfg.data_owner, n_in, ring)
    w_masks = []
    for lay in model.layers:
        n = model.weight_count(lay)
        w_masks.append(shc_input_mask(party, cfg.model_owner, n, ring) if n else None)

    # Offline pass: conv/fc gates with truncation-assigned masks, ReLU bit
    # material.  A layer whose input mask is data-dependent (it follows a
    # ReLU or maxpool) defers its cross-term sharing to the online phase.
    plans = []
    cur_mask = img_mask
    cur_shape = model.input_shape
    for li, lay in enumerate(model.layers):
        out_shape = shapes[li]
        lanes = int(np.prod(out_shape))
        if lay.kind in ("conv", "fc"):
            tr = gates.trunc_prepare(party, lanes, k, ring)
            gate = None
            if cur_mask is not None:
                xm, ym = _layer_operands_masks(party, model, lay, cur_mask,
                                               w_masks[li], cur_shape)
                gate = gates.dot_prepare(party, xm, ym, lanes,
                                         out_mask=tr.rx_mask)
            plans.append(("dot", tr, gate))
            cur_mask = tr.rz_mask
        elif lay.kind == "relu":
            mat = None
            if cur_mask is not None:
                mat = nonlinear.relu_prepare(party, cur_mask, lanes, ring)
            plans.append(("relu", mat, None))
            cur_mask = None
        elif lay.kind == "maxpool":
            plans.append(("maxpool", None, None))
            cur_mask = None
        cur_shape = out_shape
    if cfg.check:
        verify.prepare_verification(party, d=cfg.d)
    party.round_barrier()
    party.enter_phase(Phase.ONLINE)

    img_vals = None
    if party.role == cfg.data_owner:
        img_vals = encode(image, k, ring.ell)
    x = shc_input_online(party, cfg.data_owner, img_vals, img_mask, n_in,
                         ring, "image")
    weights = []
    for li, lay in enumerate(model.layers):
        n = model.weight_count(lay)
        if not n:
            weights.append(None)
            continue
        wv = None
        if party.role == cfg.model_owner:
            wv = encode(model.weights[len([w for w in weights if w is not None])],
                        k, ring.ell)
        weights.append(shc_input_online(party, cfg.model_owner, wv,
                                        w_masks[li], n, ring, f"w{li}"))
    party.round_barrier()   # input flight; also anchors the layer report

    cur = x
    cur_shape = model.input_shape
    layer_bytes = []
    for li, lay in enumerate(model.layers):
        out_shape = shapes[li]
        lanes = int(np.prod(out_shape))
        before = party.sess.transcript.bytes_sent(frm=party.role,
                                                  phase=Phase.ONLINE)
        kind, mat, gate = plans[li]
        if kind == "dot":
            xs, ys = _layer_operands(party, model, lay, cur, weights[li],
                                     cur_shape)
            if gate is None:
                gate = gates.dot_prepare(party, xs.mask, ys.mask, lanes,
                                         out_mask=mat.rx_mask)
            prod = gates.dot_finish(party, gate, xs, ys)
            party.round_barrier()
            cur = gates.trunc_online(party, prod, mat)
        elif kind == "relu":
            if mat is None:
                mat = nonlinear.relu_prepare(party, cur.mask, lanes, ring)
            cur = nonlinear.relu_online(party, cur, mat)
            party.round_barrier()
        elif kind == "maxpool":
            win = lay.params["win"]
            idx = _pool_indices(cur_shape, win)
            cur = nonlinear.maxpool_online(party, _gather(cur, idx), ring)
            party.round_barrier()
        cur_shape = out_shape
        sent = party.sess.transcript.bytes_sent(frm=party.role,
                                                phase=Phase.ONLINE)
        layer_bytes.append((lay.kind, sent - before))

    party.enter_phase(Phase.POST)
    verdicts = {}
    if cfg.check:
        verdicts = verify.verify_session(party, d=cfg.d, R=cfg.R)
        adv = party.sess.adversary
        if not all(verdicts.values()) and (adv is None or adv.abort_on_detect):
            party.abort(f"verification failed before output reveal: {verdicts}")
    else:
        party.freeze_logs()
    scores = rec(party, cur, "scores")
    if cfg.layer_report:
        return scores, verdicts, layer_bytes
    return scores, verdicts


def _layer_operands(party, model, lay, cur: MVal, w: MVal, cur_shape):
    if lay.kind == "conv":
        p = lay.params
        idx = conv_indices(cur_shape, p)
        n_patch, L = idx.shape
        xs = _gather(cur, np.tile(idx, (1, p["out"])))
        widx = np.repeat(np.arange(p["out"]) * n_patch, L)[None, :] + \
            np.arange(n_patch)[:, None]
        ys = _gather(w, widx)
        return xs, ys
    # fc: weights are (dout, din) flattened
    din, dout = lay.params["din"], lay.params["dout"]
    xs = _gather(cur, np.tile(np.arange(din)[:, None], (1, dout)))
    widx = (np.arange(dout) * din)[None, :] + np.arange(din)[:, None]
    ys = _gather(w, widx)
    return xs, ys


def _layer_operands_masks(party, model, lay, cur_mask, w_mask, cur_shape):
    fake_x = MVal(cur_mask, None)
    fake_w = MVal(w_mask, None)
    xs, ys = _layer_operands(party, model, lay, fake_x, fake_w, cur_shape)
    return xs.mask, ys.mask


def _pool_indices(shape, win) -> np.ndarray:
    c, h, w = shape
    oh, ow = h // win, w // win
    idx = np.empty((win * win, c * oh * ow), dtype=np.int64)
    col = 0
    for ci in range(c):
        for oy in range(oh):
            for ox in range(ow):
                row = 0
                for ky in range(win):
                    for kx in range(win):
                        idx[row, col] = (ci * h + oy * win + ky) * w + ox * win + kx
                        row += 1
                col += 1
    return idx
