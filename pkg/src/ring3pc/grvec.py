"""Vectorized uint64 kernels for Z_2^ell and GR(2^ell, d) arrays.

Base-ring vectors are uint64 arrays of shape (n,); extension vectors are
(n, d) with the constant coefficient in column 0.  uint64 wraps mod 2^64 in
C, so ell=64 is free; narrower widths are masked after each operation.
Scalars must be wrapped as np.uint64 before mixing with arrays.
"""

from __future__ import annotations

import numpy as np

from .rings import GrModulus, ring_mask

U64 = np.uint64


def umask(width: int) -> np.uint64:
    return U64(ring_mask(width))


def u64(value: int) -> np.uint64:
    return U64(value & ring_mask(64))


def vmask(a: np.ndarray, width: int) -> np.ndarray:
    return a if width == 64 else a & umask(width)


def base_from_ints(values, width: int) -> np.ndarray:
    mask = ring_mask(width)
    return np.array([v & mask for v in values], dtype=np.uint64)


def vneg(a: np.ndarray, width: int) -> np.ndarray:
    return vmask(np.zeros_like(a) - a, width)


def vscale(a: np.ndarray, c: int, width: int) -> np.ndarray:
    return vmask(a * u64(c), width)


def arith_rshift(a: np.ndarray, t: int, width: int) -> np.ndarray:
    """Arithmetic right shift on the width-bit two's-complement pattern."""
    if t == 0:
        return a.copy()
    if not 0 < t < width:
        raise ValueError(f"shift {t} out of range for width {width}")
    sign = (a >> U64(width - 1)) & U64(1)
    fill = vmask((np.zeros_like(a) - sign) << U64(width - t), width)
    return (a >> U64(t)) | fill


def to_signed(a: np.ndarray, width: int) -> np.ndarray:
    """Interpret width-bit patterns as signed integers (int64 output)."""
    half = 1 << (width - 1)
    v = a.astype(np.int64) if width == 64 else a.astype(np.int64)
    if width == 64:
        return v
    return np.where(a >= half, v - (1 << width), v)


# ---------------------------------------------------------------------------
# GR(2^ell, d) kernels; operands shaped (n, d), broadcastable on axis 0
# ---------------------------------------------------------------------------

def gr_embed(base: np.ndarray, mod: GrModulus) -> np.ndarray:
    """Lift (n,) base values to (n, d) with constant coefficient set."""
    out = np.zeros(base.shape + (mod.degree,), dtype=np.uint64)
    out[..., 0] = base
    return out


def gr_const(value: int, mod: GrModulus, width: int) -> np.ndarray:
    return gr_embed(base_from_ints([value], width), mod)


def gr_mul(a: np.ndarray, b: np.ndarray, width: int, mod: GrModulus) -> np.ndarray:
    """Schoolbook product reduced mod f(x) and mod 2^width."""
    d = mod.degree
    if a.shape[-1] != d or b.shape[-1] != d:
        raise ValueError("coefficient count does not match modulus degree")
    if d == 1:
        return vmask(a * b, width)
    if width == 1 and d <= 32:
        return _gf2_mul_packed(a, b, mod)
    n = max(a.shape[0], b.shape[0])
    prod = np.zeros((n, 2 * d - 1), dtype=np.uint64)
    for j in range(d):
        prod[:, j:j + d] += a[:, j:j + 1] * b
    low, high = prod[:, :d], prod[:, d:]
    red = np.einsum("nk,kj->nj", high, mod.reduction_rows(width), dtype=np.uint64)
    return vmask(low + red, width)


def _gf2_mul_packed(a: np.ndarray, b: np.ndarray, mod: GrModulus) -> np.ndarray:
    """GR(2,d) = GF(2^d) multiply on bit-packed words (carry-less shift/xor)."""
    d = mod.degree
    shifts = np.arange(d, dtype=np.uint64)
    pa = np.bitwise_or.reduce((a & U64(1)) << shifts, axis=-1)
    pb = np.bitwise_or.reduce((b & U64(1)) << shifts, axis=-1)
    pa, pb = np.broadcast_arrays(pa, pb)
    prod = np.zeros_like(pa)
    acc = pb.copy()
    for j in range(d):
        sel = (pa >> U64(j)) & U64(1)
        prod ^= acc * sel
        if j < d - 1:
            acc = acc << U64(1)
    # reduce the (2d-1)-bit product by f
    f = U64(mod.f_bits)
    for k in range(2 * d - 2, d - 1, -1):
        hit = (prod >> U64(k)) & U64(1)
        prod ^= (f << U64(k - d)) * hit
    return ((prod[..., None] >> shifts) & U64(1)).astype(np.uint64)


def gr_scale_base(a: np.ndarray, c: np.ndarray, width: int) -> np.ndarray:
    """Coefficient-wise product with base-ring scalars c of shape (n,) or ()."""
    c = np.asarray(c, dtype=np.uint64)
    return vmask(a * c[..., None], width)


def gr_dot(a: np.ndarray, b: np.ndarray, width: int, mod: GrModulus) -> np.ndarray:
    """Sum of pairwise products, output shape (1, d)."""
    prods = gr_mul(a, b, width, mod)
    return vmask(np.add.reduce(prods, axis=0, keepdims=True), width)


def gr_powers(r: np.ndarray, n: int, width: int, mod: GrModulus) -> np.ndarray:
    """(n, d) array of r^0 .. r^(n-1), by block doubling."""
    d = mod.degree
    out = np.zeros((n, d), dtype=np.uint64)
    out[0, 0] = 1
    filled = 1
    while filled < n:
        take = min(filled, n - filled)
        step = gr_mul(out[filled - 1:filled], r.reshape(1, d), width, mod)
        out[filled:filled + take] = gr_mul(out[:take], step, width, mod)
        filled += take
    return out


def gr_line_eval(p0: np.ndarray, p1: np.ndarray, z: np.ndarray,
                 width: int, mod: GrModulus) -> np.ndarray:
    """z*p1 - (z-1)*p0, elementwise over rows; z shaped (1, d)."""
    one = gr_const(1, mod, width)
    return vmask(gr_mul(z, p1, width, mod) - gr_mul(z - one, p0, width, mod), width)


def gr_quad_coeffs(z_even: np.ndarray, width: int, mod: GrModulus):
    """Lagrange weights (l0, l1, l2) at an even point, each (1, d)."""
    if np.any(z_even & U64(1)):
        raise ValueError("even evaluation point required")
    u = z_even >> U64(1)
    one = gr_const(1, mod, width)
    two = gr_const(2, mod, width)
    l0 = gr_mul(vmask(z_even - one, width), vmask(u - one, width), width, mod)
    l1 = gr_mul(z_even, vmask(two - z_even, width), width, mod)
    l2 = gr_mul(u, vmask(z_even - one, width), width, mod)
    return l0, l1, l2


def gr_quad_eval(h0, h1, h2, z_even, width: int, mod: GrModulus) -> np.ndarray:
    l0, l1, l2 = gr_quad_coeffs(z_even, width, mod)
    out = gr_mul(l0, h0, width, mod) + gr_mul(l1, h1, width, mod)
    return vmask(out + gr_mul(l2, h2, width, mod), width)
