"""Counter-mode pseudorandom streams from 128-bit pairwise seeds.

Each (seed, domain) pair names an independent stream: the AES-128 key is
blake2b(domain, key=seed) and the stream is AES-CTR over a zero IV, consumed
sequentially.  Both holders of a seed instantiate the same stream object and
must draw in the same order, which the protocols guarantee; a draw offset is
never reused.
"""

from __future__ import annotations

import hashlib

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .rings import GrModulus
from . import grvec

SEED_BYTES = 16

PAIRS = ("01", "02", "12")


def derive_pair_seeds(master: bytes) -> dict[str, bytes]:
    """Per-session pairwise seeds eta_01, eta_02, eta_12 from a master seed."""
    return {
        pair: hashlib.blake2b(b"eta" + pair.encode(), key=master,
                              digest_size=SEED_BYTES).digest()
        for pair in PAIRS
    }


def derive_salt(master: bytes) -> bytes:
    """Session salt mixed into consistency digests (not secret)."""
    return hashlib.blake2b(b"salt", key=master, digest_size=16).digest()


class Prg:
    """One deterministic byte stream for a (seed, domain) pair."""

    def __init__(self, seed: bytes, domain: str):
        if len(seed) != SEED_BYTES:
            raise ValueError("seed must be 16 bytes")
        key = hashlib.blake2b(domain.encode(), key=seed,
                              digest_size=SEED_BYTES).digest()
        self._enc = Cipher(algorithms.AES(key), modes.CTR(b"\x00" * 16)).encryptor()
        self.offset = 0

    def draw_bytes(self, n: int) -> bytes:
        self.offset += n
        return self._enc.update(b"\x00" * n)

    def draw_u64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.draw_bytes(8 * n), dtype="<u8").copy()

    def draw_base(self, n: int, width: int) -> np.ndarray:
        """n uniform elements of Z_2^width (2^width divides 2^64: no bias)."""
        return grvec.vmask(self.draw_u64(n), width)

    def draw_bits(self, n: int) -> np.ndarray:
        return self.draw_u64(n) & np.uint64(1)

    def draw_gr(self, n: int, width: int, mod: GrModulus) -> np.ndarray:
        return self.draw_base(n * mod.degree, width).reshape(n, mod.degree)


class CapabilityError(RuntimeError):
    """A party asked for a seed stream it does not hold."""


def pair_members(pair: str) -> tuple[int, int]:
    return int(pair[0]), int(pair[1])
