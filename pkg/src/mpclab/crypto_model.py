"""Size-faithful mock cryptography.

NOT SECURE.  The mock backend exists so that protocol-level behaviour
(consistency, aborts) and bit accounting can be exercised end to end:

* encryption is the plaintext XOR a key-derived SHAKE-256 stream behind a
  16-bit key tag and an 11-bit length field, zero-padded to whole
  ``B_ct`` blocks;
* signatures are keyed tags, and verification is membership in a
  per-simulation registry of everything ``sig_sign`` has emitted.

A real backend can replace :class:`MockBackend` as long as it satisfies
:class:`CryptoBackend`.
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

from .errors import DecryptFailure

PLAINTEXT_CAP = 1024
TAG_BITS = 16
LEN_BITS = PLAINTEXT_CAP.bit_length()  # 11
HEADER_BITS = TAG_BITS + LEN_BITS


@dataclass(frozen=True)
class CostModel:
    """Bit sizes of modeled cryptographic objects."""

    B_pk: int
    B_ct: int
    B_share: int
    B_proof: int
    B_sig: int
    B_skey: int
    lam: int = 4
    depth: int = 8

    def __post_init__(self):
        for name in ("B_pk", "B_ct", "B_share", "B_proof", "B_sig", "B_skey"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1 bit")

    @classmethod
    def default(cls, lam: int, depth: int = 8, c: int = 1) -> "CostModel":
        b = c * lam * depth
        return cls(b, b, b, b, b, b, lam=lam, depth=depth)

    def ct_bits(self, plain_bits: int) -> int:
        """Ciphertext length for a plaintext of ``plain_bits`` bits."""
        blocks = max(1, math.ceil((HEADER_BITS + plain_bits) / self.B_ct))
        return blocks * self.B_ct

    def poly_in(self, input_bits: int) -> int:
        """Size of one party's first-round broadcast object (key, ciphertexts, proof)."""
        return self.B_pk + self.B_ct * input_bits + self.B_proof


@dataclass(frozen=True)
class KeyMaterial:
    kind: str  # enc-public | enc-secret | sig-public | sig-secret | sym
    bits: str

    def __len__(self) -> int:
        return len(self.bits)


@lru_cache(maxsize=1 << 14)
def expand(label: str, seed: str, k: int) -> str:
    """Deterministic ``k``-bit string derived from ``label`` and a bit-string seed."""
    if k <= 0:
        return ""
    digest = hashlib.shake_256(f"{label}|{seed}".encode()).digest((k + 7) // 8)
    return format(int.from_bytes(digest, "big"), f"0{8 * len(digest)}b")[:k]


def xor_bits(a: str, b: str) -> str:
    if len(a) != len(b):
        raise ValueError("xor of unequal lengths")
    if not a:
        return ""
    return format(int(a, 2) ^ int(b, 2), f"0{len(a)}b")


class CryptoBackend(Protocol):
    cost: CostModel

    def pke_gen(self, r: str) -> tuple[KeyMaterial, KeyMaterial]: ...
    def pke_enc(self, pk: KeyMaterial, plaintext: str) -> str: ...
    def pke_dec(self, sk: KeyMaterial, ciphertext: str) -> str: ...
    def ske_gen(self, rng: random.Random) -> KeyMaterial: ...
    def ske_enc(self, key: KeyMaterial, plaintext: str) -> str: ...
    def ske_dec(self, key: KeyMaterial, ciphertext: str) -> str: ...
    def sig_gen(self, r: str) -> tuple[KeyMaterial, KeyMaterial]: ...
    def sig_sign(self, sk: KeyMaterial, message: str) -> str: ...
    def sig_verify(self, pk: KeyMaterial, message: str, signature: str) -> int: ...


class MockBackend:
    """Functional, size-faithful, intentionally insecure backend."""

    def __init__(self, cost: CostModel):
        self.cost = cost
        self._signed: set[tuple[str, str, str]] = set()

    # -- public-key encryption -------------------------------------------
    def pke_gen(self, r: str) -> tuple[KeyMaterial, KeyMaterial]:
        sk = KeyMaterial("enc-secret", expand("pke-sk", r, self.cost.B_skey))
        return self._pke_public(sk), sk

    def _pke_public(self, sk: KeyMaterial) -> KeyMaterial:
        return KeyMaterial("enc-public", expand("pke-pk", sk.bits, self.cost.B_pk))

    def pke_enc(self, pk: KeyMaterial, plaintext: str) -> str:
        return self._seal("pke", pk.bits, plaintext)

    def pke_dec(self, sk: KeyMaterial, ciphertext: str) -> str:
        return self._open("pke", self._pke_public(sk).bits, ciphertext)

    # -- secret-key encryption -------------------------------------------
    def ske_gen(self, rng: random.Random) -> KeyMaterial:
        k = self.cost.B_skey
        return KeyMaterial("sym", format(rng.getrandbits(k), f"0{k}b"))

    def ske_enc(self, key: KeyMaterial, plaintext: str) -> str:
        return self._seal("ske", key.bits, plaintext)

    def ske_dec(self, key: KeyMaterial, ciphertext: str) -> str:
        return self._open("ske", key.bits, ciphertext)

    # -- signatures --------------------------------------------------------
    def sig_gen(self, r: str) -> tuple[KeyMaterial, KeyMaterial]:
        sk = KeyMaterial("sig-secret", expand("sig-sk", r, self.cost.B_skey))
        return self._sig_public(sk), sk

    def _sig_public(self, sk: KeyMaterial) -> KeyMaterial:
        return KeyMaterial("sig-public", expand("sig-pk", sk.bits, self.cost.B_pk))

    def sig_sign(self, sk: KeyMaterial, message: str) -> str:
        sigma = expand("sig", sk.bits + "|" + message, self.cost.B_sig)
        self._signed.add((self._sig_public(sk).bits, message, sigma))
        return sigma

    def sig_verify(self, pk: KeyMaterial, message: str, signature: str) -> int:
        return int((pk.bits, message, signature) in self._signed)

    def signed(self) -> frozenset[tuple[str, str, str]]:
        return frozenset(self._signed)

    # -- shared sealing ----------------------------------------------------
    def _seal(self, scheme: str, key: str, plaintext: str) -> str:
        if len(plaintext) > PLAINTEXT_CAP:
            raise ValueError(f"plaintext exceeds {PLAINTEXT_CAP} bits")
        body = xor_bits(plaintext, expand(f"{scheme}-stream", key, len(plaintext)))
        raw = expand(f"{scheme}-tag", key, TAG_BITS) + format(len(plaintext), f"0{LEN_BITS}b") + body
        return raw.ljust(self.cost.ct_bits(len(plaintext)), "0")

    def _open(self, scheme: str, key: str, ciphertext: str) -> str:
        if len(ciphertext) < HEADER_BITS or ciphertext[:TAG_BITS] != expand(f"{scheme}-tag", key, TAG_BITS):
            raise DecryptFailure("ciphertext does not match this key")
        length = int(ciphertext[TAG_BITS:HEADER_BITS], 2)
        if length > PLAINTEXT_CAP or HEADER_BITS + length > len(ciphertext):
            raise DecryptFailure("malformed length field")
        if len(ciphertext) != self.cost.ct_bits(length):
            raise DecryptFailure("ciphertext has the wrong size")
        body = ciphertext[HEADER_BITS : HEADER_BITS + length]
        return xor_bits(body, expand(f"{scheme}-stream", key, length))


def xor_all(strings) -> str:
    strings = list(strings)
    if not strings:
        raise ValueError("nothing to xor")
    acc = 0
    for s in strings:
        acc ^= int(s, 2) if s else 0
    return format(acc, f"0{len(strings[0])}b")
