"""Additively homomorphic Paillier cryptosystem over Python big integers.

Supports the two homomorphic laws used by the aggregation protocol:
ciphertext * ciphertext decrypts to the sum of plaintexts, and
ciphertext ** k decrypts to k times the plaintext (k a plain residue).
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

from .errors import (
    DecryptionError,
    DomainError,
    FormatError,
    KeyGenerationError,
    KeyMismatchError,
)

FORMAT_VERSION = 1
_KIND_PUBLIC = 0x50
_KIND_PRIVATE = 0x53

# Production floor; smaller keys are permitted only with allow_small=True
# (unit tests, worked examples).
MIN_KEY_BITS = 64

# Miller-Rabin rounds: error probability < 4^-40 = 2^-80.
_MR_ROUNDS = 40

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)

_MAX_PRIME_ATTEMPTS = 4096


@dataclass(frozen=True)
class PaillierPublicKey:
    """Public half of a keypair: modulus n, its square, and generator g."""

    n: int
    g: int
    key_bits: int
    n_squared: int = field(init=False, repr=False)
    key_id: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_squared", self.n * self.n)
        object.__setattr__(self, "key_id", _fingerprint(self.n, self.g, self.key_bits))


@dataclass(frozen=True)
class PaillierPrivateKey:
    """Private half: lam = lcm(p-1, q-1) and mu = L(g^lam mod n^2)^-1 mod n."""

    lam: int
    mu: int
    n: int
    key_bits: int


@dataclass(frozen=True)
class Ciphertext:
    """A residue in Z*_{n^2} bound to the key that produced it.

    Equality is value equality; there is no canonical re-randomized form.
    """

    value: int
    key_id: str
    public_key: PaillierPublicKey = field(compare=False, repr=False)


def _fingerprint(n: int, g: int, key_bits: int) -> str:
    h = hashlib.sha256()
    h.update(_int_bytes(n))
    h.update(_int_bytes(g))
    h.update(key_bits.to_bytes(4, "big"))
    return h.hexdigest()[:16]


def _L(x: int, n: int) -> int:
    # Exact integer division; holds for every unit raised to lam mod n^2.
    if (x - 1) % n != 0:
        raise DecryptionError("L(x) division is not exact; ciphertext invalid for this key")
    return (x - 1) // n


def _is_probable_prime(n: int, rng: random.Random, rounds: int = _MR_ROUNDS) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    # Top bit forced so the prime has exactly `bits` bits; low bit forced odd.
    for _ in range(_MAX_PRIME_ATTEMPTS):
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(cand, rng):
            return cand
    raise KeyGenerationError(f"no {bits}-bit prime found in {_MAX_PRIME_ATTEMPTS} attempts")


def generate_keypair(
    key_bits: int,
    rng: random.Random,
    allow_small: bool = False,
) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a keypair with p, q distinct primes of key_bits/2 bits each.

    Deterministic for a given seeded ``rng``. ``allow_small`` lifts the
    production floor of MIN_KEY_BITS for tests and worked examples.
    """
    if key_bits < MIN_KEY_BITS and not allow_small:
        raise DomainError(f"key_bits must be >= {MIN_KEY_BITS} (got {key_bits})")
    if key_bits < 6 or key_bits % 2 != 0:
        raise DomainError("key_bits must be an even integer >= 6")
    half = key_bits // 2
    for _ in range(_MAX_PRIME_ATTEMPTS):
        p = _random_prime(half, rng)
        q = _random_prime(half, rng)
        if p == q:
            continue
        if math.gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        n = p * q
        g = n + 1
        lam = math.lcm(p - 1, q - 1)
        n_squared = n * n
        mu = pow(_L(pow(g, lam, n_squared), n), -1, n)
        return (
            PaillierPublicKey(n=n, g=g, key_bits=key_bits),
            PaillierPrivateKey(lam=lam, mu=mu, n=n, key_bits=key_bits),
        )
    raise KeyGenerationError("could not find a suitable (p, q) pair")


def encrypt(pk: PaillierPublicKey, m: int, rng: random.Random) -> Ciphertext:
    """Encrypt m in Z_n as g^m * r^n mod n^2 with fresh r from Z*_n."""
    if not 0 <= m < pk.n:
        raise DomainError(f"plaintext {m} outside [0, n)")
    for _ in range(128):
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            break
    else:
        raise KeyGenerationError("failed to sample r coprime to n")
    if pk.g == pk.n + 1:
        gm = (1 + m * pk.n) % pk.n_squared
    else:
        gm = pow(pk.g, m, pk.n_squared)
    value = gm * pow(r, pk.n, pk.n_squared) % pk.n_squared
    return Ciphertext(value=value, key_id=pk.key_id, public_key=pk)


def decrypt(sk: PaillierPrivateKey, c: Ciphertext) -> int:
    """Recover the plaintext residue: L(c^lam mod n^2) * mu mod n."""
    n = sk.n
    if not 0 < c.value < n * n or math.gcd(c.value, n) != 1:
        raise DecryptionError("ciphertext value is not a unit of Z*_{n^2}")
    x = pow(c.value, sk.lam, n * n)
    return _L(x, n) * sk.mu % n


def add_cipher(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Homomorphic addition: the product mod n^2 decrypts to m1 + m2 mod n."""
    if c1.key_id != c2.key_id:
        raise KeyMismatchError("ciphertexts belong to different keys")
    pk = c1.public_key
    return Ciphertext(
        value=c1.value * c2.value % pk.n_squared,
        key_id=c1.key_id,
        public_key=pk,
    )


def scalar_mul(c: Ciphertext, k: int) -> Ciphertext:
    """Homomorphic scalar multiplication: decrypts to m * k mod n.

    Residues above n/2 encode negatives under the fixed-point convention;
    those are applied as a small exponent on the inverted ciphertext, which
    keeps the exponent short without changing what the result decrypts to
    (c^n decrypts to 0, so c^(k-n) and c^k carry the same plaintext).
    """
    pk = c.public_key
    if not 0 <= k < pk.n:
        raise DomainError(f"scalar {k} outside [0, n)")
    if k > pk.n // 2:
        base = pow(c.value, -1, pk.n_squared)
        exponent = pk.n - k
    else:
        base = c.value
        exponent = k
    return Ciphertext(
        value=pow(base, exponent, pk.n_squared),
        key_id=c.key_id,
        public_key=pk,
    )


# --- byte formats -----------------------------------------------------------
#
# Integers serialize as a 4-byte big-endian length followed by big-endian
# magnitude bytes. Key files start with a format-version byte, a kind byte,
# and key_bits as a 4-byte big-endian integer.


def _int_bytes(x: int) -> bytes:
    raw = x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")
    return len(raw).to_bytes(4, "big") + raw


def _read_int(data: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise FormatError("truncated integer length prefix")
    length = int.from_bytes(data[offset : offset + 4], "big")
    offset += 4
    if offset + length > len(data):
        raise FormatError("truncated integer body")
    return int.from_bytes(data[offset : offset + length], "big"), offset + length


def serialize_public_key(pk: PaillierPublicKey) -> bytes:
    header = bytes([FORMAT_VERSION, _KIND_PUBLIC]) + pk.key_bits.to_bytes(4, "big")
    return header + _int_bytes(pk.n) + _int_bytes(pk.g)


def serialize_private_key(sk: PaillierPrivateKey) -> bytes:
    header = bytes([FORMAT_VERSION, _KIND_PRIVATE]) + sk.key_bits.to_bytes(4, "big")
    return header + _int_bytes(sk.n) + _int_bytes(sk.lam) + _int_bytes(sk.mu)


def deserialize_public_key(data: bytes) -> PaillierPublicKey:
    if len(data) < 6:
        raise FormatError("public key bytes shorter than header")
    version, kind = data[0], data[1]
    if version != FORMAT_VERSION or kind != _KIND_PUBLIC:
        raise FormatError(f"bad public key header: version={version} kind={kind:#x}")
    key_bits = int.from_bytes(data[2:6], "big")
    n, off = _read_int(data, 6)
    g, off = _read_int(data, off)
    return PaillierPublicKey(n=n, g=g, key_bits=key_bits)


def deserialize_private_key(data: bytes) -> PaillierPrivateKey:
    if len(data) < 6:
        raise FormatError("private key bytes shorter than header")
    version, kind = data[0], data[1]
    if version != FORMAT_VERSION or kind != _KIND_PRIVATE:
        raise FormatError(f"bad private key header: version={version} kind={kind:#x}")
    key_bits = int.from_bytes(data[2:6], "big")
    n, off = _read_int(data, 6)
    lam, off = _read_int(data, off)
    mu, off = _read_int(data, off)
    return PaillierPrivateKey(lam=lam, mu=mu, n=n, key_bits=key_bits)
