"""Weight-similarity machinery: plaintext cosine and its blinded encrypted
three-party counterpart.

The anchoring party normalizes and encrypts its weight vector; the server
raises every element to a secret integer blind l; the scoring party folds
its own normalized weights into an encrypted inner product, decrypts the
blinded score, and the server divides l back out. Nobody but the server
sees l; nobody but key holders sees weights.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .encoding import FixedPointCodec
from .errors import DegenerateWeightsError, DimensionError, DomainError
from .paillier import Ciphertext, PaillierPublicKey, add_cipher, encrypt, scalar_mul

DEFAULT_BLIND_BITS = 20


@dataclass(frozen=True)
class SimilarityComponent:
    """A weight vector scaled to unit L2 norm."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise DimensionError("similarity component must be a flat vector")
        norm = np.linalg.norm(self.values)
        if abs(norm - 1.0) > 1e-9:
            raise DomainError(f"component norm {norm} is not 1 within 1e-9")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class BlindingFactor:
    """Server-secret integer scalar; never 0 or 1 so the blind hides scale."""

    l: int

    def __post_init__(self):
        if self.l < 2:
            raise DomainError(f"blinding factor must be >= 2 (got {self.l})")


@dataclass(frozen=True)
class BlindedComponent:
    """Elementwise l-scaled encryption of a similarity component."""

    ciphers: tuple

    def __post_init__(self):
        if not self.ciphers:
            raise DimensionError("blinded component cannot be empty")
        key_ids = {c.key_id for c in self.ciphers}
        if len(key_ids) != 1:
            raise DomainError("blinded component mixes ciphertexts from different keys")

    def __len__(self):
        return len(self.ciphers)


@dataclass(frozen=True)
class SimilarityScore:
    """Cosine similarity; in [-1, 1] up to fixed-point quantization."""

    value: float

    def __float__(self):
        return self.value


def sample_blinding_factor(rng: random.Random, blind_bits: int = DEFAULT_BLIND_BITS) -> BlindingFactor:
    if blind_bits < 2:
        raise DomainError("blind_bits must be >= 2")
    return BlindingFactor(l=rng.randrange(2, 1 << blind_bits))


def normalize_weights(weights) -> SimilarityComponent:
    """Divide a flat weight vector by its L2 norm."""
    flat = np.asarray(getattr(weights, "flat", weights), dtype=np.float64)
    norm = np.linalg.norm(flat)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateWeightsError("cannot normalize a zero or non-finite weight vector")
    return SimilarityComponent(values=flat / norm)


def plaintext_cosine(u, v) -> SimilarityScore:
    """Reference cosine similarity between two plaintext vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateWeightsError("cosine undefined for a zero vector")
    return SimilarityScore(value=float(np.dot(u / nu, v / nv)))


def encrypt_component(
    pk: PaillierPublicKey,
    component: SimilarityComponent,
    codec: FixedPointCodec,
    rng: random.Random,
) -> tuple:
    """Elementwise fixed-point encryption of a normalized component."""
    return tuple(encrypt(pk, codec.encode(float(v)), rng) for v in component.values)


def blind_component(ciphers, factor: BlindingFactor) -> BlindedComponent:
    """Scale every encrypted element by the secret blind l."""
    return BlindedComponent(ciphers=tuple(scalar_mul(c, factor.l) for c in ciphers))


def compute_blinded_score(
    blinded: BlindedComponent,
    own_component: SimilarityComponent,
    codec: FixedPointCodec,
) -> Ciphertext:
    """Fold own normalized weights into the blinded component.

    Returns a single ciphertext whose level-2 decode is cosine * l. The
    caller-side budget check covers the l-free part; the full l-inclusive
    budget is enforced once at protocol start.
    """
    if len(blinded) != len(own_component):
        raise DimensionError(
            f"component lengths differ: {len(blinded)} vs {len(own_component)}"
        )
    codec.ensure_budget(len(blinded))
    terms = (
        scalar_mul(c, codec.encode(float(w)))
        for c, w in zip(blinded.ciphers, own_component.values)
    )
    return reduce(add_cipher, terms)


def unblind(blinded_score: float, factor: BlindingFactor) -> SimilarityScore:
    """Divide the decoded blinded score by l."""
    return SimilarityScore(value=blinded_score / factor.l)
