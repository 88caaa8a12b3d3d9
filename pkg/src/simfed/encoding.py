"""Fixed-point encoding of signed reals into Paillier plaintext residues.

Reals are scaled by 2**scale_bits and rounded; negatives map to the upper
half of Z_n. A homomorphic product of two encoded values accumulates two
scale factors (level 2), which decode() divides back out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, EncodingRangeError

DEFAULT_SCALE_BITS = 32


@dataclass(frozen=True)
class FixedPointCodec:
    """Bidirectional real <-> residue mapping for a fixed modulus n."""

    n: int
    scale_bits: int = DEFAULT_SCALE_BITS
    max_level: int = 2

    def __post_init__(self):
        if self.scale_bits < 1:
            raise DomainError("scale_bits must be positive")
        if self.n < 4:
            raise DomainError("modulus too small for fixed-point encoding")

    @property
    def scale(self) -> int:
        return 1 << self.scale_bits

    def encode(self, x: float) -> int:
        """Map a real to round(x * 2**scale_bits) mod n.

        Rounding is half-away-from-zero so encode(-x) mirrors encode(x).
        """
        if not math.isfinite(x):
            raise EncodingRangeError(f"cannot encode non-finite value {x!r}")
        if abs(x) >= self.n / (1 << (self.scale_bits + 1)):
            raise EncodingRangeError(
                f"|{x}| exceeds representable magnitude n / 2^{self.scale_bits + 1}"
            )
        magnitude = int(abs(x) * self.scale + 0.5)
        if x < 0:
            return (self.n - magnitude) % self.n
        return magnitude

    def decode(self, v: int, level: int = 1) -> float:
        """Interpret a residue as signed and strip `level` scale factors."""
        if not 1 <= level <= self.max_level:
            raise DomainError(f"level must be in [1, {self.max_level}] (got {level})")
        if not 0 <= v < self.n:
            raise DomainError(f"residue {v} outside [0, n)")
        signed = v - self.n if v > self.n // 2 else v
        return signed / (1 << (level * self.scale_bits))

    def ensure_budget(self, param_count: int, blind_max: int = 1) -> None:
        """Refuse configurations where a blinded level-2 inner product of
        param_count terms could wrap past n/2 and corrupt the sign."""
        worst = param_count * (1 << (2 * self.scale_bits)) * blind_max
        if worst >= self.n // 2:
            raise EncodingRangeError(
                f"overflow budget violated: {param_count} terms at "
                f"2*{self.scale_bits} fractional bits with blind bound {blind_max} "
                f"do not fit below n/2; use a larger key or smaller scale_bits"
            )
