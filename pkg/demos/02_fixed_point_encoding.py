"""Show how signed reals ride inside integer residues.

The codec scales reals by 2**scale_bits and wraps negatives to the top of
Z_n; a product of two encodings carries two scale factors (level 2), which
is exactly what happens inside the encrypted cosine computation.
"""

import random

import numpy as np

from simfed.encoding import FixedPointCodec
from simfed.paillier import add_cipher, decrypt, encrypt, generate_keypair, scalar_mul

rng = random.Random(7)
pk, sk = generate_keypair(256, rng)
codec = FixedPointCodec(n=pk.n, scale_bits=32)

print("== encode / decode ==")
for x in (0.0, 1.5, -1.0, 3.141592653589793, -0.0000001):
    v = codec.encode(x)
    print(f"encode({x}) = {v}  ->  decode = {codec.decode(v, 1)}")

print("\n== quantization error is bounded by 2^-32 ==")
xs = np.random.default_rng(0).uniform(-10, 10, 5)
errs = [abs(codec.decode(codec.encode(float(x)), 1) - x) for x in xs]
print(f"max error over samples: {max(errs):.3e} (bound {2.0**-32:.3e})")

print("\n== level-2: encrypted product of two reals ==")
a, b = 1.25, -2.5
c = scalar_mul(encrypt(pk, codec.encode(a), rng), codec.encode(b))
print(f"decrypt+decode at level 2: {codec.decode(decrypt(sk, c), 2)} (= {a * b})")

print("\n== sums of encodings decode at level 1 ==")
c = add_cipher(encrypt(pk, codec.encode(0.75), rng), encrypt(pk, codec.encode(-0.25), rng))
print(f"0.75 + (-0.25) under encryption: {codec.decode(decrypt(sk, c), 1)}")

print("\n== the overflow budget guards blinded inner products ==")
codec.ensure_budget(param_count=10_000, blind_max=1 << 20)
print("10,000-term blinded inner product fits under a 256-bit key: ok")
try:
    FixedPointCodec(n=pk.n, scale_bits=56).ensure_budget(10_000, blind_max=1 << 40)
except Exception as exc:
    print(f"56 fractional bits with a 40-bit blind does not: {type(exc).__name__}")
