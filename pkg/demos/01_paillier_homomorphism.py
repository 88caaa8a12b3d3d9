"""Walk through the additively homomorphic cryptosystem.

Generates a keypair, shows probabilistic encryption, and demonstrates the
two laws the aggregation protocol is built on: multiplying ciphertexts
adds plaintexts, and raising a ciphertext to a plain power multiplies the
plaintext.
"""

import random

from simfed.paillier import (
    add_cipher,
    decrypt,
    encrypt,
    generate_keypair,
    scalar_mul,
)

rng = random.Random(2024)

print("== keypair ==")
pk, sk = generate_keypair(256, rng)
print(f"key_bits=256, n has {pk.n.bit_length()} bits, key_id={pk.key_id}")

print("\n== probabilistic encryption ==")
c1 = encrypt(pk, 42, rng)
c2 = encrypt(pk, 42, rng)
print(f"two encryptions of 42 differ: {c1.value != c2.value}")
print(f"both decrypt to: {decrypt(sk, c1)}, {decrypt(sk, c2)}")

print("\n== additive homomorphism ==")
a, b = 123456, 654321
total = add_cipher(encrypt(pk, a, rng), encrypt(pk, b, rng))
print(f"E({a}) * E({b}) decrypts to {decrypt(sk, total)} (= {a + b})")

print("\n== scalar multiplication ==")
c = encrypt(pk, 777, rng)
print(f"E(777)^1000 decrypts to {decrypt(sk, scalar_mul(c, 1000))} (= 777000)")

print("\n== encrypted inner product ==")
xs = [3, 1, 4, 1, 5]
ys = [2, 7, 1, 8, 2]
acc = None
for x, y in zip(xs, ys):
    term = scalar_mul(encrypt(pk, x, rng), y)
    acc = term if acc is None else add_cipher(acc, term)
expected = sum(x * y for x, y in zip(xs, ys))
print(f"sum(x*y) under encryption: {decrypt(sk, acc)} (= {expected})")

print("\n== tiny worked example (p=5, q=7) ==")
tiny_pk, tiny_sk = generate_keypair(6, random.Random(0), allow_small=True)
print(f"n={tiny_pk.n}, g={tiny_pk.g}, lambda={tiny_sk.lam}, mu={tiny_sk.mu}")
c = encrypt(tiny_pk, 3, random.Random(5))
print(f"E(3) = {c.value} (mod {tiny_pk.n_squared}), decrypts to {decrypt(tiny_sk, c)}")
