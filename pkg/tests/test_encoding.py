import random

import numpy as np
import pytest

from simfed.encoding import FixedPointCodec
from simfed.errors import DomainError, EncodingRangeError
from simfed.paillier import add_cipher, decrypt, encrypt, generate_keypair, scalar_mul


@pytest.fixture(scope="module")
def keypair():
    return generate_keypair(128, random.Random(13))


@pytest.fixture(scope="module")
def codec(keypair):
    return FixedPointCodec(n=keypair[0].n, scale_bits=32)


def test_encode_zero(codec):
    assert codec.encode(0.0) == 0
    assert codec.decode(0, 1) == 0.0


def test_encode_known_values(keypair):
    c16 = FixedPointCodec(n=keypair[0].n, scale_bits=16)
    assert c16.encode(1.5) == 98304  # 1.5 * 2^16
    assert c16.encode(-1.0) == c16.n - 65536


def test_round_trip_quantization_bound(codec):
    rng = np.random.default_rng(0)
    ulp = 2.0 ** -codec.scale_bits
    for x in rng.uniform(-10, 10, size=500):
        assert abs(codec.decode(codec.encode(x), 1) - x) <= ulp


def test_sign_symmetry(codec):
    rng = np.random.default_rng(1)
    for x in rng.uniform(0.001, 50, size=200):
        assert codec.encode(-x) == (codec.n - codec.encode(x)) % codec.n


def test_level2_product_decodes(codec):
    # Plaintext-product oracle: residue multiplication doubles the scale.
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b = rng.uniform(-3, 3, size=2)
        v = codec.encode(a) * codec.encode(b) % codec.n
        tol = (abs(a) + abs(b) + 1) * 2.0 ** -codec.scale_bits
        assert abs(codec.decode(v, 2) - a * b) <= tol


def test_decode_level_validation(codec):
    with pytest.raises(DomainError):
        codec.decode(1, 0)
    with pytest.raises(DomainError):
        codec.decode(1, 3)
    with pytest.raises(DomainError):
        codec.decode(-1, 1)


def test_encode_magnitude_overflow(codec):
    with pytest.raises(EncodingRangeError):
        codec.encode(float(codec.n))
    with pytest.raises(EncodingRangeError):
        codec.encode(float("nan"))


def test_budget_check(keypair):
    codec = FixedPointCodec(n=keypair[0].n, scale_bits=32)
    codec.ensure_budget(10_000, blind_max=1 << 20)
    with pytest.raises(EncodingRangeError):
        FixedPointCodec(n=keypair[0].n, scale_bits=60).ensure_budget(100, blind_max=1 << 20)


def test_homomorphic_level1_consistency(keypair, codec):
    pk, sk = keypair
    rng = random.Random(3)
    data = np.random.default_rng(4).uniform(-5, 5, size=(50, 2))
    for a, b in data:
        c = add_cipher(encrypt(pk, codec.encode(a), rng), encrypt(pk, codec.encode(b), rng))
        got = codec.decode(decrypt(sk, c), 1)
        assert abs(got - (a + b)) <= 2 * 2.0 ** -codec.scale_bits


def test_homomorphic_level2_consistency(keypair, codec):
    pk, sk = keypair
    rng = random.Random(5)
    data = np.random.default_rng(6).uniform(-3, 3, size=(50, 2))
    for a, b in data:
        c = scalar_mul(encrypt(pk, codec.encode(a), rng), codec.encode(b))
        got = codec.decode(decrypt(sk, c), 2)
        assert abs(got - a * b) <= (abs(a) + abs(b) + 1) * 2.0 ** -codec.scale_bits
