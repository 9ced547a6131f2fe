"""Primitive-level checks, including the published deterministic-ECDSA vector."""

from random import Random

import pytest

from pulldisc import crypto

# RFC 6979 A.2.5, P-256 with SHA-256, message "sample".
RFC6979_KEY = bytes.fromhex("C9AFA9D845BA75166B5C215767B1D6934E50C3DB36E89B127B8A622B120F6721")
RFC6979_R = "efd48b2aacb6a8fd1140dd9cd45e81d69d2c877b56aaf991c34d0ea84eaf3716"
RFC6979_S = "f7cb1c942d657c41d436c7a1b6e29f65f3e900dbb9aff4064dc4ab2f843acda8"

SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


@pytest.fixture
def keypair():
    return crypto.generate_keypair(Random(42))


def test_sign_matches_published_deterministic_vector():
    sig = crypto.sign(RFC6979_KEY, b"sample")
    assert sig[:32].hex() == RFC6979_R
    assert sig[32:].hex() == RFC6979_S


def test_sign_verify_roundtrip(keypair):
    sig = crypto.sign(keypair.private_key, b"hello")
    assert len(sig) == crypto.SIGNATURE_LEN
    assert crypto.verify(keypair.public_key, b"hello", sig)


def test_sign_is_deterministic(keypair):
    assert crypto.sign(keypair.private_key, b"m") == crypto.sign(keypair.private_key, b"m")


def test_verify_rejects_mutations(keypair):
    rng = Random(7)
    message = rng.randbytes(80)
    sig = crypto.sign(keypair.private_key, message)
    for _ in range(1000):
        target = rng.randrange(2)
        if target == 0:
            mutated = bytearray(message)
            mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
            assert not crypto.verify(keypair.public_key, bytes(mutated), sig)
        else:
            bad = bytearray(sig)
            bad[rng.randrange(len(bad))] ^= 1 << rng.randrange(8)
            assert not crypto.verify(keypair.public_key, message, bytes(bad))


def test_verify_rejects_zero_signature(keypair):
    assert not crypto.verify(keypair.public_key, b"m", bytes(64))


def test_verify_rejects_cross_key():
    k1 = crypto.generate_keypair(Random(1))
    k2 = crypto.generate_keypair(Random(2))
    sig = crypto.sign(k1.private_key, b"m")
    assert not crypto.verify(k2.public_key, b"m", sig)


def test_verify_rejects_malformed_point(keypair):
    sig = crypto.sign(keypair.private_key, b"m")
    assert not crypto.verify(b"\x04" + bytes(64), b"m", sig)
    assert not crypto.verify(b"", b"m", sig)


def test_bad_private_scalar_raises():
    with pytest.raises(crypto.SigningKeyError):
        crypto.sign(bytes(32), b"m")  # zero scalar
    with pytest.raises(crypto.SigningKeyError):
        crypto.sign(b"\xff" * 32, b"m")  # above the group order


def test_hash_image_reference_vector():
    assert crypto.hash_image(b"").hex() == SHA256_EMPTY


def test_hash_image_properties():
    rng = Random(5)
    for _ in range(50):
        x = rng.randbytes(rng.randrange(200))
        assert crypto.hash_image(x) == crypto.hash_image(x)
        assert crypto.hash_image(x) != crypto.hash_image(x + b"\x00")
        assert len(crypto.hash_image(x)) == crypto.DIGEST_LEN


def test_aead_roundtrip():
    rng = Random(9)
    key, iv = rng.randbytes(16), rng.randbytes(12)
    plaintext = rng.randbytes(96)
    sealed = crypto.aead_seal(key, iv, plaintext, b"ad")
    assert len(sealed) == len(plaintext) + crypto.AEAD_TAG_LEN
    assert crypto.aead_open(key, iv, sealed, b"ad") == plaintext


def test_aead_rejects_any_mutation():
    rng = Random(10)
    key, iv = rng.randbytes(16), rng.randbytes(12)
    sealed = crypto.aead_seal(key, iv, rng.randbytes(40), b"ad")
    for _ in range(200):
        bad = bytearray(sealed)
        bad[rng.randrange(len(bad))] ^= 1 << rng.randrange(8)
        with pytest.raises(crypto.AeadAuthenticationError):
            crypto.aead_open(key, iv, bytes(bad), b"ad")
    with pytest.raises(crypto.AeadAuthenticationError):
        crypto.aead_open(key, iv, sealed, b"other-ad")


def test_aead_distinct_ivs_distinct_ciphertexts():
    key = Random(11).randbytes(16)
    c1 = crypto.aead_seal(key, bytes(12), b"same plaintext")
    c2 = crypto.aead_seal(key, bytes(11) + b"\x01", b"same plaintext")
    assert c1 != c2


def test_prf_eval():
    rng = Random(12)
    k1, k2 = rng.randbytes(16), rng.randbytes(16)
    assert crypto.prf_eval(k1, b"x") == crypto.prf_eval(k1, b"x")
    assert crypto.prf_eval(k1, b"x") != crypto.prf_eval(k2, b"x")
    for _ in range(50):
        assert len(crypto.prf_eval(rng.randbytes(16), rng.randbytes(20))) == 16


def test_random_bytes_reproducible():
    assert crypto.random_bytes(Random(7), 64) == crypto.random_bytes(Random(7), 64)
    assert len(crypto.random_bytes(Random(0), 12)) == 12
    a = crypto.random_bytes(Random(1), 32)
    b = crypto.random_bytes(Random(2), 32)
    assert a != b
