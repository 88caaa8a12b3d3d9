"""Binary wire format for protocol round messages.

Every message is a versioned, length-prefixed byte string: version byte,
tag byte, 4-byte big-endian round index, length-prefixed sender id, then a
tag-specific payload. Ciphertext vectors are arrays of length-prefixed
big-endian integers; reals are big-endian 64-bit IEEE. Encoding is
deterministic so protocol transcripts are diffable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import FormatError, KeyMismatchError
from .paillier import Ciphertext, PaillierPublicKey

WIRE_VERSION = 1

_TAG_INIT_PARAMS = 1
_TAG_GLOBAL_PARAMS = 2
_TAG_INITIATOR_UPDATE = 3
_TAG_BLIND_CHALLENGE = 4
_TAG_PARTICIPANT_UPDATE = 5


@dataclass(frozen=True)
class InitParams:
    """Encrypted initial weights from the model initiator, sent once."""

    sender_id: str
    round_index: int
    weights: tuple


@dataclass(frozen=True)
class GlobalParams:
    """Encrypted aggregated weights plus how many parties went into the sum.

    Downloads divide the decoded vector by included_count unless the server
    already applied the division homomorphically (pre_divided).
    """

    sender_id: str
    round_index: int
    weights: tuple
    included_count: int
    pre_divided: bool = False


@dataclass(frozen=True)
class InitiatorUpdate:
    """Encrypted post-training weights and the normalized similarity anchor."""

    sender_id: str
    round_index: int
    weights: tuple
    component: tuple


@dataclass(frozen=True)
class BlindChallenge:
    """The initiator's similarity component, blinded by the server's secret l."""

    sender_id: str
    round_index: int
    blinded: tuple


@dataclass(frozen=True)
class ParticipantUpdate:
    """Encrypted post-training weights plus the decrypted blinded score."""

    sender_id: str
    round_index: int
    weights: tuple
    blinded_score: float


RoundMessage = (
    InitParams | GlobalParams | InitiatorUpdate | BlindChallenge | ParticipantUpdate
)

_TAGS = {
    InitParams: _TAG_INIT_PARAMS,
    GlobalParams: _TAG_GLOBAL_PARAMS,
    InitiatorUpdate: _TAG_INITIATOR_UPDATE,
    BlindChallenge: _TAG_BLIND_CHALLENGE,
    ParticipantUpdate: _TAG_PARTICIPANT_UPDATE,
}


def _pack_bytes(raw: bytes) -> bytes:
    return struct.pack(">I", len(raw)) + raw


def _pack_int(x: int) -> bytes:
    return _pack_bytes(x.to_bytes((x.bit_length() + 7) // 8 or 1, "big"))


def _pack_cipher_vector(ciphers) -> bytes:
    if not ciphers:
        raise FormatError("cannot encode an empty ciphertext vector")
    key_id = ciphers[0].key_id
    out = [_pack_bytes(key_id.encode("ascii")), struct.pack(">I", len(ciphers))]
    for c in ciphers:
        if c.key_id != key_id:
            raise KeyMismatchError("ciphertext vector mixes keys")
        out.append(_pack_int(c.value))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError("truncated message")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack(">d", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def big_int(self) -> int:
        return int.from_bytes(self.blob(), "big")

    def cipher_vector(self, pk: PaillierPublicKey) -> tuple:
        key_id = self.blob().decode("ascii")
        if key_id != pk.key_id:
            raise KeyMismatchError(
                f"message ciphertexts bound to key {key_id}, expected {pk.key_id}"
            )
        count = self.u32()
        return tuple(
            Ciphertext(value=self.big_int(), key_id=key_id, public_key=pk)
            for _ in range(count)
        )

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes in message")


def encode_message(msg: RoundMessage) -> bytes:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise FormatError(f"not a wire message: {type(msg).__name__}")
    head = struct.pack(">BB I", WIRE_VERSION, tag, msg.round_index)
    head += _pack_bytes(msg.sender_id.encode("utf-8"))
    if isinstance(msg, InitParams):
        body = _pack_cipher_vector(msg.weights)
    elif isinstance(msg, GlobalParams):
        body = (
            _pack_cipher_vector(msg.weights)
            + struct.pack(">I", msg.included_count)
            + struct.pack(">B", int(msg.pre_divided))
        )
    elif isinstance(msg, InitiatorUpdate):
        body = _pack_cipher_vector(msg.weights) + _pack_cipher_vector(msg.component)
    elif isinstance(msg, BlindChallenge):
        body = _pack_cipher_vector(msg.blinded)
    else:
        body = _pack_cipher_vector(msg.weights) + struct.pack(">d", msg.blinded_score)
    return head + body


def decode_message(data: bytes, pk: PaillierPublicKey) -> RoundMessage:
    reader = _Reader(data)
    version = reader.u8()
    if version != WIRE_VERSION:
        raise FormatError(f"unsupported wire version {version}")
    tag = reader.u8()
    round_index = reader.u32()
    sender_id = reader.blob().decode("utf-8")
    if tag == _TAG_INIT_PARAMS:
        msg = InitParams(sender_id, round_index, reader.cipher_vector(pk))
    elif tag == _TAG_GLOBAL_PARAMS:
        weights = reader.cipher_vector(pk)
        included_count = reader.u32()
        pre_divided = bool(reader.u8())
        msg = GlobalParams(sender_id, round_index, weights, included_count, pre_divided)
    elif tag == _TAG_INITIATOR_UPDATE:
        msg = InitiatorUpdate(
            sender_id, round_index, reader.cipher_vector(pk), reader.cipher_vector(pk)
        )
    elif tag == _TAG_BLIND_CHALLENGE:
        msg = BlindChallenge(sender_id, round_index, reader.cipher_vector(pk))
    elif tag == _TAG_PARTICIPANT_UPDATE:
        msg = ParticipantUpdate(
            sender_id, round_index, reader.cipher_vector(pk), reader.f64()
        )
    else:
        raise FormatError(f"unknown message tag {tag}")
    reader.done()
    return msg
