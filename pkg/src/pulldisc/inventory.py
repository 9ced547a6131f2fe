"""Inventory variant: owner-signed requests, encrypted uniform responses.

Only the enrolled owner can solicit; devices verify the request signature
before doing anything else, attest on every request, and answer with an
AEAD-sealed, fixed-size payload. The owner recovers the responding device
either by exhaustive trial decryption or through the key-tree header (see
keytree). Response payloads carry no identifying plaintext and every
response in a deployment has identical length, so third parties cannot
link responses to devices.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Sequence

from . import crypto, keytree, wire
from .registration import ImProvisioningRecord, provision_im_device

DEFAULT_T_RES_IM = 0.233
DEVICE_ID_LEN = 12


def build_device_info(device_id: bytes, type_code: int, sw_version: int) -> bytes:
    """Fixed-layout device info: id(12) | type(2) | version(2) | zero pad."""
    if len(device_id) != DEVICE_ID_LEN:
        raise ValueError(f"device id must be {DEVICE_ID_LEN} bytes")
    packed = device_id + struct.pack(">HH", type_code, sw_version)
    return packed + bytes(wire.IM_DEVICE_INFO_LEN - len(packed))


def parse_device_info(info: bytes) -> tuple[bytes, int, int]:
    device_id = info[:DEVICE_ID_LEN]
    type_code, sw_version = struct.unpack_from(">HH", info, DEVICE_ID_LEN)
    return device_id, type_code, sw_version


class ImDiscard(enum.Enum):
    MALFORMED = "malformed"
    FORGED_OR_FOREIGN = "forged-or-foreign"
    REPLAY = "replay"


@dataclass(frozen=True)
class ImReceipt:
    """Successful owner-side decryption of one inventory response."""

    device_id: bytes
    att_result: int
    device_info: bytes
    trials: int  # naive tag checks (0 in tree mode)
    prf_evals: int  # tree PRF evaluations (0 in naive mode)


@dataclass
class ImDeviceCounters:
    wasted_verifications: int = 0  # bad-signature requests burned a verify
    responses: int = 0


class ImDevice:
    """Inventory-mode device: verify, attest, seal, reply."""

    def __init__(
        self,
        record: ImProvisioningRecord,
        device_info: bytes,
        memory_image: bytearray | bytes,
        rng: Random,
        lkh_vector: tuple[bytes, ...] | None = None,
    ):
        if len(device_info) != wire.IM_DEVICE_INFO_LEN:
            raise ValueError(f"device info must be {wire.IM_DEVICE_INFO_LEN} bytes")
        if lkh_vector is not None and lkh_vector[-1] != record.shared_key:
            raise ValueError("tree leaf key must equal the provisioned shared key")
        self.record = record
        self.device_info = device_info
        self.memory_image = bytearray(memory_image)
        self.rng = rng
        self.lkh_vector = lkh_vector
        self.counters = ImDeviceCounters()

    def respond(self, payload: bytes) -> bytes | None:
        """Handle one frame; returns an encoded response or None (silent drop)."""
        try:
            message = wire.decode(payload)
        except wire.WireError:
            return None
        if not isinstance(message, wire.ImRequestMsg):
            return None
        if not crypto.verify(
            self.record.owner_public_key, wire.signed_region(message), message.signature
        ):
            self.counters.wasted_verifications += 1
            return None

        attested = crypto.hash_image(bytes(self.memory_image)) == self.record.software_hash
        result = wire.ATT_SUCCESS if attested else wire.ATT_FAIL
        plaintext = message.owner_nonce + bytes([result]) + self.device_info

        header: tuple[bytes, ...] = ()
        if self.lkh_vector is not None:
            header = keytree.build_header(self.lkh_vector, message.owner_nonce)
        iv = self.rng.randbytes(crypto.AEAD_IV_LEN)
        sealed = crypto.aead_seal(
            self.record.shared_key, iv, plaintext, _associated_data(header)
        )
        self.counters.responses += 1
        return wire.ImResponseMsg(header, iv, sealed).encode()


def _associated_data(header: Sequence[bytes]) -> bytes:
    # Binding the identifier and header to the ciphertext stops header
    # swaps from redirecting a response to a different tree path.
    return wire.ID_IM_RESPONSE + b"".join(header)


@dataclass
class OwnerCounters:
    requests: int = 0
    receipts: int = 0
    rejects: dict = field(default_factory=dict)


class Owner:
    """The single authorized solicitor for an inventory fleet."""

    def __init__(self, keypair: crypto.KeyPair, rng: Random):
        self.keypair = keypair
        self.rng = rng
        self.device_ids: list[bytes] = []
        self.key_table: dict[bytes, bytes] = {}
        self.tree: keytree.KeyTree | None = None
        self.outstanding_nonce: bytes | None = None
        self.counters = OwnerCounters()

    @property
    def retrieval_mode(self) -> str:
        return "naive" if self.tree is None else "lkh"

    # -- enrollment ---------------------------------------------------------

    def enroll_naive(
        self, device_info: bytes, software_image: bytes, rng: Random
    ) -> ImDevice:
        """Provision one device with a fresh random shared key."""
        record = provision_im_device(self.keypair.public_key, software_image, rng)
        device_id = device_info[:DEVICE_ID_LEN]
        self._remember(device_id, record.shared_key)
        return ImDevice(record, device_info, software_image, _child_rng(rng))

    def enroll_lkh_fleet(
        self, device_infos: Sequence[bytes], software_image: bytes, p: int, rng: Random
    ) -> list[ImDevice]:
        """Build the key tree and provision every device from its leaf."""
        if self.key_table:
            raise ValueError("fleet already enrolled")
        self.tree = keytree.build_tree(len(device_infos), p, rng)
        devices = []
        for index, info in enumerate(device_infos):
            key = self.tree.leaf_key(index)
            record = ImProvisioningRecord(
                owner_public_key=self.keypair.public_key,
                shared_key=key,
                software_hash=crypto.hash_image(software_image),
            )
            self._remember(info[:DEVICE_ID_LEN], key)
            devices.append(
                ImDevice(
                    record,
                    info,
                    software_image,
                    _child_rng(rng),
                    lkh_vector=keytree.device_key_vector(self.tree, index),
                )
            )
        return devices

    def _remember(self, device_id: bytes, key: bytes) -> None:
        if device_id in self.key_table:
            raise ValueError(f"duplicate device id {device_id.hex()}")
        self.device_ids.append(device_id)
        self.key_table[device_id] = key

    # -- key table persistence: flat (id, key) records, enrollment order --

    def save_key_table(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            for device_id in self.device_ids:
                fh.write(device_id)
                fh.write(self.key_table[device_id])

    def load_key_table(self, path: str | Path) -> None:
        if self.key_table:
            raise ValueError("key table already populated")
        record_len = DEVICE_ID_LEN + crypto.SYMMETRIC_KEY_LEN
        data = Path(path).read_bytes()
        if len(data) % record_len != 0:
            raise ValueError(f"key table file is not a multiple of {record_len} bytes")
        for off in range(0, len(data), record_len):
            device_id = data[off : off + DEVICE_ID_LEN]
            key = data[off + DEVICE_ID_LEN : off + record_len]
            self._remember(device_id, key)

    # -- solicitation -------------------------------------------------------

    def make_request(self) -> bytes:
        """Sign a fresh nonce; rotates the outstanding-nonce window."""
        nonce = self.rng.randbytes(wire.NONCE_LEN)
        unsigned = wire.ImRequestMsg(nonce, bytes(crypto.SIGNATURE_LEN))
        signature = crypto.sign(self.keypair.private_key, wire.signed_region(unsigned))
        self.outstanding_nonce = nonce
        self.counters.requests += 1
        return wire.ImRequestMsg(nonce, signature).encode()

    def receive(self, payload: bytes) -> ImReceipt | ImDiscard:
        result = self._receive(payload)
        if isinstance(result, ImDiscard):
            self.counters.rejects[result.value] = self.counters.rejects.get(result.value, 0) + 1
        else:
            self.counters.receipts += 1
        return result

    def _receive(self, payload: bytes) -> ImReceipt | ImDiscard:
        try:
            message = wire.decode(payload)
        except wire.WireError:
            return ImDiscard.MALFORMED
        if not isinstance(message, wire.ImResponseMsg):
            return ImDiscard.MALFORMED
        if self.outstanding_nonce is None:
            return ImDiscard.REPLAY

        ad = _associated_data(message.lkh_header)
        trials = 0
        prf_evals = 0
        device_id = None
        if self.tree is not None:
            # Fast path: walk the tree under the outstanding nonce. A stale
            # response carries header fields over an older nonce, so the
            # walk lands on the wrong leaf; fall through to the exhaustive
            # scan in that case so replays are still told apart from junk.
            try:
                index, prf_evals = keytree.retrieve_lkh(
                    self.tree, message.lkh_header, self.outstanding_nonce
                )
            except keytree.RetrievalError:
                index = -1
            if 0 <= index < len(self.device_ids):
                candidate = self.device_ids[index]
                try:
                    crypto.aead_open(self.key_table[candidate], message.iv, message.sealed, ad)
                    device_id = candidate
                except crypto.AeadAuthenticationError:
                    device_id = None

        if device_id is None:
            try:
                index, trials = keytree.retrieve_naive(
                    [self.key_table[d] for d in self.device_ids],
                    message.iv,
                    message.sealed,
                    ad,
                )
            except keytree.RetrievalError:
                return ImDiscard.FORGED_OR_FOREIGN
            device_id = self.device_ids[index]

        try:
            plaintext = crypto.aead_open(
                self.key_table[device_id], message.iv, message.sealed, ad
            )
        except crypto.AeadAuthenticationError:
            return ImDiscard.FORGED_OR_FOREIGN

        echoed = plaintext[: wire.NONCE_LEN]
        if echoed != self.outstanding_nonce:
            return ImDiscard.REPLAY
        att_result = plaintext[wire.NONCE_LEN]
        device_info = plaintext[wire.NONCE_LEN + 1 :]
        return ImReceipt(
            device_id=device_id,
            att_result=att_result,
            device_info=device_info,
            trials=trials,
            prf_evals=prf_evals,
        )


def _child_rng(rng: Random) -> Random:
    return Random(rng.getrandbits(64))
