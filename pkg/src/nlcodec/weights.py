"""Named parameter storage and the NLW1 weight file format.

NLW1 layout: magic ``NLW1``, a version byte, a 4-byte little-endian metadata
length, UTF-8 JSON metadata (network description, tensor names/shapes/byte
offsets, payload hash), then the raw little-endian float32 payloads in the
declared order. Tensors are serialized in sorted-name order so the payload,
and therefore the 8-byte content hash, is canonical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections.abc import Mapping

import numpy as np

from .nn import GDN_BETA_FLOOR, NetworkSpec

MAGIC = b"NLW1"
VERSION = 1
HASH_BYTES = 8


class WeightStore(Mapping):
    """Immutable mapping of parameter names to float32 tensors.

    Shapes are validated against the network description; GDN parameters are
    checked for their positivity constraints.
    """

    def __init__(self, network: NetworkSpec, tensors: Mapping[str, np.ndarray]):
        expected = network.parameter_shapes()
        missing = sorted(set(expected) - set(tensors))
        if missing:
            raise ValueError(f"missing parameters: {missing[:5]}")
        extra = sorted(set(tensors) - set(expected))
        if extra:
            raise ValueError(f"unexpected parameters: {extra[:5]}")
        store: dict[str, np.ndarray] = {}
        for name in sorted(expected):
            t = np.ascontiguousarray(tensors[name], dtype=np.float32)
            if t.shape != expected[name]:
                raise ValueError(
                    f"parameter {name!r} has shape {t.shape}, "
                    f"expected {expected[name]}")
            if name.endswith(".beta") and not np.all(t >= np.float32(GDN_BETA_FLOOR)):
                raise ValueError(f"{name} must be >= {GDN_BETA_FLOOR}")
            if name.endswith(".gamma") and not np.all(t >= 0):
                raise ValueError(f"{name} must be nonnegative")
            t.flags.writeable = False
            store[name] = t
        self.network = network
        self._tensors = store
        self._hash = hashlib.sha256(
            b"".join(t.astype("<f4").tobytes() for t in store.values())
        ).digest()[:HASH_BYTES]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def content_hash(self) -> bytes:
        """First 8 bytes of the SHA-256 of the canonical payload."""
        return self._hash

    def save(self, path) -> None:
        payload = bytearray()
        tensor_meta = []
        for name, t in self._tensors.items():
            tensor_meta.append({"name": name, "shape": list(t.shape),
                                "offset": len(payload)})
            payload += t.astype("<f4").tobytes()
        meta = json.dumps({
            "network": self.network.to_json(),
            "hash": self._hash.hex(),
            "tensors": tensor_meta,
        }, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(bytes([VERSION]))
            f.write(struct.pack("<I", len(meta)))
            f.write(meta)
            f.write(payload)

    @classmethod
    def load(cls, path) -> "WeightStore":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < 9 or blob[:4] != MAGIC:
            raise ValueError(f"{path}: not an NLW1 weight file")
        if blob[4] != VERSION:
            raise ValueError(f"{path}: unsupported NLW1 version {blob[4]}")
        (meta_len,) = struct.unpack_from("<I", blob, 5)
        meta_end = 9 + meta_len
        if meta_end > len(blob):
            raise ValueError(f"{path}: truncated metadata")
        meta = json.loads(blob[9:meta_end].decode("utf-8"))
        network = NetworkSpec.from_json(meta["network"])
        payload = blob[meta_end:]
        if hashlib.sha256(payload).digest()[:HASH_BYTES] != bytes.fromhex(meta["hash"]):
            raise ValueError(f"{path}: payload hash mismatch (corrupt file)")
        tensors = {}
        for rec in meta["tensors"]:
            shape = tuple(rec["shape"])
            count = int(np.prod(shape)) if shape else 1
            off = rec["offset"]
            if off + 4 * count > len(payload):
                raise ValueError(f"{path}: truncated payload for {rec['name']!r}")
            tensors[rec["name"]] = np.frombuffer(
                payload, dtype="<f4", count=count, offset=off).reshape(shape)
        return cls(network, tensors)
