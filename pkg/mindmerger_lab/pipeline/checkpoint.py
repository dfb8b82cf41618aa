"""Self-describing binary checkpoints.

Layout::

    b"MMLB" | u16 version | u32 header length | JSON header | float32 payloads | sha256

The header lists names, shapes, trainable flags, provenance, fingerprint and free-form
metadata. Payloads are little-endian float32 in header order. The trailing digest covers every
preceding byte.
"""

from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path
import struct
from typing import Any

import numpy as np

from mindmerger_lab.core import CheckpointChecksumError, CheckpointError, CheckpointVersionError
from mindmerger_lab.tensorcore.tensor import Parameter, ParameterCollection


MAGIC = b"MMLB"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DIGEST_SIZE = hashlib.sha256().digest_size


@dataclass
class Checkpoint:
    params: ParameterCollection
    provenance: tuple[str, ...] = ()
    fingerprint: str = ""
    meta: dict[str, Any] = field(default_factory=dict)


def dumps(checkpoint: Checkpoint) -> bytes:
    entries = [
        {"name": name, "shape": list(param.shape), "trainable": param.trainable}
        for name, param in checkpoint.params.items()
    ]
    header = json.dumps(
        {
            "params": entries,
            "provenance": list(checkpoint.provenance),
            "fingerprint": checkpoint.fingerprint,
            "meta": checkpoint.meta,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = bytearray(_PREFIX.pack(MAGIC, VERSION, len(header)))
    body += header
    for param in checkpoint.params.values():
        body += np.ascontiguousarray(param.data, dtype="<f4").tobytes()
    body += hashlib.sha256(body).digest()
    return bytes(body)


def loads(blob: bytes) -> Checkpoint:
    if len(blob) < _PREFIX.size + _DIGEST_SIZE:
        raise CheckpointError(f"Checkpoint of {len(blob)} bytes is truncated")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    magic, version, header_length = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"Not a checkpoint file (magic {magic!r})")
    if version != VERSION:
        raise CheckpointVersionError(
            f"Checkpoint format version {version} is not supported (expected {VERSION})"
        )
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointChecksumError("Checkpoint checksum does not match its contents")

    offset = _PREFIX.size
    header = json.loads(body[offset : offset + header_length].decode("utf-8"))
    offset += header_length
    params = ParameterCollection()
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(body, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        params.register(Parameter(entry["name"], data, trainable=entry["trainable"]))
    if offset != len(body):
        raise CheckpointError(f"Checkpoint has {len(body) - offset} unexpected trailing bytes")
    return Checkpoint(
        params=params,
        provenance=tuple(header["provenance"]),
        fingerprint=header["fingerprint"],
        meta=header["meta"],
    )


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    tmp_path.write_bytes(dumps(checkpoint))
    tmp_path.replace(path)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    return loads(Path(path).read_bytes())


def checkpoint_roundtrip(checkpoint: Checkpoint) -> Checkpoint:
    return loads(dumps(checkpoint))
