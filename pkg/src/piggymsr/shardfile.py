"""Binary shard files: a fixed little-endian header followed by the payload symbols."""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

MAGIC = b"PGBK"
VERSION = 1
FLAG_SUBOPTIMAL = 0x1

ROLE_SYSTEMATIC = 0
ROLE_PARITY = 1
ROLE_MIXED = 2

# magic, version, flags, config digest, node id, role, stripes, payload bytes, original length
_HEADER = struct.Struct("<4sHH32sHBxIQQ")


class ShardFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ShardFile:
    digest: bytes
    node: int
    role: int
    stripes: int
    original_length: int
    payload: bytes
    flags: int = 0
    version: int = VERSION

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.version, self.flags, self.digest, self.node, self.role,
                            self.stripes, len(self.payload), self.original_length)
        return head + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> ShardFile:
        if len(blob) < _HEADER.size:
            raise ShardFormatError("truncated shard header")
        magic, version, flags, digest, node, role, stripes, size, orig = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ShardFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ShardFormatError(f"unsupported shard version {version}")
        payload = blob[_HEADER.size :]
        if len(payload) != size:
            raise ShardFormatError(f"payload is {len(payload)} bytes, header says {size}")
        return cls(digest, node, role, stripes, orig, payload, flags, version)

    @classmethod
    def read(cls, path) -> ShardFile:
        return cls.from_bytes(Path(path).read_bytes())

    def write(self, path) -> None:
        atomic_write(path, self.to_bytes())


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def shard_name(node: int) -> str:
    return f"node_{node:03d}.pgbk"
