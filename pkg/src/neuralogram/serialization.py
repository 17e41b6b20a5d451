"""Shared binary container: magic + length-prefixed JSON header + payload.

Layout (all integers little-endian)::

    bytes 0..7    8-byte ASCII magic
    bytes 8..11   u32 header length L
    bytes 12..12+L-1   UTF-8 JSON header
    bytes 12+L..  raw payload (callers describe it in the header)

The same container carries model checkpoints (magic ``NLGCKPT1``) and
stacked-embedding matrices (magic ``NLGMAT01``).  Writers produce
canonical JSON (sorted keys, no whitespace) so identical content yields
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .errors import CheckpointFormatError, CheckpointIntegrityError

_LEN_FMT = "<I"
_HEADER_START = 12


def pack_block(magic: bytes, header: dict, payload: bytes) -> bytes:
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + struct.pack(_LEN_FMT, len(hdr)) + hdr + payload


def write_block(path, magic: bytes, header: dict, payload: bytes) -> None:
    Path(path).write_bytes(pack_block(magic, header, payload))


def unpack_block(blob: bytes, magic: bytes) -> tuple[dict, bytes]:
    """Validate and split a container; returns (header, payload).

    Raises :class:`CheckpointFormatError` for a wrong magic or an
    unparseable header and :class:`CheckpointIntegrityError` when the
    declared header length overruns the file.
    """
    if len(blob) < _HEADER_START:
        raise CheckpointFormatError(
            f"file too short ({len(blob)} bytes) to hold a header")
    if blob[:8] != magic:
        raise CheckpointFormatError(
            f"bad magic {blob[:8]!r}, expected {magic!r}")
    (hlen,) = struct.unpack(_LEN_FMT, blob[8:_HEADER_START])
    end = _HEADER_START + hlen
    if end > len(blob):
        raise CheckpointIntegrityError(
            f"declared header length {hlen} overruns file of {len(blob)} bytes")
    try:
        header = json.loads(blob[_HEADER_START:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise CheckpointFormatError("header must be a JSON object")
    return header, blob[end:]


def read_block(path, magic: bytes) -> tuple[dict, bytes]:
    p = Path(path)
    if not p.is_file():
        raise CheckpointFormatError(f"no such file: {p}")
    return unpack_block(p.read_bytes(), magic)
