"""Versioned binary container for named float32 tensors plus a JSON
metadata block.

Layout (all integers little-endian):
    bytes 0-3   magic "ARMA"
    byte  4     endianness marker (0x01 = little; anything else rejected)
    bytes 5-8   format version (u32)
    u32         metadata length, then that many bytes of UTF-8 JSON
    u32         tensor count
    per tensor: u16 name length, name (UTF-8), u32 rank, u32 dims...,
                raw float32 payload

Round trips are bit exact; loads validate magic, endianness, version,
duplicate names, and truncation.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"ARMA"
ENDIAN_LITTLE = 0x01
FORMAT_VERSION = 1

PHASE_TAGS = ("1", "2", "3", "robust")


def save_checkpoint(path, tensors: dict, meta: dict):
    if "phase" not in meta:
        raise CheckpointError("metadata must carry a phase tag")
    if str(meta["phase"]) not in PHASE_TAGS:
        raise CheckpointError(f"unknown phase tag {meta['phase']!r}")
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([ENDIAN_LITTLE]))
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            enc = name.encode()
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def _read(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path):
    """Returns (tensors, meta); every violation raises CheckpointError."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    with fh:
        if _read(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"bad magic in {path}: not a checkpoint file")
        endian = _read(fh, 1, "endianness marker")[0]
        if endian != ENDIAN_LITTLE:
            raise CheckpointError(
                f"unsupported endianness marker 0x{endian:02x}; file was "
                "written on an incompatible platform")
        version = struct.unpack("<I", _read(fh, 4, "version"))[0]
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} unsupported "
                f"(expected {FORMAT_VERSION})")
        meta_len = struct.unpack("<I", _read(fh, 4, "metadata length"))[0]
        try:
            meta = json.loads(_read(fh, meta_len, "metadata"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt metadata block: {exc}") from exc
        count = struct.unpack("<I", _read(fh, 4, "tensor count"))[0]
        tensors = {}
        for _ in range(count):
            name_len = struct.unpack("<H", _read(fh, 2, "name length"))[0]
            name = _read(fh, name_len, "tensor name").decode()
            if name in tensors:
                raise CheckpointError(f"tensor name collision: {name!r}")
            rank = struct.unpack("<I", _read(fh, 4, "rank"))[0]
            if rank > 8:
                raise CheckpointError(f"implausible rank {rank} for {name!r}")
            dims = [struct.unpack("<I", _read(fh, 4, "dim"))[0]
                    for _ in range(rank)]
            n_items = int(np.prod(dims)) if dims else 1
            payload = _read(fh, 4 * n_items, f"payload of {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after last tensor")
    return tensors, meta


def require_phase(meta: dict, phase: str, path=""):
    got = str(meta.get("phase"))
    if got != phase:
        raise CheckpointError(
            f"checkpoint {path} carries phase tag {got!r}, expected {phase!r}")


def load_into(params: dict, tensors: dict, prefix: str = "", path=""):
    """Copy tensors into live parameters, validating architecture."""
    for name, p in params.items():
        key = prefix + name
        if key not in tensors:
            raise CheckpointError(f"checkpoint {path} missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"architecture mismatch for {key!r}: checkpoint "
                f"{tuple(arr.shape)} vs model {tuple(p.data.shape)}")
        p.data[:] = arr
