"""On-disk layout shared by snapshot sets, bases and trained models.

A store is a directory holding ``manifest.txt`` (``key=value`` lines) and
one binary file per matrix::

    magic  b"EMSLSNAP"        8 bytes
    version  u32 = 1
    rows     u64
    cols     u64
    data     rows*cols little-endian f64, column-major
    crc32    u32 over everything above
"""

import os
import struct
import zlib

import numpy as np

from .errors import ChecksumMismatch, ConfigError, FormatVersionMismatch

MAGIC = b"EMSLSNAP"
VERSION = 1
_HEADER = struct.Struct("<8sIQQ")


def write_matrix(path, a):
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("write_matrix expects a 1-D or 2-D array")
    rows, cols = a.shape
    payload = _HEADER.pack(MAGIC, VERSION, rows, cols) + a.tobytes(order="F")
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_matrix(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size + 4:
        raise ChecksumMismatch(f"{path}: file truncated")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatVersionMismatch(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatVersionMismatch(f"{path}: version {version}, expected {VERSION}")
    expected = _HEADER.size + 8 * rows * cols + 4
    if len(raw) != expected:
        raise ChecksumMismatch(f"{path}: size {len(raw)} != {expected}")
    (crc,) = struct.unpack_from("<I", raw, expected - 4)
    if zlib.crc32(raw[: expected - 4]) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch(f"{path}: CRC mismatch")
    data = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return data.reshape((rows, cols), order="F").astype(np.float64)


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def write_manifest(path, meta):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in meta.items():
            f.write(f"{k}={_fmt(v)}\n")


def read_manifest(path):
    meta = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: malformed line {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def write_bundle(directory, kind, arrays, meta=None):
    """Write named arrays (any shape) plus metadata under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    manifest = {"format": "EMSLSNAP", "version": VERSION, "kind": kind}
    manifest.update(meta or {})
    names = []
    for name, a in arrays.items():
        if a is None:
            continue
        a = np.asarray(a, dtype=float)
        names.append(name)
        manifest[f"shape.{name}"] = "x".join(str(n) for n in a.shape) if a.ndim else "scalar"
        write_matrix(os.path.join(directory, f"{name}.bin"), a.reshape(a.shape[0], -1) if a.ndim > 1 else a.reshape(-1))
    manifest["arrays"] = ",".join(names)
    write_manifest(os.path.join(directory, "manifest.txt"), manifest)


def read_bundle(directory, kind=None):
    """Return ``(kind, arrays, meta)``; ``kind`` may be a required tag."""
    mpath = os.path.join(directory, "manifest.txt")
    if not os.path.exists(mpath):
        raise ConfigError(f"{directory}: no manifest.txt")
    meta = read_manifest(mpath)
    if meta.get("format") != "EMSLSNAP" or meta.get("version") != str(VERSION):
        raise FormatVersionMismatch(f"{directory}: unsupported store format")
    found = meta.get("kind")
    if kind is not None and found != kind and found not in (kind if isinstance(kind, tuple) else ()):
        raise ConfigError(f"{directory}: expected kind {kind!r}, found {found!r}")
    arrays = {}
    names = [n for n in meta.get("arrays", "").split(",") if n]
    for name in names:
        a = read_matrix(os.path.join(directory, f"{name}.bin"))
        shape = meta[f"shape.{name}"]
        if shape == "scalar":
            arrays[name] = a.reshape(())
        else:
            arrays[name] = a.reshape(tuple(int(n) for n in shape.split("x")))
    return found, arrays, meta
