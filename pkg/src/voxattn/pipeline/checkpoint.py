"""VXCK binary checkpoints.

Layout, all integers little-endian::

    b"VXCK"  u32 version  u32 entry count
    per entry:
        u16 name length, UTF-8 name
        u8 dtype code (1 = float32, 2 = float64)
        u8 ndim, ndim x u32 dims
        payload (C order)
        u8 has-adam; if 1 the first and second moments follow, same shape
    u32 meta length, UTF-8 meta text (key = value lines)
    RNG block: u16 name length, name, u128 state, u128 increment,
               u8 has cached uint32, u32 cached uint32

Entries cover every model parameter followed by the batch-norm running
statistics (which never carry moments). Meta holds the stage, completed
epochs, the Adam step count and the full training config.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"VXCK"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
RNG_NAME = "PCG64"


class CheckpointError(ValueError):
    pass


@dataclass
class Entry:
    name: str
    data: np.ndarray
    adam_m: np.ndarray | None = None
    adam_v: np.ndarray | None = None


@dataclass
class CheckpointData:
    entries: list[Entry]
    meta: dict[str, str]
    rng_state: dict


def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes()


def encode_checkpoint(ck: CheckpointData) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(ck.entries))]
    for e in ck.entries:
        dt = e.data.dtype.newbyteorder("<")
        if dt not in DTYPE_CODES:
            raise CheckpointError(f"{e.name}: unsupported dtype {e.data.dtype}")
        name = e.name.encode("utf-8")
        out.append(struct.pack("<H", len(name)) + name)
        out.append(struct.pack("<BB", DTYPE_CODES[dt], e.data.ndim))
        out.append(struct.pack(f"<{e.data.ndim}I", *e.data.shape))
        out.append(_pack_array(e.data))
        if e.adam_m is None:
            out.append(b"\x00")
        else:
            out += [b"\x01", _pack_array(e.adam_m.astype(e.data.dtype)), _pack_array(e.adam_v.astype(e.data.dtype))]
    meta = "".join(f"{k} = {v}\n" for k, v in ck.meta.items()).encode("utf-8")
    out.append(struct.pack("<I", len(meta)) + meta)
    out.append(_encode_rng(ck.rng_state))
    return b"".join(out)


def _encode_rng(state: dict) -> bytes:
    if state.get("bit_generator") != RNG_NAME:
        raise CheckpointError(f"unsupported RNG {state.get('bit_generator')!r}")
    name = RNG_NAME.encode()
    s = state["state"]
    return (
        struct.pack("<H", len(name))
        + name
        + s["state"].to_bytes(16, "little")
        + s["inc"].to_bytes(16, "little")
        + struct.pack("<BI", state["has_uint32"], state["uinteger"])
    )


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what} at offset {self.pos}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes) -> CheckpointData:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("not a VXCK checkpoint (bad magic)")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    entries = []
    for idx in range(count):
        (n,) = r.unpack("<H", f"name length of entry {idx}")
        name = r.take(n, f"name of entry {idx}").decode("utf-8")
        code, ndim = r.unpack("<BB", f"parameter {name!r}")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"parameter {name!r}: unknown dtype code {code}")
        dt = CODE_DTYPES[code]
        shape = r.unpack(f"<{ndim}I", f"parameter {name!r}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize

        def array(what: str):
            raw = r.take(nbytes, f"{what} of parameter {name!r}")
            return np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))

        data = array("payload")
        (flag,) = r.unpack("<B", f"adam flag of parameter {name!r}")
        m = v = None
        if flag:
            m = array("first moment")
            v = array("second moment")
        entries.append(Entry(name, data, m, v))
    (n,) = r.unpack("<I", "meta length")
    meta = {}
    for line in r.take(n, "meta block").decode("utf-8").splitlines():
        key, val = line.split(" = ", 1)
        meta[key] = val
    (n,) = r.unpack("<H", "RNG block")
    rng_name = r.take(n, "RNG block").decode()
    if rng_name != RNG_NAME:
        raise CheckpointError(f"unsupported RNG {rng_name!r}")
    state = int.from_bytes(r.take(16, "RNG block"), "little")
    inc = int.from_bytes(r.take(16, "RNG block"), "little")
    has, cached = r.unpack("<BI", "RNG block")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after RNG block")
    rng_state = {"bit_generator": RNG_NAME, "state": {"state": state, "inc": inc}, "has_uint32": has, "uinteger": cached}
    return CheckpointData(entries, meta, rng_state)


def write_checkpoint(ck: CheckpointData, path) -> None:
    Path(path).write_bytes(encode_checkpoint(ck))


def read_checkpoint(path) -> CheckpointData:
    return decode_checkpoint(Path(path).read_bytes())
