"""
Binary field checkpoints.

One record per field, all integers and floats little-endian:

    offset  type        content
    0       4 bytes     magic b"OLDB"
    4       u16         format version (1)
    6       u8          spatial dimension n
    7       n x u32     points per axis
    .       u8          representation: 0 physical, 1 spectral
    .       u16         component count c
    .       float64...  c blocks of size**n values, each in row-major order

Spectral blocks store the complex coefficients as interleaved (re, im)
float64 pairs, so a spectral record carries 2 * size**n values per
component.  The field kind is recovered from c, which is unique for a given
n.  A file may hold several records back to back; a state checkpoint holds
u followed by tau.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError
from .spectral import Field, Grid, kind_from_components

MAGIC = b"OLDB"
VERSION = 1
_REP = {"physical": 0, "spectral": 1}
_REP_INV = {v: k for k, v in _REP.items()}


def encode_field(f):
    g = f.grid
    head = MAGIC + struct.pack("<HB", VERSION, g.n) + struct.pack(f"<{g.n}I", *g.shape)
    head += struct.pack("<BH", _REP[f.space], f.ncomp)
    if f.space == "spectral":
        body = np.ascontiguousarray(f.data, dtype="<c16").view("<f8")
    else:
        body = np.ascontiguousarray(f.data, dtype="<f8")
    return head + body.tobytes(order="C")


def decode_field(buf, offset=0, dealias_fraction=2.0 / 3.0):
    """(field, next offset) for the record starting at ``offset``."""
    mv = memoryview(buf)
    if bytes(mv[offset : offset + 4]) != MAGIC:
        raise ContractError("not a field checkpoint record (bad magic)")
    version, n = struct.unpack_from("<HB", buf, offset + 4)
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    pos = offset + 7
    sizes = struct.unpack_from(f"<{n}I", buf, pos)
    pos += 4 * n
    rep, ncomp = struct.unpack_from("<BH", buf, pos)
    pos += 3
    if rep not in _REP_INV:
        raise ContractError(f"unknown representation tag {rep}")
    if len(set(sizes)) != 1:
        raise ContractError(f"anisotropic grid {sizes} in checkpoint")
    grid = Grid(n, sizes[0], dealias_fraction)
    count = ncomp * int(np.prod(sizes)) * (2 if rep == 1 else 1)
    if len(buf) < pos + 8 * count:
        raise ContractError("truncated checkpoint record")
    raw = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
    if rep == 1:
        data = raw.view("<c16").astype(complex).reshape((ncomp,) + grid.shape)
    else:
        data = raw.astype(float).reshape((ncomp,) + grid.shape)
    field = Field(grid, data, kind_from_components(ncomp, n), _REP_INV[rep])
    return field, pos + 8 * count


def save_fields(path, fields):
    Path(path).write_bytes(b"".join(encode_field(f) for f in fields))


def load_fields(path, dealias_fraction=2.0 / 3.0):
    buf = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(buf):
        f, pos = decode_field(buf, pos, dealias_fraction)
        out.append(f)
    return out


def save_field(path, f):
    save_fields(path, [f])


def load_field(path, dealias_fraction=2.0 / 3.0):
    fields = load_fields(path, dealias_fraction)
    if len(fields) != 1:
        raise ContractError(f"expected one field record, found {len(fields)}")
    return fields[0]
