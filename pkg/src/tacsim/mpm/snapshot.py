"""Bit-exact particle snapshot I/O (MPMS format).

Layout: magic b"MPMS", version u32 LE, particle count u64 LE, then one
packed 209-byte record per particle: position, velocity, mass, affine
(row-major), def_grad (row-major), init_volume as little-endian f64,
body tag u8.
"""
from __future__ import annotations

import numpy as np

from ..errors import TacsimError
from .types import ParticleState

MAGIC = b"MPMS"
VERSION = 1

RECORD = np.dtype([
    ("position", "<f8", (3,)),
    ("velocity", "<f8", (3,)),
    ("mass", "<f8"),
    ("affine", "<f8", (3, 3)),
    ("def_grad", "<f8", (3, 3)),
    ("init_volume", "<f8"),
    ("body", "u1"),
])


def save_snapshot(state: ParticleState, path) -> None:
    n = len(state)
    records = np.empty(n, dtype=RECORD)
    records["position"] = state.x
    records["velocity"] = state.v
    records["mass"] = state.m
    records["affine"] = state.C
    records["def_grad"] = state.F
    records["init_volume"] = state.V0
    records["body"] = state.body
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint64(n).tobytes())
        fh.write(records.tobytes())


def load_snapshot(path) -> ParticleState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise TacsimError(f"not an MPMS snapshot: {path}")
    version = int(np.frombuffer(blob, dtype="<u4", count=1, offset=4)[0])
    if version != VERSION:
        raise TacsimError(f"unsupported MPMS version {version}")
    n = int(np.frombuffer(blob, dtype="<u8", count=1, offset=8)[0])
    expected = 16 + n * RECORD.itemsize
    if len(blob) != expected:
        raise TacsimError(f"truncated MPMS snapshot: {path} "
                          f"({len(blob)} bytes, expected {expected})")
    records = np.frombuffer(blob, dtype=RECORD, count=n, offset=16)
    state = ParticleState(records["position"].copy(), records["velocity"].copy(),
                          records["mass"].copy(), records["init_volume"].copy(),
                          records["body"].copy())
    state.C = records["affine"].astype(np.float64).copy()
    state.F = records["def_grad"].astype(np.float64).copy()
    return state
