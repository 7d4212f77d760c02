"""Binary snapshot streams for trajectory fields.

Layout (little-endian throughout):

    magic    4s   b"BGLB"
    version  u32  format version (1)
    kind     u32  0 = spectral coefficients, 1 = grid cells
    traj     u32  trajectory id
    width    u32  numbers per record payload (2K for spectral, n for grid)
    count    u64  number of records (patched on close)
    tag      64s  ascii repr of the payload layout, null padded

then `count` records of [t f8, payload f8 * width].  A text rendering is
available for eyeballing or diffing runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"BGLB"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ64s")
KIND_SPECTRAL = 0
KIND_GRID = 1


@dataclass
class SnapshotInfo:
    kind: int
    trajectory: int
    width: int
    count: int
    tag: str


class SnapshotWriter:
    def __init__(self, path, trajectory: int, width: int, kind: int = KIND_SPECTRAL):
        if kind not in (KIND_SPECTRAL, KIND_GRID):
            raise ValueError(f"unknown snapshot kind {kind}")
        tag = f"t:f8 payload:f8[{width}] le"
        self._fh = open(path, "wb")
        self._count = 0
        self.width = width
        self._fh.write(
            _HEADER.pack(MAGIC, VERSION, kind, trajectory, width, 0, tag.encode("ascii")[:64].ljust(64, b"\0"))
        )

    def append(self, payload: np.ndarray, t: float) -> None:
        payload = np.ascontiguousarray(payload, dtype="<f8")
        if payload.size != self.width:
            raise ValueError(f"payload width {payload.size} != {self.width}")
        self._fh.write(struct.pack("<d", t))
        self._fh.write(payload.tobytes())
        self._count += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(4 + 4 + 4 + 4 + 4)
        self._fh.write(struct.pack("<Q", self._count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path) -> SnapshotInfo:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    magic, version, kind, traj, width, count, tag = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot stream (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return SnapshotInfo(kind=kind, trajectory=traj, width=width, count=count, tag=tag.rstrip(b"\0").decode("ascii"))


def read_snapshots(path):
    """Yield (t, payload) pairs; payload is a fresh float64 array."""
    info = read_header(path)
    rec = 8 + 8 * info.width
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for _ in range(info.count):
            chunk = fh.read(rec)
            if len(chunk) < rec:
                raise ValueError(f"{path}: truncated stream")
            (t,) = struct.unpack_from("<d", chunk)
            payload = np.frombuffer(chunk, dtype="<f8", count=info.width, offset=8).copy()
            yield float(t), payload


def export_text(path, out_path) -> None:
    """Plain-text rendering: header line then one `t c0 c1 ...` row per record."""
    info = read_header(path)
    with open(out_path, "w") as out:
        out.write(f"# kind={info.kind} traj={info.trajectory} width={info.width} tag={info.tag}\n")
        for t, payload in read_snapshots(path):
            out.write(" ".join([repr(t)] + [repr(float(v)) for v in payload]) + "\n")
