"""Binary dataset snapshots.

Layout (all integers little-endian):

    bytes 0-3   magic "CSCD"
    u32         version (currently 1)
    u32         flags: bit 0 = follow edges carry `since` timestamps
    u64 x 4     n_users, n_tags, n_events, n_edges
    label table (users):  per label, u32 byte length + UTF-8 bytes
    label table (tags):   same encoding
    event arrays:         time  i64[n_events]
                          user  i32[n_events]
                          tag   i32[n_events]
                          first u8 [n_events]
    adjacency:            indptr i64[n_users + 1]
                          dst    i32[n_edges]
                          since  i64[n_edges]     (only when flag bit 0)
    warnings:             u32 count, then per entry
                          u32 key length + key UTF-8 + i64 value

Loading reproduces the in-memory Dataset bit-for-bit.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import SnapshotFormatError
from .events import Dataset, FollowerGraph

MAGIC = b"CSCD"
VERSION = 1
_FLAG_EDGE_TIMES = 1


def save_snapshot(d: Dataset, path) -> None:
    buf = bytearray()
    buf += MAGIC
    flags = _FLAG_EDGE_TIMES if d.graph.since is not None else 0
    buf += struct.pack("<II", VERSION, flags)
    buf += struct.pack("<QQQQ", d.n_users, d.n_tags, d.n_events, d.n_edges)
    for table in (d.user_labels, d.tag_labels):
        for label in table:
            raw = label.encode("utf-8")
            buf += struct.pack("<I", len(raw))
            buf += raw
    buf += d.event_time.astype("<i8").tobytes()
    buf += d.event_user.astype("<i4").tobytes()
    buf += d.event_tag.astype("<i4").tobytes()
    buf += d.event_first.astype("<u1").tobytes()
    buf += d.graph.indptr.astype("<i8").tobytes()
    buf += d.graph.dst.astype("<i4").tobytes()
    if d.graph.since is not None:
        buf += d.graph.since.astype("<i8").tobytes()
    buf += struct.pack("<I", len(d.warnings))
    for key in sorted(d.warnings):
        raw = key.encode("utf-8")
        buf += struct.pack("<I", len(raw))
        buf += raw
        buf += struct.pack("<q", int(d.warnings[key]))
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotFormatError("snapshot truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count)
        return np.frombuffer(raw, dtype=dt).copy()

    def labels(self, count: int) -> tuple:
        out = []
        for _ in range(count):
            (ln,) = self.unpack("<I")
            out.append(self.take(ln).decode("utf-8"))
        return tuple(out)


def load_snapshot(path) -> Dataset:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read snapshot: {exc}") from None
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise SnapshotFormatError("bad magic: not a CSCD snapshot")
    version, flags = r.unpack("<II")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    n_users, n_tags, n_events, n_edges = r.unpack("<QQQQ")

    user_labels = r.labels(n_users)
    tag_labels = r.labels(n_tags)
    ev_time = r.array("<i8", n_events)
    ev_user = r.array("<i4", n_events)
    ev_tag = r.array("<i4", n_events)
    ev_first = r.array("<u1", n_events).astype(bool)
    indptr = r.array("<i8", n_users + 1)
    dst = r.array("<i4", n_edges)
    since = r.array("<i8", n_edges) if flags & _FLAG_EDGE_TIMES else None

    (n_warn,) = r.unpack("<I")
    warnings = {}
    for _ in range(n_warn):
        (ln,) = r.unpack("<I")
        key = r.take(ln).decode("utf-8")
        (val,) = r.unpack("<q")
        warnings[key] = val

    graph = FollowerGraph(int(n_users), indptr, dst, since)
    return Dataset(
        user_labels=user_labels,
        tag_labels=tag_labels,
        event_time=ev_time,
        event_user=ev_user,
        event_tag=ev_tag,
        event_first=ev_first,
        graph=graph,
        warnings=warnings,
    )
