"""Event-stream data model, binary/CSV file formats, windowing, rasterization.

All containers are immutable after construction and every operation is a
pure function, so they are safe to share across threads and processes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels

MAGIC = b"EVS1"
_HEADER = struct.Struct("<4sHHQ")
_RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
CSV_HEADER = "t_us,x,y,p"


class EventFormatError(ValueError):
    """Malformed event file. ``byte_offset`` locates the first bad byte."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class Event(NamedTuple):
    t: int  # microseconds since stream start
    x: int
    y: int
    polarity: int  # +1 or -1


@dataclass(frozen=True)
class EventStream:
    """Time-sorted signed-polarity pixel events from one sensor."""

    width: int
    height: int
    t: np.ndarray  # int64 microseconds, non-decreasing
    x: np.ndarray  # int64 column
    y: np.ndarray  # int64 row
    p: np.ndarray  # int8, +1 / -1

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event arrays must share one length")
        if n == 0:
            return
        if self.t[0] < 0 or np.any(np.diff(self.t) < 0):
            raise ValueError("timestamps must be non-negative and non-decreasing")
        if self.x.min() < 0 or self.x.max() >= self.width:
            raise ValueError("x coordinate out of sensor bounds")
        if self.y.min() < 0 or self.y.max() >= self.height:
            raise ValueError("y coordinate out of sensor bounds")
        if not np.isin(self.p, (-1, 1)).all():
            raise ValueError("polarity must be +1 or -1")

    @classmethod
    def from_arrays(cls, width, height, t, x, y, p) -> "EventStream":
        return cls(
            int(width),
            int(height),
            np.ascontiguousarray(t, np.int64),
            np.ascontiguousarray(x, np.int64),
            np.ascontiguousarray(y, np.int64),
            np.ascontiguousarray(p, np.int8),
        )

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        z = np.empty(0, np.int64)
        return cls.from_arrays(width, height, z, z, z, z)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration_us(self) -> int:
        return int(self.t[-1]) if len(self) else 0

    def events(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))


@dataclass(frozen=True)
class EventFrame:
    """Polarity-merged per-pixel event counts over [t_start, t_end)."""

    width: int
    height: int
    counts: np.ndarray  # (height, width) int64, >= 0
    t_start: int
    t_end: int


@dataclass(frozen=True)
class SpikeRaster:
    """Binary (T, size, size) spike indicator consumed by the classifier."""

    data: np.ndarray  # uint8 in {0, 1}

    @property
    def timesteps(self) -> int:
        return self.data.shape[0]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def write_events(path, stream: EventStream) -> None:
    """Write the canonical little-endian binary format."""
    rec = np.empty(len(stream), _RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = (stream.p > 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, stream.width, stream.height, len(stream)))
        fh.write(rec.tobytes())


def read_events(path) -> EventStream:
    """Read a canonical binary or CSV event file (sniffed by content)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] == MAGIC:
        return _parse_binary(blob)
    head = blob.split(b"\n", 1)[0].strip()
    if head == CSV_HEADER.encode():
        return _parse_csv(blob)
    raise EventFormatError("bad magic: not an EVS1 or event CSV file", 0)


def _parse_binary(blob: bytes) -> EventStream:
    if len(blob) < _HEADER.size:
        raise EventFormatError("truncated header", len(blob))
    magic, width, height, count = _HEADER.unpack_from(blob)
    body = blob[_HEADER.size:]
    need = count * _RECORD_DTYPE.itemsize
    if len(body) < need:
        whole = len(body) // _RECORD_DTYPE.itemsize
        raise EventFormatError(
            f"truncated record {whole} (expected {count} records)",
            _HEADER.size + whole * _RECORD_DTYPE.itemsize,
        )
    if len(body) > need:
        raise EventFormatError("trailing bytes after last record", _HEADER.size + need)
    rec = np.frombuffer(body, _RECORD_DTYPE, count)
    t = rec["t"].astype(np.int64)
    _check_records(t, rec["x"], rec["y"], rec["p"], width, height,
                   offset_of=lambda i: _HEADER.size + i * _RECORD_DTYPE.itemsize,
                   raw_polarity=True)
    return EventStream.from_arrays(
        width, height, t, rec["x"], rec["y"],
        np.where(rec["p"] > 0, 1, -1).astype(np.int8),
    )


def _parse_csv(blob: bytes) -> EventStream:
    lines = blob.decode("ascii").splitlines()
    rows = [ln for ln in lines[1:] if ln.strip()]
    t = np.empty(len(rows), np.int64)
    x = np.empty(len(rows), np.int64)
    y = np.empty(len(rows), np.int64)
    p = np.empty(len(rows), np.int8)
    for i, ln in enumerate(rows):
        parts = ln.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"record {i}: expected 4 fields, got {len(parts)}")
        t[i], x[i], y[i] = int(parts[0]), int(parts[1]), int(parts[2])
        pv = int(parts[3])
        p[i] = 1 if pv > 0 else -1
    width = int(x.max()) + 1 if len(rows) else 0
    height = int(y.max()) + 1 if len(rows) else 0
    _check_records(t, x, y, None, None, None, offset_of=None)
    return EventStream.from_arrays(max(width, 1), max(height, 1), t, x, y, p)


def _check_records(t, x, y, p_raw, width, height, offset_of, raw_polarity=False):
    if len(t) == 0:
        return
    if t[0] < 0:
        raise EventFormatError("negative timestamp at record 0",
                               offset_of(0) if offset_of else None)
    bad = np.flatnonzero(np.diff(t) < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise EventFormatError(f"non-monotone at record {i}",
                               offset_of(i) if offset_of else None)
    if width is not None:
        if x.max() >= width or y.max() >= height:
            i = int(np.flatnonzero((x >= width) | (y >= height))[0])
            raise EventFormatError(f"coordinate out of bounds at record {i}",
                                   offset_of(i) if offset_of else None)
    if raw_polarity and p_raw is not None and p_raw.max() > 1:
        i = int(np.flatnonzero(p_raw > 1)[0])
        raise EventFormatError(f"polarity byte not in {{0,1}} at record {i}",
                               offset_of(i) if offset_of else None)


def write_events_csv(path, stream: EventStream) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(len(stream)):
            fh.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")


# ---------------------------------------------------------------------------
# Windowing and rasterization
# ---------------------------------------------------------------------------


def accumulate_frame(stream: EventStream, t_start: int, duration: int) -> EventFrame:
    """Count polarity-merged events per pixel over [t_start, t_start + duration)."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    lo = np.searchsorted(stream.t, t_start, "left")
    hi = np.searchsorted(stream.t, t_start + duration, "left")
    counts = np.zeros((stream.height, stream.width), np.int64)
    np.add.at(counts, (stream.y[lo:hi], stream.x[lo:hi]), 1)
    return EventFrame(stream.width, stream.height, counts, int(t_start),
                      int(t_start + duration))


def rasterize(stream: EventStream, roi, T: int, dt_us: int, out_size: int = 48) -> SpikeRaster:
    """Bin ROI events into a binary (T, out_size, out_size) spike raster.

    An event (t, x, y) maps to bin (t // dt_us, (y - top) * out_size // side,
    (x - left) * out_size // side); a bin is 1 iff at least one event maps
    into it. Polarity is merged and events outside the ROI or past T*dt_us
    are dropped.
    """
    if roi.side <= 0:
        raise ValueError("invalid ROI: side must be positive")
    if T <= 0 or dt_us <= 0:
        raise ValueError("T and dt_us must be positive")
    data = _kernels.bin_events(
        stream.t, stream.x, stream.y,
        roi.left, roi.top, roi.side, T, dt_us, out_size,
    )
    return SpikeRaster(data)
