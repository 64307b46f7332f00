"""Shared wiring between CLI stages: dataset scanning, the event -> ROI ->
raster path, and SL-MNIST CSV ingestion."""

from __future__ import annotations

import os
import re
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .events import EventStream, accumulate_frame, rasterize, read_events
from .network import LETTERS
from .saliency import build_filter_bank, compute_saliency, extract_roi

_FILE_RE = re.compile(r"^(?P<split>[A-Za-z0-9]+)_(?P<index>\d+)_(?P<label>\d+)\.evs$")


def event_file_name(split: str, index: int, label: int) -> str:
    return f"{split}_{index:05d}_{label}.evs"


def scan_dataset(data_dir, split: str) -> list[tuple[Path, int]]:
    """All (path, class label) pairs of one split, ordered by index."""
    out = []
    for p in sorted(Path(data_dir).glob("*.evs")):
        m = _FILE_RE.match(p.name)
        if m and m.group("split") == split:
            out.append((p, int(m.group("label"))))
    return out


def letter_of(label: int) -> str:
    return LETTERS[label]


def class_of_letter(letter: str) -> int:
    idx = LETTERS.find(letter.upper())
    if idx < 0:
        raise ValueError(f"{letter!r} is not one of the 24 static letters")
    return idx


def slmnist_label_to_class(label: int) -> int:
    """Collapse the CSV label space (0..24, 9 unused) onto 0..23."""
    if label == 9 or not 0 <= label <= 24:
        raise ValueError(f"label {label} is not a static-letter label")
    return label if label < 9 else label - 1


@lru_cache(maxsize=4)
def bank_from_config(cfg: PipelineConfig):
    size = cfg.saliency.kernel_size or None
    return build_filter_bank(cfg.saliency.orientations, cfg.saliency.r0,
                             cfg.saliency.rho, size)


def _rasterize_one(args):
    path, cfg, mode = args
    raster, _ = stream_to_raster(read_events(path), cfg,
                                 bank_from_config(cfg), mode)
    return raster


def stream_to_raster(stream: EventStream, cfg: PipelineConfig, bank=None,
                     mode: str | None = None):
    """Events -> saliency ROI -> binary raster; returns (raster, roi)."""
    bank = bank or bank_from_config(cfg)
    T = cfg.train.timesteps
    duration = max(stream.duration_us + 1, 1)
    frame = accumulate_frame(stream, 0, duration)
    smap = compute_saliency(frame, bank, cfg.lif, cfg.saliency.steps,
                            cfg.saliency.gain)
    side = min(cfg.saliency.roi_side, stream.width, stream.height)
    roi = extract_roi(smap, side, mode or cfg.saliency.mode)
    raster = rasterize(stream, roi, T, cfg.raster.dt_us)
    return raster.data, roi


def load_split_rasters(data_dir, split: str, cfg: PipelineConfig,
                       subset_per_class: int | None = None,
                       classes: list[int] | None = None, jobs: int = 1,
                       mode: str | None = None):
    """Rasterize a dataset split; returns (rasters (N,T,48,48), labels (N,))."""
    entries = scan_dataset(data_dir, split)
    if classes is not None:
        keep = set(classes)
        entries = [e for e in entries if e[1] in keep]
    if subset_per_class is not None:
        capped, per = [], {}
        for path, label in entries:
            if per.get(label, 0) < subset_per_class:
                capped.append((path, label))
                per[label] = per.get(label, 0) + 1
        entries = capped
    if not entries:
        raise FileNotFoundError(f"no '{split}' samples found in {data_dir}")
    work = [(str(p), cfg, mode) for p, _ in entries]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            rasters = list(pool.map(_rasterize_one, work, chunksize=8))
    else:
        rasters = [_rasterize_one(w) for w in work]
    labels = np.array([lab for _, lab in entries], np.int64)
    return np.stack(rasters), labels


def load_slmnist_csv(path, subset_per_class: int | None = None,
                     classes: list[int] | None = None):
    """Read label + 784 pixel rows; returns (images (N,28,28) uint8, labels)."""
    images, labels = [], []
    per: dict[int, int] = {}
    with open(path) as fh:
        first = fh.readline().strip()
        if first and not first.split(",")[0].lstrip("-").isdigit():
            pass  # header row
        else:
            _ingest_row(first, images, labels, per, subset_per_class, classes, 1)
        for lineno, line in enumerate(fh, 2):
            if line.strip():
                _ingest_row(line.strip(), images, labels, per,
                            subset_per_class, classes, lineno)
    if not images:
        raise ValueError(f"no usable rows in {path}")
    return np.stack(images), np.array(labels, np.int64)


def _ingest_row(row, images, labels, per, subset_per_class, classes, lineno):
    parts = row.split(",")
    if len(parts) != 785:
        raise ValueError(f"row {lineno}: expected 785 fields, got {len(parts)}")
    cls = slmnist_label_to_class(int(parts[0]))
    if classes is not None and cls not in classes:
        return
    if subset_per_class is not None and per.get(cls, 0) >= subset_per_class:
        return
    per[cls] = per.get(cls, 0) + 1
    img = np.array(parts[1:], np.uint8).reshape(28, 28)
    images.append(img)
    labels.append(cls)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
