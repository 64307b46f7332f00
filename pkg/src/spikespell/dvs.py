"""Synthetic DVS conversion: random-walk motion plus a log-contrast pixel model.

Static grayscale images become event streams in two stages: a seeded
random walk translates an upsampled copy of the image frame to frame, and
a per-pixel contrast-threshold model emits signed events wherever the
log intensity moved by at least one threshold step since the pixel's
reference level. The whole conversion is deterministic for a fixed
(image, config) pair, so a dataset can be generated once and replayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .events import EventStream


@dataclass(frozen=True)
class DvsConfig:
    contrast_threshold_pos: float = 0.15
    contrast_threshold_neg: float = 0.15
    frame_dt_us: int = 1000
    n_frames: int = 36  # spans T = n_frames - 1 raster steps at 1 ms
    upsample_factor: int = 4
    seed: int = 0
    epsilon_intensity: float = 1.0  # floor added before log, keeps ln finite

    def __post_init__(self):
        if self.contrast_threshold_pos <= 0 or self.contrast_threshold_neg <= 0:
            raise ValueError("contrast thresholds must be positive")
        if self.n_frames < 1:
            raise ValueError("need at least one frame")
        if self.upsample_factor < 1:
            raise ValueError("upsample_factor must be >= 1")
        if self.epsilon_intensity <= 0:
            raise ValueError("epsilon_intensity must be positive")


def _shift2d(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate image content by (dx, dy), filling vacated pixels with 0."""
    out = np.zeros_like(img)
    h, w = img.shape
    xs0, xs1 = max(dx, 0), min(w + dx, w)
    ys0, ys1 = max(dy, 0), min(h + dy, h)
    out[ys0:ys1, xs0:xs1] = img[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx]
    return out


def random_walk_sequence(image: np.ndarray, cfg: DvsConfig) -> np.ndarray:
    """Upsample the image and walk it; returns (n_frames, H*u, W*u) float64."""
    if image.size == 0:
        raise ValueError("empty image")
    base = np.repeat(np.repeat(np.asarray(image, np.float64),
                               cfg.upsample_factor, 0),
                     cfg.upsample_factor, 1)
    frames = np.empty((cfg.n_frames,) + base.shape)
    frames[0] = base
    rng = np.random.default_rng(cfg.seed)
    for k in range(1, cfg.n_frames):
        dx, dy = rng.integers(-1, 2, size=2)
        frames[k] = _shift2d(frames[k - 1], int(dx), int(dy))
    return frames


def emit_events(frames: np.ndarray, cfg: DvsConfig) -> EventStream:
    """Run the contrast-threshold pixel model over a frame sequence.

    Each pixel keeps a reference log level; frame k emits
    floor(|ln(I_k + eps) - ref| / C) events of the change's sign, spaced on
    the integer-microsecond grid within ((k-1)*dt, k*dt], and advances the
    reference by the emitted multiple of C.
    """
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("need >= 2 frames of equal dimensions")
    log_frames = np.log(np.asarray(frames, np.float64) + cfg.epsilon_intensity)
    t, x, y, p = _kernels.dvs_emit(
        log_frames,
        cfg.contrast_threshold_pos,
        cfg.contrast_threshold_neg,
        cfg.frame_dt_us,
    )
    order = np.argsort(t, kind="stable")
    h, w = frames.shape[1:]
    return EventStream.from_arrays(w, h, t[order], x[order], y[order], p[order])


def convert_image_to_events(image: np.ndarray, cfg: DvsConfig) -> EventStream:
    """Full image -> events conversion; deterministic given (image, cfg)."""
    frames = random_walk_sequence(image, cfg)
    if cfg.n_frames < 2:
        h, w = frames.shape[1:]
        return EventStream.empty(w, h)
    return emit_events(frames, cfg)
