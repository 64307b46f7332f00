"""Spiking proto-object saliency: von Mises filters, grouping, ROI selection.

Annular filters concentrated on an arc of radius ``r0`` in direction
``theta`` are correlated with an accumulated event frame. Opposing
orientations are pooled in pairs, with the opposite filter displaced by
2*r0 along the arc's radial direction so both members of a pair vote for
the same proto-object location. The pooled response drives one LIF unit
per pixel; the spike-count map's peak selects the region of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .events import EventFrame
from .network import LifParamsTrain
from . import _kernels


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero (even in x)."""
    res = np.i0(np.abs(np.asarray(x, np.float64)))
    if np.isscalar(x) or getattr(x, "ndim", 0) == 0:
        return float(res)
    return res


@dataclass(frozen=True)
class VmKernel:
    theta: float  # radians
    r0: float  # ring radius, pixels
    rho: float  # concentration
    size: int  # odd side length
    weights: np.ndarray  # (size, size), unit L1 norm


def vm_kernel_raw(theta: float, r0: float, rho: float, size: int) -> np.ndarray:
    """Unnormalized annular kernel exp(rho*r0*cos(atan2(-dy,dx)-theta)) / I0(r-r0)."""
    if size % 2 == 0 or size < 3:
        raise ValueError("kernel size must be odd and >= 3")
    if not (0 < r0 < size / 2):
        raise ValueError("ring radius must satisfy 0 < r0 < size/2")
    if rho <= 0:
        raise ValueError("concentration rho must be positive")
    c = (size - 1) // 2
    dy, dx = np.mgrid[:size, :size] - c
    ang = np.arctan2(-dy, dx)  # image y grows downward; flip to math orientation
    r = np.sqrt(dx * dx + dy * dy)
    return np.exp(rho * r0 * np.cos(ang - theta)) / bessel_i0(r - r0)


def vm_kernel(theta: float, r0: float, rho: float, size: int) -> VmKernel:
    raw = vm_kernel_raw(theta, r0, rho, size)
    return VmKernel(theta, r0, rho, size, raw / np.abs(raw).sum())


@dataclass(frozen=True)
class FilterBank:
    kernels: list  # n_orientations VmKernel; kernel i+N/2 opposes kernel i
    n_orientations: int
    r0: float
    rho: float
    size: int


def build_filter_bank(n_orientations: int = 8, r0: float = 10.0, rho: float = 0.1,
                      size: int | None = None) -> FilterBank:
    if n_orientations % 2 != 0 or n_orientations < 2:
        raise ValueError("need an even number of orientations")
    if size is None:
        size = 4 * int(round(r0)) + 1
    thetas = [2.0 * math.pi * i / n_orientations for i in range(n_orientations)]
    kernels = [vm_kernel(th, r0, rho, size) for th in thetas]
    return FilterBank(kernels, n_orientations, r0, rho, size)


@dataclass(frozen=True)
class SaliencyMap:
    width: int
    height: int
    spike_counts: np.ndarray  # (height, width) int64


@dataclass(frozen=True)
class Roi:
    """Square crop window; left/top are clamped so the window fits the sensor."""

    center_x: int
    center_y: int
    side: int
    left: int
    top: int

    @classmethod
    def centered(cls, cx: int, cy: int, side: int, width: int, height: int) -> "Roi":
        if side > min(width, height) or side <= 0:
            raise ValueError("ROI side must be positive and fit the sensor")
        left = min(max(cx - side // 2, 0), width - side)
        top = min(max(cy - side // 2, 0), height - side)
        return cls(int(cx), int(cy), int(side), int(left), int(top))

    @classmethod
    def center_crop(cls, side: int, width: int, height: int) -> "Roi":
        return cls.centered(width // 2, height // 2, side, width, height)

    def contains(self, x: int, y: int) -> bool:
        return self.left <= x < self.left + self.side and self.top <= y < self.top + self.side


def _shift_map(arr: np.ndarray, sx: int, sy: int) -> np.ndarray:
    """Translate map content by (sx, sy), zero-filling vacated cells."""
    out = np.zeros_like(arr)
    h, w = arr.shape
    xs0, xs1 = max(sx, 0), min(w + sx, w)
    ys0, ys1 = max(sy, 0), min(h + sy, h)
    out[ys0:ys1, xs0:xs1] = arr[ys0 - sy:ys1 - sy, xs0 - sx:xs1 - sx]
    return out


def _correlate_same(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # correlation == convolution with the point-reflected kernel
    return fftconvolve(img, kernel[::-1, ::-1], mode="same")


def pooled_response(img: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Float grouping response: opposing pairs pooled with a 2*r0 displacement.

    For pair (theta, theta+pi) the opposing kernel is displaced by 2*r0
    along u(theta) = (cos theta, -sin theta); a correlation with a kernel
    displaced by v equals the undisplaced correlation sampled at P + v, so
    the partner map is translated by -v before summing.
    """
    img = np.asarray(img, np.float64)
    half = bank.n_orientations // 2
    total = np.zeros_like(img)
    for i in range(half):
        k_fwd = bank.kernels[i]
        k_opp = bank.kernels[i + half]
        vx = int(round(2.0 * bank.r0 * math.cos(k_fwd.theta)))
        vy = int(round(-2.0 * bank.r0 * math.sin(k_fwd.theta)))
        total += _correlate_same(img, k_fwd.weights)
        total += _shift_map(_correlate_same(img, k_opp.weights), -vx, -vy)
    return total


def compute_saliency(frame: EventFrame, bank: FilterBank,
                     lif: LifParamsTrain | None = None,
                     steps: int = 35, gain: float = 1.0) -> SaliencyMap:
    """Pool the filter bank over an event frame and integrate spiking units.

    The pooled response is normalized to a unit peak, scaled by ``gain``
    and fed as constant drive to one soft-reset LIF per pixel for
    ``steps`` timesteps; the returned map holds per-pixel spike counts.
    """
    lif = lif or LifParamsTrain()
    resp = pooled_response(frame.counts, bank)
    peak = resp.max()
    drive = gain * resp / peak if peak > 0 else np.zeros_like(resp)
    counts = _kernels.const_drive_spike_counts(drive, lif.beta, lif.threshold, steps)
    return SaliencyMap(frame.width, frame.height, counts)


def extract_roi(smap: SaliencyMap, side: int, mode: str = "sva") -> Roi:
    """Select the crop window: saliency peak ('sva') or fixed center crop."""
    if mode == "center_crop":
        return Roi.center_crop(side, smap.width, smap.height)
    if mode != "sva":
        raise ValueError(f"unknown ROI mode {mode!r}")
    flat = int(np.argmax(smap.spike_counts))  # ties -> smallest row-major index
    cy, cx = divmod(flat, smap.width)
    return Roi.centered(cx, cy, side, smap.width, smap.height)
