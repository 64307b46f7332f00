"""Compact spiking recognition network: conv -> hidden -> readout LIF layers.

Fixed geometry for 24 static fingerspelling letters: a 48x48 binary spike
raster feeds a bias-free 4-channel 5x5 convolution at stride 6 (8x8 grid,
256 neurons), a fully connected hidden layer of 512 LIF neurons and a
24-neuron readout. Classification is the argmax of accumulated readout
spike counts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .metrics import SpikeLedger

IN_SIZE = 48
CONV_CHANNELS = 4
CONV_KERNEL = 5
CONV_STRIDE = 6
CONV_GRID = (IN_SIZE - CONV_KERNEL) // CONV_STRIDE + 1  # 8
N_CONV = CONV_CHANNELS * CONV_GRID * CONV_GRID  # 256
N_HIDDEN = 512
N_OUT = 24
LETTERS = "ABCDEFGHIKLMNOPQRSTUVWXY"  # J and Z are dynamic gestures, excluded

# Connectivity of the reference hardware deployment. Dense fan-in gives
# 131072 / 12288; the deployed network reports slightly fewer (pruned or
# zero-weight connections) - kept here so reports can flag the gap.
REFERENCE_INPUT_SYNAPSES = {"conv": 6400, "hidden": 130938, "out": 12284}


@dataclass(frozen=True)
class LifParamsTrain:
    """Soft-reset LIF used in training/simulation: u' = beta*u + i, spike at
    u >= threshold, then subtract threshold."""

    beta: float = 0.92
    threshold: float = 1.0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class NetworkWeights:
    """Bias-free float parameters of the three-layer network."""

    conv: np.ndarray  # (4, 5, 5)
    fc_hidden: np.ndarray  # (256, 512)
    fc_out: np.ndarray  # (512, 24)

    def __post_init__(self):
        if self.conv.shape != (CONV_CHANNELS, CONV_KERNEL, CONV_KERNEL):
            raise ValueError("conv weights must be (4, 5, 5)")
        if self.fc_hidden.shape != (N_CONV, N_HIDDEN):
            raise ValueError("hidden weights must be (256, 512)")
        if self.fc_out.shape != (N_HIDDEN, N_OUT):
            raise ValueError("output weights must be (512, 24)")
        for arr in (self.conv, self.fc_hidden, self.fc_out):
            if not np.isfinite(arr).all():
                raise ValueError("weights must be finite")


def geometry() -> dict:
    """Layer sizes and synapse counts, dense vs. the reference deployment."""
    dense = {"conv": N_CONV * CONV_KERNEL * CONV_KERNEL,
             "hidden": N_CONV * N_HIDDEN,
             "out": N_HIDDEN * N_OUT}
    return {
        "neurons": {"input": IN_SIZE * IN_SIZE, "conv": N_CONV,
                    "hidden": N_HIDDEN, "out": N_OUT},
        "input_synapses_dense": dense,
        "input_synapses_reference": dict(REFERENCE_INPUT_SYNAPSES),
        "matches_reference": {
            k: dense[k] == REFERENCE_INPUT_SYNAPSES[k] for k in dense
        },
    }


def lif_step(u_prev: float, i_in: float, p: LifParamsTrain):
    """One scalar LIF update; returns (u_next, spike)."""
    u = p.beta * u_prev + i_in
    spike = 1 if u >= p.threshold else 0
    return u - spike * p.threshold, spike


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

# flat patch index tables: patch p covers rows _PY[p], cols _PX[p] (25 each)
_gy, _gx = np.mgrid[:CONV_GRID, :CONV_GRID]
_ky, _kx = np.mgrid[:CONV_KERNEL, :CONV_KERNEL]
_PY = (_gy.reshape(-1, 1) * CONV_STRIDE + _ky.reshape(1, -1).repeat(CONV_GRID**2, 0))
_PX = (_gx.reshape(-1, 1) * CONV_STRIDE + _kx.reshape(1, -1).repeat(CONV_GRID**2, 0))


def extract_patches(rasters: np.ndarray) -> np.ndarray:
    """(B, T, 48, 48) rasters -> (B, T, 64, 25) float64 conv patches."""
    return rasters[:, :, _PY, _PX].astype(np.float64)


def conv_currents(patches: np.ndarray, conv: np.ndarray) -> np.ndarray:
    """(B, T, 64, 25) patches -> (T, B, 256) currents, neuron = c*64 + pos."""
    B, T = patches.shape[:2]
    resp = patches @ conv.reshape(CONV_CHANNELS, -1).T  # (B, T, 64, 4)
    return np.ascontiguousarray(resp.transpose(1, 0, 3, 2)).reshape(T, B, N_CONV)


def _matmul_steps(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    T, B, n = s.shape
    return np.ascontiguousarray((s.reshape(T * B, n) @ w).reshape(T, B, w.shape[1]))


def cascade_forward(i1: np.ndarray, w_hidden: np.ndarray, w_out: np.ndarray,
                    p: LifParamsTrain, k_slope: float = 25.0, hard: bool = True,
                    l1_spiking: bool = True) -> dict:
    """Run the three coupled LIF populations over (T, B, n) input currents.

    Returns membranes and spike trains per layer plus summed readout counts;
    layers chain feed-forward, so each population is integrated over all T
    before driving the next. With l1_spiking=False the first stage passes
    its filtered currents through unchanged (non-spiking variant).
    """
    hard_i = 1 if hard else 0
    if l1_spiking:
        u1, s1 = _kernels.lif_forward(i1, p.beta, p.threshold, k_slope, hard_i)
    else:
        u1, s1 = i1, i1
    i2 = _matmul_steps(s1, w_hidden)
    u2, s2 = _kernels.lif_forward(i2, p.beta, p.threshold, k_slope, hard_i)
    i3 = _matmul_steps(s2, w_out)
    u3, s3 = _kernels.lif_forward(i3, p.beta, p.threshold, k_slope, hard_i)
    return {"u1": u1, "s1": s1, "u2": u2, "s2": s2, "u3": u3, "s3": s3,
            "counts": s3.sum(axis=0)}


def forward_batch(rasters: np.ndarray, w: NetworkWeights, p: LifParamsTrain,
                  l1_spiking: bool = True):
    """(B, T, 48, 48) rasters -> (counts (B, 24), SpikeLedger over the batch)."""
    if rasters.ndim != 4 or rasters.shape[2:] != (IN_SIZE, IN_SIZE):
        raise ValueError(f"raster batch must be (B, T, {IN_SIZE}, {IN_SIZE})")
    i1 = conv_currents(extract_patches(rasters), w.conv)
    out = cascade_forward(i1, w.fc_hidden, w.fc_out, p, hard=True,
                          l1_spiking=l1_spiking)
    B = rasters.shape[0]
    window_ms = rasters.shape[1]  # 1 ms per raster step
    ledger = SpikeLedger.from_totals(
        float(out["s1"].sum()) if l1_spiking else 0.0,
        float(out["s2"].sum()), float(out["s3"].sum()), B, float(window_ms))
    return out["counts"], ledger


def forward(raster: np.ndarray, w: NetworkWeights, p: LifParamsTrain,
            l1_spiking: bool = True):
    """Single-sample forward: (T, 48, 48) raster -> (counts (24,), ledger)."""
    if raster.ndim != 3 or raster.shape[1:] != (IN_SIZE, IN_SIZE):
        raise ValueError(f"raster must be (T, {IN_SIZE}, {IN_SIZE})")
    counts, ledger = forward_batch(raster[None], w, p, l1_spiking)
    return counts[0], ledger


def classify(counts: np.ndarray) -> int:
    """Argmax class; ties resolve to the smallest index."""
    return int(np.argmax(counts))


# ---------------------------------------------------------------------------
# Weight file: magic "SRW1", tensor dims, row-major float32 + JSON sidecar
# ---------------------------------------------------------------------------

_WEIGHTS_MAGIC = b"SRW1"


def save_weights(path, w: NetworkWeights, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", 3))
        for arr in (w.conv, w.fc_hidden, w.fc_out):
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta or {}, fh, indent=2)
        fh.write("\n")


def load_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _WEIGHTS_MAGIC:
        raise ValueError("bad magic: not a network weight file")
    pos = 4
    (n_tensors,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = []
    for _ in range(n_tensors):
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, "<f4", count, pos).reshape(shape).astype(np.float64)
        pos += 4 * count
        tensors.append(arr)
    if len(tensors) != 3:
        raise ValueError("weight file must hold exactly 3 tensors")
    meta = {}
    try:
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    return NetworkWeights(*tensors), meta
