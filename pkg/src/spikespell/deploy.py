"""Neuromorphic deployment emulation: fixed-point weights, exc/inh projections,
and the target platform's LIF model (exponential synapses, refractory period,
1 ms digital clock).

The trained float network is mapped onto the hardware's connection scheme:
weights are quantized to signed 16-bit fixed point, scaled per projection,
and split by sign into an excitatory port (tau_syn_e) and an inhibitory
port (tau_syn_i, extra w_inh factor). Every connection carries one clock
tick of axonal delay.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .metrics import SpikeLedger
from .network import (
    CONV_CHANNELS,
    IN_SIZE,
    N_CONV,
    N_HIDDEN,
    N_OUT,
    NetworkWeights,
    conv_currents,
    extract_patches,
)


def tau_m_from_beta(beta: float, dt_ms: float = 1.0) -> float:
    """Membrane time constant matching a per-step decay factor: -dt/ln(beta)."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return -dt_ms / math.log(beta)


_DEFAULT_TAU_M = tau_m_from_beta(0.92, 1.0)


@dataclass(frozen=True)
class LifParamsDeploy:
    dt_ms: float = 1.0
    delay_ms: float = 1.0
    tau_m_ms: float = _DEFAULT_TAU_M
    tau_syn_e_ms: float = 5.0
    tau_syn_i_ms: float = 3.0
    tau_refrac_ms: float = 1.0
    v_rest_mv: float = -65.0
    v_reset_mv: float = -65.0
    v_thresh_mv: float = -61.0
    w_fc: float = 0.3
    w_out: float = 2.0
    w_inh: float = 1.0
    # input encoding is not part of the published parameter set; 4.0 was
    # calibrated so the deployed net's accuracy gap vs. simulation mirrors
    # the reference hardware's
    input_gain: float = 4.0

    def __post_init__(self):
        if self.v_thresh_mv <= self.v_reset_mv:
            raise ValueError("v_thresh must exceed v_reset")
        for tau in (self.tau_m_ms, self.tau_syn_e_ms, self.tau_syn_i_ms):
            if tau <= 0:
                raise ValueError("time constants must be positive")

    @property
    def delay_steps(self) -> int:
        return max(int(round(self.delay_ms / self.dt_ms)), 1)

    @property
    def refrac_steps(self) -> int:
        return int(round(self.tau_refrac_ms / self.dt_ms))


# ---------------------------------------------------------------------------
# Fixed-point quantization
# ---------------------------------------------------------------------------

_Q_MAX = 2**15 - 1  # signed 16-bit symmetric range


@dataclass(frozen=True)
class QuantWeights:
    conv_q: np.ndarray  # int16
    fc_hidden_q: np.ndarray
    fc_out_q: np.ndarray
    f_bits: dict  # per-layer fractional bits

    def dequantize(self) -> NetworkWeights:
        return NetworkWeights(
            self.conv_q.astype(np.float64) / 2.0 ** self.f_bits["conv"],
            self.fc_hidden_q.astype(np.float64) / 2.0 ** self.f_bits["fc_hidden"],
            self.fc_out_q.astype(np.float64) / 2.0 ** self.f_bits["fc_out"],
        )


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def quantize(w: NetworkWeights, f_bits) -> tuple[QuantWeights, dict]:
    """Quantize every layer to int16 with 2^f scaling; saturation is silent
    but counted in the returned report."""
    if isinstance(f_bits, int):
        f_bits = {"conv": f_bits, "fc_hidden": f_bits, "fc_out": f_bits}
    layers = {"conv": w.conv, "fc_hidden": w.fc_hidden, "fc_out": w.fc_out}
    q = {}
    report = {"f_bits": dict(f_bits), "layers": {}}
    for name, arr in layers.items():
        f = int(f_bits[name])
        if not 0 <= f <= 15:
            raise ValueError("fractional bits must lie in [0, 15]")
        scaled = _round_half_away(arr * 2.0**f)
        saturated = int((np.abs(scaled) > _Q_MAX).sum())
        qa = np.clip(scaled, -_Q_MAX, _Q_MAX).astype(np.int16)
        err = np.abs(qa.astype(np.float64) / 2.0**f - arr)
        report["layers"][name] = {
            "saturated": saturated,
            "max_abs_error": float(err.max()),
        }
        q[name] = qa
    return QuantWeights(q["conv"], q["fc_hidden"], q["fc_out"], dict(f_bits)), report


# ---------------------------------------------------------------------------
# Projection mapping and deployment forward pass
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeploymentImage:
    """Sign-split, scaled connection matrices; *_inh holds magnitudes."""

    conv_exc: np.ndarray  # (4, 5, 5)
    conv_inh: np.ndarray
    hidden_exc: np.ndarray  # (256, 512)
    hidden_inh: np.ndarray
    out_exc: np.ndarray  # (512, 24)
    out_inh: np.ndarray
    delay_steps: int


def _split(w: np.ndarray, scale: float, w_inh: float):
    scaled = w * scale
    return np.maximum(scaled, 0.0), np.maximum(-scaled, 0.0) * w_inh


def map_projections(w, p: LifParamsDeploy) -> DeploymentImage:
    """Scale and sign-split projections; accepts float or quantized weights."""
    if isinstance(w, QuantWeights):
        w = w.dequantize()
    conv_e, conv_i = _split(w.conv, p.input_gain, p.w_inh)
    hid_e, hid_i = _split(w.fc_hidden, p.w_fc, p.w_inh)
    out_e, out_i = _split(w.fc_out, p.w_out, p.w_inh)
    return DeploymentImage(conv_e, conv_i, hid_e, hid_i, out_e, out_i,
                           p.delay_steps)


def _delayed(s: np.ndarray, steps: int) -> np.ndarray:
    """Shift a (T, B, N) spike train later in time by ``steps``."""
    out = np.zeros_like(s)
    if steps < s.shape[0]:
        out[steps:] = s[:-steps] if steps else s
    return out


def deploy_forward_batch(rasters: np.ndarray, image: DeploymentImage,
                         p: LifParamsDeploy):
    """(B, T, 48, 48) rasters -> (counts (B, 24), ledger) under deployment
    dynamics. Simulation runs T + 3*delay steps so spikes still in flight at
    the end of the input window reach the readout."""
    if rasters.ndim != 4 or rasters.shape[2:] != (IN_SIZE, IN_SIZE):
        raise ValueError(f"raster batch must be (B, T, {IN_SIZE}, {IN_SIZE})")
    B, T = rasters.shape[:2]
    d = image.delay_steps
    T_sim = T + 3 * d
    pad = np.zeros((B, T_sim - T, IN_SIZE, IN_SIZE), rasters.dtype)
    padded = np.concatenate([rasters, pad], axis=1)
    patches = extract_patches(padded)

    decay_e = math.exp(-p.dt_ms / p.tau_syn_e_ms)
    decay_i = math.exp(-p.dt_ms / p.tau_syn_i_ms)
    decay_m = math.exp(-p.dt_ms / p.tau_m_ms)

    def layer(exc_in, inh_in):
        return _kernels.deploy_lif_layer(
            exc_in, inh_in, decay_e, decay_i, decay_m,
            p.v_rest_mv, p.v_reset_mv, p.v_thresh_mv, p.refrac_steps)

    in_e = _delayed(conv_currents(patches, image.conv_exc), d)
    in_i = _delayed(conv_currents(patches, image.conv_inh), d)
    s1 = layer(in_e, in_i)

    def fc(s, w):
        Ts, Bs, n = s.shape
        return np.ascontiguousarray((s.reshape(Ts * Bs, n) @ w)
                                    .reshape(Ts, Bs, w.shape[1]))

    s2 = layer(_delayed(fc(s1, image.hidden_exc), d),
               _delayed(fc(s1, image.hidden_inh), d))
    s3 = layer(_delayed(fc(s2, image.out_exc), d),
               _delayed(fc(s2, image.out_inh), d))
    counts = s3.sum(axis=0)
    ledger = SpikeLedger.from_totals(float(s1.sum()), float(s2.sum()),
                                     float(s3.sum()), B, float(T))
    return counts, ledger


def deploy_forward(raster: np.ndarray, image: DeploymentImage, p: LifParamsDeploy):
    """Single-sample deployment forward pass."""
    if raster.ndim != 3 or raster.shape[1:] != (IN_SIZE, IN_SIZE):
        raise ValueError(f"raster must be (T, {IN_SIZE}, {IN_SIZE})")
    counts, ledger = deploy_forward_batch(raster[None], image, p)
    return counts[0], ledger


# ---------------------------------------------------------------------------
# Quantized weight file: magic "SRQ1", int16 tensors with per-layer f bits
# ---------------------------------------------------------------------------

_QUANT_MAGIC = b"SRQ1"
_LAYER_ORDER = ("conv", "fc_hidden", "fc_out")


def save_quant(path, q: QuantWeights) -> None:
    arrays = (q.conv_q, q.fc_hidden_q, q.fc_out_q)
    with open(path, "wb") as fh:
        fh.write(_QUANT_MAGIC)
        for name, arr in zip(_LAYER_ORDER, arrays):
            fh.write(struct.pack("<BB", q.f_bits[name], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<i2").tobytes())


def load_quant(path) -> QuantWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _QUANT_MAGIC:
        raise ValueError("bad magic: not a quantized weight file")
    pos = 4
    arrays, f_bits = [], {}
    for name in _LAYER_ORDER:
        f, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(blob, "<i2", count, pos).reshape(shape).copy())
        pos += 2 * count
        f_bits[name] = int(f)
    return QuantWeights(arrays[0], arrays[1], arrays[2], f_bits)


def save_quant_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
