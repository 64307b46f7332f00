"""Surrogate-gradient training: BPTT through the spiking cascade, focal loss
with label smoothing / class balancing / online hard example mining, AdamW,
and cosine annealing with warm restarts.

The backward pass unrolls the LIF recurrences over all timesteps and
replaces d(spike)/d(membrane) with the fast-sigmoid surrogate
1 / (1 + k|u - theta|)^2. Loss logits are the temporally accumulated
readout spike counts (a membrane-sum readout is available behind a flag).
Batch order, reductions and the optimizer update are all fixed-order, so a
seeded run is bit-reproducible on one platform.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .network import (
    CONV_CHANNELS,
    CONV_GRID,
    CONV_KERNEL,
    N_CONV,
    N_HIDDEN,
    N_OUT,
    LifParamsTrain,
    NetworkWeights,
    cascade_forward,
    conv_currents,
    extract_patches,
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 2.0  # focal exponent
    epsilon: float = 0.1  # label smoothing
    mining_threshold: float = 0.65
    ohem_floor: float = 0.25  # fall back to the full batch below this fraction
    lr_max: float = 3e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    t0: int = 25  # first cosine cycle length, epochs
    t_mult: int = 2
    eta_min: float = 2e-7
    epochs: int = 130
    timesteps: int = 35
    surrogate_slope: float = 25.0
    batch_size: int = 64
    seed: int = 0
    readout: str = "spike_count"  # or "membrane_sum"

    def __post_init__(self):
        if self.gamma < 0 or not 0 <= self.epsilon < 1:
            raise ValueError("gamma must be >= 0 and epsilon in [0, 1)")
        if not 0 < self.mining_threshold < 1:
            raise ValueError("mining_threshold must lie in (0, 1)")
        if self.eta_min >= self.lr_max:
            raise ValueError("eta_min must be below lr_max")


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def init_weights(seed: int) -> NetworkWeights:
    """Kaiming-normal conv kernels, Xavier-uniform fully connected layers."""
    rng = np.random.default_rng(seed)
    conv = rng.normal(0.0, math.sqrt(2.0 / 25.0),
                      (CONV_CHANNELS, 5, 5))
    b_hidden = math.sqrt(6.0 / (N_CONV + N_HIDDEN))
    b_out = math.sqrt(6.0 / (N_HIDDEN + N_OUT))
    return NetworkWeights(
        conv,
        rng.uniform(-b_hidden, b_hidden, (N_CONV, N_HIDDEN)),
        rng.uniform(-b_out, b_out, (N_HIDDEN, N_OUT)),
    )


def class_weights(labels, n_classes: int = N_OUT) -> np.ndarray:
    """Inverse-frequency multipliers, normalized to mean 1 over all classes.

    Classes absent from ``labels`` get the neutral weight 1 before
    normalization; they never enter the loss anyway.
    """
    counts = np.bincount(np.asarray(labels, np.int64), minlength=n_classes)
    present = counts > 0
    alpha = np.ones(n_classes)
    if present.any():
        mean_count = counts[present].mean()
        alpha[present] = mean_count / counts[present]
    return alpha / alpha.mean()


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_select(logits, labels, cfg: TrainConfig, alpha=None):
    """Focal loss with label smoothing plus the hard-example selection mask.

    Samples whose true-class probability is below the mining threshold are
    selected; if fewer than ohem_floor of the batch qualify, the whole
    batch is kept so the loss is always defined.
    """
    loss, mask, _ = focal_loss_grad(logits, labels, cfg, alpha)
    return loss, mask


def focal_loss_grad(logits, labels, cfg: TrainConfig, alpha=None):
    """Returns (loss, selection mask, d loss / d logits)."""
    logits = np.asarray(logits, np.float64)
    labels = np.asarray(labels, np.int64)
    B, C = logits.shape
    if B == 0:
        raise ValueError("empty batch")
    a = np.ones(C) if alpha is None else np.asarray(alpha, np.float64)
    p = _softmax(logits)
    pc = np.clip(p, 1e-12, 1.0)
    one_minus = np.clip(1.0 - p, 1e-12, 1.0)
    q = np.full((B, C), cfg.epsilon / C)
    q[np.arange(B), labels] += 1.0 - cfg.epsilon
    aw = a[labels]

    fl = -aw * (q * one_minus**cfg.gamma * np.log(pc)).sum(axis=1)

    mask = p[np.arange(B), labels] < cfg.mining_threshold
    if mask.sum() < cfg.ohem_floor * B:
        mask = np.ones(B, bool)
    n_sel = int(mask.sum())
    loss = float(fl[mask].mean())

    # d fl / d z via g_c = q_c [ (1-p)^g / p - g (1-p)^(g-1) ln p ]
    if cfg.gamma == 0:
        g = q / pc
    else:
        g = q * (one_minus**cfg.gamma / pc
                 - cfg.gamma * one_minus ** (cfg.gamma - 1.0) * np.log(pc))
    inner = (g * p).sum(axis=1, keepdims=True)
    dlogits = -aw[:, None] * p * (g - inner)
    dlogits[~mask] = 0.0
    dlogits /= n_sel
    return loss, mask, dlogits


# ---------------------------------------------------------------------------
# Learning-rate schedule
# ---------------------------------------------------------------------------


def lr_schedule(epoch: float, cfg: TrainConfig) -> float:
    """Cosine annealing with warm restarts; cycle i spans t0 * t_mult**i."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    t = float(epoch)
    period = float(cfg.t0)
    while t >= period:
        t -= period
        period *= cfg.t_mult
    return cfg.eta_min + 0.5 * (cfg.lr_max - cfg.eta_min) * (
        1.0 + math.cos(math.pi * t / period))


# ---------------------------------------------------------------------------
# AdamW (decoupled weight decay)
# ---------------------------------------------------------------------------


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(weights: dict, grads: dict, state: AdamWState, lr: float,
               cfg: TrainConfig) -> None:
    """In-place update; decay multiplies the weight, not the gradient."""
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, w in weights.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        w -= lr * cfg.weight_decay * w


# ---------------------------------------------------------------------------
# BPTT through the cascade
# ---------------------------------------------------------------------------


def cascade_backward(out: dict, w_hidden: np.ndarray, w_out: np.ndarray,
                     grad_s3: np.ndarray, p: LifParamsTrain, k_slope: float,
                     l1_spiking: bool = True) -> dict:
    """Gradients of the two connection matrices plus the first-stage input.

    grad_s3: (T, B, n_out) direct gradient on each readout spike. Layer by
    layer the LIF recurrence is unrolled in reverse; between layers the
    spike gradient maps back through the connection matrix. The returned
    "gi1" is d loss / d(first-stage input currents), ready for the conv
    weight gradient (or unused for toy nets driven directly by currents).
    """
    gi3 = _kernels.lif_backward(out["u3"], grad_s3, p.beta, p.threshold, k_slope)
    return _backward_from_gi3(out, w_hidden, w_out, gi3, p, k_slope, l1_spiking)


def _backward_from_gi3(out, w_hidden, w_out, gi3, p, k_slope, l1_spiking):
    T, B = gi3.shape[:2]
    d_w_out = out["s2"].reshape(T * B, -1).T @ gi3.reshape(T * B, -1)
    gs2 = np.ascontiguousarray(
        (gi3.reshape(T * B, -1) @ w_out.T).reshape(T, B, -1))

    gi2 = _kernels.lif_backward(out["u2"], gs2, p.beta, p.threshold, k_slope)
    d_w_hidden = out["s1"].reshape(T * B, -1).T @ gi2.reshape(T * B, -1)
    gs1 = np.ascontiguousarray(
        (gi2.reshape(T * B, -1) @ w_hidden.T).reshape(T, B, -1))

    if l1_spiking:
        gi1 = _kernels.lif_backward(out["u1"], gs1, p.beta, p.threshold, k_slope)
    else:
        gi1 = gs1
    return {"fc_hidden": d_w_hidden, "fc_out": d_w_out, "gi1": gi1}


def conv_gradient(gi1: np.ndarray, patches: np.ndarray) -> np.ndarray:
    """(T, B, 256) input-current gradient x (B, T, 64, 25) patches -> (4,5,5)."""
    T, B = gi1.shape[:2]
    gi1_cp = gi1.reshape(T, B, CONV_CHANNELS, CONV_GRID * CONV_GRID)
    return np.einsum("tbcp,btpk->ck", gi1_cp, patches).reshape(
        CONV_CHANNELS, CONV_KERNEL, CONV_KERNEL)


def batch_gradients(rasters: np.ndarray, labels: np.ndarray,
                    weights: NetworkWeights, p: LifParamsTrain,
                    cfg: TrainConfig, alpha=None, l1_spiking: bool = True):
    """One forward/backward pass; returns (loss, logits, grads dict)."""
    patches = extract_patches(rasters)
    i1 = conv_currents(patches, weights.conv)
    out = cascade_forward(i1, weights.fc_hidden, weights.fc_out, p,
                          k_slope=cfg.surrogate_slope, hard=True,
                          l1_spiking=l1_spiking)
    if cfg.readout == "membrane_sum":
        logits = out["u3"].sum(axis=0)
    else:
        logits = out["counts"]
    loss, _, dlogits = focal_loss_grad(logits, labels, cfg, alpha)
    T = rasters.shape[1]
    if cfg.readout == "membrane_sum":
        # gradient lands on u3 directly: push through the membrane carry only
        gi3 = _membrane_sum_backward(out["u3"], dlogits, p.beta)
        core = _backward_from_gi3(out, weights.fc_hidden, weights.fc_out, gi3,
                                  p, cfg.surrogate_slope, l1_spiking)
    else:
        grad_per_step = np.ascontiguousarray(
            np.broadcast_to(dlogits, (T,) + dlogits.shape))
        core = cascade_backward(out, weights.fc_hidden, weights.fc_out,
                                grad_per_step, p, cfg.surrogate_slope,
                                l1_spiking)
    grads = {"conv": conv_gradient(core["gi1"], patches),
             "fc_hidden": core["fc_hidden"], "fc_out": core["fc_out"]}
    return loss, logits, grads


def _membrane_sum_backward(u3, dlogits, beta):
    T, B, C = u3.shape
    gi3 = np.empty_like(u3)
    carry = np.zeros((B, C))
    for t in range(T - 1, -1, -1):
        du = dlogits + carry
        gi3[t] = du
        carry = beta * du  # soft reset ignored: readout taps u directly
    return gi3


# ---------------------------------------------------------------------------
# Epoch/engine
# ---------------------------------------------------------------------------


def train_epoch(rasters: np.ndarray, labels: np.ndarray,
                weights: NetworkWeights, cfg: TrainConfig, epoch: int,
                opt_state: AdamWState, rng: np.random.Generator,
                p: LifParamsTrain | None = None, alpha=None,
                l1_spiking: bool = True, lr_override: float | None = None):
    """One pass over the data; updates weights in place via AdamW.

    Returns (weights, {"loss", "accuracy", "lr"}). Non-finite loss aborts
    with the offending epoch/batch/lr in the message.
    """
    p = p or LifParamsTrain()
    lr = lr_schedule(epoch, cfg) if lr_override is None else lr_override
    order = rng.permutation(len(labels))
    wdict = {"conv": weights.conv, "fc_hidden": weights.fc_hidden,
             "fc_out": weights.fc_out}
    losses, hits, seen = [], 0, 0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        loss, logits, grads = batch_gradients(
            rasters[idx], labels[idx], weights, p, cfg, alpha, l1_spiking)
        if not math.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss (epoch {epoch}, batch {start // cfg.batch_size},"
                f" lr {lr:.3e})")
        adamw_step(wdict, grads, opt_state, lr, cfg)
        losses.append(loss)
        hits += int((np.argmax(logits, axis=1) == labels[idx]).sum())
        seen += len(idx)
    return weights, {"loss": float(np.mean(losses)), "accuracy": hits / seen,
                     "lr": lr}


def evaluate_accuracy(rasters, labels, weights, p=None, batch_size=256,
                      l1_spiking=True):
    from .network import forward_batch

    p = p or LifParamsTrain()
    hits = 0
    for start in range(0, len(labels), batch_size):
        counts, _ = forward_batch(rasters[start:start + batch_size], weights,
                                  p, l1_spiking)
        hits += int((np.argmax(counts, axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(labels)


def fit(train_rasters, train_labels, val_rasters, val_labels,
        cfg: TrainConfig, p: LifParamsTrain | None = None,
        l1_spiking: bool = True, log_path=None, epochs: int | None = None,
        progress=None):
    """Full training run; returns (weights, history rows)."""
    p = p or LifParamsTrain()
    epochs = cfg.epochs if epochs is None else epochs
    weights = init_weights(cfg.seed)
    opt = AdamWState()
    rng = np.random.default_rng(cfg.seed + 1)
    alpha = class_weights(train_labels)
    history = []
    log_fh = open(log_path, "w", newline="") if log_path else None
    writer = None
    if log_fh:
        writer = csv.writer(log_fh)
        writer.writerow(["epoch", "lr", "loss", "train_acc", "val_acc"])
    try:
        for epoch in range(epochs):
            t0 = time.perf_counter()
            weights, m = train_epoch(train_rasters, train_labels, weights,
                                     cfg, epoch, opt, rng, p, alpha,
                                     l1_spiking)
            val_acc = (evaluate_accuracy(val_rasters, val_labels, weights, p,
                                         l1_spiking=l1_spiking)
                       if len(val_labels) else float("nan"))
            row = {"epoch": epoch, "lr": m["lr"], "loss": m["loss"],
                   "train_acc": m["accuracy"], "val_acc": val_acc,
                   "seconds": time.perf_counter() - t0}
            history.append(row)
            if writer:
                writer.writerow([epoch, f"{m['lr']:.6e}", f"{m['loss']:.6f}",
                                 f"{m['accuracy']:.4f}", f"{val_acc:.4f}"])
                log_fh.flush()
            if progress:
                progress(row)
    finally:
        if log_fh:
            log_fh.close()
    return weights, history
