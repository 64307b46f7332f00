"""Hot numeric kernels, JIT-compiled with numba when available.

Every sequential kernel is written as vectorized numpy with an explicit
loop only over the time axis, so the identical source runs either through
``numba.njit`` or as plain numpy. Event-level kernels (binning, DVS
emission) additionally have a vectorized numpy twin because their loop
form would be slow without JIT.

Set ``SPIKESPELL_NO_NUMBA=1`` to force the pure-numpy path.
``benchmarks/bench_kernels.py`` compares both paths.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("SPIKESPELL_NO_NUMBA", "") != "1"


def maybe_jit(func):
    """Apply ``njit(cache=True)`` unless the numpy path is forced."""
    if NUMBA_ENABLED:
        return _numba_njit(cache=True)(func)
    return func


# ---------------------------------------------------------------------------
# Leaky integrate-and-fire, training dynamics (decay beta, soft reset)
# ---------------------------------------------------------------------------


@maybe_jit
def lif_forward(currents, beta, theta, k_slope, hard):
    """Run one LIF population over T steps.

    currents: (T, B, N) synaptic drive per step.
    Returns (u, s): pre-reset membranes and emitted spikes, both (T, B, N).
    hard != 0 -> Heaviside spikes; hard == 0 -> relaxed fast-sigmoid output
    (u - theta) / (1 + k|u - theta|), used for gradient checking. The soft
    reset subtracts theta * s either way, so both modes share one recurrence.
    """
    T, B, N = currents.shape
    u = np.empty((T, B, N))
    s = np.empty((T, B, N))
    v = np.zeros((B, N))
    for t in range(T):
        ut = beta * v + currents[t]
        if hard != 0:
            st = (ut >= theta).astype(np.float64)
        else:
            x = ut - theta
            st = x / (1.0 + k_slope * np.abs(x))
        u[t] = ut
        s[t] = st
        v = ut - theta * st
    return u, s


@maybe_jit
def lif_backward(u, grad_s, beta, theta, k_slope):
    """Backpropagate through the LIF recurrence of ``lif_forward``.

    u: (T, B, N) pre-reset membranes saved by the forward pass.
    grad_s: (T, B, N) direct loss gradient w.r.t. each emitted spike.
    Returns grad w.r.t. the input currents (== grad w.r.t. u at each step).

    d(spike)/d(u) is the fast-sigmoid surrogate 1 / (1 + k|u - theta|)^2,
    which is exact in relaxed mode. carry tracks dL/d(post-reset membrane):
    it feeds the next step through beta and the current step both directly
    (v = u - theta s) and through the reset path (-theta per spike).
    """
    T, B, N = u.shape
    grad_i = np.empty((T, B, N))
    carry = np.zeros((B, N))
    for t in range(T - 1, -1, -1):
        x = u[t] - theta
        sg = 1.0 / (1.0 + k_slope * np.abs(x)) ** 2
        du = (grad_s[t] - theta * carry) * sg + carry
        grad_i[t] = du
        carry = beta * du
    return grad_i


@maybe_jit
def const_drive_spike_counts(drive, beta, theta, steps):
    """Spike counts of LIF units driven by a constant input for ``steps``.

    drive: (H, W) non-negative drive applied every step. Returns int64
    counts of threshold crossings with soft reset.
    """
    H, W = drive.shape
    counts = np.zeros((H, W), np.int64)
    v = np.zeros((H, W))
    for _ in range(steps):
        u = beta * v + drive
        spk = (u >= theta).astype(np.float64)
        counts += spk.astype(np.int64)
        v = u - theta * spk
    return counts


# ---------------------------------------------------------------------------
# Deployment dynamics (exponential synapses, refractory period)
# ---------------------------------------------------------------------------


@maybe_jit
def deploy_lif_layer(
    exc,
    inh,
    decay_e,
    decay_i,
    decay_m,
    v_rest,
    v_reset,
    v_thresh,
    refrac_steps,
):
    """Simulate one population of current-based exponential-synapse LIF.

    exc/inh: (T, B, N) arrival magnitudes per step (already delayed and
    non-negative). Per step: currents decay then integrate arrivals; a
    refractory neuron is held at v_reset for refrac_steps steps; otherwise
    v relaxes exponentially toward v_rest and adds (i_e - i_i). Firing uses
    the >= threshold convention. Returns spikes (T, B, N).
    """
    T, B, N = exc.shape
    s = np.zeros((T, B, N))
    i_e = np.zeros((B, N))
    i_i = np.zeros((B, N))
    v = np.full((B, N), v_rest)
    refrac = np.zeros((B, N), np.int64)
    for t in range(T):
        i_e = i_e * decay_e + exc[t]
        i_i = i_i * decay_i + inh[t]
        held = (refrac > 0).astype(np.float64)
        refrac = np.maximum(refrac - 1, 0)
        integ = v_rest + (v - v_rest) * decay_m + (i_e - i_i)
        v = held * v_reset + (1.0 - held) * integ
        spk = (1.0 - held) * (v >= v_thresh).astype(np.float64)
        v = spk * v_reset + (1.0 - spk) * v
        spk_i = spk.astype(np.int64)
        refrac = refrac * (1 - spk_i) + refrac_steps * spk_i
        s[t] = spk
    return s


# ---------------------------------------------------------------------------
# Event binning (loop kernel + vectorized numpy twin)
# ---------------------------------------------------------------------------


@maybe_jit
def bin_events_loop(t_us, x, y, left, top, side, T, dt_us, out_size):
    raster = np.zeros((T, out_size, out_size), np.uint8)
    for i in range(t_us.shape[0]):
        ti = t_us[i] // dt_us
        if ti >= T:
            continue
        xi = x[i] - left
        yi = y[i] - top
        if xi < 0 or yi < 0 or xi >= side or yi >= side:
            continue
        raster[ti, (yi * out_size) // side, (xi * out_size) // side] = 1
    return raster


def bin_events_numpy(t_us, x, y, left, top, side, T, dt_us, out_size):
    raster = np.zeros((T, out_size, out_size), np.uint8)
    ti = t_us // dt_us
    xi = x - left
    yi = y - top
    keep = (ti < T) & (xi >= 0) & (yi >= 0) & (xi < side) & (yi < side)
    raster[ti[keep], (yi[keep] * out_size) // side, (xi[keep] * out_size) // side] = 1
    return raster


def bin_events(t_us, x, y, left, top, side, T, dt_us, out_size):
    if NUMBA_ENABLED:
        return bin_events_loop(t_us, x, y, left, top, side, T, dt_us, out_size)
    return bin_events_numpy(t_us, x, y, left, top, side, T, dt_us, out_size)


# ---------------------------------------------------------------------------
# DVS pixel model (loop kernels + vectorized numpy twin)
# ---------------------------------------------------------------------------
#
# Per pixel a reference log-intensity is kept; each new frame emits
# floor(|L - L_ref| / C) events of the step's sign, timestamped
# (k-1)*dt < t <= k*dt on an even integer grid, and advances the reference
# by the emitted multiple of C. Both paths generate events in identical
# (frame, row-major pixel, sub-index) order so outputs match bit for bit.


@maybe_jit
def _dvs_count_loop(log_frames, c_pos, c_neg):
    F, H, W = log_frames.shape
    ref = log_frames[0].copy()
    total = 0
    for k in range(1, F):
        for yy in range(H):
            for xx in range(W):
                d = log_frames[k, yy, xx] - ref[yy, xx]
                if d > 0.0:
                    n = int(d / c_pos)
                    ref[yy, xx] += n * c_pos
                    total += n
                elif d < 0.0:
                    n = int(-d / c_neg)
                    ref[yy, xx] -= n * c_neg
                    total += n
    return total


@maybe_jit
def _dvs_fill_loop(log_frames, c_pos, c_neg, frame_dt_us, out_t, out_x, out_y, out_p):
    F, H, W = log_frames.shape
    ref = log_frames[0].copy()
    idx = 0
    for k in range(1, F):
        t_prev = (k - 1) * frame_dt_us
        for yy in range(H):
            for xx in range(W):
                d = log_frames[k, yy, xx] - ref[yy, xx]
                if d > 0.0:
                    n = int(d / c_pos)
                    ref[yy, xx] += n * c_pos
                    pol = 1
                elif d < 0.0:
                    n = int(-d / c_neg)
                    ref[yy, xx] -= n * c_neg
                    pol = -1
                else:
                    continue
                for j in range(1, n + 1):
                    out_t[idx] = t_prev + (j * frame_dt_us) // n
                    out_x[idx] = xx
                    out_y[idx] = yy
                    out_p[idx] = pol
                    idx += 1
    return idx


def _dvs_emit_numba(log_frames, c_pos, c_neg, frame_dt_us):
    total = _dvs_count_loop(log_frames, c_pos, c_neg)
    out_t = np.empty(total, np.int64)
    out_x = np.empty(total, np.int64)
    out_y = np.empty(total, np.int64)
    out_p = np.empty(total, np.int64)
    _dvs_fill_loop(log_frames, c_pos, c_neg, frame_dt_us, out_t, out_x, out_y, out_p)
    return out_t, out_x, out_y, out_p


def _dvs_emit_numpy(log_frames, c_pos, c_neg, frame_dt_us):
    F, H, W = log_frames.shape
    ref = log_frames[0].copy()
    xs_grid = np.tile(np.arange(W, dtype=np.int64), H)
    ys_grid = np.repeat(np.arange(H, dtype=np.int64), W)
    chunks_t, chunks_x, chunks_y, chunks_p = [], [], [], []
    for k in range(1, F):
        t_prev = (k - 1) * frame_dt_us
        d = (log_frames[k] - ref).ravel()
        pos = d > 0.0
        neg = d < 0.0
        n = np.zeros(d.shape, np.int64)
        n[pos] = (d[pos] / c_pos).astype(np.int64)
        n[neg] = (-d[neg] / c_neg).astype(np.int64)
        ref_flat = ref.ravel()
        ref_flat[pos] += n[pos] * c_pos
        ref_flat[neg] -= n[neg] * c_neg
        active = n > 0
        if not active.any():
            continue
        reps = n[active]
        total = int(reps.sum())
        # sub-index j = 1..n within each pixel's burst
        j = np.arange(total, dtype=np.int64) - np.repeat(
            np.cumsum(reps) - reps, reps
        ) + 1
        chunks_t.append(t_prev + (j * frame_dt_us) // np.repeat(reps, reps))
        chunks_x.append(np.repeat(xs_grid[active], reps))
        chunks_y.append(np.repeat(ys_grid[active], reps))
        pol = np.where(pos, 1, -1).astype(np.int64)
        chunks_p.append(np.repeat(pol[active], reps))
    if not chunks_t:
        z = np.empty(0, np.int64)
        return z, z.copy(), z.copy(), z.copy()
    return (
        np.concatenate(chunks_t),
        np.concatenate(chunks_x),
        np.concatenate(chunks_y),
        np.concatenate(chunks_p),
    )


def dvs_emit(log_frames, c_pos, c_neg, frame_dt_us):
    """Emit (t, x, y, p) arrays from a stack of log-intensity frames."""
    if NUMBA_ENABLED:
        return _dvs_emit_numba(log_frames, c_pos, c_neg, frame_dt_us)
    return _dvs_emit_numpy(log_frames, c_pos, c_neg, frame_dt_us)
