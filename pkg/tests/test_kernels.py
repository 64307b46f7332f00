"""Both kernel paths (jitted and pure numpy) must agree on every kernel."""

import numpy as np
import pytest

from spikespell import _kernels


def pairs():
    """(jitted callable, plain-python twin) for each kernel, when available."""
    if not _kernels.NUMBA_ENABLED:
        return []
    return [
        (_kernels.lif_forward, _kernels.lif_forward.py_func),
        (_kernels.lif_backward, _kernels.lif_backward.py_func),
        (_kernels.const_drive_spike_counts,
         _kernels.const_drive_spike_counts.py_func),
        (_kernels.deploy_lif_layer, _kernels.deploy_lif_layer.py_func),
    ]


needs_numba = pytest.mark.skipif(not _kernels.NUMBA_ENABLED,
                                 reason="numpy path already active")


@needs_numba
class TestDualPath:
    def test_lif_forward_and_backward(self, rng):
        cur = rng.normal(0.4, 0.6, (30, 4, 16))
        for hard in (0, 1):
            u_a, s_a = _kernels.lif_forward(cur, 0.92, 1.0, 25.0, hard)
            u_b, s_b = _kernels.lif_forward.py_func(cur, 0.92, 1.0, 25.0, hard)
            assert np.array_equal(u_a, u_b)
            assert np.array_equal(s_a, s_b)
            gs = rng.normal(size=cur.shape)
            g_a = _kernels.lif_backward(u_a, gs, 0.92, 1.0, 25.0)
            g_b = _kernels.lif_backward.py_func(u_b, gs, 0.92, 1.0, 25.0)
            assert np.array_equal(g_a, g_b)

    def test_const_drive_counts(self, rng):
        drive = rng.uniform(0, 1.2, (20, 30))
        a = _kernels.const_drive_spike_counts(drive, 0.92, 1.0, 35)
        b = _kernels.const_drive_spike_counts.py_func(drive, 0.92, 1.0, 35)
        assert np.array_equal(a, b)

    def test_deploy_layer(self, rng):
        exc = rng.uniform(0, 3, (50, 2, 8))
        inh = rng.uniform(0, 1, (50, 2, 8))
        args = (0.8187, 0.7165, 0.92, -65.0, -65.0, -61.0, 1)
        a = _kernels.deploy_lif_layer(exc, inh, *args)
        b = _kernels.deploy_lif_layer.py_func(exc, inh, *args)
        assert np.array_equal(a, b)

    def test_bin_events_loop_matches_numpy(self, rng):
        n = 3000
        t = np.sort(rng.integers(0, 40_000, n))
        x = rng.integers(0, 64, n)
        y = rng.integers(0, 48, n)
        a = _kernels.bin_events_loop(t, x, y, 5, 3, 40, 35, 1000, 48)
        b = _kernels.bin_events_numpy(t, x, y, 5, 3, 40, 35, 1000, 48)
        assert np.array_equal(a, b)

    def test_dvs_emit_paths_identical(self, rng):
        frames = rng.uniform(1.0, 255.0, (8, 12, 12))
        logs = np.log(frames + 1.0)
        a = _kernels._dvs_emit_numba(logs, 0.15, 0.15, 1000)
        b = _kernels._dvs_emit_numpy(logs, 0.15, 0.15, 1000)
        for arr_a, arr_b in zip(a, b):
            assert np.array_equal(arr_a, arr_b)
