import math

import numpy as np
import pytest

from spikespell.dvs import DvsConfig, convert_image_to_events, emit_events, random_walk_sequence
from spikespell.events import write_events


def two_frames(before, after):
    return np.array([[[before]], [[after]]], np.float64)


class TestRandomWalk:
    def test_single_frame_is_upsampled_image(self):
        img = np.arange(4, dtype=np.uint8).reshape(2, 2)
        cfg = DvsConfig(n_frames=1, upsample_factor=3, seed=0)
        frames = random_walk_sequence(img, cfg)
        assert frames.shape == (1, 6, 6)
        assert frames[0, 0, 0] == 0 and frames[0, 5, 5] == 3
        assert (frames[0, :3, :3] == 0).all() and (frames[0, 3:, 3:] == 3).all()

    def test_zero_image_stays_zero(self):
        cfg = DvsConfig(n_frames=10, seed=3)
        frames = random_walk_sequence(np.zeros((5, 5)), cfg)
        assert frames.sum() == 0

    def test_same_seed_same_sequence(self, rng):
        img = rng.integers(0, 255, (9, 9)).astype(np.uint8)
        cfg = DvsConfig(n_frames=20, seed=42)
        a = random_walk_sequence(img, cfg)
        b = random_walk_sequence(img, cfg)
        assert np.array_equal(a, b)

    def test_steps_are_unit_shifts(self, rng):
        img = rng.integers(1, 255, (7, 7)).astype(np.uint8)
        cfg = DvsConfig(n_frames=15, upsample_factor=1, seed=5)
        frames = random_walk_sequence(img, cfg)
        for k in range(1, 15):
            prev, cur = frames[k - 1], frames[k]
            found = False
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    shifted = np.zeros_like(prev)
                    xs0, xs1 = max(dx, 0), min(7 + dx, 7)
                    ys0, ys1 = max(dy, 0), min(7 + dy, 7)
                    shifted[ys0:ys1, xs0:xs1] = prev[ys0 - dy:ys1 - dy, xs0 - dx:xs1 - dx]
                    found = found or np.array_equal(shifted, cur)
            assert found


class TestEmitEvents:
    def test_constant_frames_emit_nothing(self):
        frames = np.full((5, 4, 4), 37.0)
        assert len(emit_events(frames, DvsConfig())) == 0

    def test_doubling_intensity_gives_four_positive_events(self):
        # floor(ln 2 / 0.15) = floor(4.6209) = 4
        cfg = DvsConfig(epsilon_intensity=1e-9)
        stream = emit_events(two_frames(100.0, 200.0), cfg)
        assert len(stream) == 4
        assert (stream.p == 1).all()
        assert stream.t.max() <= cfg.frame_dt_us

    def test_halving_intensity_gives_four_negative_events(self):
        cfg = DvsConfig(epsilon_intensity=1e-9)
        stream = emit_events(two_frames(200.0, 100.0), cfg)
        assert len(stream) == 4
        assert (stream.p == -1).all()

    def test_timestamps_linearly_spaced_in_half_open_interval(self):
        cfg = DvsConfig(epsilon_intensity=1e-9, frame_dt_us=1000)
        stream = emit_events(two_frames(100.0, 200.0), cfg)
        assert stream.t.tolist() == [250, 500, 750, 1000]

    def test_counts_match_scalar_reference_recurrence(self, rng):
        # independent per-pixel oracle over random intensity walks
        cfg = DvsConfig(seed=0)
        c = cfg.contrast_threshold_pos
        for _ in range(50):
            walk = rng.uniform(0.0, 255.0, size=12)
            frames = walk.reshape(-1, 1, 1)
            stream = emit_events(frames, cfg)
            ref = math.log(walk[0] + cfg.epsilon_intensity)
            expected = []
            for k in range(1, len(walk)):
                level = math.log(walk[k] + cfg.epsilon_intensity)
                d = level - ref
                n = int(abs(d) // c)
                expected.extend([1 if d > 0 else -1] * n)
                ref += math.copysign(n * c, d)
            assert stream.p.tolist() == expected


class TestConvertImage:
    def test_zero_image_empty_stream(self):
        stream = convert_image_to_events(np.zeros((28, 28), np.uint8), DvsConfig(seed=1))
        assert len(stream) == 0

    def test_deterministic_bytes(self, rng, tmp_path):
        img = rng.integers(0, 255, (28, 28)).astype(np.uint8)
        cfg = DvsConfig(seed=42)
        a, b = tmp_path / "a.evs", tmp_path / "b.evs"
        write_events(a, convert_image_to_events(img, cfg))
        write_events(b, convert_image_to_events(img, cfg))
        assert a.read_bytes() == b.read_bytes()

    def test_sample_bounds_and_duration(self, rng):
        img = rng.integers(0, 255, (28, 28)).astype(np.uint8)
        cfg = DvsConfig(seed=7, upsample_factor=4, n_frames=36, frame_dt_us=1000)
        stream = convert_image_to_events(img, cfg)
        assert len(stream) > 0
        assert stream.width == 112 and stream.height == 112
        assert stream.x.max() < 112 and stream.y.max() < 112
        assert stream.duration_us <= 35_000  # 35 ms window

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DvsConfig(contrast_threshold_pos=0.0)
        with pytest.raises(ValueError):
            DvsConfig(upsample_factor=0)
