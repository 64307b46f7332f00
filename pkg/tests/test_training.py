import math

import numpy as np
import pytest

from spikespell import _kernels
from spikespell.network import LifParamsTrain, cascade_forward, conv_currents, extract_patches
from spikespell.training import (
    AdamWState,
    conv_gradient,
    TrainConfig,
    adamw_step,
    batch_gradients,
    cascade_backward,
    class_weights,
    focal_loss_grad,
    init_weights,
    loss_and_select,
    lr_schedule,
    train_epoch,
)


class TestInit:
    def test_conv_std_matches_kaiming_target(self):
        # sqrt(2/25) ~ 0.2828; pool draws across seeds for a 1e4 sample
        target = math.sqrt(2.0 / 25.0)
        samples = np.concatenate([init_weights(s).conv.ravel()
                                  for s in range(100)])
        assert samples.size == 10_000
        assert abs(samples.std() - target) / target < 0.05

    def test_fc_bounds_match_xavier(self):
        w = init_weights(5)
        b_hidden = math.sqrt(6.0 / (256 + 512))
        b_out = math.sqrt(6.0 / (512 + 24))
        assert b_hidden == pytest.approx(0.08839, abs=1e-5)
        assert np.abs(w.fc_hidden).max() <= b_hidden
        assert np.abs(w.fc_out).max() <= b_out
        # uniform, not degenerate
        assert np.abs(w.fc_hidden).max() > 0.9 * b_hidden

    def test_same_seed_identical(self):
        a, b = init_weights(7), init_weights(7)
        assert np.array_equal(a.conv, b.conv)
        assert np.array_equal(a.fc_hidden, b.fc_hidden)
        assert np.array_equal(a.fc_out, b.fc_out)


class TestClassWeights:
    def test_mean_is_one(self, rng):
        labels = rng.integers(0, 24, 500)
        alpha = class_weights(labels)
        assert alpha.mean() == pytest.approx(1.0)

    def test_rare_class_weighs_more(self):
        labels = np.array([0] * 90 + [1] * 10)
        alpha = class_weights(labels)
        assert alpha[1] > alpha[0] > 0


class TestFocalLoss:
    def cfg(self, **kw):
        defaults = dict(gamma=2.0, epsilon=0.0, mining_threshold=0.65)
        defaults.update(kw)
        return TrainConfig(**defaults)

    def test_perfect_prediction_loss_vanishes(self):
        logits = np.zeros((1, 24))
        logits[0, 5] = 60.0
        loss, _ = loss_and_select(logits, [5], self.cfg())
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_uniform_probabilities_give_log24(self):
        # gamma=0, eps=0 reduces to cross entropy: ln 24 ~ 3.178
        loss, _ = loss_and_select(np.zeros((4, 24)), [0, 3, 7, 23],
                                  self.cfg(gamma=0.0))
        assert loss == pytest.approx(math.log(24), rel=1e-12)

    def test_mining_mask_selects_hard_samples(self):
        # arrange p_label ~ (0.9, 0.5, 0.7) with a 2-class toyed softmax
        p_targets = [0.9, 0.5, 0.7]
        logits = np.zeros((3, 24))
        for i, p in enumerate(p_targets):
            # logit gap g gives p = e^g / (e^g + 23)
            logits[i, 0] = math.log(23 * p / (1 - p))
        probs = np.exp(logits[:, 0]) / (np.exp(logits[:, 0]) + 23)
        assert np.allclose(probs, p_targets, atol=1e-12)
        _, mask = loss_and_select(logits, [0, 0, 0], self.cfg())
        assert mask.tolist() == [False, True, False]

    def test_ohem_floor_falls_back_to_full_batch(self):
        logits = np.zeros((4, 24))
        logits[:, 2] = 50.0  # every sample easy
        loss, mask = loss_and_select(logits, [2, 2, 2, 2], self.cfg())
        assert mask.all()
        assert math.isfinite(loss)

    def test_gradient_matches_finite_differences(self, rng):
        cfg = TrainConfig()  # gamma 2, eps 0.1
        logits = rng.normal(0, 2.0, (6, 24))
        labels = rng.integers(0, 24, 6)
        alpha = class_weights(rng.integers(0, 24, 200))
        _, _, grad = focal_loss_grad(logits, labels, cfg, alpha)
        h = 1e-6
        for _ in range(40):
            i = int(rng.integers(0, 6))
            j = int(rng.integers(0, 24))
            lp, lm = logits.copy(), logits.copy()
            lp[i, j] += h
            lm[i, j] -= h
            fp, _, _ = focal_loss_grad(lp, labels, cfg, alpha)
            fm, _, _ = focal_loss_grad(lm, labels, cfg, alpha)
            fd = (fp - fm) / (2 * h)
            assert grad[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-9)


class TestSchedule:
    def test_starts_at_lr_max(self):
        assert lr_schedule(0, TrainConfig()) == pytest.approx(3e-3)

    def test_cycle_end_approaches_eta_min(self):
        cfg = TrainConfig()
        assert lr_schedule(24.999, cfg) == pytest.approx(2e-7, abs=2e-7)
        assert lr_schedule(24.999, cfg) >= cfg.eta_min

    def test_warm_restart_epochs(self):
        cfg = TrainConfig()
        # cycles: [0, 25), [25, 75), [75, 175) with t_mult=2
        for start in (25, 75, 175):
            assert lr_schedule(start, cfg) == pytest.approx(cfg.lr_max)

    def test_continuous_within_cycles_and_bounded(self):
        cfg = TrainConfig()
        xs = np.linspace(0, 24.999, 400)
        vals = [lr_schedule(x, cfg) for x in xs]
        assert all(v2 < v1 + 1e-12 for v1, v2 in zip(vals, vals[1:]))
        assert min(vals) >= cfg.eta_min
        assert max(vals) <= cfg.lr_max


class TestAdamW:
    def test_zero_gradient_shrinks_by_decay_factor(self):
        cfg = TrainConfig(weight_decay=1e-2)
        w = {"w": np.full(4, 2.0)}
        state = AdamWState()
        adamw_step(w, {"w": np.zeros(4)}, state, lr=0.1, cfg=cfg)
        assert np.allclose(w["w"], 2.0 * (1 - 0.1 * 1e-2), rtol=0, atol=0)

    def test_zero_lr_is_bitwise_noop(self, rng):
        cfg = TrainConfig()
        w0 = rng.normal(size=(3, 3))
        w = {"w": w0.copy()}
        state = AdamWState()
        adamw_step(w, {"w": rng.normal(size=(3, 3))}, state, lr=0.0, cfg=cfg)
        assert np.array_equal(w["w"], w0)


def relaxed_loss(i1, w_hidden, w_out, proj, p, k):
    out = cascade_forward(i1, w_hidden, w_out, p, k_slope=k, hard=False)
    return float((out["counts"] * proj).sum())


class TestBpttGradients:
    def test_toy_net_matches_central_differences(self, rng):
        # surrogate-relaxed 4-4-2 net over 5 steps: backward must equal the
        # true gradient of the relaxed forward
        p = LifParamsTrain()
        k = 25.0
        T, B = 5, 3
        i1 = rng.normal(0.5, 0.8, (T, B, 4))
        w_hidden = rng.normal(0, 0.8, (4, 4))
        w_out = rng.normal(0, 0.8, (4, 2))
        proj = rng.normal(size=(B, 2))
        out = cascade_forward(i1, w_hidden, w_out, p, k_slope=k, hard=False)
        grad_s3 = np.broadcast_to(proj, (T, B, 2)).copy()
        grads = cascade_backward(out, w_hidden, w_out, grad_s3, p, k)
        h = 1e-6
        checked, ok = 0, 0
        for w, name in ((w_hidden, "fc_hidden"), (w_out, "fc_out")):
            for idx in np.ndindex(w.shape):
                wp, wm = w.copy(), w.copy()
                wp[idx] += h
                wm[idx] -= h
                if name == "fc_hidden":
                    fd = (relaxed_loss(i1, wp, w_out, proj, p, k)
                          - relaxed_loss(i1, wm, w_out, proj, p, k)) / (2 * h)
                else:
                    fd = (relaxed_loss(i1, w_hidden, wp, proj, p, k)
                          - relaxed_loss(i1, w_hidden, wm, proj, p, k)) / (2 * h)
                g = grads[name][idx]
                denom = max(abs(fd), abs(g), 1e-8)
                checked += 1
                ok += abs(g - fd) / denom < 1e-3
        assert checked == 24
        assert ok / checked >= 0.99

    def test_conv_gradient_matches_central_differences(self, rng):
        p = LifParamsTrain()
        k = 25.0
        rasters = (rng.random((1, 3, 48, 48)) < 0.2).astype(np.uint8)
        patches = extract_patches(rasters)
        conv = rng.normal(0, 0.3, (4, 5, 5))
        w_hidden = rng.normal(0, 0.1, (256, 512))
        w_out = rng.normal(0, 0.2, (512, 24))
        proj = rng.normal(size=(1, 24))

        def loss_of(cv):
            i1 = conv_currents(patches, cv)
            return relaxed_loss(i1, w_hidden, w_out, proj, p, k)

        i1 = conv_currents(patches, conv)
        out = cascade_forward(i1, w_hidden, w_out, p, k_slope=k, hard=False)
        core = cascade_backward(out, w_hidden, w_out,
                                np.broadcast_to(proj, (3, 1, 24)).copy(), p, k)
        grads = {"conv": conv_gradient(core["gi1"], patches)}
        h = 1e-6
        for _ in range(12):
            idx = tuple(int(rng.integers(0, d)) for d in (4, 5, 5))
            cp, cm = conv.copy(), conv.copy()
            cp[idx] += h
            cm[idx] -= h
            fd = (loss_of(cp) - loss_of(cm)) / (2 * h)
            g = grads["conv"][idx]
            assert g == pytest.approx(fd, rel=1e-3, abs=1e-7)

    @pytest.mark.parametrize("hard", [False, True])
    def test_single_neuron_two_step_hand_derivation(self, hard):
        # one input, one neuron, two steps: dL/dw for L = s1 + s2 with
        # u1 = w x1, u2 = beta (u1 - theta s1) + w x2 is, by the chain rule,
        #   sg1 x1 + sg2 (beta (x1 - theta sg1 x1) + x2)
        # where sg_t = 1 / (1 + k |u_t - theta|)^2 is the spike derivative.
        p = LifParamsTrain()
        k, w = 25.0, 0.8
        x1, x2 = 1.3, 0.9
        currents = np.array([[[w * x1]], [[w * x2]]])
        u, s = _kernels.lif_forward(currents, p.beta, p.threshold, k,
                                    1 if hard else 0)
        gi = _kernels.lif_backward(u, np.ones((2, 1, 1)), p.beta,
                                   p.threshold, k)
        implemented = gi[0, 0, 0] * x1 + gi[1, 0, 0] * x2

        sg1 = 1.0 / (1.0 + k * abs(u[0, 0, 0] - p.threshold)) ** 2
        sg2 = 1.0 / (1.0 + k * abs(u[1, 0, 0] - p.threshold)) ** 2
        if hard:
            ds1_dw = sg1 * x1  # surrogate in place of the step derivative
        else:
            ds1_dw = sg1 * x1  # exact fast-sigmoid derivative
        hand = sg1 * x1 + sg2 * (p.beta * (x1 - p.threshold * ds1_dw) + x2)
        assert implemented == pytest.approx(hand, abs=1e-6)
        # and in relaxed mode the hand expression is the true derivative
        if not hard:
            h = 1e-7

            def loss(wv):
                cur = np.array([[[wv * x1]], [[wv * x2]]])
                _, sv = _kernels.lif_forward(cur, p.beta, p.threshold, k, 0)
                return float(sv.sum())

            fd = (loss(w + h) - loss(w - h)) / (2 * h)
            assert implemented == pytest.approx(fd, rel=1e-5)


class TestTrainEpoch:
    def make_toy_data(self, rng, n=8):
        rasters = np.zeros((n, 6, 48, 48), np.uint8)
        labels = np.arange(n) % 2
        for i in range(n):
            block = (slice(None), slice(0, 20)) if labels[i] else (slice(None), slice(28, 48))
            rasters[i][:, block[1], :] = (rng.random((6, 20, 48)) < 0.5)
        return rasters, labels.astype(np.int64)

    def test_zero_lr_leaves_weights_bit_identical(self, rng):
        rasters, labels = self.make_toy_data(rng)
        cfg = TrainConfig(batch_size=4, seed=0)
        w = init_weights(0)
        before = (w.conv.copy(), w.fc_hidden.copy(), w.fc_out.copy())
        train_epoch(rasters, labels, w, cfg, 0, AdamWState(),
                    np.random.default_rng(0), lr_override=0.0)
        assert np.array_equal(w.conv, before[0])
        assert np.array_equal(w.fc_hidden, before[1])
        assert np.array_equal(w.fc_out, before[2])

    def test_seeded_runs_are_bit_reproducible(self, rng):
        rasters, labels = self.make_toy_data(rng)
        cfg = TrainConfig(batch_size=4, seed=0)
        results = []
        for _ in range(2):
            w = init_weights(0)
            opt = AdamWState()
            gen = np.random.default_rng(123)
            for epoch in range(3):
                train_epoch(rasters, labels, w, cfg, epoch, opt, gen)
            results.append((w.conv.copy(), w.fc_hidden.copy(), w.fc_out.copy()))
        for a, b in zip(*results):
            assert np.array_equal(a, b)

    def test_divergence_raises_with_diagnostics(self, rng):
        # NaN readout weights poison the membrane-sum logits; the spiking
        # nonlinearity would otherwise mask them as silent neurons
        rasters, labels = self.make_toy_data(rng)
        cfg = TrainConfig(batch_size=4, readout="membrane_sum")
        w = init_weights(0)
        w.conv[:] = 1.0
        w.fc_hidden[:] = 1.0
        w.fc_out[:] = np.nan
        from spikespell.training import TrainingDiverged

        with pytest.raises(TrainingDiverged, match="epoch 0"):
            train_epoch(rasters, labels, w, cfg, 0, AdamWState(),
                        np.random.default_rng(0))

    def test_single_sample_overfit_reaches_full_accuracy(self, rng):
        raster = (rng.random((1, 20, 48, 48)) < 0.15).astype(np.uint8)
        labels = np.array([13])
        cfg = TrainConfig(batch_size=1, seed=2)
        w = init_weights(2)
        opt = AdamWState()
        gen = np.random.default_rng(5)
        for epoch in range(200):
            _, m = train_epoch(raster, labels, w, cfg, epoch, opt, gen)
            if m["accuracy"] == 1.0 and epoch > 3:
                break
        _, m = train_epoch(raster, labels, w, cfg, 0, opt, gen,
                           lr_override=0.0)
        assert m["accuracy"] == 1.0

    def test_batch_gradients_reports_loss_and_logits(self, rng):
        rasters, labels = self.make_toy_data(rng)
        cfg = TrainConfig(batch_size=8)
        w = init_weights(1)
        loss, logits, grads = batch_gradients(rasters, labels, w,
                                              LifParamsTrain(), cfg)
        assert math.isfinite(loss)
        assert logits.shape == (8, 24)
        assert set(grads) == {"conv", "fc_hidden", "fc_out"}
