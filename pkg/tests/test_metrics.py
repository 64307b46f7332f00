import numpy as np
import pytest

from spikespell.metrics import (
    EnergyReport,
    SpikeLedger,
    energy_report,
    evaluate,
    format_energy_table,
    load_ledger,
    save_ledger,
)


def ledger_of(l1, l2, l3, n=120, window=35.0):
    return SpikeLedger(l1, l2, l3, n, window)


class TestEnergyModel:
    def test_synthetic_mnist_measurement_row(self):
        report = energy_report(ledger_of(719.31, 2235.82, 156.35))
        assert round(report.energy_nj, 2) == 24891.84
        assert round(report.dynamic_power_mw, 3) == 0.711
        assert report.latency_ms == 3.0

    def test_native_recording_measurement_row(self):
        report = energy_report(ledger_of(720.95, 1681.92, 73.09))
        assert round(report.energy_nj, 2) == 19807.68
        assert abs(report.dynamic_power_mw - 0.565) <= 0.002
        assert report.latency_ms == 3.0

    def test_zero_ledger(self):
        report = energy_report(ledger_of(0.0, 0.0, 0.0))
        assert report.energy_nj == 0.0
        assert report.dynamic_power_mw == 0.0
        assert report.latency_ms == 3.0

    def test_linearity_in_spike_counts(self, rng):
        for _ in range(20):
            l1, l2, l3 = rng.uniform(0, 3000, 3)
            k = float(rng.uniform(0.1, 5))
            base = energy_report(ledger_of(l1, l2, l3))
            scaled = energy_report(ledger_of(k * l1, k * l2, k * l3))
            assert scaled.energy_nj == pytest.approx(k * base.energy_nj)

    def test_zero_window_rejected(self):
        with pytest.raises(ValueError):
            energy_report(ledger_of(1, 1, 1, window=0.0))

    def test_static_terms_add_to_total_only(self):
        report = energy_report(ledger_of(719.31, 2235.82, 156.35),
                               p_idle_mw=200.0, p_baseline_mw=50.0,
                               p_per_neuron_mw=0.01, n_neurons=3096)
        assert round(report.dynamic_power_mw, 3) == 0.711
        assert report.static_power_mw == pytest.approx(250.0 + 30.96)
        assert report.total_power_mw == pytest.approx(
            report.dynamic_power_mw + report.static_power_mw)

    def test_table_layout_mentions_all_rows(self):
        ledger = ledger_of(719.31, 2235.82, 156.35)
        text = format_energy_table(ledger, energy_report(ledger))
        for token in ("Conv (L1)", "Hidden (L2)", "Output (L3)", "Total",
                      "3111.48", "24891.84", "0.711"):
            assert token in text


class TestLedger:
    def test_totals_and_averages(self):
        ledger = SpikeLedger.from_totals(100.0, 200.0, 50.0, 4, 35.0)
        assert ledger.l1 == 25.0 and ledger.total == 87.5

    def test_merge_is_weighted(self):
        a = SpikeLedger.from_totals(100.0, 0.0, 0.0, 2, 35.0)
        b = SpikeLedger.from_totals(400.0, 0.0, 0.0, 8, 35.0)
        m = a.merged(b)
        assert m.sample_count == 10
        assert m.l1 == pytest.approx(50.0)

    def test_json_round_trip(self, tmp_path):
        ledger = ledger_of(1.5, 2.5, 3.5, n=7)
        path = tmp_path / "ledger.json"
        save_ledger(path, ledger)
        assert load_ledger(path) == ledger


class TestEvaluate:
    def test_all_correct(self):
        labels = np.arange(24)
        m = evaluate(labels, labels)
        assert m["accuracy"] == 1.0
        assert np.array_equal(np.diag(m["confusion"]), np.ones(24))
        assert np.nansum(m["per_class"]) == 24

    def test_two_classes_swapped(self):
        labels = np.array([0, 1])
        preds = np.array([1, 0])
        m = evaluate(preds, labels)
        assert m["accuracy"] == 0.0
        assert m["per_class"][0] == 0.0 and m["per_class"][1] == 0.0

    def test_counting_example(self):
        m = evaluate([0, 1, 1], [0, 0, 1])
        assert m["accuracy"] == pytest.approx(2 / 3)
        assert m["per_class"][0] == pytest.approx(0.5)
        assert m["per_class"][1] == pytest.approx(1.0)
        assert m["confusion"][0][1] == 1

    def test_row_sums_and_trace(self, rng):
        labels = rng.integers(0, 24, 300)
        preds = rng.integers(0, 24, 300)
        m = evaluate(preds, labels)
        assert np.array_equal(m["confusion"].sum(axis=1),
                              np.bincount(labels, minlength=24))
        assert np.trace(m["confusion"]) / 300 == pytest.approx(m["accuracy"])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            evaluate([], [])
