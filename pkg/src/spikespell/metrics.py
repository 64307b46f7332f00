"""Spike accounting, the dynamic energy/latency model, classification metrics.

Energy follows the synaptic-event model of the target platform: each
emitted spike is charged ``p_s_nj`` nanojoules, dynamic power is that
energy spread over the sample window, and inference latency is one clock
tick per synaptic stage plus one for input processing. Idle/baseline/
per-neuron terms are carried as optional inputs (default 0) and only
affect the separate total_power field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

N_CLASSES = 24


@dataclass(frozen=True)
class SpikeLedger:
    """Average spikes per sample for the three populations."""

    l1: float
    l2: float
    l3: float
    sample_count: int
    window_ms: float

    @property
    def total(self) -> float:
        return self.l1 + self.l2 + self.l3

    @classmethod
    def from_totals(cls, l1_total, l2_total, l3_total, sample_count, window_ms):
        n = max(int(sample_count), 1)
        return cls(l1_total / n, l2_total / n, l3_total / n, int(sample_count),
                   float(window_ms))

    def merged(self, other: "SpikeLedger") -> "SpikeLedger":
        if other.window_ms != self.window_ms:
            raise ValueError("cannot merge ledgers with different windows")
        n = self.sample_count + other.sample_count
        return SpikeLedger.from_totals(
            self.l1 * self.sample_count + other.l1 * other.sample_count,
            self.l2 * self.sample_count + other.l2 * other.sample_count,
            self.l3 * self.sample_count + other.l3 * other.sample_count,
            n, self.window_ms)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SpikeLedger":
        return cls(float(d["l1"]), float(d["l2"]), float(d["l3"]),
                   int(d["sample_count"]), float(d["window_ms"]))


@dataclass(frozen=True)
class EnergyReport:
    energy_nj: float  # p_s_nj * average spikes per sample
    dynamic_power_mw: float  # energy over the sample window
    latency_ms: float  # (stages + 1) * dt
    p_s_nj: float
    total_power_mw: float  # dynamic + optional static terms
    static_power_mw: float

    def to_json(self) -> dict:
        return asdict(self)


def energy_report(ledger: SpikeLedger, p_s_nj: float = 8.0, stages: int = 2,
                  dt_ms: float = 1.0, p_idle_mw: float = 0.0,
                  p_baseline_mw: float = 0.0, p_per_neuron_mw: float = 0.0,
                  n_neurons: int = 0) -> EnergyReport:
    """Derive the energy/power/latency figures from a spike ledger."""
    if ledger.window_ms <= 0:
        raise ValueError("ledger window must be positive")
    energy_nj = p_s_nj * ledger.total
    dynamic_mw = energy_nj / (ledger.window_ms * 1e3)
    static_mw = p_idle_mw + p_baseline_mw + p_per_neuron_mw * n_neurons
    return EnergyReport(energy_nj, dynamic_mw, (stages + 1) * dt_ms, p_s_nj,
                        dynamic_mw + static_mw, static_mw)


def format_energy_table(ledger: SpikeLedger, report: EnergyReport) -> str:
    rows = [
        ("Layer", "Avg Spikes"),
        ("Conv (L1)", f"{ledger.l1:.2f}"),
        ("Hidden (L2)", f"{ledger.l2:.2f}"),
        ("Output (L3)", f"{ledger.l3:.2f}"),
        ("Total", f"{ledger.total:.2f}"),
        ("Energy consumption", f"~{report.energy_nj:.2f} nJ"),
        ("Power consumption", f"~{report.dynamic_power_mw:.3f} mW"),
        ("Latency", f"{report.latency_ms:.0f} ms"),
    ]
    width = max(len(a) for a, _ in rows) + 2
    return "\n".join(f"{a:<{width}}{b}" for a, b in rows)


def evaluate(predictions, labels, n_classes: int = N_CLASSES) -> dict:
    """Accuracy, class-conditional accuracy and confusion counts."""
    preds = np.asarray(predictions, np.int64)
    labs = np.asarray(labels, np.int64)
    if preds.size == 0 or preds.shape != labs.shape:
        raise ValueError("need equal-length, non-empty predictions and labels")
    if labs.min() < 0 or labs.max() >= n_classes:
        raise ValueError("label out of range")
    confusion = np.zeros((n_classes, n_classes), np.int64)
    np.add.at(confusion, (labs, preds), 1)
    row_tot = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(row_tot > 0,
                             np.diag(confusion) / np.maximum(row_tot, 1), np.nan)
    return {
        "accuracy": float((preds == labs).mean()),
        "per_class": per_class,
        "confusion": confusion,
    }


def metrics_to_json(metrics: dict) -> dict:
    per_class = [None if np.isnan(v) else float(v) for v in metrics["per_class"]]
    return {
        "accuracy": metrics["accuracy"],
        "per_class": per_class,
        "confusion": metrics["confusion"].tolist(),
    }


def load_ledger(path) -> SpikeLedger:
    with open(path) as fh:
        return SpikeLedger.from_json(json.load(fh))


def save_ledger(path, ledger: SpikeLedger) -> None:
    with open(path, "w") as fh:
        json.dump(ledger.to_json(), fh, indent=2)
        fh.write("\n")
