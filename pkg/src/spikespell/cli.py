"""Command-line pipeline: one executable, one subcommand per stage.

Stages communicate through on-disk artifacts (canonical .evs event files,
SRW1/SRQ1 weight files, JSON reports, CSV logs), so each stage can be run,
inspected and replayed independently. Exit codes: 0 success, 1 runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import deploy as deploymod
from . import metrics as metricsmod
from . import network as netmod
from . import pipeline, training
from .dvs import convert_image_to_events
from .events import accumulate_frame, read_events, write_events
from .saliency import compute_saliency, extract_roi


def _load_cfg(args) -> cfgmod.PipelineConfig:
    cfg = cfgmod.PipelineConfig()
    if getattr(args, "config", None):
        cfg = cfgmod.load_config(args.config, cfg)
    overrides = dict(kv.split("=", 1) for kv in (getattr(args, "set", None) or []))
    if overrides:
        cfg = cfgmod.apply_overrides(cfg, overrides)
    return cfg.with_derived()


def _write_json(path, payload) -> None:
    pipeline.atomic_write_bytes(
        path, (json.dumps(payload, indent=2) + "\n").encode())


def _parse_classes(text):
    if not text:
        return None
    out = []
    for item in text.split(","):
        item = item.strip()
        out.append(int(item) if item.isdigit()
                   else pipeline.class_of_letter(item))
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_convert_mnist(args) -> int:
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg = cfgmod.apply_overrides(cfg, {"dvs.seed": str(args.seed)})
    images, labels = pipeline.load_slmnist_csv(
        args.csv, args.subset, _parse_classes(args.classes))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(i, images[i], int(labels[i])) for i in range(len(labels))]

    def convert(item):
        idx, img, label = item
        stream = convert_image_to_events(img, cfg.dvs)
        name = pipeline.event_file_name(args.split, idx, label)
        write_events(out_dir / name, stream)
        return name

    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(args.jobs) as pool:
            names = list(pool.map(_ConvertWorker(cfg, args.split, out_dir),
                                  work, chunksize=16))
    else:
        names = [convert(item) for item in work]
    print(f"wrote {len(names)} event files to {out_dir}")
    return 0


class _ConvertWorker:
    """Picklable per-process conversion closure."""

    def __init__(self, cfg, split, out_dir):
        self.cfg = cfg
        self.split = split
        self.out_dir = Path(out_dir)

    def __call__(self, item):
        idx, img, label = item
        stream = convert_image_to_events(img, self.cfg.dvs)
        name = pipeline.event_file_name(self.split, idx, label)
        write_events(self.out_dir / name, stream)
        return name


def cmd_saliency(args) -> int:
    cfg = _load_cfg(args)
    stream = read_events(args.events)
    t0 = time.perf_counter()
    duration = args.duration or max(stream.duration_us + 1, 1)
    frame = accumulate_frame(stream, args.t_start, duration)
    smap = compute_saliency(frame, pipeline.bank_from_config(cfg), cfg.lif,
                            cfg.saliency.steps, cfg.saliency.gain)
    side = args.side or min(cfg.saliency.roi_side, stream.width, stream.height)
    roi = extract_roi(smap, side, args.mode or cfg.saliency.mode)
    elapsed_ms = (time.perf_counter() - t0) * 1e3
    payload = {"cx": roi.center_x, "cy": roi.center_y, "side": roi.side,
               "mode": args.mode or cfg.saliency.mode,
               "left": roi.left, "top": roi.top, "wall_ms": elapsed_ms}
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps(payload))
    if args.pgm:
        _write_pgm(args.pgm, smap.spike_counts)
    return 0


def _write_pgm(path, counts) -> None:
    peak = max(int(counts.max()), 1)
    img = (counts * (255 / peak)).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    pipeline.atomic_write_bytes(path, header + img.tobytes())


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    classes = _parse_classes(args.classes)
    rasters, labels = pipeline.load_split_rasters(
        args.data, args.split, cfg, args.subset, classes, args.jobs)
    rng = np.random.default_rng(cfg.train.seed)
    order = rng.permutation(len(labels))
    n_val = int(round(args.val_fraction * len(labels)))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    print(f"training on {len(tr_idx)} samples, validating on {len(val_idx)}")

    def progress(row):
        print(f"epoch {row['epoch']:3d}  lr {row['lr']:.2e}  "
              f"loss {row['loss']:.4f}  train {row['train_acc']:.3f}  "
              f"val {row['val_acc']:.3f}  ({row['seconds']:.1f}s)")

    weights, history = training.fit(
        rasters[tr_idx], labels[tr_idx], rasters[val_idx], labels[val_idx],
        cfg.train, cfg.lif, cfg.net.l1_spiking, log_path=args.log,
        epochs=args.epochs, progress=progress)
    meta = {"beta": cfg.lif.beta, "threshold": cfg.lif.threshold,
            "timesteps": cfg.train.timesteps, "seed": cfg.train.seed,
            "epochs": len(history), "classes": classes,
            "l1_spiking": cfg.net.l1_spiking,
            "final_val_acc": history[-1]["val_acc"] if history else None}
    netmod.save_weights(args.out, weights, meta)
    print(f"saved checkpoint to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    weights, meta = netmod.load_weights(args.weights)
    rasters, labels = pipeline.load_split_rasters(
        args.data, args.split, cfg, args.subset, _parse_classes(args.classes),
        args.jobs)
    t0 = time.perf_counter()
    if args.mode == "float":
        counts, ledger = netmod.forward_batch(rasters, weights, cfg.lif,
                                              cfg.net.l1_spiking)
    else:
        f_bits = args.f_bits if args.f_bits is not None else cfg.quant.f_bits
        q, _ = deploymod.quantize(weights, f_bits)
        image = deploymod.map_projections(q, cfg.deploy)
        counts, ledger = deploymod.deploy_forward_batch(rasters, image,
                                                        cfg.deploy)
    preds = np.argmax(counts, axis=1)
    m = metricsmod.evaluate(preds, labels)
    payload = metricsmod.metrics_to_json(m)
    payload["mode"] = args.mode
    payload["samples"] = int(len(labels))
    payload["wall_s"] = time.perf_counter() - t0
    payload["ledger"] = ledger.to_json()
    _write_json(args.out, payload)
    if args.ledger:
        metricsmod.save_ledger(args.ledger, ledger)
    print(f"{args.mode} accuracy {m['accuracy']:.4f} on {len(labels)} samples")
    return 0


def cmd_quantize(args) -> int:
    cfg = _load_cfg(args)
    weights, _ = netmod.load_weights(args.weights)
    f_bits = args.f_bits if args.f_bits is not None else cfg.quant.f_bits
    q, report = deploymod.quantize(weights, f_bits)
    deploymod.save_quant(args.out, q)
    if args.report:
        _write_json(args.report, report)
    print(json.dumps(report))
    return 0


def cmd_energy(args) -> int:
    cfg = _load_cfg(args)
    ledger = metricsmod.load_ledger(args.ledger)
    report = metricsmod.energy_report(
        ledger, cfg.energy.p_s_nj, cfg.energy.stages, cfg.energy.dt_ms,
        cfg.energy.p_idle_mw, cfg.energy.p_baseline_mw,
        cfg.energy.p_per_neuron_mw, cfg.energy.n_neurons)
    if args.out:
        _write_json(args.out, report.to_json())
    print(metricsmod.format_energy_table(ledger, report))
    return 0


def cmd_demo(args) -> int:
    cfg = _load_cfg(args)
    weights, _ = netmod.load_weights(args.weights)
    stream = read_events(args.events)
    t0 = time.perf_counter()
    raster, roi = pipeline.stream_to_raster(stream, cfg, mode=args.mode)
    t_roi = time.perf_counter()
    counts, ledger = netmod.forward(raster, weights, cfg.lif,
                                    cfg.net.l1_spiking)
    cls = netmod.classify(counts)
    t_end = time.perf_counter()
    payload = {
        "letter": pipeline.letter_of(cls),
        "class_index": cls,
        "counts": counts.astype(int).tolist(),
        "roi": {"cx": roi.center_x, "cy": roi.center_y, "side": roi.side,
                "mode": args.mode or cfg.saliency.mode},
        "attention_ms": (t_roi - t0) * 1e3,
        "total_ms": (t_end - t0) * 1e3,
        "ledger": ledger.to_json(),
    }
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps(payload, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--config", "-c", help="key = value config file")
    sp.add_argument("--set", "-s", action="append", metavar="KEY=VALUE",
                    help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spikespell",
        description="Event-driven fingerspelling recognition pipeline")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("convert-mnist", help="grayscale CSV -> event files")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="train")
    sp.add_argument("--subset", type=int, help="cap samples per class")
    sp.add_argument("--classes", help="comma list of letters or class indices")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    _add_common(sp)
    sp.set_defaults(func=cmd_convert_mnist)

    sp = sub.add_parser("saliency", help="event file -> ROI JSON")
    sp.add_argument("--events", required=True)
    sp.add_argument("--out")
    sp.add_argument("--pgm", help="dump the spike-count map as PGM")
    sp.add_argument("--t-start", type=int, default=0)
    sp.add_argument("--duration", type=int)
    sp.add_argument("--side", type=int)
    sp.add_argument("--mode", choices=["sva", "center_crop"])
    _add_common(sp)
    sp.set_defaults(func=cmd_saliency)

    sp = sub.add_parser("train", help="event dataset -> checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", help="per-epoch CSV log path")
    sp.add_argument("--split", default="train")
    sp.add_argument("--subset", type=int)
    sp.add_argument("--classes")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--val-fraction", type=float, default=0.2)
    sp.add_argument("--jobs", type=int, default=1)
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="checkpoint + dataset -> metrics JSON")
    sp.add_argument("--data", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=["float", "deploy"], default="float")
    sp.add_argument("--split", default="test")
    sp.add_argument("--subset", type=int)
    sp.add_argument("--classes")
    sp.add_argument("--f-bits", type=int)
    sp.add_argument("--ledger", help="also write the spike ledger JSON here")
    sp.add_argument("--jobs", type=int, default=1)
    _add_common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("quantize", help="checkpoint -> fixed-point image")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="saturation/error report JSON")
    sp.add_argument("--f-bits", type=int)
    _add_common(sp)
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("energy", help="spike ledger -> energy report")
    sp.add_argument("--ledger", required=True)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("demo", help="single event file -> predicted letter")
    sp.add_argument("--events", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out")
    sp.add_argument("--mode", choices=["sva", "center_crop"])
    _add_common(sp)
    sp.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except training.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
