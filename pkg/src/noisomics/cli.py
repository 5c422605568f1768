"""Command-line entry point: synthesize, train, estimate, analyze, bench."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import tensor_io, textures
from .engine import DEFAULT_ORDER, PRIMITIVES, NoiseStrengths, compose, sample_strengths
from .manifest import Manifest, ManifestError, Record
from .model import checkpoint as ckpt_io
from .model.network import EncoderConfig
from .model.training import (Schedule, finetune, predict_batch, pretrain, train_joint,
                             train_scratch)
from .model.checkpoint import initial_checkpoint
from .rng import RngStream

log = logging.getLogger("noisomics")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
RESOLVED_CONFIG = "config.resolved.json"

DEFAULTS = {
    "synthesize": {"source": "procedural", "count": 100, "image_size": 32, "order": "fixed",
                   "modes": {}, "family": None, "seed": 0, "workers": 1},
    "train": {"mode": "pretrain", "seed": 0, "epochs": 10, "batch_size": 16, "lr": 0.003,
              "optimizer": "adam", "momentum": 0.9, "tau": 0.1, "positive_mode": "fresh",
              "val_fraction": 0.0, "encoder": {}},
    "estimate": {"windows": 5, "window_size": None, "seed": 0, "workers": 1},
    "analyze": {"analyses": ["metrics", "classification", "correlation", "shapley", "depth"],
                "thresholds": [0.1, 0.2, 0.3], "component": "gaussian",
                "features": ["iso", "shutter_speed", "brightness", "temperature"],
                "seed": 0},
    "bench": {"count": 100, "image_size": 32, "workers": 4, "seed": 0, "train_images": 64},
}


class UsageError(Exception):
    pass


# -- config -----------------------------------------------------------------

def resolve_config(command: str, path: str | None, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        cfg.update(loaded.get(command, loaded))
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def write_resolved(out_dir: Path, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RESOLVED_CONFIG).write_text(json.dumps(cfg, sort_keys=True, indent=1) + "\n")


# -- synthesize -------------------------------------------------------------

def _order_for(mode, stream: RngStream) -> tuple[str, ...]:
    if mode == "fixed":
        return DEFAULT_ORDER
    if mode == "random":
        perm = stream.derive("order").sampler().permutation(len(PRIMITIVES))
        return tuple(PRIMITIVES[i] for i in perm)
    if isinstance(mode, list):
        return tuple(mode)
    raise UsageError(f"order must be 'fixed', 'random' or a list, got {mode!r}")


def _synth_one(args):
    clean, seed, i, order_mode, modes = args
    s = RngStream(seed).derive("synthesize").derive("sample", i)
    eta = sample_strengths(s.derive("strengths"))
    order = _order_for(order_mode, s)
    sample = compose(clean, eta, s.derive("noise"), order=order, modes=modes or None)
    return tensor_io.to_bytes(sample.corrupted), eta, s.path_string(), order


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) < 2:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _clean_sources(cfg: dict) -> tuple[list[tuple[str, np.ndarray]], list[str]]:
    src = cfg["source"]
    if src == "procedural":
        n = max(1, min(int(cfg["count"]), 256))
        imgs = textures.texture_set(n, int(cfg["image_size"]),
                                    RngStream(int(cfg["seed"])).derive("clean"),
                                    family=cfg.get("family"))
        return [(f"clean-{i:05d}", im) for i, im in enumerate(imgs)], []
    root = Path(src)
    if not root.is_dir():
        raise UsageError(f"clean source {src} is not a directory")
    found, errors = [], []
    for p in sorted(root.iterdir()):
        if not p.is_file():
            continue
        try:
            img = tensor_io.load_image(p).astype(np.float64)
        except Exception as exc:  # any unreadable file is reported, not fatal
            errors.append(f"{p.name}: {exc}")
            continue
        found.append((p.stem, img))
    return found, errors


def synthesize(cfg: dict, out: Path) -> tuple[Manifest, list[str]]:
    count = int(cfg["count"])
    if count < 0:
        raise UsageError("count must be >= 0")
    sources, errors = _clean_sources(cfg) if count else ([], [])
    out.mkdir(parents=True, exist_ok=True)
    records: list[Record] = []
    if count and not sources:
        return Manifest(), errors
    (out / "clean").mkdir(exist_ok=True)
    (out / "corrupted").mkdir(exist_ok=True)
    for cid, img in sources:
        rel = f"clean/{cid}.nsmt"
        tensor_io.write_tensor(out / rel, img)
        records.append(Record(cid, rel, "clean"))
    # Reading back the f32 files keeps the corruption input identical to what is stored.
    stored = [tensor_io.read_tensor(out / r.image).astype(np.float64) for r in records]
    jobs = [(stored[i % len(stored)], int(cfg["seed"]), i, cfg["order"], cfg["modes"])
            for i in range(count)]
    for i, (payload, eta, path, order) in enumerate(_map(_synth_one, jobs, int(cfg["workers"]))):
        rel = f"corrupted/sample-{i:05d}.nsmt"
        (out / rel).write_bytes(payload)
        meta = {} if tuple(order) == DEFAULT_ORDER else {"order": ",".join(order)}
        records.append(Record(f"sample-{i:05d}", rel, "corrupted", source=sources[i % len(sources)][0],
                              strengths=eta, seed_path=path, metadata=meta))
    manifest = Manifest(records)
    manifest.save(out / "manifest.jsonl")
    return manifest, errors


# -- train ------------------------------------------------------------------

def _load_images(manifest: Manifest, base: Path, records) -> np.ndarray:
    return np.stack([tensor_io.load_image(base / r.image).astype(np.float64) for r in records])


def _labeled(manifest: Manifest, base: Path):
    recs = [r for r in manifest.with_role("corrupted") if r.strengths is not None]
    if not recs:
        return None
    return _load_images(manifest, base, recs), np.stack([r.strengths.vector() for r in recs])


def _split(x, y, fraction: float):
    if not fraction:
        return (x, y), None
    k = int(round(len(x) * (1 - fraction)))
    if k < 1 or k >= len(x):
        raise UsageError("val_fraction leaves an empty train or validation split")
    return (x[:k], y[:k]), (x[k:], y[k:])


def train(cfg: dict, manifest_path: Path, out: Path, init: str | None):
    manifest = Manifest.load(manifest_path)
    base = manifest_path.parent
    mode = cfg["mode"]
    schedule = Schedule(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
                        lr=float(cfg["lr"]), momentum=float(cfg["momentum"]),
                        tau=float(cfg["tau"]), optimizer=cfg["optimizer"])
    rng = RngStream(int(cfg["seed"])).derive("train", 0)
    clean = manifest.with_role("clean")
    if init:
        base_ckpt = ckpt_io.load(init)
        enc_cfg = base_ckpt.config
    else:
        base_ckpt = None
        enc_cfg = EncoderConfig.from_dict({"init_seed": int(cfg["seed"]), **cfg["encoder"]})
    if mode in ("pretrain", "joint") and len(clean) < 2:
        raise UsageError(f"mode {mode} needs at least 2 clean records in the manifest")
    labeled = None
    if mode in ("finetune", "scratch", "joint"):
        labeled = _labeled(manifest, base)
        if labeled is None:
            raise UsageError(f"mode {mode} needs corrupted records with strengths")
    if mode == "pretrain":
        result = pretrain(enc_cfg, list(_load_images(manifest, base, clean)), schedule, rng,
                          positive_mode=cfg["positive_mode"])
    elif mode == "finetune":
        (x, y), val = _split(*labeled, float(cfg["val_fraction"]))
        result = finetune(base_ckpt or initial_checkpoint(enc_cfg), x, y, schedule, rng, val=val)
    elif mode == "scratch":
        (x, y), val = _split(*labeled, float(cfg["val_fraction"]))
        result = train_scratch(enc_cfg, x, y, schedule, rng, val=val)
    elif mode == "joint":
        (x, y), val = _split(*labeled, float(cfg["val_fraction"]))
        result = train_joint(enc_cfg, list(_load_images(manifest, base, clean)), x, y, schedule,
                             rng, val=val, positive_mode=cfg["positive_mode"])
    else:
        raise UsageError(f"unknown train mode {mode!r}")
    ckpt_path = out / "checkpoint.nsmc"
    ckpt_io.save(result, ckpt_path)
    (out / "log.csv").write_text(result.log_csv())
    return result


# -- estimate ---------------------------------------------------------------

def crop_positions(shape: tuple[int, int], window: int, count: int,
                   stream: RngStream) -> list[tuple[int, int]]:
    """Uniform top-left corners over all valid placements."""
    h, w = shape
    s = stream.sampler()
    ys = s.integers(0, h - window + 1, size=count)
    xs = s.integers(0, w - window + 1, size=count)
    return [(int(a), int(b)) for a, b in zip(ys, xs)]


def _fit_to_model(crop: np.ndarray, size: int) -> np.ndarray:
    if crop.shape[1:] == (size, size):
        return crop
    from scipy.ndimage import zoom
    fy, fx = size / crop.shape[1], size / crop.shape[2]
    out = zoom(crop, (1, fy, fx), order=1, mode="nearest", grid_mode=True)
    return np.clip(out[:, :size, :size], 0.0, 1.0)


def window_predictions(model, image: np.ndarray, windows: int, window: int,
                       stream: RngStream) -> np.ndarray:
    """Per-window strength predictions, shape (windows, 6)."""
    cfg = model.config
    h, w = image.shape[1:]
    if h < window or w < window:
        log.warning("image %dx%d smaller than window %d; using the full image once", h, w, window)
        crops = [image]
    else:
        crops = [image[:, y:y + window, x:x + window]
                 for y, x in crop_positions((h, w), window, windows, stream)]
    batch = np.stack([_fit_to_model(c, cfg.input_size) for c in crops])
    if batch.shape[1] != cfg.channels:
        batch = batch.mean(axis=1, keepdims=True) if cfg.channels == 1 else batch
    return predict_batch(model, batch)


def _estimate_one(args):
    model, path, windows, window, stream = args
    img = tensor_io.load_image(path).astype(np.float64)
    return window_predictions(model, img, windows, window, stream)


def window_summary(preds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-component mean and population stddev; identical windows give exactly 0."""
    std = np.where(np.ptp(preds, axis=0) == 0, 0.0, preds.std(axis=0))
    return preds.mean(axis=0), std


def estimate(cfg: dict, model, manifest: Manifest, base: Path) -> str:
    window = int(cfg["window_size"] or model.config.input_size)
    windows = int(cfg["windows"])
    if windows < 1:
        raise UsageError("windows must be >= 1")
    root = RngStream(int(cfg["seed"])).derive("estimate")
    targets = [(i, rec) for i, rec in enumerate(manifest) if rec.role in ("corrupted", "external")]
    jobs = [(model, base / rec.image, windows, window, root.derive("image", i))
            for i, rec in targets]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "windows"] + [f"mean_{p}" for p in PRIMITIVES] +
               [f"std_{p}" for p in PRIMITIVES] + ["checkpoint_digest", "seed"])
    digest = model.digest()
    for (_, rec), preds in zip(targets, _map(_estimate_one, jobs, int(cfg["workers"]))):
        mean, std = window_summary(preds)
        w.writerow([rec.id, len(preds)] + [repr(float(v)) for v in mean] +
                   [repr(float(v)) for v in std] + [digest, cfg["seed"]])
    return buf.getvalue()


# -- analyze ----------------------------------------------------------------

def read_predictions(text: str) -> tuple[dict[str, np.ndarray], dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    preds = {r["id"]: np.array([float(r[f"mean_{p}"]) for p in PRIMITIVES]) for r in rows}
    prov = {}
    if rows:
        prov = {"checkpoint_digest": rows[0].get("checkpoint_digest", ""),
                "estimate_seed": rows[0].get("seed", "")}
    return preds, prov


def analyze(cfg: dict, preds: dict[str, np.ndarray], manifest: Manifest, provenance: dict):
    from .analysis.report import AnalysisReport
    from . import pipeline

    missing = sorted(set(preds) - set(manifest.by_id()))
    if missing:
        raise UsageError(f"prediction ids not in manifest: {missing[:5]}")
    report = AnalysisReport(provenance={**provenance, "manifest_digest": manifest.digest(),
                                        "seed": cfg["seed"]})
    pipeline.run_analyses(report, cfg, preds, manifest)
    return report


# -- bench ------------------------------------------------------------------

def bench(cfg: dict) -> dict:
    count, size = int(cfg["count"]), int(cfg["image_size"])
    seed = int(cfg["seed"])
    clean = textures.texture_set(16, size, RngStream(seed).derive("clean"))
    jobs = [(clean[i % len(clean)], seed, i, "fixed", {}) for i in range(count)]
    out = {"count": count, "image_size": size}
    digests = {}
    for workers in sorted({1, int(cfg["workers"])}):
        t = time.perf_counter()
        res = _map(_synth_one, jobs, workers)
        dt = time.perf_counter() - t
        out[f"synthesis_images_per_s_w{workers}"] = count / dt if dt > 0 else float("inf")
        import hashlib
        digests[workers] = hashlib.sha256(b"".join(r[0] for r in res)).hexdigest()
    out["identical_across_workers"] = len(set(digests.values())) == 1
    out["synthesis_digest"] = digests[1]
    if int(cfg["workers"]) > 1:
        ratio = out[f"synthesis_images_per_s_w{cfg['workers']}"] / out["synthesis_images_per_s_w1"]
        out["worker_speedup"] = ratio
        if ratio < 2 and cfg["workers"] >= 4:
            log.warning("synthesis speedup with %s workers is only %.2fx (cores: %s)",
                        cfg["workers"], ratio, os.cpu_count())
    model = initial_checkpoint(EncoderConfig(input_size=size, init_seed=seed))
    x = np.stack([tensor_io.from_bytes(r[0]).astype(np.float64) for r in res])
    t = time.perf_counter()
    predict_batch(model, x)
    dt = time.perf_counter() - t
    out["inference_images_per_s"] = count / dt if dt > 0 else float("inf")
    n = min(int(cfg["train_images"]), count)
    y = np.stack([r[1].vector() for r in res[:n]])
    t = time.perf_counter()
    train_scratch(model.config, x[:n], y, Schedule(epochs=1, lr=0.001, optimizer="adam"),
                  RngStream(seed).derive("bench"))
    out["train_seconds_per_epoch"] = time.perf_counter() - t
    return out


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisomics", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON config file; flags override its keys")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help=out_help)
        return sp

    sp = common(sub.add_parser("synthesize", help="write corrupted tensors and a manifest"),
                "output directory")
    sp.add_argument("--count", type=int)
    sp.add_argument("--source", help="'procedural' or a directory of clean images")
    sp.add_argument("--workers", type=int)

    sp = common(sub.add_parser("train", help="train a checkpoint"), "output directory")
    sp.add_argument("manifest")
    sp.add_argument("--mode", choices=["pretrain", "finetune", "scratch", "joint"])
    sp.add_argument("--init", help="checkpoint to start from (finetune)")
    sp.add_argument("--epochs", type=int)

    sp = common(sub.add_parser("estimate", help="windowed strength estimation"),
                "predictions CSV path")
    sp.add_argument("manifest")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--windows", type=int)
    sp.add_argument("--window-size", dest="window_size", type=int)
    sp.add_argument("--workers", type=int)

    sp = common(sub.add_parser("analyze", help="metrics and attribution reports"),
                "output directory")
    sp.add_argument("predictions")
    sp.add_argument("--manifest", required=True)

    sp = common(sub.add_parser("bench", help="throughput report"), "output JSON path")
    sp.add_argument("--workers", type=int)
    return p


def _overrides(args) -> dict:
    skip = {"command", "config", "out", "manifest", "checkpoint", "predictions", "init", "verbose"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args.command, args.config, _overrides(args))
        out = Path(args.out)
        if args.command == "synthesize":
            write_resolved(out, cfg)
            manifest, errors = synthesize(cfg, out)
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            if errors:
                (out / "errors.txt").write_text("".join(e + "\n" for e in errors))
            if int(cfg["count"]) and not len(manifest):
                print("error: no readable clean images", file=sys.stderr)
                return EXIT_FAIL
            print(f"wrote {len(manifest)} records to {out / 'manifest.jsonl'}")
        elif args.command == "train":
            write_resolved(out, cfg)
            result = train(cfg, Path(args.manifest), out, args.init)
            print(f"wrote {out / 'checkpoint.nsmc'} (stage {result.stage})")
        elif args.command == "estimate":
            if not Path(args.checkpoint).is_file():
                raise UsageError(f"checkpoint not found: {args.checkpoint}")
            model = ckpt_io.load(args.checkpoint)
            manifest = Manifest.load(args.manifest)
            write_resolved(out.parent, cfg)
            out.write_text(estimate(cfg, model, manifest, Path(args.manifest).parent))
            print(f"wrote {out}")
        elif args.command == "analyze":
            preds, prov = read_predictions(Path(args.predictions).read_text())
            manifest = Manifest.load(args.manifest)
            write_resolved(out, cfg)
            report = analyze(cfg, preds, manifest, prov)
            report.write(out / "report")
            print(f"wrote {out / 'report.csv'} and {out / 'report.json'}")
        elif args.command == "bench":
            result = bench(cfg)
            out.parent.mkdir(parents=True, exist_ok=True)
            write_resolved(out.parent, cfg)
            out.write_text(json.dumps(result, sort_keys=True, indent=1) + "\n")
            print(json.dumps(result, sort_keys=True, indent=1))
    except (UsageError, ManifestError, ckpt_io.CheckpointFormatError,
            tensor_io.TensorFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
