import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np
import pytest

from noisomics import cli, tensor_io
from noisomics.engine import PRIMITIVES, NoiseStrengths
from noisomics.manifest import Manifest, Record
from noisomics.model import checkpoint as ckpt_io
from noisomics.model.checkpoint import initial_checkpoint
from noisomics.model.network import EncoderConfig
from noisomics.model.training import predict_batch
from noisomics.rng import RngStream


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def synth(out, count=10, seed=7, *extra):
    assert run("synthesize", "--out", out, "--count", count, "--seed", seed, *extra) == 0
    return Manifest.load(out / "manifest.jsonl")


def test_synthesize_deterministic(tmp_path):
    synth(tmp_path / "a")
    synth(tmp_path / "b")
    da, db = tree_digest(tmp_path / "a"), tree_digest(tmp_path / "b")
    assert da == db and len(da) > 10
    cfg = json.loads((tmp_path / "a" / cli.RESOLVED_CONFIG).read_text())
    assert cfg["count"] == 10 and cfg["seed"] == 7


def test_synthesize_worker_count_does_not_change_bytes(tmp_path):
    synth(tmp_path / "one", 12, 3, "--workers", 1)
    synth(tmp_path / "two", 12, 3, "--workers", 2)
    a, b = tree_digest(tmp_path / "one"), tree_digest(tmp_path / "two")
    a.pop(cli.RESOLVED_CONFIG), b.pop(cli.RESOLVED_CONFIG)
    assert a == b


def test_synthesize_zero(tmp_path):
    m = synth(tmp_path / "z", 0)
    assert len(m) == 0 and (tmp_path / "z" / "manifest.jsonl").read_text() == ""


def test_synthesize_component_means(tmp_path):
    m = synth(tmp_path / "big", 1000, 11)
    eta = np.stack([r.strengths.vector() for r in m.with_role("corrupted")])
    assert eta.shape == (1000, 6)
    assert np.abs(eta.mean(axis=0) - 1 / 6).max() < 0.02


def test_synthesize_records_provenance(tmp_path):
    m = synth(tmp_path / "p", 3)
    rec = m.with_role("corrupted")[0]
    assert rec.seed_path and rec.source in m.by_id()
    x = tensor_io.read_tensor(tmp_path / "p" / rec.image)
    assert x.dtype == np.float32 and x.min() >= 0 and x.max() <= 1


def test_synthesize_from_directory(tmp_path):
    from PIL import Image
    src = tmp_path / "src"
    src.mkdir()
    Image.fromarray(np.full((16, 16), 90, np.uint8)).save(src / "a.png")
    (src / "broken.png").write_bytes(b"not an image")
    assert run("synthesize", "--out", tmp_path / "o", "--count", 2, "--source", src) == 0
    assert "broken.png" in (tmp_path / "o" / "errors.txt").read_text()
    (src / "a.png").unlink()
    assert run("synthesize", "--out", tmp_path / "o2", "--count", 2, "--source", src) == 1


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"synthesize": {"count": 4, "seed": 1, "image_size": 16}}))
    assert run("synthesize", "--config", conf, "--out", tmp_path / "o", "--seed", 2) == 0
    cfg = json.loads((tmp_path / "o" / cli.RESOLVED_CONFIG).read_text())
    assert (cfg["count"], cfg["seed"], cfg["image_size"]) == (4, 2, 16)
    assert len(Manifest.load(tmp_path / "o" / "manifest.jsonl").with_role("corrupted")) == 4


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run("synthesize", "--out", out, "--count", 24, "--seed", 5) == 0
    return out


def test_train_zero_epochs_equals_init(dataset, tmp_path):
    assert run("train", dataset / "manifest.jsonl", "--mode", "scratch", "--epochs", 0,
               "--seed", 3, "--out", tmp_path) == 0
    ck = ckpt_io.load(tmp_path / "checkpoint.nsmc")
    init = initial_checkpoint(EncoderConfig(init_seed=3))
    assert np.array_equal(ck.encoder, init.encoder) and np.array_equal(ck.head, init.head)
    assert (tmp_path / "log.csv").read_text() == "epoch,split,loss\n"


def test_train_mode_mismatch(tmp_path):
    out = tmp_path / "d"
    out.mkdir()
    Manifest([Record("c0", "c0.nsmt", "clean")]).save(out / "manifest.jsonl")
    tensor_io.write_tensor(out / "c0.nsmt", np.zeros((1, 32, 32)))
    assert run("train", out / "manifest.jsonl", "--mode", "scratch", "--out", tmp_path / "t") == 2
    assert run("train", out / "manifest.jsonl", "--mode", "pretrain", "--out", tmp_path / "t") == 2


def test_scratch_and_finetune_logs(dataset, tmp_path):
    m = dataset / "manifest.jsonl"
    assert run("train", m, "--mode", "pretrain", "--epochs", 1, "--out", tmp_path / "pre") == 0
    assert run("train", m, "--mode", "finetune", "--epochs", 2, "--init",
               tmp_path / "pre" / "checkpoint.nsmc", "--out", tmp_path / "ft") == 0
    assert run("train", m, "--mode", "scratch", "--epochs", 2, "--out", tmp_path / "sc") == 0
    for d in ("ft", "sc"):
        rows = list(csv.DictReader(io.StringIO((tmp_path / d / "log.csv").read_text())))
        assert [r["split"] for r in rows[-2:]] == ["train", "train"]
        assert all(float(r["loss"]) > 0 for r in rows)
    assert ckpt_io.load(tmp_path / "ft" / "checkpoint.nsmc").stage == "finetuned"


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("model") / "m.nsmc"
    ck = initial_checkpoint(EncoderConfig(input_size=16, init_seed=9))
    ckpt_io.save(ck, p)
    return p


def test_window_mean_is_hand_average(nprng):
    model = initial_checkpoint(EncoderConfig(input_size=16, init_seed=9))
    img = nprng.uniform(size=(1, 40, 40))
    stream = RngStream(4).derive("w")
    preds = cli.window_predictions(model, img, 5, 16, stream)
    pos = cli.crop_positions((40, 40), 16, 5, stream)
    by_hand = [predict_batch(model, img[None, :, y:y + 16, x:x + 16])[0] for y, x in pos]
    assert np.abs(preds.mean(axis=0) - np.mean(by_hand, axis=0)).max() < 1e-12
    assert all(0 <= y <= 24 and 0 <= x <= 24 for y, x in pos)


def test_constant_image_has_zero_spread():
    model = initial_checkpoint(EncoderConfig(input_size=16, init_seed=9))
    preds = cli.window_predictions(model, np.full((1, 48, 48), 0.4), 5, 16, RngStream(0))
    assert np.all(preds == preds[0])
    mean, std = cli.window_summary(preds)
    assert np.all(std == 0) and np.abs(mean - preds[0]).max() < 1e-15


def test_small_image_single_window(caplog):
    model = initial_checkpoint(EncoderConfig(input_size=16, init_seed=9))
    preds = cli.window_predictions(model, np.full((1, 8, 8), 0.4), 5, 16, RngStream(0))
    assert preds.shape == (1, 6) and "smaller than window" in caplog.text


def estimate_csv(dataset, model_path, out, *extra):
    assert run("estimate", dataset / "manifest.jsonl", "--checkpoint", model_path,
               "--out", out, *extra) == 0
    return list(csv.DictReader(io.StringIO(out.read_text())))


def test_estimate_reproducible_and_window_dependent(dataset, model_path, tmp_path):
    big = tmp_path / "big"
    assert run("synthesize", "--out", big, "--count", 3, "--seed", 1,
               "--config", _size_config(tmp_path, 48)) == 0
    five = estimate_csv(big, model_path, tmp_path / "p5.csv", "--windows", 5, "--window-size", 16)
    again = estimate_csv(big, model_path, tmp_path / "p5b.csv", "--windows", 5, "--window-size", 16)
    one = estimate_csv(big, model_path, tmp_path / "p1.csv", "--windows", 1, "--window-size", 16)
    assert five == again
    assert five[0]["windows"] == "5" and one[0]["windows"] == "1"
    assert any(five[i][f"mean_{p}"] != one[i][f"mean_{p}"] for i in range(3) for p in PRIMITIVES)
    assert five[0]["checkpoint_digest"] == ckpt_io.load(model_path).digest()


def test_estimate_workers_identical(dataset, model_path, tmp_path):
    a = estimate_csv(dataset, model_path, tmp_path / "a.csv", "--workers", 1)
    b = estimate_csv(dataset, model_path, tmp_path / "b.csv", "--workers", 2)
    assert a == b and len(a) == 24


def test_estimate_missing_checkpoint(dataset, tmp_path):
    assert run("estimate", dataset / "manifest.jsonl", "--checkpoint", tmp_path / "none",
               "--out", tmp_path / "p.csv") == 2


def _size_config(tmp_path, size):
    p = tmp_path / f"size{size}.json"
    p.write_text(json.dumps({"image_size": size}))
    return p


def truth_predictions(manifest: Manifest) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id"] + [f"mean_{p}" for p in PRIMITIVES])
    for r in manifest.with_role("corrupted"):
        w.writerow([r.id] + [repr(float(v)) for v in r.strengths.vector()])
    return buf.getvalue()


def report_rows(out):
    return list(csv.DictReader(io.StringIO((out / "report.csv").read_text())))


def test_analyze_truth_predictions(dataset, tmp_path):
    m = Manifest.load(dataset / "manifest.jsonl")
    (tmp_path / "p.csv").write_text(truth_predictions(m))
    assert run("analyze", tmp_path / "p.csv", "--manifest", dataset / "manifest.jsonl",
               "--out", tmp_path / "r") == 0
    rows = report_rows(tmp_path / "r")
    rmse = [r for r in rows if r["metric"] == "rmse"]
    r2 = [r for r in rows if r["metric"] == "r_squared"]
    assert len(rmse) == len(r2) == 6
    assert all(float(r["value"]) == 0 for r in rmse) and all(float(r["value"]) == 1 for r in r2)
    skipped = {r["metric"] for r in rows if r["note"].startswith("skipped: missing metadata")}
    assert {"correlation", "shapley", "depth"} <= skipped
    assert all(r["manifest_digest"] == m.digest() for r in rows)
    assert json.loads((tmp_path / "r" / "report.json").read_text())["rows"][0]["metric"] == rows[0]["metric"]


def test_analyze_depth_construction(tmp_path):
    r = np.random.default_rng(0)
    recs = [Record("c", "c.nsmt", "clean")]
    lines = ["id," + ",".join(f"mean_{p}" for p in PRIMITIVES)]
    for k, (arm, beta) in enumerate([("fixed", 0.01)] * 40 + [("gained", 0.0)] * 40):
        z = 100 + 700 * (k % 40) / 39
        g = 0.5 + beta * z + r.normal(0, 0.3)
        recs.append(Record(f"s{k}", "x.nsmt", "corrupted", source="c",
                           metadata={"depth_um": z, "arm": arm}))
        lines.append(f"s{k}," + ",".join([repr(g)] + ["0.1"] * 5))
    Manifest(recs).save(tmp_path / "m.jsonl")
    (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
    conf = tmp_path / "a.json"
    conf.write_text(json.dumps({"analyses": ["depth"], "component": "gaussian"}))
    assert run("analyze", tmp_path / "p.csv", "--manifest", tmp_path / "m.jsonl",
               "--config", conf, "--out", tmp_path / "r") == 0
    rows = {(r["metric"], r["subset"]): r for r in report_rows(tmp_path / "r")}
    fixed = rows[("depth_slope", "gaussian|fixed")]
    se = float(rows[("depth_slope_se", "gaussian|fixed")]["value"])
    assert abs(float(fixed["value"]) - 0.01) < 3 * se
    assert float(fixed["ci_low"]) < 0.01 < float(fixed["ci_high"])
    assert float(rows[("slope_diff_p", "gaussian|fixed|gained")]["value"]) < 0.001
    assert rows[("cohens_f2", "gaussian|fixed|gained")]["note"] == "Large"


def test_analyze_unknown_ids(dataset, tmp_path):
    (tmp_path / "p.csv").write_text("id," + ",".join(f"mean_{p}" for p in PRIMITIVES)
                                    + "\nghost," + ",".join(["0.1"] * 6) + "\n")
    assert run("analyze", tmp_path / "p.csv", "--manifest", dataset / "manifest.jsonl",
               "--out", tmp_path / "r") == 2


def test_bench(tmp_path):
    assert run("bench", "--out", tmp_path / "b.json", "--workers", 2) == 0
    res = json.loads((tmp_path / "b.json").read_text())
    assert res["synthesis_images_per_s_w1"] > 0 and res["inference_images_per_s"] > 0
    assert res["identical_across_workers"] and res["train_seconds_per_epoch"] > 0


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 2
    assert run("synthesize", "--out", tmp_path, "--config", tmp_path / "missing.json") == 2


def test_missing_manifest_is_a_usage_error(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert run("train", missing, "--out", tmp_path / "t") == 2
    assert run("analyze", tmp_path / "p.csv", "--manifest", missing, "--out", tmp_path / "a") == 2
    assert "file not found" in capsys.readouterr().err
