"""Acceptance workloads.

Each ``criterion_*`` function runs one workload and returns a
:class:`CriterionResult`: a verdict plus an :class:`AnalysisReport` holding
every checked quantity with its tolerance interval.  Reports contain only
deterministic numbers (wall-clock time is kept on the result, outside the
report), so rerunning a workload with the same seed must reproduce the
report's JSON byte for byte.
"""
from __future__ import annotations

import hashlib
import tempfile
import time
from dataclasses import dataclass, field
from math import isfinite
from pathlib import Path

import numpy as np

from . import experiments, textures
from .analysis.metrics import classification_report, regression_metrics
from .analysis.quality import SSIM_K1, SSIM_K2, gaussian_window, ssim
from .analysis.report import AnalysisReport
from .analysis.shapley import attribute, shapley_exact, surrogate_fit
from .analysis.stats import EffectClass, classify_f2, linear_fit, paired_ttest
from .engine import (ANISO_KERNEL, PRIMITIVES, REGISTRY, NoiseStrengths, apply_anisotropic,
                     apply_gaussian, apply_poisson, apply_quantization, apply_salt_pepper,
                     compose, sample_strengths)
from .manifest import Manifest, Record
from .model.gradcheck import TOY_CONFIG, check_model
from .model.network import EncoderConfig, init_encoder, init_head
from .numerics import lag1_autocorr
from .rng import RngStream


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    report: AnalysisReport
    summary: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] criterion {self.number:>2}: {self.title}: {self.summary}"

    def report_bytes(self) -> bytes:
        return self.report.to_json().encode()


class _Checks:
    """Rows of (value, lo, hi) with a pass/fail note; tracks the conjunction."""

    def __init__(self, number: int, seed: int):
        self.report = AnalysisReport(provenance={"criterion": number, "seed": seed})
        self.failed: list[str] = []

    def within(self, metric: str, subset: str, value: float, lo: float, hi: float,
               n: int | None = None) -> bool:
        ok = bool(isfinite(value) and lo <= value <= hi)
        self.report.add(metric, subset, value, lo, hi, n, note="pass" if ok else "fail")
        if not ok:
            self.failed.append(f"{metric}[{subset}]")
        return ok

    def flag(self, metric: str, subset: str, ok: bool, value=None, n=None) -> bool:
        self.report.add(metric, subset, float(ok) if value is None else value, n=n,
                        note="pass" if ok else "fail")
        if not ok:
            self.failed.append(f"{metric}[{subset}]")
        return bool(ok)

    @property
    def passed(self) -> bool:
        return not self.failed

    def summary(self, total_label: str) -> str:
        if self.passed:
            return total_label
        shown = ", ".join(self.failed[:4])
        more = f" (+{len(self.failed) - 4} more)" if len(self.failed) > 4 else ""
        return f"failed {shown}{more}"


def _const(value: float, size: int) -> np.ndarray:
    return np.full((1, size, size), float(value))


def kernel_lag1(kernel: np.ndarray) -> float:
    """Lag-1 autocorrelation of white noise filtered by ``kernel``, by explicit overlap sums."""
    k = np.asarray(kernel, dtype=np.float64)
    h, w = k.shape
    num = sum(k[i, j] * k[i, j + 1] for i in range(h) for j in range(w - 1))
    num_v = sum(k[i, j] * k[i + 1, j] for i in range(h - 1) for j in range(w))
    den = sum(k[i, j] ** 2 for i in range(h) for j in range(w))
    return 0.5 * (num + num_v) / den


# -- 1. engine statistics -----------------------------------------------------

def criterion_engine(seed: int = 0, pixels: int = 1000) -> CriterionResult:
    t0 = time.perf_counter()
    root = RngStream(seed).derive("acceptance", 1)
    c = _Checks(1, seed)
    n = pixels * pixels
    for k, eta in enumerate((0.05, 0.1, 0.3)):
        out = apply_salt_pepper(_const(0.5, pixels), eta, root.derive("sp", k))
        tol = 5 * np.sqrt(eta * (1 - eta) / n)
        c.within("pepper_fraction", f"eta={eta}", float((out == 0).mean()), eta - tol, eta + tol, n)
        c.within("salt_fraction", f"eta={eta}", float((out == 1).mean()), eta - tol, eta + tol, n)
    # 5 sigma of the noise stays inside [0, 1] around 0.5 for these strengths
    for k, eta in enumerate((0.02, 0.05, 0.1)):
        x = _const(0.5, pixels)
        resid = apply_gaussian(x, eta, root.derive("gauss", k)) - x
        var = float(resid.var(ddof=1))
        half = 5 * eta * eta * np.sqrt(2.0 / (n - 1))
        c.within("gaussian_variance", f"eta={eta}", var, eta * eta - half, eta * eta + half, n)
        if k == 2:
            c.within("gaussian_lag1", f"eta={eta}", lag1_autocorr(resid), -0.02, 0.02, n)
    x = 0.1 + 0.8 * root.derive("quant-x").sampler().uniform((1, pixels, pixels))
    for k, eta in enumerate((0.05, 0.1, 0.25)):
        bias = float((apply_quantization(x, eta, root.derive("quant", k)) - x).mean())
        c.within("quantization_mean_bias", f"eta={eta}", bias, -1e-3, 1e-3, n)
    rho = kernel_lag1(ANISO_KERNEL)
    x = _const(0.5, 512)
    field_ = apply_anisotropic(x, 0.1, root.derive("aniso")) - x
    c.within("anisotropic_lag1", "eta=0.1", lag1_autocorr(field_), rho - 0.05, rho + 0.05, 512 * 512)
    for k, (eta, level) in enumerate(((0.1, 0.5), (0.2, 0.5), (0.5, 0.25))):
        out = apply_poisson(_const(level, pixels), eta, root.derive("poisson", k))
        p = 1 - np.exp(-eta * level)
        tol = 5 * np.sqrt(p * (1 - p) / n)
        c.within("poisson_saturation", f"eta={eta},x={level}", float((out == 1).mean()),
                 p - tol, p + tol, n)
    dt = time.perf_counter() - t0
    ok = c.passed and dt < 120
    return CriterionResult(1, "engine statistical suite", ok, c.report,
                           c.summary(f"{len(c.report.rows)} checks") + f", {dt:.1f}s (< 120s)",
                           dt)


# -- 2. zero-strength identity ------------------------------------------------

IDENTITY_MODES = {"poisson": ("literal", "centered"), "quantization": ("dithered", "additive")}


def criterion_zero_identity(seed: int = 0, images: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    root = RngStream(seed).derive("acceptance", 2)
    c = _Checks(2, seed)
    imgs = [root.derive("image", i).sampler().uniform((1, 32, 32)) for i in range(images)]
    imgs[::4] = textures.texture_set(len(imgs[::4]), 32, root.derive("textures"))
    for name in PRIMITIVES:
        modes = IDENTITY_MODES.get(name, (None,))
        for mode in modes:
            same = 0
            for i, x in enumerate(imgs):
                s = root.derive(name, i)
                if name == "poisson":
                    out = apply_poisson(x, 0.0, s, mode=mode)
                elif name == "quantization":
                    out = apply_quantization(x, 0.0, s, mode=mode)
                else:
                    out = REGISTRY[name](x, 0.0, s)
                same += out.tobytes() == np.asarray(x, dtype=np.float64).tobytes()
            label = name if mode is None else f"{name}:{mode}"
            c.flag("bit_exact_images", label, same == images, same, images)
    same = sum(compose(x, NoiseStrengths.only("clean", 1.0), root.derive("compose", i)).corrupted
               .tobytes() == x.tobytes() for i, x in enumerate(imgs))
    c.flag("bit_exact_images", "all-clean composite", same == images, same, images)
    return CriterionResult(2, "zero-strength identity", c.passed, c.report,
                           c.summary(f"{len(c.report.rows)} primitive/mode cases x {images} images"),
                           time.perf_counter() - t0)


# -- 3. gradient correctness ---------------------------------------------------

def criterion_gradients(seed: int = 0, batches: int = 10, tol: float = 1e-5) -> CriterionResult:
    t0 = time.perf_counter()
    root = RngStream(seed).derive("acceptance", 3)
    c = _Checks(3, seed)
    worst = {"contrastive": 0.0, "mse": 0.0}
    for b in range(batches):
        s = root.derive("batch", b).sampler()
        cfg = EncoderConfig(**{**TOY_CONFIG.to_dict(), "init_seed": seed * 1000 + b})
        enc, head = init_encoder(cfg), init_head(cfg)
        trip = [s.uniform((3, 1, cfg.input_size, cfg.input_size)) for _ in range(3)]
        y = np.stack([sample_strengths(root.derive("y", b).derive("row", r)).vector()
                      for r in range(3)])
        for loss, batch in (("contrastive", trip), ("mse", (trip[0], y))):
            err = check_model(cfg, enc, head, loss, batch)
            worst[loss] = max(worst[loss], err)
            c.within("max_relative_error", f"{loss}|batch={b}", err, 0.0, tol)
    return CriterionResult(3, "gradient correctness", c.passed, c.report,
                           c.summary(f"max rel err contrastive {worst['contrastive']:.2e}, "
                                     f"mse {worst['mse']:.2e} (< {tol:g})"),
                           time.perf_counter() - t0)


# -- 4-6. toy training comparisons ---------------------------------------------

@dataclass
class TrainingStudy:
    protocol: experiments.ToyProtocol
    runs: list[experiments.SeedRun]
    mmd: list[dict]
    seconds: float
    head_hidden: int

    def seed_report(self, k: int) -> AnalysisReport:
        """Every final loss and MMD of one seed; used for byte comparison on reruns."""
        run, mmd = self.runs[k], self.mmd[k]
        rep = AnalysisReport(provenance={"seed": run.seed})
        for arm in sorted(run.final):
            for n in sorted(run.final[arm]):
                rep.add("final_val_mse", f"{arm}|n={n}", run.final[arm][n], n=n)
        for enc in sorted(mmd):
            for cls in sorted(mmd[enc]):
                rep.add("family_mmd2", f"{enc}|{cls}", mmd[enc][cls])
        return rep


def run_training_study(seeds=range(10), protocol: experiments.ToyProtocol | None = None,
                       head_hidden: int | None = None, log=None) -> TrainingStudy:
    p = protocol or experiments.ToyProtocol()
    hh = head_hidden or experiments.PROTOCOL_HEAD_HIDDEN
    t0 = time.perf_counter()
    runs, mmds = [], []
    for seed in seeds:
        cfg = EncoderConfig(input_size=p.image_size, init_seed=seed, head_hidden=hh)
        run = experiments.run_seed(seed, p, cfg, joint_sizes=(p.joint_size,))
        runs.append(run)
        mmds.append(experiments.compare_mmd(run, p))
        if log:
            log(f"seed {seed}: {run.final} ({time.perf_counter() - t0:.0f}s)")
    return TrainingStudy(p, runs, mmds, time.perf_counter() - t0, hh)


def criterion_cop_vs_scratch(study: TrainingStudy, need: int = 8,
                             budget_s: float = 1800.0) -> CriterionResult:
    c = _Checks(4, -1)
    wins_by_size = {}
    for n in study.protocol.sizes:
        wins = 0
        for run in study.runs:
            cop, sc = run.final["cop"][n], run.final["scratch"][n]
            won = cop < sc
            wins += won
            c.report.add("final_val_mse_gap", f"seed={run.seed}|n={n}", sc - cop, n=n,
                         note="cop lower" if won else "scratch lower or equal")
        wins_by_size[n] = wins
        c.flag("seeds_cop_lower", f"n={n}", wins >= need, wins, len(study.runs))
    fast = study.seconds < budget_s
    summary = ", ".join(f"n={n}: {w}/{len(study.runs)}" for n, w in wins_by_size.items())
    summary += f" (need >= {need}); {study.seconds / 60:.1f} min"
    return CriterionResult(4, "CoP beats scratch per size", c.passed and fast, c.report, summary,
                           study.seconds, {"wins": wins_by_size})


def criterion_ordering(study: TrainingStudy, need: int = 7) -> CriterionResult:
    c = _Checks(5, -1)
    n = study.protocol.joint_size
    held = 0
    for run in study.runs:
        cop, joint, sc = run.final["cop"][n], run.final["joint"][n], run.final["scratch"][n]
        ok = cop <= joint <= sc
        held += ok
        c.report.add("cop_joint_scratch", f"seed={run.seed}|n={n}", joint - cop, n=n,
                     note=f"{cop!r} <= {joint!r} <= {sc!r}: {'holds' if ok else 'violated'}")
    c.flag("seeds_ordering_holds", f"n={n}", held >= need, held, len(study.runs))
    return CriterionResult(5, "CoP <= joint <= scratch", c.passed, c.report,
                           f"{held}/{len(study.runs)} seeds at n={n} (need >= {need})")


def criterion_mmd(study: TrainingStudy, need: int = 8) -> CriterionResult:
    c = _Checks(6, -1)
    smaller = 0
    for run, mmd in zip(study.runs, study.mmd):
        pre, sc = mmd["pretrained"]["mean"], mmd["scratch"]["mean"]
        smaller += pre < sc
        c.report.add("family_mmd2_mean", f"seed={run.seed}|pretrained", pre)
        c.report.add("family_mmd2_mean", f"seed={run.seed}|scratch", sc)
    c.flag("seeds_pretrained_smaller", "mean over classes", smaller >= need, smaller,
           len(study.runs))
    return CriterionResult(6, "pretrained encoder closes the family gap", c.passed, c.report,
                           f"{smaller}/{len(study.runs)} seeds (need >= {need})")


# -- 7. Shapley axioms ---------------------------------------------------------

def criterion_shapley(seed: int = 0, instances: int = 200, k: int = 5) -> CriterionResult:
    t0 = time.perf_counter()
    s = RngStream(seed).derive("acceptance", 7).sampler()
    c = _Checks(7, seed)
    x = s.normal((instances, k))
    y = np.sin(x[:, 0]) + x[:, 1] * x[:, 2] - 0.5 * x[:, 3] ** 2 + 0.1 * s.normal(instances)
    model = surrogate_fit(x, y)
    background = x[:50]
    rep = attribute(model, x, background)
    c.within("efficiency_max_gap", "surrogate", float(rep.efficiency_gap().max()), 0.0, 1e-9,
             instances)

    def ignores_last(z):
        z = np.array(np.atleast_2d(z), dtype=np.float64)
        z[:, -1] = 0.0
        return model(z)
    dummy = attribute(ignores_last, x, background)
    c.flag("dummy_exactly_zero", "last feature", bool(np.all(dummy.values[:, -1] == 0.0)),
           float(np.abs(dummy.values[:, -1]).max()), instances)
    c.within("efficiency_max_gap", "dummy model", float(dummy.efficiency_gap().max()), 0.0, 1e-9,
             instances)
    w = s.normal(k)
    linear = lambda z: np.atleast_2d(z) @ w
    expected = w * (x - background.mean(axis=0))
    got = np.stack([shapley_exact(linear, xi, background)[0] for xi in x])
    c.within("linear_closed_form_max_diff", "w.x", float(np.abs(got - expected).max()), 0.0, 1e-9,
             instances)
    return CriterionResult(7, "Shapley axioms", c.passed, c.report,
                           c.summary(f"{instances} instances, efficiency/dummy/linear hold"),
                           time.perf_counter() - t0)


# -- 8. depth analysis ---------------------------------------------------------

def _two_arm_manifest(beta_gained: float, stream: RngStream, per_arm: int = 40,
                      sd: float = 0.3):
    s = stream.sampler()
    recs = [Record("tissue", "tissue.nsmt", "external")]
    preds = {}
    for k, (arm, beta) in enumerate([("fixed", 0.01)] * per_arm + [("gained", beta_gained)] * per_arm):
        z = 100.0 + 700.0 * (k % per_arm) / (per_arm - 1)
        rid = f"{arm}-{k:03d}"
        recs.append(Record(rid, f"{rid}.nsmt", "corrupted", source="tissue",
                           metadata={"depth_um": z, "arm": arm}))
        g = 0.5 + beta * z + sd * float(s.normal(1)[0])
        preds[rid] = np.array([g, 0.1, 0.1, 0.1, 0.1, 0.1])
    return Manifest(recs), preds


def criterion_depth(seed: int = 0) -> CriterionResult:
    from .pipeline import add_depth

    t0 = time.perf_counter()
    root = RngStream(seed).derive("acceptance", 8)
    c = _Checks(8, seed)
    for label, beta_gained, expect in (("constructed", 0.0, EffectClass.LARGE),
                                       ("identical", 0.01, EffectClass.SMALL)):
        manifest, preds = _two_arm_manifest(beta_gained, root.derive(label))
        rep = AnalysisReport()
        add_depth(rep, preds, manifest, "gaussian")
        rows = {(r["metric"], r["subset"]): r for r in rep.rows}
        for arm, beta in (("fixed", 0.01), ("gained", beta_gained)):
            slope = rows[("depth_slope", f"gaussian|{arm}")]["value"]
            se = rows[("depth_slope_se", f"gaussian|{arm}")]["value"]
            c.within("slope", f"{label}|{arm}", slope, beta - 3 * se, beta + 3 * se)
        p = rows[("slope_diff_p", "gaussian|fixed|gained")]["value"]
        if label == "constructed":
            c.within("slope_diff_p", label, p, 0.0, 0.001)
        f2 = rows[("cohens_f2", "gaussian|fixed|gained")]
        c.flag("f2_class", f"{label}: expect {expect.value}", f2["note"] == expect.value,
               f2["value"])
    for value, expect in ((0.35, EffectClass.LARGE), (float(np.nextafter(0.35, 0)), EffectClass.MEDIUM),
                          (0.15, EffectClass.MEDIUM), (float(np.nextafter(0.15, 0)), EffectClass.SMALL)):
        c.flag("f2_boundary", f"{value!r} -> {expect.value}", classify_f2(value) is expect, value)
    return CriterionResult(8, "depth-analysis pipeline", c.passed, c.report,
                           c.summary("slopes within 3 SE, P < 0.001, Large/Small, boundaries"),
                           time.perf_counter() - t0)


# -- 9. statistical oracles ----------------------------------------------------

def _oracle_regression(p, t):
    n = len(t)
    mt = sum(t) / n
    mp = sum(p) / n
    ss_res = sum((p[i] - t[i]) ** 2 for i in range(n))
    ss_tot = sum((t[i] - mt) ** 2 for i in range(n))
    cov = sum((p[i] - mp) * (t[i] - mt) for i in range(n))
    vp = sum((p[i] - mp) ** 2 for i in range(n))
    return [(ss_res / n) ** 0.5, 1 - ss_res / ss_tot, cov / (vp * ss_tot) ** 0.5]


def _oracle_linear(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxx = sum((v - mx) ** 2 for v in x)
    sxy = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    b = sxy / sxx
    a = my - b * mx
    ss_res = sum((y[i] - a - b * x[i]) ** 2 for i in range(n))
    ss_tot = sum((v - my) ** 2 for v in y)
    s = (ss_res / (n - 2)) ** 0.5
    return [b, a, 1 - ss_res / ss_tot, s / sxx ** 0.5]


def _oracle_t(a, b):
    from scipy import stats as sps

    d = [a[i] - b[i] for i in range(len(a))]
    n = len(d)
    m = sum(d) / n
    sd = (sum((v - m) ** 2 for v in d) / (n - 1)) ** 0.5
    t = m / (sd / n ** 0.5)
    return t, float(2 * sps.t.sf(abs(t), n - 1))


def _oracle_classification(p, t, thresholds):
    rows, comps = len(p), len(p[0])

    def first_max(v):
        best = 0
        for j in range(1, comps):
            if v[j] > v[best]:
                best = j
        return best
    dom = sum(first_max(p[i]) == first_max(t[i]) for i in range(rows)) / rows
    curve = [sum((p[i][j] >= th) == (t[i][j] >= th) for i in range(rows) for j in range(comps))
             / (rows * comps) for th in thresholds]
    return dom, curve


def _oracle_ssim(x, ref):
    w = gaussian_window()
    k = w.shape[0]
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    vals = []
    for ch in range(x.shape[0]):
        a, b = x[ch], ref[ch]
        for i in range(a.shape[0] - k + 1):
            for j in range(a.shape[1] - k + 1):
                pa, pb = a[i:i + k, j:j + k], b[i:i + k, j:j + k]
                ma, mb = float((w * pa).sum()), float((w * pb).sum())
                va = float((w * pa * pa).sum()) - ma * ma
                vb = float((w * pb * pb).sum()) - mb * mb
                cov = float((w * pa * pb).sum()) - ma * mb
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) /
                            ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def criterion_oracles(seed: int = 0, instances: int = 100) -> CriterionResult:
    t0 = time.perf_counter()
    root = RngStream(seed).derive("acceptance", 9)
    c = _Checks(9, seed)
    worst = {"regression_metrics": 0.0, "linear_fit": 0.0, "paired_ttest_t": 0.0,
             "paired_ttest_p": 0.0, "classification_report": 0.0, "ssim": 0.0}
    thresholds = [0.05, 0.1, 0.2, 0.3]
    for i in range(instances):
        s = root.derive("instance", i).sampler()
        t = s.uniform(60)
        p = t + 0.1 * s.normal(60)
        m = regression_metrics(p, t)
        ref = _oracle_regression(list(p), list(t))
        worst["regression_metrics"] = max(worst["regression_metrics"], max(
            abs(u - v) for u, v in zip((m["rmse"], m["r_squared"], m["pearson_r"]), ref)))
        x = 100 + 700 * s.uniform(30)
        y = 0.01 * x + s.normal(30)
        f = linear_fit(x, y)
        ref = _oracle_linear(list(x), list(y))
        worst["linear_fit"] = max(worst["linear_fit"], max(
            abs(u - v) for u, v in zip((f.slope, f.intercept, f.r_squared, f.slope_se), ref)))
        a, b = s.normal(20), s.normal(20)
        tt = paired_ttest(a, b)
        rt, rp = _oracle_t(list(a), list(b))
        worst["paired_ttest_t"] = max(worst["paired_ttest_t"], abs(tt.t - rt))
        worst["paired_ttest_p"] = max(worst["paired_ttest_p"], abs(tt.p_value - rp))
        pp = np.stack([sample_strengths(root.derive("pred", i).derive("row", r)).vector()
                       for r in range(40)])
        tr = np.stack([sample_strengths(root.derive("truth", i).derive("row", r)).vector()
                       for r in range(40)])
        pp[:5] = tr[:5]  # some exact agreement, including threshold ties
        res = classification_report(pp, tr, thresholds)
        dom, curve = _oracle_classification(pp.tolist(), tr.tolist(), thresholds)
        worst["classification_report"] = max(worst["classification_report"],
                                             abs(res["dominant_accuracy"] - dom),
                                             *(abs(u - v) for u, v in zip(res["threshold_accuracy"], curve)))
        img = s.uniform((1, 24, 24))
        noisy = np.clip(img + 0.1 * s.normal((1, 24, 24)), 0, 1)
        worst["ssim"] = max(worst["ssim"], abs(ssim(noisy, img) - _oracle_ssim(noisy, img)))
    tolerances = {"regression_metrics": 1e-12, "linear_fit": 1e-12, "paired_ttest_t": 1e-9,
                  "paired_ttest_p": 1e-9, "classification_report": 0.0, "ssim": 1e-6}
    for name, tol in tolerances.items():
        c.within("max_abs_diff_vs_oracle", name, worst[name], 0.0, tol, instances)
    return CriterionResult(9, "statistical oracle equivalence", c.passed, c.report,
                           c.summary(f"{instances} instances x 5 statistics"),
                           time.perf_counter() - t0)


# -- 10. determinism -----------------------------------------------------------

def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "config.resolved.json":
            h.update(str(p.relative_to(root)).encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


def worker_independence(seed: int = 0, count: int = 24) -> dict[str, bool]:
    """Synthesis and windowed estimation outputs at 1 and 2 workers."""
    from . import cli
    from .model.checkpoint import initial_checkpoint

    out = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        digests, csvs = [], []
        model = initial_checkpoint(EncoderConfig(input_size=16, init_seed=seed))
        for workers in (1, 2):
            cfg = {**cli.DEFAULTS["synthesize"], "count": count, "seed": seed, "workers": workers,
                   "image_size": 40}
            d = tmp / f"w{workers}"
            manifest, _ = cli.synthesize(cfg, d)
            digests.append(_tree_digest(d))
            est = {**cli.DEFAULTS["estimate"], "seed": seed, "workers": workers, "window_size": 16}
            csvs.append(cli.estimate(est, model, manifest, d))
        out["synthesis"] = digests[0] == digests[1]
        out["estimate"] = csvs[0] == csvs[1]
    return out


def criterion_determinism(first: dict[int, CriterionResult], rerun: dict[int, CriterionResult],
                          study: TrainingStudy | None, study_rerun: TrainingStudy | None,
                          workers: dict[str, bool]) -> CriterionResult:
    c = _Checks(10, -1)
    for k in sorted(first):
        same = first[k].report_bytes() == rerun[k].report_bytes()
        c.flag("report_bytes_identical", f"criterion {k}", same)
    if study is not None and study_rerun is not None:
        for k, run in enumerate(study_rerun.runs):
            idx = [r.seed for r in study.runs].index(run.seed)
            same = (study.seed_report(idx).to_json() == study_rerun.seed_report(k).to_json()
                    and run.pretrained.digest() == study.runs[idx].pretrained.digest())
            c.flag("training_report_bytes_identical", f"seed={run.seed}", same)
    for name, same in sorted(workers.items()):
        c.flag("identical_across_workers", name, same)
    return CriterionResult(10, "determinism", c.passed, c.report,
                           c.summary(f"{len(c.report.rows)} byte comparisons identical"))


# -- 11. classical baselines ---------------------------------------------------

def criterion_baselines(seed: int = 0, trials: int = 100, rel_tol: float = 0.25,
                        need_within: float = 0.95, need_dominant: float = 0.90) -> CriterionResult:
    t0 = time.perf_counter()
    c = _Checks(11, seed)
    cells: dict[tuple[str, float], list] = {}
    for name, eta, _, est, dom in experiments.baseline_trials(seed, trials):
        cells.setdefault((name, eta), []).append((abs(est - eta) / eta <= rel_tol, dom == name))
    worst_within, worst_dom = 1.0, 1.0
    for (name, eta), rows in cells.items():
        within = sum(r[0] for r in rows) / len(rows)
        dom = sum(r[1] for r in rows) / len(rows)
        worst_within, worst_dom = min(worst_within, within), min(worst_dom, dom)
        c.within("fraction_within_25pct", f"{name}|eta={eta}", within, need_within, 1.0, len(rows))
        c.within("dominant_identified", f"{name}|eta={eta}", dom, need_dominant, 1.0, len(rows))
    return CriterionResult(11, "classical baseline estimators", c.passed, c.report,
                           c.summary(f"worst cell: {worst_within:.0%} within 25%, "
                                     f"{worst_dom:.0%} dominant identified"),
                           time.perf_counter() - t0)


FAST_CRITERIA = {1: criterion_engine, 2: criterion_zero_identity, 3: criterion_gradients,
                 7: criterion_shapley, 8: criterion_depth, 9: criterion_oracles,
                 11: criterion_baselines}
