"""Report assembly for the ``analyze`` command.

Each analysis appends rows to an :class:`AnalysisReport`.  An analysis whose
inputs are missing appends a single ``skipped: ...`` row instead of failing.
"""
from __future__ import annotations

import numpy as np

from .analysis.depth import depth_analysis
from .analysis.metrics import (THRESHOLD_ACCURACY_DEFINITION, classification_report,
                               correlation_matrix, fit_residual_gaussian, regression_metrics)
from .analysis.report import AnalysisReport
from .analysis.shapley import attribute, surrogate_fit
from .engine import PRIMITIVES
from .manifest import Manifest
from .numerics import UndefinedStatisticError

MAX_BACKGROUND = 100
Z95 = 1.959963984540054


def _ground_truth(preds, manifest: Manifest):
    recs = manifest.by_id()
    ids = [i for i in preds if recs[i].strengths is not None]
    if not ids:
        return None
    return (ids, np.stack([preds[i] for i in ids]),
            np.stack([recs[i].strengths.vector() for i in ids]))


def add_metrics(report: AnalysisReport, preds, manifest: Manifest) -> None:
    gt = _ground_truth(preds, manifest)
    if gt is None:
        report.skip("metrics", "missing ground-truth strengths")
        return
    _, p, t = gt
    for j, name in enumerate(PRIMITIVES):
        try:
            m = regression_metrics(p[:, j], t[:, j])
        except UndefinedStatisticError as exc:
            report.add("rmse", name, float(np.sqrt(((p[:, j] - t[:, j]) ** 2).mean())), n=len(p))
            report.add("r_squared", name, None, n=len(p), note=f"missing: {exc}")
            continue
        for key in ("rmse", "r_squared", "pearson_r"):
            report.add(key, name, m[key], n=len(p))
        fit = fit_residual_gaussian(p[:, j], t[:, j])
        report.add("residual_mu", name, fit.mu, n=len(p))
        report.add("residual_sigma", name, fit.sigma, n=len(p))


def add_classification(report: AnalysisReport, preds, manifest: Manifest, thresholds) -> None:
    gt = _ground_truth(preds, manifest)
    if gt is None:
        report.skip("classification", "missing ground-truth strengths")
        return
    _, p, t = gt
    res = classification_report(p, t, thresholds)
    report.add("dominant_accuracy", "all", res["dominant_accuracy"], n=len(p))
    for th, acc in zip(res["thresholds"], res["threshold_accuracy"]):
        report.add("threshold_accuracy", f"t={th!r}", acc, n=len(p),
                   note=THRESHOLD_ACCURACY_DEFINITION)


def _feature_table(preds, manifest: Manifest, features):
    recs = manifest.by_id()
    usable = [f for f in features
              if any(isinstance(recs[i].metadata.get(f), (int, float)) for i in preds)]
    ids = [i for i in preds
           if all(isinstance(recs[i].metadata.get(f), (int, float)) for f in usable)]
    if not usable or len(ids) < 2:
        return None
    x = np.array([[float(recs[i].metadata[f]) for f in usable] for i in ids])
    return usable, ids, x


def add_correlation(report: AnalysisReport, preds, manifest: Manifest, features) -> None:
    table = _feature_table(preds, manifest, features)
    if table is None:
        report.skip("correlation", "missing metadata")
        return
    names, ids, x = table
    cols = {f: x[:, k] for k, f in enumerate(names)}
    cols.update({p: np.array([preds[i][j] for i in ids]) for j, p in enumerate(PRIMITIVES)})
    labels, m = correlation_matrix(cols)
    for a in range(len(labels)):
        for b in range(a + 1, len(labels)):
            v = m[a, b]
            report.add("pearson_r", f"{labels[a]}~{labels[b]}", None if np.isnan(v) else v,
                       n=len(ids), note="missing: zero variance" if np.isnan(v) else None)


def add_shapley(report: AnalysisReport, preds, manifest: Manifest, features) -> None:
    table = _feature_table(preds, manifest, features)
    if table is None or len(table[1]) <= len(table[0]):
        report.skip("shapley", "missing metadata")
        return
    names, ids, x = table
    step = max(1, len(x) // MAX_BACKGROUND)
    background = x[::step][:MAX_BACKGROUND]
    for j, comp in enumerate(PRIMITIVES):
        y = np.array([preds[i][j] for i in ids])
        surrogate = surrogate_fit(x, y)
        report.add("surrogate_r_squared", comp, surrogate.r_squared, n=len(ids),
                   note="ridge fallback" if surrogate.ridge else None)
        attr = attribute(surrogate, x, background, names)
        for src, tgt, w in attr.sankey(comp):
            report.add("sankey_mean_abs_shap", f"{src}->{tgt}", w, n=len(ids))
        report.add("shap_efficiency_max_gap", comp, float(attr.efficiency_gap().max()), n=len(ids))


def add_depth(report: AnalysisReport, preds, manifest: Manifest, component: str) -> None:
    recs = manifest.by_id()
    ids = [i for i in preds if isinstance(recs[i].metadata.get("depth_um"), (int, float))
           and isinstance(recs[i].metadata.get("arm"), str)]
    if len(ids) < 5:
        report.skip("depth", "missing metadata (depth_um and arm)")
        return
    j = PRIMITIVES.index(component)
    z = [recs[i].metadata["depth_um"] for i in ids]
    arm = [recs[i].metadata["arm"] for i in ids]
    y = [preds[i][j] for i in ids]
    try:
        res = depth_analysis(z, y, arm)
    except (ValueError, UndefinedStatisticError) as exc:
        report.skip("depth", str(exc))
        return
    for name, fit in res.fits.items():
        report.add("depth_slope", f"{component}|{name}", fit.slope,
                   fit.slope - Z95 * fit.slope_se, fit.slope + Z95 * fit.slope_se, fit.n)
        report.add("depth_slope_se", f"{component}|{name}", fit.slope_se, n=fit.n)
        report.add("depth_r_squared", f"{component}|{name}", fit.r_squared, n=fit.n)
    pair = "|".join(res.arms)
    report.add("slope_diff_t", f"{component}|{pair}", res.slope_test.t, n=len(ids))
    report.add("slope_diff_p", f"{component}|{pair}", res.slope_test.p_value, n=len(ids))
    report.add("cohens_f2", f"{component}|{pair}", res.effect.f_squared, n=len(ids),
               note=res.effect.effect.value)


def run_analyses(report: AnalysisReport, cfg: dict, preds, manifest: Manifest) -> None:
    report.notes.append(f"threshold accuracy: {THRESHOLD_ACCURACY_DEFINITION}")
    for name in cfg["analyses"]:
        if name == "metrics":
            add_metrics(report, preds, manifest)
        elif name == "classification":
            add_classification(report, preds, manifest, cfg["thresholds"])
        elif name == "correlation":
            add_correlation(report, preds, manifest, cfg["features"])
        elif name == "shapley":
            add_shapley(report, preds, manifest, cfg["features"])
        elif name == "depth":
            add_depth(report, preds, manifest, cfg["component"])
        else:
            report.skip(name, "unknown analysis")
