"""Baseline labelling, confusion counts, ROC sweeps, AUC and per-pair timing."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass

import numpy as np

from .risk_models import DISTANCE_SCALE, MODELS, RiskConfig, get_model, score_scenario
from .scenario import Scenario

BASELINE_MODEL = "survival"
BASELINE_THRESHOLD = 1e-25


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float:
        pos = self.tp + self.fn
        return self.tp / pos if pos else math.nan

    @property
    def fpr(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else math.nan


@dataclass(frozen=True)
class RocCurve:
    """Macro-averaged ROC points, one per threshold (ascending).

    ``counts`` holds the confusion counts pooled over all scenarios, as an
    ``(n_thresholds, 4)`` array of ``tp, fp, tn, fn``.
    """

    model: str
    thresholds: np.ndarray
    mean_tpr: np.ndarray
    std_tpr: np.ndarray
    mean_fpr: np.ndarray
    std_fpr: np.ndarray
    counts: np.ndarray

    def f1(self) -> np.ndarray:
        tp, fp, _, fn = self.counts.T.astype(float)
        denom = 2 * tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, 2 * tp / denom, 0.0)

    def best_f1_index(self) -> int:
        """Index of the highest pooled F1; ties go to the larger threshold."""
        f1 = self.f1()
        return int(np.flatnonzero(f1 == f1.max())[-1])


@dataclass(frozen=True)
class BenchResult:
    model: str
    median_s: float
    p95_s: float
    pairs: int


def label_baseline(scenario: Scenario, cfg: RiskConfig, threshold: float = BASELINE_THRESHOLD) -> dict[str, bool]:
    """Importance labels: survival risk at or above ``threshold``."""
    return {s.pair[1]: s.value >= threshold for s in score_scenario(scenario, BASELINE_MODEL, cfg)}


def confusion(kept, labels: dict[str, bool]) -> ConfusionCounts:
    kept = set(kept)
    unknown = kept - labels.keys()
    if unknown:
        raise KeyError(f"kept ids without label: {sorted(unknown)}")
    tp = fp = tn = fn = 0
    for agent_id, important in labels.items():
        if agent_id in kept:
            if important:
                tp += 1
            else:
                fp += 1
        elif important:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def default_thresholds(model: str, cfg: RiskConfig | None = None) -> np.ndarray:
    """Sweep grid for a model, endpoints 0 and +inf included.

    Distance-scale models sweep ``eps/(eps+d)`` for 20 log-spaced ``d`` in
    [0.1, 100] m; Gaussian and survival sweep 1e-300 ... 1e-5 per decade.
    """
    if model in DISTANCE_SCALE:
        eps = (cfg or RiskConfig()).epsilon
        d = np.logspace(-1, 2, 20)
        grid = np.sort(eps / (eps + d))
    else:
        grid = 10.0 ** np.arange(-300, -4, dtype=float)
    return np.concatenate([[0.0], grid, [np.inf]])


def _scenario_rates(values: np.ndarray, important: np.ndarray, thresholds: np.ndarray):
    kept = values[None, :] >= thresholds[:, None]
    imp = important[None, :]
    tp = np.sum(kept & imp, axis=1)
    fp = np.sum(kept & ~imp, axis=1)
    fn = np.sum(~kept & imp, axis=1)
    tn = np.sum(~kept & ~imp, axis=1)
    return tp, fp, tn, fn


def roc_from_scores(
    model: str,
    scores: list[np.ndarray],
    labels: list[np.ndarray],
    thresholds,
    empty_positive_tpr: str = "one",
) -> RocCurve:
    """ROC from precomputed per-scenario score and label arrays.

    Scenarios without important agents contribute TPR = 1 (``empty_positive_tpr="one"``)
    or are left out of the TPR average (``"skip"``). Scenarios without unimportant
    agents are left out of the FPR average.
    """
    if empty_positive_tpr not in ("one", "skip"):
        raise ValueError("empty_positive_tpr must be 'one' or 'skip'")
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    n_thr = thresholds.shape[0]
    tprs = np.full((len(scores), n_thr), np.nan)
    fprs = np.full((len(scores), n_thr), np.nan)
    counts = np.zeros((n_thr, 4), dtype=np.int64)
    for i, (vals, imp) in enumerate(zip(scores, labels)):
        tp, fp, tn, fn = _scenario_rates(np.asarray(vals, float), np.asarray(imp, bool), thresholds)
        counts += np.stack([tp, fp, tn, fn], axis=1)
        pos = tp + fn
        neg = fp + tn
        if pos[0] > 0:
            tprs[i] = tp / pos
        elif empty_positive_tpr == "one":
            tprs[i] = 1.0
        if neg[0] > 0:
            fprs[i] = fp / neg
    with np.errstate(invalid="ignore"):
        mean_tpr = np.nanmean(tprs, axis=0) if np.any(~np.isnan(tprs)) else np.full(n_thr, np.nan)
        std_tpr = np.nanstd(tprs, axis=0) if np.any(~np.isnan(tprs)) else np.full(n_thr, np.nan)
        mean_fpr = np.nanmean(fprs, axis=0) if np.any(~np.isnan(fprs)) else np.full(n_thr, np.nan)
        std_fpr = np.nanstd(fprs, axis=0) if np.any(~np.isnan(fprs)) else np.full(n_thr, np.nan)
    return RocCurve(model, thresholds, mean_tpr, std_tpr, mean_fpr, std_fpr, counts)


def scenario_scores(scenario: Scenario, model: str, cfg: RiskConfig) -> np.ndarray:
    return np.array([s.value for s in score_scenario(scenario, model, cfg)])


def baseline_labels(scenarios, cfg: RiskConfig) -> list[np.ndarray]:
    """Per-scenario boolean importance arrays, ordered like :func:`score_scenario`."""
    return [scenario_scores(s, BASELINE_MODEL, cfg) >= BASELINE_THRESHOLD for s in scenarios]


def roc_sweep(model: str, scenarios, thresholds, cfg: RiskConfig, labels=None, **kwargs) -> RocCurve:
    if not scenarios:
        raise ValueError("roc_sweep needs at least one scenario")
    if labels is None:
        labels = baseline_labels(scenarios, cfg)
    scores = [scenario_scores(s, model, cfg) for s in scenarios]
    return roc_from_scores(model, scores, labels, thresholds, **kwargs)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the (FPR, TPR) points, anchored at (0, 0) and (1, 1)."""
    fpr = np.asarray(curve.mean_fpr, float)
    tpr = np.asarray(curve.mean_tpr, float)
    ok = ~(np.isnan(fpr) | np.isnan(tpr))
    pts = sorted(zip(fpr[ok], tpr[ok]))
    pts = [(0.0, 0.0), *pts, (1.0, 1.0)]
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def bench(model: str, scenarios, cfg: RiskConfig, min_calls: int = 10_000, warmup: int = 200) -> BenchResult:
    """Wall-clock time of single ``(ego, other)`` scoring calls.

    Pairs are cycled from ``scenarios`` until ``min_calls`` calls are timed.
    """
    fn = get_model(model)
    pairs = [(s.ego, a) for s in scenarios for a in s.others]
    if not pairs:
        raise ValueError("no agent pairs to time")
    for i in range(min(warmup, len(pairs))):
        fn(pairs[i][0], pairs[i][1], cfg)
    n = max(min_calls, len(pairs))
    times = np.empty(n)
    clock = time.perf_counter_ns
    for i in range(n):
        ego, other = pairs[i % len(pairs)]
        t0 = clock()
        fn(ego, other, cfg)
        times[i] = clock() - t0
    times *= 1e-9
    return BenchResult(model, float(np.median(times)), float(np.percentile(times, 95)), n)


def roc_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "threshold", "mean_tpr", "std_tpr", "mean_fpr", "std_fpr"])
    for c in curves:
        for row in zip(c.thresholds, c.mean_tpr, c.std_tpr, c.mean_fpr, c.std_fpr):
            w.writerow([c.model, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def bench_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "median_ns", "p95_ns", "pairs"])
    for r in results:
        w.writerow([r.model, round(r.median_s * 1e9), round(r.p95_s * 1e9), r.pairs])
    return buf.getvalue()


ALL_MODELS = tuple(MODELS)
