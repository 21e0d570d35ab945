"""Acceptance checks, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line and then asserts.
Run on their own with ``pytest tests/test_acceptance.py -s``.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from risk_sieve.cli import main
from risk_sieve.evaluation import (
    ALL_MODELS,
    BASELINE_THRESHOLD,
    auc,
    bench,
    confusion,
    default_thresholds,
    label_baseline,
    roc_from_scores,
)
from risk_sieve.filter import apply_threshold, calibrate_pipeline, run_pipeline
from risk_sieve.geometry import min_path_distance
from risk_sieve.prediction import GaussianState, PredictionConfig
from risk_sieve.risk_models import (
    SurvivalConfig,
    closest_encounter,
    gaussian_overlap,
    risk_headway,
    risk_path_distance,
    risk_trajectory_distance,
    score_scenario,
    survival_from_overlaps,
)

from .conftest import agent, random_polyline
from .test_geometry import sampled_min_distance
from .test_risk_models import interp_positions, random_pair

MARGIN = 0.01
REFERENCE_SIGMA = {"path_distance": 0.04, "trajectory_distance": 0.07, "encounter_headway_2d": 0.14}


@pytest.fixture(scope="module")
def curves(dataset):
    out = {}
    for m in ALL_MODELS:
        out[m] = roc_from_scores(m, dataset.scores[m], dataset.labels, default_thresholds(m, dataset.cfg))
    return out


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")


def test_criterion_1_baseline_self_consistency(dataset, capsys):
    bad = []
    for i, sc in enumerate(dataset.scenarios):
        labels = label_baseline(sc, dataset.cfg)
        surv = {s.pair[1]: s.value for s in score_scenario(sc, "survival", dataset.cfg)}
        kept, _ = apply_threshold(surv, BASELINE_THRESHOLD)
        c = confusion(kept, labels)
        tpr = c.tpr if c.tp + c.fn else 1.0
        fpr = c.fpr if c.fp + c.tn else 0.0
        if tpr != 1.0 or fpr != 0.0:
            bad.append(i)
    ok = not bad
    report(capsys, 1, ok, f"survival at 1e-25 vs its own labels, TPR=1 FPR=0 on "
                          f"{len(dataset.scenarios) - len(bad)}/{len(dataset.scenarios)} scenarios")
    assert ok, bad


def test_criterion_2_auc_ordering(curves, capsys):
    a = {m: auc(c) for m, c in curves.items()}
    chain = [
        ("current_distance", "<", "path_distance"),
        ("path_distance", "<", "closest_encounter"),
        ("closest_encounter", "<=", "encounter_headway"),
        ("encounter_headway", "<=", "encounter_headway_2d"),
        ("encounter_headway_2d", "<", "trajectory_distance"),
        ("trajectory_distance", "<", "gaussian"),
        ("gaussian", "<", "survival"),
        ("encounter_headway_2d", "<=", "circle"),
    ]
    failed = []
    for lo, op, hi in chain:
        holds = a[hi] - a[lo] >= MARGIN if op == "<" else a[hi] >= a[lo]
        if not holds:
            failed.append(f"{lo} {op} {hi} ({a[lo]:.4f} vs {a[hi]:.4f})")
    ok = not failed and a["survival"] == 1.0
    listing = ", ".join(f"{m}={v:.4f}" for m, v in sorted(a.items(), key=lambda kv: kv[1]))
    detail = f"AUC {listing}"
    if failed:
        detail += "; violated: " + "; ".join(failed)
    report(capsys, 2, ok, detail)
    assert ok, detail


def test_criterion_3_robustness_ordering(curves, capsys):
    sigma = {}
    for m in REFERENCE_SIGMA:
        c = curves[m]
        sigma[m] = float(c.std_tpr[c.best_f1_index()])
    s = list(sigma.values())
    ok = s[0] < s[1] < s[2]
    detail = ", ".join(f"sigma({m})={v:.3f} (reference {REFERENCE_SIGMA[m]})" for m, v in sigma.items())
    report(capsys, 3, ok, detail)
    assert ok, detail


def test_criterion_4_oracle_equivalence(dataset, capsys):
    cfg = dataset.cfg
    rng = np.random.default_rng(2024)

    worst_path = 0.0
    for _ in range(200):
        a = random_polyline(rng, 2, 4, scale=5.0)
        b = random_polyline(rng, 2, 4, scale=5.0, offset=rng.uniform(-8, 8, 2))
        worst_path = max(worst_path, abs(min_path_distance(a, b) - sampled_min_distance(a, b)))
    ok_a = worst_path <= 2e-3

    grid = cfg.prediction.grid()
    ok_b = True
    for _ in range(200):
        ego, other = random_pair(rng)
        dist = np.hypot(*(interp_positions(ego, grid) - interp_positions(other, grid)).T)
        k = int(np.argmin(dist))
        d, s = closest_encounter(ego, other, cfg)
        ok_b &= abs(d - dist[k]) <= 1e-9 and s == pytest.approx(grid[k], abs=1e-12)

    worst_mc = 0.0
    for _ in range(50):
        mu1 = rng.uniform(-2, 2, 2)
        mu2 = mu1 + rng.uniform(-1.5, 1.5, 2)
        s1, s2 = rng.uniform(0.5, 2.0, 2)
        x = rng.normal(mu1, s1, size=(1_000_000, 2))
        mc = np.mean(np.exp(-0.5 * np.sum((x - mu2) ** 2, axis=1) / s2**2) / (2 * math.pi * s2**2))
        got = gaussian_overlap(GaussianState(tuple(mu1), np.eye(2) * s1**2),
                               GaussianState(tuple(mu2), np.eye(2) * s2**2))
        worst_mc = max(worst_mc, abs(got - mc) / mc)
    ok_c = worst_mc <= 0.02

    pcfg = replace(cfg, survival=SurvivalConfig(escape_rate=0.0))
    worst_poisson = 0.0
    for rate in (1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0, 2.0):
        po = np.full(pcfg.prediction.n_steps, rate * pcfg.dt)
        expect = 1 - math.exp(-rate * pcfg.prediction.horizon)
        worst_poisson = max(worst_poisson, abs(survival_from_overlaps(po, pcfg) - expect))
    ok_d = worst_poisson <= 1e-3

    ok = ok_a and ok_b and ok_c and ok_d
    report(capsys, 4, ok, f"(a) path max err {worst_path * 1e3:.3f} mm, (b) closest encounter exact={ok_b}, "
                          f"(c) Gaussian MC max rel err {worst_mc:.4f}, (d) Poisson max err {worst_poisson:.2e}")
    assert ok


def test_criterion_5_analytic_spot_values(dataset, capsys):
    cfg = dataset.cfg
    g = GaussianState((0.0, 0.0), np.eye(2))
    gauss_err = abs(gaussian_overlap(g, g) - 1 / (4 * math.pi))

    rng = np.random.default_rng(5)
    sat = replace(cfg, prediction=PredictionConfig(horizon=1e6, s_max=10))
    traj_equal = True
    for _ in range(100):
        ego, other = random_pair(rng)
        ego, other = replace(ego, speed=max(ego.speed, 1.0)), replace(other, speed=max(other.speed, 1.0))
        traj_equal &= risk_trajectory_distance(ego, other, sat).value == risk_path_distance(ego, other, sat).value

    ego = agent("ego", [(0, 0), (500, 0)], 10.0)
    ahead = agent("o", [(20, 0), (500, 0)], 3.0)
    hw = risk_headway(ego, ahead, cfg).value

    ok = gauss_err <= 1e-12 and traj_equal and hw == 1 / 3
    report(capsys, 5, ok, f"identity overlap err {gauss_err:.1e}, saturated trajectory == path: {traj_equal}, "
                          f"headway(20 m, 10 m/s) = {hw!r}")
    assert ok


def test_criterion_6_monotonicity(dataset, curves, capsys):
    roc_ok = True
    for c in curves.values():
        roc_ok &= bool(np.all(np.diff(c.mean_tpr) <= 0) and np.all(np.diff(c.mean_fpr) <= 0))
        kept = c.counts[:, 0] + c.counts[:, 1]
        roc_ok &= bool(np.all(np.diff(kept) <= 0))

    half = len(dataset.scenarios) // 2
    calib, calib_labels = dataset.scenarios[:half], dataset.labels[:half]
    pipe = calibrate_pipeline(calib, calib_labels, dataset.cfg, max_fn_rate=0.0)
    nested = True
    fn = 0
    for i, sc in enumerate(dataset.scenarios):
        trace = run_pipeline(sc, pipe, dataset.cfg)
        sets = [set(trace.input_ids), *(set(s.kept) for s in trace.stages)]
        nested &= all(b <= a for a, b in zip(sets, sets[1:]))
        if i < half:
            fn += confusion(trace.survivors, dict(zip(trace.input_ids, dataset.labels[i]))).fn

    ok = roc_ok and nested and fn == 0
    thr = ", ".join(f"{s.model}={s.threshold:.3g}" for s in pipe.stages)
    report(capsys, 6, ok, f"ROC monotone for all {len(curves)} models: {roc_ok}, survivors nested on "
                          f"{len(dataset.scenarios)} scenarios: {nested}, calibration-split FN = {fn} ({thr})")
    assert ok


def test_criterion_7_benchmark_ordering(dataset, capsys):
    cfg = dataset.cfg
    sample = dataset.scenarios[:20]
    t = {m: bench(m, sample, cfg, min_calls=10_000).median_s for m in
         ("current_distance", "path_distance", "trajectory_distance", "closest_encounter", "circle", "gaussian",
          "survival")}
    order_ok = (
        t["current_distance"] < min(t["path_distance"], t["trajectory_distance"])
        and max(t["path_distance"], t["trajectory_distance"]) < t["closest_encounter"]
        and t["closest_encounter"] < min(t["circle"], t["gaussian"])
        and max(t["circle"], t["gaussian"]) < t["survival"]
    )

    # at the default step the per-call overhead still hides the quadratic term
    coarse = replace(cfg, prediction=PredictionConfig(step=0.05))
    fine = replace(cfg, prediction=PredictionConfig(step=0.025))
    t_coarse = bench("survival", sample, coarse, min_calls=3000).median_s
    t_fine = bench("survival", sample, fine, min_calls=3000).median_s
    factor = t_fine / t_coarse
    scale_ok = 3.0 <= factor <= 5.0

    ok = order_ok and scale_ok
    timings = ", ".join(f"{m}={v * 1e9:.0f}ns" for m, v in t.items())
    report(capsys, 7, ok, f"{timings}; survival n {coarse.prediction.n_steps}->{fine.prediction.n_steps} "
                          f"factor {factor:.2f}")
    assert ok


def test_criterion_8_determinism(tmp_path, capsys):
    paths = {}
    for run in ("a", "b"):
        scen = tmp_path / f"scen_{run}.json"
        roc = tmp_path / f"roc_{run}.csv"
        assert main(["generate", "--seed", "42", "--n-scenarios", "100", "--out", str(scen)]) == 0
        assert main(["roc", str(scen), "--out", str(roc)]) == 0
        paths[run] = (scen.read_bytes(), roc.read_bytes(), (tmp_path / f"roc_{run}.auc.json").read_bytes())
    same = [x == y for x, y in zip(paths["a"], paths["b"])]
    ok = all(same)
    report(capsys, 8, ok, f"generate identical: {same[0]}, roc csv identical: {same[1]}, "
                          f"auc summary identical: {same[2]}")
    assert ok
