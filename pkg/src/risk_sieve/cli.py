"""Command-line entry point: generate, score, roc, calibrate, pipeline and bench.

Exit codes: 0 success, 2 usage/config/parse error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from . import scenario as scn
from .evaluation import (
    ALL_MODELS,
    BASELINE_THRESHOLD,
    auc,
    baseline_labels,
    bench,
    bench_csv,
    default_thresholds,
    roc_csv,
    roc_from_scores,
    scenario_scores,
)
from .filter import (
    Pipeline,
    calibrate_pipeline,
    calibrate_tiers,
    load_pipeline,
    run_pipeline,
    save_pipeline,
)
from .risk_models import MODELS, RiskConfig, score_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None


def _load_config(path: str | None) -> tuple[scn.GeneratorConfig, RiskConfig]:
    if path is None:
        return scn.GeneratorConfig(), RiskConfig()
    doc = _read_json(path, "config")
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(doc) - {"generator", "risk"}
    if unknown:
        raise UsageError(f"{path}: unknown config field: {sorted(unknown)[0]}")
    try:
        gen = scn.GeneratorConfig.from_dict(doc.get("generator", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: generator: {exc}") from None
    try:
        risk = RiskConfig.from_dict(doc.get("risk", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: risk: {exc}") from None
    return gen, risk


def _load_scenarios(path: str) -> list[scn.Scenario]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read scenarios {path}: {exc.strerror}") from None
    try:
        out = scn.load(data)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    except scn.ScenarioError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not out:
        raise DataError(f"{path}: no scenarios")
    return out


def _parse_models(spec: str | None, default=ALL_MODELS) -> list[str]:
    if spec is None:
        return list(default)
    names = [m.strip() for m in spec.split(",") if m.strip()]
    bad = [m for m in names if m not in MODELS]
    if bad or not names:
        raise UsageError(f"unknown model {bad[0] if bad else spec!r}; valid: {', '.join(MODELS)}")
    return names


def _jobs(args) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    else:
        env = os.environ.get("RISK_SIEVE_JOBS")
        if env is None:
            return 1
        try:
            jobs = int(env)
        except ValueError:
            raise UsageError(f"RISK_SIEVE_JOBS must be an integer, got {env!r}") from None
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return jobs


def _map(fn, items, jobs: int) -> list:
    """Ordered map, optionally over worker processes; results come back in input order."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _write(path: str, payload: bytes | str) -> None:
    data = payload.encode() if isinstance(payload, str) else payload
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def manifest_path(out: str) -> str:
    return str(out) + ".manifest.json"


def _write_manifest(args, risk: RiskConfig, gen, inputs, outputs, t0: float) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": {"generator": gen.to_dict() if gen is not None else None, "risk": risk.to_dict()},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.perf_counter() - t0, 6),
    }
    _write(manifest_path(outputs[0]), json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# workers (module level so they pickle)
# ---------------------------------------------------------------------------


def _score_rows(item, models, cfg):
    idx, sc = item
    rows = []
    for model in models:
        for s in score_scenario(sc, model, cfg):
            rows.append((idx, s.pair[1], model, s.value))
    return rows


def _all_scores(sc, models, cfg):
    return {m: scenario_scores(sc, m, cfg) for m in models}


def _trace(sc, pipeline, cfg):
    return run_pipeline(sc, pipeline, cfg)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    gen, risk = _load_config(args.config)
    if args.n_scenarios is not None:
        try:
            gen = scn.GeneratorConfig.from_dict({**gen.to_dict(), "n_scenarios": args.n_scenarios})
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    scenarios = scn.generate(gen, args.seed)
    _write(args.out, scn.save(scenarios))
    _write_manifest(args, risk, gen, [args.config] if args.config else [], [args.out], t0)
    print(f"wrote {len(scenarios)} scenarios to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    t0 = time.perf_counter()
    _, risk = _load_config(args.config)
    models = _parse_models(args.models)
    scenarios = _load_scenarios(args.scenarios)
    chunks = _map(partial(_score_rows, models=models, cfg=risk), enumerate(scenarios), _jobs(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario_id", "agent_id", "model", "risk"])
    n = 0
    for rows in chunks:
        for idx, agent, model, value in rows:
            w.writerow([idx, agent, model, repr(value)])
            n += 1
    _write(args.out, buf.getvalue())
    _write_manifest(args, risk, None, [args.scenarios], [args.out], t0)
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


def _auc_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".auc.json"))


def cmd_roc(args) -> int:
    t0 = time.perf_counter()
    _, risk = _load_config(args.config)
    models = _parse_models(args.models)
    scenarios = _load_scenarios(args.scenarios)
    needed = list(dict.fromkeys([*models, "survival"]))
    per_scenario = _map(partial(_all_scores, models=needed, cfg=risk), scenarios, _jobs(args))
    labels = [d["survival"] >= BASELINE_THRESHOLD for d in per_scenario]
    curves, summary = [], {}
    for m in models:
        curve = roc_from_scores(m, [d[m] for d in per_scenario], labels, default_thresholds(m, risk))
        curves.append(curve)
        i = curve.best_f1_index()
        summary[m] = {
            "auc": auc(curve),
            "best_f1": float(curve.f1()[i]),
            "best_f1_threshold": float(curve.thresholds[i]),
            "std_tpr_at_best_f1": float(curve.std_tpr[i]),
        }
    _write(args.out, roc_csv(curves))
    auc_out = _auc_path(args.out)
    doc = {"baseline": {"model": "survival", "threshold": BASELINE_THRESHOLD},
           "scenarios": len(scenarios), "models": summary}
    _write(auc_out, json.dumps(doc, indent=2) + "\n")
    _write_manifest(args, risk, None, [args.scenarios], [args.out, auc_out], t0)
    for m, s in summary.items():
        print(f"{m:22s} auc={s['auc']:.4f} sigma_tpr={s['std_tpr_at_best_f1']:.3f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    _, risk = _load_config(args.config)
    if not 0.0 <= args.fn_rate <= 1.0:
        raise UsageError("--fn-rate must be in [0, 1]")
    if not 0.0 < args.split <= 1.0:
        raise UsageError("--split must be in (0, 1]")
    scenarios = _load_scenarios(args.scenarios)
    n_cal = max(1, int(round(args.split * len(scenarios))))
    cal = scenarios[:n_cal]
    labels = baseline_labels(cal, risk)
    pipeline = calibrate_pipeline(cal, labels, risk, args.fn_rate)
    traces = _map(partial(_trace, pipeline=pipeline, cfg=risk), cal, _jobs(args))
    tiers = calibrate_tiers([np.array(list(t.tier_scores.values())) for t in traces])
    pipeline = Pipeline(pipeline.stages, pipeline.tier_model, tiers)
    try:
        save_pipeline(pipeline, args.out)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc.strerror}") from None
    _write_manifest(args, risk, None, [args.scenarios], [args.out], t0)
    for s in pipeline.stages:
        print(f"{s.model:22s} threshold={s.threshold!r}")
    print(f"tier thresholds: {list(pipeline.tier_thresholds)}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    t0 = time.perf_counter()
    _, risk = _load_config(args.config)
    try:
        pipeline = load_pipeline(args.pipeline)
    except OSError as exc:
        raise DataError(f"cannot read pipeline {args.pipeline}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.pipeline}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.pipeline}: {exc}") from None
    scenarios = _load_scenarios(args.scenarios)
    traces = _map(partial(_trace, pipeline=pipeline, cfg=risk), scenarios, _jobs(args))
    counts = np.array([t.counts() for t in traces], dtype=float)
    tier_sizes = np.array([[len(x) for x in t.tiers] for t in traces], dtype=float)
    doc = {
        "pipeline": pipeline.to_dict(),
        "summary": {
            "stage_labels": ["input", *(s.model for s in pipeline.stages)],
            "mean_counts": counts.mean(axis=0).tolist(),
            "mean_tier_sizes": tier_sizes.mean(axis=0).tolist(),
            "total_calls": int(sum(t.calls for t in traces)),
        },
        "scenarios": [{"scenario_id": i, **t.to_dict()} for i, t in enumerate(traces)],
    }
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    _write_manifest(args, risk, None, [args.scenarios, args.pipeline], [args.out], t0)
    labels = doc["summary"]["stage_labels"]
    for name, c in zip(labels, doc["summary"]["mean_counts"]):
        print(f"{name:22s} mean agents {c:8.2f}")
    print("mean tier sizes: " + " / ".join(f"{x:.2f}" for x in doc["summary"]["mean_tier_sizes"]))
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    _, risk = _load_config(args.config)
    models = _parse_models(args.models)
    if args.min_calls < 1:
        raise UsageError("--min-calls must be >= 1")
    scenarios = _load_scenarios(args.scenarios)
    results = []
    for m in models:
        r = bench(m, scenarios, risk, min_calls=args.min_calls)
        results.append(r)
        print(f"{m:22s} median {r.median_s * 1e9:10.0f} ns  p95 {r.p95_s * 1e9:10.0f} ns")
    _write(args.out, bench_csv(results))
    _write_manifest(args, risk, None, [args.scenarios], [args.out], t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risk-sieve", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenarios=True, models=False, jobs=True):
        sp.add_argument("--config", metavar="PATH", help="JSON with optional 'generator' and 'risk' sections")
        sp.add_argument("--out", metavar="PATH", required=True)
        if scenarios:
            sp.add_argument("scenarios", help="scenario JSON file")
        if models:
            sp.add_argument("--models", metavar="a,b,c", help="comma-separated model names (default: all)")
        if jobs:
            sp.add_argument("--jobs", type=int, help="worker processes (default: $RISK_SIEVE_JOBS or 1)")

    g = sub.add_parser("generate", help="generate synthetic intersection scenarios")
    common(g, scenarios=False, jobs=False)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n-scenarios", type=int, help="override the configured scenario count")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("score", help="per-agent risk CSV")
    common(s, models=True)
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("roc", help="ROC curves against the survival baseline, plus AUC JSON")
    common(r, models=True)
    r.set_defaults(func=cmd_roc)

    c = sub.add_parser("calibrate", help="calibrate the default pipeline and write its JSON")
    common(c)
    c.add_argument("--fn-rate", type=float, default=0.0, help="allowed aggregate false-negative rate")
    c.add_argument("--split", type=float, default=0.5, help="leading fraction of scenarios used for calibration")
    c.set_defaults(func=cmd_calibrate)

    pl = sub.add_parser("pipeline", help="run a filter pipeline and write per-scenario traces")
    common(pl)
    pl.add_argument("pipeline", help="pipeline JSON file")
    pl.set_defaults(func=cmd_pipeline)

    b = sub.add_parser("bench", help="per-pair scoring time per model")
    common(b, models=True, jobs=False)
    b.add_argument("--min-calls", type=int, default=10_000)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"risk-sieve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, scn.ScenarioError) as exc:
        print(f"risk-sieve: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
