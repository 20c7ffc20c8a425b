"""Command-line harness: ``iterbias {analyze,simulate,metrics,sweep,validate}``."""

from __future__ import annotations

import argparse
import itertools
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .chain import build_transition, diagnostics, stationary
from .config import ExperimentSpec, check_exact_size, parse_config, parse_config_dict, with_overrides
from .debias import EnsembleSpec
from .errors import ConvergenceError, CrossFieldError, IterBiasError, OutputFileError, SizeGuardError
from .metrics import (algorithm_blind_spot, filter_bubble, human_blind_spot, selection_divergence)
from .output import (file_digest, read_jsonl, write_csv, write_json, write_jsonl, write_matrix_csv)
from .simulator import (METRICS, aggregate, empirical_hypothesis_distribution, run_antidote_ensemble,
                        run_replicas, trajectories_from_records)

SWEEP_FAILURE = 12


def _now():
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out: Path, spec: ExperimentSpec, command: str, files: list, started: str) -> Path:
    manifest = {
        "command": command,
        "config_digest": spec.digest(),
        "config": spec.raw,
        "seed": spec.run.seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": {str(Path(f).relative_to(out)): file_digest(f) for f in files},
    }
    return write_json(out / "manifest.json", manifest)


def _prepare(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputFileError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_analyze(spec: ExperimentSpec, out) -> list:
    """Exact chain: transition.csv, stationary.csv, diagnostics.json, manifest.json."""
    started = _now()
    out = _prepare(out)
    world = spec.world_obj
    check_exact_size(spec)
    T = build_transition(world, spec.chain_spec())
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = stationary(T, spec.chain.method)
    report = diagnostics(T, world.prior, result)
    other = "power" if spec.chain.method == "eigen" else "eigen"
    agreement = None
    if not result.reducible:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                agreement = float(np.abs(stationary(T, other).pi - result.pi).sum())
        except ConvergenceError:
            pass
    report.update({
        "hypotheses": list(world.names),
        "prior": world.prior,
        "pi": result.pi,
        "method_agreement_l1": agreement,
        "warnings": [str(w.message) for w in caught],
    })
    files = [
        write_matrix_csv(out / "transition.csv", T),
        write_matrix_csv(out / "stationary.csv", result.pi[None, :]),
        write_json(out / "diagnostics.json", report),
    ]
    write_manifest(out, spec, "analyze", files, started)
    return files + [out / "manifest.json"]


def _metric_rows(agg: dict, prefix: str = ""):
    for name, (mean, lo, hi) in agg.items():
        for n in range(mean.shape[0]):
            yield [n, prefix + name, mean[n], lo[n], hi[n]]


def cmd_simulate(spec: ExperimentSpec, out, jobs: int = 1) -> list:
    """Trajectories: events.jsonl (full log level), metrics.csv, manifest.json."""
    started = _now()
    out = _prepare(out)
    world = spec.world_obj
    run = spec.run_spec()
    burn_in = run.effective_burn_in
    meta = [["meta", "iterations", run.iterations, "", ""], ["meta", "replicas", run.replicas, "", ""],
            ["meta", "seed", run.seed, "", ""], ["meta", "burn_in", burn_in, "", ""]]
    files = []
    if isinstance(spec.policy, EnsembleSpec):
        members, acc = run_antidote_ensemble(world, spec.policy, spec.human, spec.learner, run)
        rows = list(meta)
        for m, trajs in enumerate(members):
            if run.log_level == "full":
                mdir = _prepare(out / "members" / f"m{m}")
                files.append(write_jsonl(mdir / "events.jsonl",
                                         (r.as_dict() for t in trajs for r in t.records())))
            rows += _metric_rows(aggregate(trajs), prefix=f"m{m}:")
        mean = acc.mean(axis=0)
        half = 1.96 * acc.std(axis=0, ddof=1) / np.sqrt(run.replicas) if run.replicas > 1 else np.zeros_like(mean)
        rows += _metric_rows({"ensemble_item_accuracy": (mean, mean - half, mean + half)})
    else:
        log = run_replicas(world, spec.policy, spec.human, spec.learner, run, jobs)
        if run.log_level == "full":
            files.append(write_jsonl(out / "events.jsonl", (r.as_dict() for r in log.records())))
        rows = meta + list(_metric_rows(aggregate(log.trajectories, METRICS)))
        if run.iterations > burn_in:
            freq = empirical_hypothesis_distribution(log.trajectories, burn_in, world.n_hypotheses)
            rows += [["stationary", f"h{j}", f, "", ""] for j, f in enumerate(freq)]
    files.append(write_csv(out / "metrics.csv", ["iteration", "metric", "mean", "ci_lo", "ci_hi"], rows))
    write_manifest(out, spec, "simulate", files, started)
    return files + [out / "manifest.json"]


def _require_single_policy(spec):
    if isinstance(spec.policy, EnsembleSpec):
        raise CrossFieldError("policy.kind", "metrics need a single selection policy, not an ensemble")
    return spec.policy


def cmd_metrics(spec: ExperimentSpec, out, log_path=None) -> list:
    """Blind spots, filter bubble and selection divergence."""
    started = _now()
    out = _prepare(out)
    world = spec.world_obj
    policy = _require_single_policy(spec)
    m = spec.metrics
    blind = {
        "human": [dict(human_blind_spot(world, h, policy, m.delta_human, m.basis).as_dict(), h=h)
                  for h in range(world.n_hypotheses)],
        "algorithm": algorithm_blind_spot(world, spec.human, m.delta_algorithm).as_dict(),
    }
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if log_path is not None or m.mode == "simulation":
            if log_path is None:
                raise OutputFileError("metrics.mode=simulation needs an event log (--log)")
            log_path = Path(log_path)
            if not log_path.is_file():
                raise OutputFileError(f"event log not found: {log_path}")
            logs = trajectories_from_records(read_jsonl(log_path), spec.human.target)
            bubble = filter_bubble(world, policy, m.horizon, m.bubble_delta, logs=logs)
            mode = "simulation"
        else:
            check_exact_size(spec)
            T = build_transition(world, spec.chain_spec())
            bubble = filter_bubble(world, policy, m.horizon, m.bubble_delta, transition=T)
            mode = "exact"
    bubble_doc = dict(bubble.as_dict(), mode=mode, warnings=[str(w.message) for w in caught])
    div_rows = []
    for h in range(world.n_hypotheses):
        d = selection_divergence(world, policy, h)
        div_rows.append([h, d.kl, d.tv, " ".join(map(str, d.support_violations))])
    files = [
        write_json(out / "blindspots.json", blind),
        write_json(out / "bubble.json", bubble_doc),
        write_csv(out / "divergence.csv", ["h", "kl", "tv", "support_violations"], div_rows),
    ]
    write_manifest(out, spec, "metrics", files, started)
    return files + [out / "manifest.json"]


def _summary(spec: ExperimentSpec, command: str, out: Path) -> dict:
    import json

    world = spec.world_obj
    row = {}
    if not isinstance(spec.policy, EnsembleSpec):
        m = spec.metrics
        row["human_prevalence"] = human_blind_spot(world, spec.human.target, spec.policy, m.delta_human,
                                                   m.basis).prevalence
    row["algorithm_prevalence"] = algorithm_blind_spot(world, spec.human, spec.metrics.delta_algorithm).prevalence
    if command == "analyze":
        diag = json.loads((out / "diagnostics.json").read_text())
        row.update(tv_pi_prior=diag["tv_pi_prior"], spectral_gap=diag["spectral_gap"],
                   reducible=diag["reducible"])
    return row


def _run_point(args):
    i, raw, assignment, command, out = args
    point_dir = Path(out) / f"point_{i:03d}"
    try:
        spec = parse_config_dict(raw)
        COMMANDS[command](spec, point_dir)
        row = {"status": "ok", "error": ""}
        row.update(_summary(spec, command, point_dir))
    except IterBiasError as exc:
        row = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
    return i, assignment, row


SUMMARY_COLUMNS = ["status", "error", "tv_pi_prior", "spectral_gap", "reducible", "human_prevalence",
                   "algorithm_prevalence"]


def cmd_sweep(spec: ExperimentSpec, out, grid: dict | None = None, jobs: int = 1) -> tuple:
    """One subdirectory per grid point plus summary.csv. Returns (files, n_failed)."""
    started = _now()
    out = _prepare(out)
    grid = dict(spec.sweep["grid"], **(grid or {}))
    if not grid:
        raise CrossFieldError("sweep.grid", "empty parameter grid")
    keys = list(grid)
    command = spec.sweep["command"]
    tasks = []
    for i, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        assignment = dict(zip(keys, values))
        raw = with_overrides(spec.raw, assignment)
        raw.pop("sweep", None)
        tasks.append((i, raw, assignment, command, str(out)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    rows = [[f"point_{i:03d}"] + [a[k] for k in keys] + [row.get(c) for c in SUMMARY_COLUMNS]
            for i, a, row in results]
    files = [write_csv(out / "summary.csv", ["point"] + keys + SUMMARY_COLUMNS, rows)]
    write_manifest(out, spec, "sweep", files, started)
    failed = sum(1 for _, _, row in results if row["status"] != "ok")
    return files + [out / "manifest.json"], failed


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "metrics": cmd_metrics}


def _parse_grid(items):
    grid = {}
    for item in items or ():
        key, sep, values = item.partition("=")
        if not sep:
            raise CrossFieldError("sweep.grid", f"--grid expects KEY=v1,v2,..., got {item!r}")
        grid[key] = [yaml.safe_load(v) for v in values.split(",")]
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iterbias", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("analyze", "exact Markov-chain analysis"), ("simulate", "Monte Carlo trajectories"),
                            ("metrics", "blind spots, bubbles, divergence"), ("sweep", "parameter grid"),
                            ("validate", "check a config file only")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        p.add_argument("--jobs", type=int, default=1, help="parallel replicas / sweep points")
        p.add_argument("--log-level", choices=("full", "metrics-only"))
        if name == "metrics":
            p.add_argument("--log", type=Path, help="events.jsonl for simulation-mode exposure")
        if name == "sweep":
            p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                           help="grid axis, e.g. policy.epsilon=0,0.5,1 (repeatable)")
    return parser


def load_spec(args) -> ExperimentSpec:
    spec = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.log_level is not None:
        overrides["run.log_level"] = args.log_level
    if overrides:
        spec = parse_config_dict(with_overrides(spec.raw, overrides))
    return spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
        out = args.out or Path(spec.output_dir)
        if args.command == "validate":
            w = spec.world_obj
            print(f"ok: |H|={w.n_hypotheses} M={w.n_items} digest={spec.digest()}")
            try:
                check_exact_size(spec)
            except SizeGuardError as exc:
                print(f"note: {exc}; only simulate is available")
            return 0
        if args.command == "analyze":
            files = cmd_analyze(spec, out)
        elif args.command == "simulate":
            files = cmd_simulate(spec, out, jobs=args.jobs)
        elif args.command == "metrics":
            files = cmd_metrics(spec, out, log_path=args.log)
        else:
            files, failed = cmd_sweep(spec, out, _parse_grid(args.grid), jobs=args.jobs)
            if failed:
                print(f"error: {failed} sweep point(s) failed; see summary.csv", file=sys.stderr)
                return SWEEP_FAILURE
    except IterBiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputFileError.exit_code
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
