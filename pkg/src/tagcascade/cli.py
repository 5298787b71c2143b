"""Command-line surface: reproducible analysis and simulation pipelines.

Every command emits a JSON run report (stdout, plus --report to a file)
carrying the tool version, input digests, the fully resolved configuration
and a result summary; timing lives in its own key so reports from repeated
runs are comparable byte-for-byte. Exit codes: 0 success, 1 usage error,
2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CascadeError, DataError, UsageError
from .events import build_dataset, density, giant_component
from .exposure import all_exposures, population_thresholds, threshold_summary
from .powerlaw import fit_power_law, fitted_tail_ccdf
from .simulate import (
    CascadeParams,
    LearningParams,
    SimConfig,
    ThresholdParams,
    ThresholdSpec,
    gen_graph,
    recover_from_ingested,
    run_model,
)
from .snapshot import load_snapshot, save_snapshot
from .stats import adoption_curve, popularity_samples, popularity_threshold_correlation
from .textio import (
    dump_json,
    file_digest,
    parse_duration_ms,
    read_adoptions,
    read_follows,
    write_adoptions_csv,
    write_follows_csv,
    write_tsv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def _threads() -> int:
    raw = os.environ.get("CASCADE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CASCADE_THREADS must be an integer, got {raw!r}")


def _resolve_seed(seed) -> int:
    """One root seed per invocation; a missing --seed draws a fresh one
    (reported, so the run stays reproducible after the fact)."""
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0] >> 1)


def derive_seed(root: int, *key: int) -> int:
    """Deterministic child seed for (root, key) — used for per-run and
    per-graph streams so batches reproduce regardless of scheduling."""
    ss = np.random.SeedSequence(entropy=root, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _report(command: str, config: dict, inputs: dict, outputs: dict, result: dict, started: float) -> dict:
    return {
        "tool": {"name": "tagcascade", "version": __version__},
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "result": result,
        "timing": {"seconds": time.monotonic() - started},
    }


def _input_entry(path) -> dict:
    return {"path": str(path), "sha256": file_digest(path)}


# ---------------------------------------------------------------------------
# stage bodies (shared by subcommands and the pipeline)
# ---------------------------------------------------------------------------

def stage_ingest(
    adoptions_path,
    follows_path,
    out_path,
    *,
    force: bool = False,
    reverse_edges: bool = False,
    mutual_edges: bool = False,
    time_unit: str = "ms",
    strict: bool = False,
) -> dict:
    out_path = Path(out_path)
    if out_path.exists() and not force:
        raise DataError(f"refusing to overwrite existing snapshot {out_path} without --force")
    on_bad = "raise" if strict else "drop"
    adoptions, dropped_a = read_adoptions(adoptions_path, time_unit=time_unit, on_bad=on_bad)
    follows, dropped_f = read_follows(follows_path, time_unit=time_unit, on_bad=on_bad)
    ds = build_dataset(
        adoptions,
        follows,
        reverse_edges=reverse_edges,
        mutual_edges=mutual_edges,
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_snapshot(ds, out_path)
    summary = ds.summary()
    summary["dropped_rows"] = dropped_a + dropped_f
    summary["dropped_adoption_rows"] = dropped_a
    summary["dropped_follow_rows"] = dropped_f
    return summary


def stage_stats(snapshot_path) -> dict:
    ds = load_snapshot(snapshot_path)
    result = ds.summary()
    if ds.n_users >= 2:
        members = giant_component(ds)
        result["giant_component_users"] = len(members)
        result["density_all"] = density(ds, "all")
        result["density_giant_component"] = (
            density(ds, "giant_component") if len(members) >= 2 else None
        )
    else:
        result["giant_component_users"] = ds.n_users
        result["density_all"] = None
        result["density_giant_component"] = None
    return result


def stage_thresholds(
    snapshot_path,
    exposures_out,
    per_user_out,
    summary_out,
    *,
    ties: str = "strict",
    popularity: str = "adopters",
) -> dict:
    ds = load_snapshot(snapshot_path)
    table = all_exposures(ds, ties=ties, popularity=popularity)
    thresholds = population_thresholds(ds, ties=ties, table=table)
    summary = threshold_summary(table, thresholds)

    if exposures_out is not None:
        write_tsv(
            exposures_out,
            ["user", "tag", "time", "active_alters", "neighborhood_size",
             "exposure", "tag_popularity_at_adoption"],
            (
                (
                    ds.user_label(int(table.user[i])),
                    ds.tag_label(int(table.tag[i])),
                    int(table.time[i]),
                    int(table.active_alters[i]),
                    int(table.neighborhood_size[i]),
                    float(table.exposure[i]),
                    int(table.tag_popularity_at_adoption[i]),
                )
                for i in range(len(table))
            ),
        )
    if per_user_out is not None:
        write_tsv(
            per_user_out,
            ["user", "beta", "defined_adoptions", "undefined_adoptions"],
            (
                (ds.user_label(t.user), t.beta, t.defined_adoptions, t.undefined_adoptions)
                for t in thresholds
            ),
        )
    if summary_out is not None:
        dump_json(summary, summary_out)
    return summary


def stage_fit(
    snapshot_path,
    *,
    popularity: str = "adopters",
    bootstrap: int = 100,
    seed: int = 0,
    out_tsv=None,
    summary_out=None,
) -> dict:
    ds = load_snapshot(snapshot_path)
    samples = popularity_samples(ds, popularity)
    samples = samples[samples >= 1]
    fit = fit_power_law(samples, bootstrap=bootstrap, seed=seed, threads=_threads())
    if out_tsv is not None:
        values, counts = np.unique(samples, return_counts=True)
        n = samples.shape[0]
        emp_ccdf = counts[::-1].cumsum()[::-1] / n
        model_ccdf = np.full(values.shape[0], np.nan)
        tail = values >= fit.xmin
        model_ccdf[tail] = fitted_tail_ccdf(fit, values[tail]) * (fit.n_tail / n)
        write_tsv(
            out_tsv,
            ["value", "count", "empirical_ccdf", "fitted_ccdf"],
            (
                (int(values[i]), int(counts[i]), float(emp_ccdf[i]),
                 None if np.isnan(model_ccdf[i]) else float(model_ccdf[i]))
                for i in range(values.shape[0])
            ),
        )
    result = fit.as_dict()
    result["popularity"] = popularity
    if summary_out is not None:
        dump_json(result, summary_out)
    return result


def stage_curve(snapshot_path, tag_label: str, bucket_ms: int, *, out_tsv=None, summary_out=None) -> dict:
    ds = load_snapshot(snapshot_path)
    curve = adoption_curve(ds, ds.tag_handle(tag_label), bucket_ms)
    if out_tsv is not None:
        write_tsv(
            out_tsv,
            ["time", "new_first_usages", "cumulative_first_usages",
             "subsequent_usages", "saturation"],
            (
                (p.time, p.new_first_usages, p.cumulative_first_usages,
                 p.subsequent_usages, p.saturation)
                for p in curve.points
            ),
        )
    result = {
        "tag": tag_label,
        "bucket_ms": bucket_ms,
        "points": len(curve.points),
        "final_saturation": curve.final_saturation,
        "distinct_adopters": curve.points[-1].cumulative_first_usages if curve.points else 0,
    }
    if summary_out is not None:
        dump_json(result, summary_out)
    return result


def stage_correlate(
    snapshot_path,
    *,
    bins: int = 10,
    method: str = "spearman",
    ties: str = "strict",
    popularity: str = "adopters",
    out_tsv=None,
    summary_out=None,
) -> dict:
    ds = load_snapshot(snapshot_path)
    table = all_exposures(ds, ties=ties, popularity=popularity)
    report = popularity_threshold_correlation(table, bins=bins, method=method)
    if out_tsv is not None:
        write_tsv(
            out_tsv,
            ["popularity_lo", "popularity_hi", "mean_exposure", "count"],
            ((b.lo, b.hi, b.mean_exposure, b.count) for b in report.bins),
        )
    result = {
        "method": report.method,
        "rho": report.rho,
        "n_pairs": report.n_pairs,
        "bins": len(report.bins),
    }
    if summary_out is not None:
        dump_json(result, summary_out)
    return result


def _load_json_config(path) -> dict:
    import json as _json

    try:
        with open(path, encoding="utf-8") as fh:
            return _json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None


def _cfg_value(cfg: dict, key: str, context: str):
    try:
        return cfg[key]
    except (KeyError, TypeError):
        raise UsageError(f"{context} needs a {key!r} entry") from None


def _threshold_spec_from_config(cfg: dict) -> ThresholdSpec:
    kind = cfg.get("kind") if isinstance(cfg, dict) else None
    if kind == "constant":
        return ThresholdSpec("constant", (float(_cfg_value(cfg, "c", "constant threshold")),))
    if kind == "uniform":
        return ThresholdSpec(
            "uniform",
            (float(_cfg_value(cfg, "a", "uniform threshold")),
             float(_cfg_value(cfg, "b", "uniform threshold"))),
        )
    if kind == "truncnorm":
        return ThresholdSpec(
            "truncnorm",
            (float(_cfg_value(cfg, "mu", "truncnorm threshold")),
             float(_cfg_value(cfg, "sigma", "truncnorm threshold"))),
        )
    raise UsageError(f"unknown threshold distribution: {kind!r}")


def _params_from_config(model: str, params_cfg: dict):
    if model == "threshold":
        return ThresholdParams(
            _threshold_spec_from_config(_cfg_value(params_cfg, "thresholds", "threshold model"))
        )
    if model == "cascade":
        return CascadeParams(float(_cfg_value(params_cfg, "p", "cascade model")))
    if model == "learning":
        return LearningParams(
            _threshold_spec_from_config(_cfg_value(params_cfg, "thresholds", "learning model")),
            int(params_cfg.get("lag", 0)),
        )
    raise UsageError(f"unknown model: {model!r}")


def _resolve_graph(graph_cfg: dict, seed: int):
    kind = graph_cfg.get("kind")
    if kind == "dataset":
        ds = load_snapshot(_cfg_value(graph_cfg, "snapshot", "dataset graph"))
        return ds.graph, ds, {"kind": "dataset", "snapshot": str(graph_cfg["snapshot"])}
    if kind == "erdos_renyi":
        graph = gen_graph(
            kind, seed,
            n=_cfg_value(graph_cfg, "n", "erdos_renyi graph"),
            mean_out_degree=_cfg_value(graph_cfg, "mean_out_degree", "erdos_renyi graph"),
        )
    elif kind == "preferential_attachment":
        graph = gen_graph(
            kind, seed,
            n=_cfg_value(graph_cfg, "n", "preferential_attachment graph"),
            m=_cfg_value(graph_cfg, "m", "preferential_attachment graph"),
        )
    else:
        raise UsageError(f"unknown graph kind: {kind!r}")
    echo = dict(graph_cfg)
    echo["seed"] = seed
    return graph, None, echo


def _resolve_seed_users(seeds_cfg: dict, graph_n: int, source_ds) -> tuple | None:
    if "users" in seeds_cfg:
        out = []
        for u in seeds_cfg["users"]:
            if source_ds is not None:
                out.append(source_ds.user_handle(str(u)))
            elif isinstance(u, str) and u.startswith("u"):
                out.append(int(u[1:]))
            else:
                out.append(int(u))
        return tuple(out)
    return None


def stage_simulate(sim_cfg: dict, model: str | None, runs: int, seed: int, out_dir) -> dict:
    model = model or sim_cfg.get("model")
    if model is None:
        raise UsageError("no model given (use --model or put \"model\" in the config)")
    if runs < 1:
        raise UsageError("--runs must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    graph_cfg = sim_cfg.get("graph")
    if graph_cfg is None:
        raise UsageError("simulation config needs a \"graph\" entry")
    shared = bool(sim_cfg.get("shared_graph", False))
    seeds_cfg = sim_cfg.get("seeds", {"k": 1})
    max_steps = int(sim_cfg.get("max_steps", 100))
    params = _params_from_config(model, sim_cfg.get("params", {}))

    shared_graph = None
    shared_echo = None
    if shared or graph_cfg.get("kind") == "dataset":
        shared_graph, source_ds, shared_echo = _resolve_graph(graph_cfg, derive_seed(seed, 0))
    run_summaries = []
    for r in range(runs):
        if shared_graph is not None:
            graph, g_echo = shared_graph, shared_echo
            ds_source = source_ds if graph_cfg.get("kind") == "dataset" else None
        else:
            graph, ds_source, g_echo = _resolve_graph(graph_cfg, derive_seed(seed, 0, r))
        seed_users = _resolve_seed_users(seeds_cfg, graph.n, ds_source)
        cfg = SimConfig(
            graph=graph,
            model=model,
            params=params,
            n_seeds=int(seeds_cfg.get("k", 1)),
            seed_users=seed_users,
            max_steps=max_steps,
            seed=derive_seed(seed, 1, r),
        )
        run = run_model(cfg)

        run_dir = out_dir / f"run_{r:04d}"
        run_dir.mkdir(exist_ok=True)
        write_adoptions_csv(run_dir / "adoptions.csv", run.adoption_rows())
        write_follows_csv(run_dir / "follows.csv", run.follow_rows())
        manifest = {
            "model": run.model,
            "run_index": r,
            "run_seed": run.config_seed,
            "graph": g_echo,
            "n_users": graph.n,
            "n_edges": graph.n_edges,
            "seed_users": [run.user_label(int(u)) for u in run.seed_users],
            "max_steps": run.max_steps,
            "step_counts": [int(c) for c in run.step_counts],
            "n_adopters": run.n_adopters,
            "final_saturation": run.final_saturation,
            "theta": None if run.theta is None else [float(v) for v in run.theta],
            "edge_prob": run.edge_prob,
            "lag": run.lag,
            "files": {"adoptions": "adoptions.csv", "follows": "follows.csv"},
        }
        dump_json(manifest, run_dir / "manifest.json")
        run_summaries.append(
            {
                "run": r,
                "n_adopters": run.n_adopters,
                "final_saturation": run.final_saturation,
                "steps": len(run.step_counts) - 1,
            }
        )
    return {
        "model": model,
        "runs": runs,
        "out_dir": str(out_dir),
        "run_summaries": run_summaries,
    }


def stage_recover(runs_dir, *, ties: str = "strict", out_json=None) -> dict:
    runs_dir = Path(runs_dir)
    run_dirs = sorted(p for p in runs_dir.glob("run_*") if p.is_dir())
    if not run_dirs:
        raise DataError(f"no run_* directories under {runs_dir}")

    import json as _json

    per_run = []
    pooled_pop = []
    pooled_expo = []
    total_violations = 0
    total_compared = 0
    worst_margin = None
    for run_dir in run_dirs:
        with open(run_dir / "manifest.json", encoding="utf-8") as fh:
            manifest = _json.load(fh)
        if manifest.get("theta") is None:
            raise DataError(
                f"{run_dir.name}: model {manifest.get('model')!r} has no planted "
                "thresholds to recover"
            )
        adoptions, _ = read_adoptions(run_dir / manifest["files"]["adoptions"])
        follows, _ = read_follows(run_dir / manifest["files"]["follows"])
        ds = build_dataset(adoptions, follows)
        report = recover_from_ingested(
            ds,
            theta=np.asarray(manifest["theta"], dtype=np.float64),
            n_users=int(manifest["n_users"]),
            n_seeds=len(manifest["seed_users"]),
            ties=ties,
        )
        per_run.append({"run": run_dir.name, **report.as_dict()})
        pooled_pop.append(report.popularity)
        pooled_expo.append(report.exposure)
        total_violations += report.n_violations
        total_compared += report.n_compared
        if report.min_margin is not None:
            worst_margin = report.min_margin if worst_margin is None else min(worst_margin, report.min_margin)

    pop = np.concatenate(pooled_pop) if pooled_pop else np.empty(0)
    expo = np.concatenate(pooled_expo) if pooled_expo else np.empty(0)
    pooled_rho = None
    if pop.shape[0] >= 3 and not np.all(pop == pop[0]) and not np.all(expo == expo[0]):
        from .stats import spearman_rho

        pooled_rho = spearman_rho(pop, expo)

    result = {
        "runs": len(per_run),
        "compared_adoptions": total_compared,
        "violations": total_violations,
        "min_margin": worst_margin,
        "pooled_spearman_popularity_exposure": pooled_rho,
        "per_run": per_run,
    }
    if out_json is not None:
        dump_json(result, out_json)
    return result


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> dict:
    started = time.monotonic()
    result = stage_ingest(
        args.adoptions,
        args.follows,
        args.out,
        force=args.force,
        reverse_edges=args.reverse_edges,
        mutual_edges=args.mutual_edges,
        time_unit=args.time_unit,
        strict=args.strict,
    )
    return _report(
        "ingest",
        {
            "reverse_edges": args.reverse_edges,
            "mutual_edges": args.mutual_edges,
            "time_unit": args.time_unit,
            "strict": args.strict,
        },
        {"adoptions": _input_entry(args.adoptions), "follows": _input_entry(args.follows)},
        {"snapshot": str(args.out)},
        result,
        started,
    )


def _cmd_stats(args) -> dict:
    started = time.monotonic()
    result = stage_stats(args.snapshot)
    return _report("stats", {}, {"snapshot": _input_entry(args.snapshot)}, {}, result, started)


def _cmd_thresholds(args) -> dict:
    started = time.monotonic()
    result = stage_thresholds(
        args.snapshot,
        args.out,
        args.per_user,
        args.summary,
        ties=args.ties,
        popularity=args.popularity,
    )
    outputs = {}
    if args.out:
        outputs["exposures"] = str(args.out)
    if args.per_user:
        outputs["per_user"] = str(args.per_user)
    if args.summary:
        outputs["summary"] = str(args.summary)
    return _report(
        "thresholds",
        {"ties": args.ties, "popularity": args.popularity},
        {"snapshot": _input_entry(args.snapshot)},
        outputs,
        result,
        started,
    )


def _cmd_fit(args) -> dict:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    result = stage_fit(
        args.snapshot,
        popularity=args.popularity,
        bootstrap=args.bootstrap,
        seed=seed,
        out_tsv=args.out,
        summary_out=args.summary,
    )
    return _report(
        "fit-powerlaw",
        {"popularity": args.popularity, "bootstrap": args.bootstrap, "seed": seed,
         "threads": _threads()},
        {"snapshot": _input_entry(args.snapshot)},
        {k: str(v) for k, v in (("tsv", args.out), ("summary", args.summary)) if v},
        result,
        started,
    )


def _cmd_curve(args) -> dict:
    started = time.monotonic()
    bucket = parse_duration_ms(args.bucket)
    result = stage_curve(args.snapshot, args.tag, bucket, out_tsv=args.out, summary_out=args.summary)
    return _report(
        "curve",
        {"tag": args.tag, "bucket_ms": bucket},
        {"snapshot": _input_entry(args.snapshot)},
        {k: str(v) for k, v in (("tsv", args.out), ("summary", args.summary)) if v},
        result,
        started,
    )


def _cmd_correlate(args) -> dict:
    started = time.monotonic()
    result = stage_correlate(
        args.snapshot,
        bins=args.bins,
        method=args.method,
        ties=args.ties,
        popularity=args.popularity,
        out_tsv=args.out,
        summary_out=args.summary,
    )
    return _report(
        "correlate",
        {"bins": args.bins, "method": args.method, "ties": args.ties,
         "popularity": args.popularity},
        {"snapshot": _input_entry(args.snapshot)},
        {k: str(v) for k, v in (("tsv", args.out), ("summary", args.summary)) if v},
        result,
        started,
    )


def _cmd_simulate(args) -> dict:
    started = time.monotonic()
    sim_cfg = _load_json_config(args.config)
    seed = _resolve_seed(args.seed)
    result = stage_simulate(sim_cfg, args.model, args.runs, seed, args.out)
    return _report(
        "simulate",
        {"model": result["model"], "runs": args.runs, "seed": seed},
        {"config": _input_entry(args.config)},
        {"out_dir": str(args.out)},
        result,
        started,
    )


def _cmd_recover(args) -> dict:
    started = time.monotonic()
    result = stage_recover(args.runs, ties=args.ties, out_json=args.out)
    slim = dict(result)
    slim["per_run"] = len(result["per_run"])
    return _report(
        "recover",
        {"ties": args.ties},
        {"runs_dir": {"path": str(args.runs)}},
        {"report": str(args.out)} if args.out else {},
        slim if args.out else result,
        started,
    )


_PIPELINE_STAGES = ("ingest", "thresholds", "fit", "correlate", "simulate", "recover")


def _cmd_pipeline(args) -> dict:
    started = time.monotonic()
    cfg = _load_json_config(args.config)
    stages = cfg.get("stages")
    if not isinstance(stages, list) or not stages:
        raise UsageError("pipeline config must name at least one stage")
    for entry in stages:
        name = entry.get("stage")
        if name not in _PIPELINE_STAGES:
            raise UsageError(f"unknown pipeline stage: {name!r}")

    out_dir = Path(cfg.get("out_dir", "cascade_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args.seed if args.seed is not None else cfg.get("seed"))
    snapshot = cfg.get("snapshot")
    runs_dir = None
    stage_results = []

    for entry in stages:
        name = entry["stage"]
        opts = {k: v for k, v in entry.items() if k != "stage"}
        try:
            if name == "ingest":
                snapshot = out_dir / "snapshot.cscd"
                result = stage_ingest(
                    opts["adoptions"],
                    opts["follows"],
                    snapshot,
                    force=True,
                    reverse_edges=opts.get("reverse_edges", False),
                    mutual_edges=opts.get("mutual_edges", False),
                    time_unit=opts.get("time_unit", "ms"),
                    strict=opts.get("strict", False),
                )
            elif name == "thresholds":
                _require_snapshot(snapshot, name)
                result = stage_thresholds(
                    snapshot,
                    out_dir / "exposures.tsv",
                    out_dir / "thresholds.tsv",
                    out_dir / "thresholds_summary.json",
                    ties=opts.get("ties", "strict"),
                    popularity=opts.get("popularity", "adopters"),
                )
            elif name == "fit":
                _require_snapshot(snapshot, name)
                result = stage_fit(
                    snapshot,
                    popularity=opts.get("popularity", "adopters"),
                    bootstrap=int(opts.get("bootstrap", 100)),
                    seed=derive_seed(seed, 100),
                    out_tsv=out_dir / "powerlaw.tsv",
                    summary_out=out_dir / "powerlaw.json",
                )
            elif name == "correlate":
                _require_snapshot(snapshot, name)
                result = stage_correlate(
                    snapshot,
                    bins=int(opts.get("bins", 10)),
                    method=opts.get("method", "spearman"),
                    ties=opts.get("ties", "strict"),
                    popularity=opts.get("popularity", "adopters"),
                    out_tsv=out_dir / "correlation.tsv",
                    summary_out=out_dir / "correlation.json",
                )
            elif name == "simulate":
                runs_dir = out_dir / "runs"
                result = stage_simulate(
                    opts,
                    opts.get("model"),
                    int(opts.get("runs", 1)),
                    derive_seed(seed, 200),
                    runs_dir,
                )
            else:  # recover
                if runs_dir is None:
                    runs_dir = Path(opts.get("runs", out_dir / "runs"))
                result = stage_recover(
                    runs_dir,
                    ties=opts.get("ties", "strict"),
                    out_json=out_dir / "recovery.json",
                )
                result = {**result, "per_run": len(result["per_run"])}
        except CascadeError as exc:
            raise type(exc)(f"stage '{name}' failed: {exc}") from exc
        stage_results.append({"stage": name, "result": result})

    inputs = {"config": _input_entry(args.config)}
    report = _report(
        "pipeline",
        {"seed": seed, "out_dir": str(out_dir), "stages": [e["stage"] for e in stages]},
        inputs,
        {"out_dir": str(out_dir)},
        {"stages": stage_results},
        started,
    )
    dump_json(report, out_dir / "report.json")
    return report


def _require_snapshot(snapshot, stage: str):
    if snapshot is None:
        raise UsageError(
            f"stage '{stage}' needs a snapshot: add an ingest stage first or a "
            "top-level \"snapshot\" path"
        )
    if not Path(snapshot).exists():
        raise DataError(f"stage '{stage}': snapshot {snapshot} not found")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cascade", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tagcascade {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse CSV logs into a binary snapshot")
    p.add_argument("adoptions", help="adoptions CSV (user_id,tag_id,timestamp)")
    p.add_argument("follows", help="follows CSV (src_id,dst_id[,since])")
    p.add_argument("--out", required=True, help="snapshot output path")
    p.add_argument("--force", action="store_true", help="overwrite an existing snapshot")
    p.add_argument("--reverse-edges", action="store_true",
                   help="treat rows as dst observing src")
    p.add_argument("--mutual-edges", action="store_true",
                   help="treat each follow row as a mutual relation (both directions)")
    p.add_argument("--time-unit", choices=["ms", "s"], default="ms",
                   help="unit for integer timestamps (default ms)")
    p.add_argument("--strict", action="store_true",
                   help="fail on malformed rows instead of dropping them")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="dataset summary counts and densities")
    p.add_argument("snapshot")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("thresholds", help="per-adoption exposures and per-user thresholds")
    p.add_argument("snapshot")
    p.add_argument("--out", help="exposures TSV path")
    p.add_argument("--per-user", help="per-user thresholds TSV path")
    p.add_argument("--summary", help="summary JSON path")
    p.add_argument("--ties", choices=["strict", "inclusive"], default="strict",
                   help="whether same-timestamp alters count as active (default strict)")
    p.add_argument("--popularity", choices=["adopters", "usages"], default="adopters",
                   help="popularity-at-adoption counts distinct adopters or all usages")
    p.set_defaults(func=_cmd_thresholds)

    p = sub.add_parser("fit-powerlaw", help="fit a discrete power law to tag popularity")
    p.add_argument("snapshot")
    p.add_argument("--popularity", choices=["adopters", "usages"], default="adopters")
    p.add_argument("--bootstrap", type=int, default=100,
                   help="goodness-of-fit bootstrap replicates (default 100)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="distribution TSV path")
    p.add_argument("--summary", help="fit summary JSON path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("curve", help="adoption/saturation curve for one tag")
    p.add_argument("snapshot")
    p.add_argument("--tag", required=True, help="tag label")
    p.add_argument("--bucket", required=True, help="bucket duration (e.g. 1d, 3600s, 500)")
    p.add_argument("--out", help="curve TSV path")
    p.add_argument("--summary", help="summary JSON path")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("correlate", help="popularity-vs-exposure correlation")
    p.add_argument("snapshot")
    p.add_argument("--bins", type=int, default=10, help="logarithmic popularity bins")
    p.add_argument("--method", choices=["spearman", "pearson"], default="spearman")
    p.add_argument("--ties", choices=["strict", "inclusive"], default="strict")
    p.add_argument("--popularity", choices=["adopters", "usages"], default="adopters")
    p.add_argument("--out", help="binned-means TSV path")
    p.add_argument("--summary", help="summary JSON path")
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("simulate", help="run seeded diffusion simulations")
    p.add_argument("--model", choices=["threshold", "cascade", "learning"], default=None)
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("recover", help="check measured exposures against planted thresholds")
    p.add_argument("--runs", required=True, help="directory produced by simulate")
    p.add_argument("--ties", choices=["strict", "inclusive"], default="strict")
    p.add_argument("--out", help="recovery report JSON path")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("pipeline", help="run configured stages end to end")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_pipeline)

    for name, sp in sub.choices.items():
        if name != "pipeline":
            sp.add_argument("--report", help="write the run report JSON here too")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001  - contract: internal errors exit 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    text = dump_json(report)
    sys.stdout.write(text)
    report_path = getattr(args, "report", None)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
