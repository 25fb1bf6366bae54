"""Command line entry point for batch experiments.

Exit codes: 0 success, 2 input error, 3 data/model error. Machine-readable
results go to stdout; per-iteration progress goes to stderr. Every command
writes a JSON manifest beside its outputs for replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np

from . import __version__
from .errors import (
    CorruptModel,
    DimensionMismatch,
    LensVrpError,
    NoImprovingIterations,
    SingleClass,
    VersionMismatch,
)
from .evaluation import (
    convergence_series,
    group_by_iteration,
    model_selector,
    oracle_selector,
    random_selector,
    result_table,
    validate_selector,
)
from .features import feature_names
from .instances import BatchSpec, generate_batch, parse_instance, write_instance
from .learning import (
    Dataset,
    ForestConfig,
    load_model,
    read_dataset,
    save_model,
    train_from_dataset,
    write_dataset,
)
from .model import Instance, solution_cost
from .neighborhood import SelectorConfig
from .pipeline import (
    ORACLE,
    RANDOM,
    RunConfig,
    collect_data,
    lns_run,
    read_trace,
    write_trace,
)
from .repair import RepairConfig, build_initial_solution

EXIT_INPUT = 2
EXIT_DATA = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _default_seed() -> int:
    return int(os.environ.get("LENS_SEED", "0"))


def _load_instance(path: str) -> Instance:
    try:
        return parse_instance(Path(path).read_text())
    except OSError as exc:
        _fail(EXIT_INPUT, f"cannot read instance {path}: {exc}")
    except LensVrpError as exc:
        _fail(EXIT_INPUT, f"cannot parse instance {path}: {exc}")


def _write_manifest(path: Path, command: str, params: Dict, outputs: Sequence[str]) -> None:
    doc = {
        "command": command,
        "params": params,
        "config_digest": hashlib.sha256(
            json.dumps(params, sort_keys=True).encode()
        ).hexdigest(),
        "outputs": list(outputs),
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    tmp.replace(path)


def _resolve_strategy(text: str):
    if text == RANDOM:
        return RANDOM
    try:
        return load_model(text)
    except OSError as exc:
        _fail(EXIT_INPUT, f"cannot read model {text}: {exc}")
    except (CorruptModel, VersionMismatch) as exc:
        _fail(EXIT_DATA, str(exc))


@click.group()
@click.version_option(__version__)
def main():
    """VRPTW optimization with learning-guided neighborhood selection."""


@main.command("generate")
@click.option("--base", required=True, type=click.Path(), help="Base instance file.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Generator seed.")
def cmd_generate(base: str, out: str, seed: Optional[int]):
    """Generate the 10-instance training batch for a base instance."""
    seed = _default_seed() if seed is None else seed
    instance = _load_instance(base)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        batch = generate_batch(BatchSpec(instance, seed=seed))
    except LensVrpError as exc:
        _fail(EXIT_INPUT, str(exc))
    outputs = []
    for inst in batch:
        path = out_dir / f"{inst.name}.txt"
        path.write_text(write_instance(inst))
        outputs.append(str(path))
        click.echo(str(path))
    _write_manifest(
        out_dir / "manifest.json",
        "generate",
        {"base": base, "seed": seed},
        outputs,
    )


def _collect_shard(args) -> str:
    """Worker: collect data for one instance into a shard file."""
    instance_path, strategy_text, iters, n1, runs, seed, shard_path = args
    instance = parse_instance(Path(instance_path).read_text())
    strategy = RANDOM if strategy_text == RANDOM else load_model(strategy_text)
    config = RunConfig(iterations=iters, n1=n1, selector=strategy, seed=seed)
    dataset = collect_data([instance], strategy, config, runs=runs)
    write_dataset(dataset, shard_path)
    return shard_path


@main.command("collect")
@click.option("--instances", "instances_dir", required=True, type=click.Path())
@click.option("--strategy", default=RANDOM, help="'random' or a model file.")
@click.option("--iters", type=int, required=True)
@click.option("--n1", type=int, default=10)
@click.option("--runs", type=int, default=1)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", type=int, default=1)
def cmd_collect(instances_dir, strategy, iters, n1, runs, seed, out, jobs):
    """Collect (features, improvement) samples on a directory of instances.

    Per-instance shard files next to OUT make interrupted runs resumable."""
    seed = _default_seed() if seed is None else seed
    paths = sorted(
        p for p in Path(instances_dir).glob("*.txt") if p.name != "manifest.json"
    )
    if not paths:
        _fail(EXIT_INPUT, f"no instance files in {instances_dir}")
    strategy_obj = _resolve_strategy(strategy)
    if strategy_obj != RANDOM:
        if len(strategy_obj.manifest) != len(feature_names(SelectorConfig().n2)):
            _fail(EXIT_DATA, "model manifest does not match the feature layout")
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    jobs_args = []
    shard_paths = []
    for k, path in enumerate(paths):
        shard = out_path.with_suffix(f".{path.stem}.part.tsv")
        shard_paths.append(shard)
        if not shard.exists():
            jobs_args.append((str(path), strategy, iters, n1, runs, seed + k, str(shard)))
    try:
        if jobs > 1 and len(jobs_args) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for done in pool.map(_collect_shard, jobs_args):
                    click.echo(f"collected {done}", err=True)
        else:
            for args in jobs_args:
                _collect_shard(args)
                click.echo(f"collected {args[-1]}", err=True)
    except LensVrpError as exc:
        _fail(EXIT_DATA, str(exc))
    merged: Optional[Dataset] = None
    for shard in shard_paths:
        data = read_dataset(str(shard))
        if merged is None:
            merged = data
        else:
            merged.extend(data)
    write_dataset(merged, str(out_path))
    _write_manifest(
        out_path.with_suffix(".manifest.json"),
        "collect",
        {
            "instances": instances_dir,
            "strategy": strategy,
            "iters": iters,
            "n1": n1,
            "runs": runs,
            "seed": seed,
        },
        [str(out_path)],
    )
    click.echo(f"{len(merged)} samples -> {out_path}")


@main.command("train")
@click.option("--samples", multiple=True, required=True, type=click.Path())
@click.option("--threshold", type=float, default=0.0)
@click.option("--split", "split_ratio", type=float, default=0.6)
@click.option("--seed", type=int, default=None)
@click.option("--trees", type=int, default=100)
@click.option("--max-depth", type=int, default=16)
@click.option("--out", required=True, type=click.Path())
def cmd_train(samples, threshold, split_ratio, seed, trees, max_depth, out):
    """Train a forest on the union of sample files; prints held-out accuracy."""
    seed = _default_seed() if seed is None else seed
    dataset: Optional[Dataset] = None
    for path in samples:
        try:
            data = read_dataset(path)
        except (OSError, ValueError, LensVrpError) as exc:
            _fail(EXIT_INPUT, f"cannot read samples {path}: {exc}")
        if dataset is None:
            dataset = data
        else:
            try:
                dataset.extend(data)
            except DimensionMismatch as exc:
                _fail(EXIT_INPUT, str(exc))
    if dataset is None or len(dataset) == 0:
        _fail(EXIT_INPUT, "no samples to train on")
    config = ForestConfig(tree_count=trees, max_depth=max_depth)
    try:
        model, accuracy = train_from_dataset(dataset, threshold, split_ratio, seed, config)
    except SingleClass as exc:
        _fail(EXIT_DATA, str(exc))
    save_model(model, out)
    _write_manifest(
        Path(out).with_suffix(".manifest.json"),
        "train",
        {
            "samples": list(samples),
            "threshold": threshold,
            "split": split_ratio,
            "seed": seed,
            "trees": trees,
            "max_depth": max_depth,
        },
        [out],
    )
    click.echo(f"validation_accuracy\t{accuracy:.4f}")


@main.command("solve")
@click.option("--instance", "instance_path", required=True, type=click.Path())
@click.option("--selector", default=RANDOM, help="'random', 'oracle' or a model file.")
@click.option("--iters", type=int, required=True)
@click.option("--n1", type=int, default=10)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(), help="Trace output path.")
def cmd_solve(instance_path, selector, iters, n1, seed, out):
    """Run LNS on one instance; writes trace, final routes and a manifest."""
    seed = _default_seed() if seed is None else seed
    instance = _load_instance(instance_path)
    if selector in (RANDOM, ORACLE):
        selector_obj = selector
    else:
        selector_obj = _resolve_strategy(selector)
    config = RunConfig(iterations=iters, n1=n1, selector=selector_obj, seed=seed)
    rng = np.random.default_rng(seed)
    try:
        initial = build_initial_solution(instance, config.repair_config, rng)
        final, best, trace = lns_run(instance, initial, config)
    except DimensionMismatch as exc:
        _fail(EXIT_DATA, str(exc))
    except LensVrpError as exc:
        _fail(EXIT_DATA, str(exc))
    for record in trace.records:
        click.echo(
            f"iter {record.iteration} best {record.best_cost:.2f} "
            f"current {record.current_cost:.2f}",
            err=True,
        )
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, str(out_path))
    routes_path = out_path.with_suffix(out_path.suffix + ".routes")
    with open(routes_path, "w") as handle:
        for route in best.routes:
            if len(route) > 0:
                handle.write(" ".join(str(cid) for cid in route) + "\n")
    _write_manifest(
        out_path.with_suffix(".manifest.json"),
        "solve",
        {
            "instance": instance_path,
            "instance_name": instance.name,
            "selector": selector,
            "iters": iters,
            "n1": n1,
            "seed": seed,
        },
        [str(out_path), str(routes_path)],
    )
    click.echo(f"best_cost\t{solution_cost(instance, best)!r}")


def _read_bks(path: str) -> Dict[str, float]:
    bks = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            name, value = line.split()
            bks[name] = float(value)
    return bks


@main.command("report")
@click.option("--traces", "traces_dir", required=True, type=click.Path())
@click.option("--bks", "bks_path", type=click.Path(), default=None)
@click.option("--dataset", "dataset_path", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
def cmd_report(traces_dir, bks_path, dataset_path, model_path, out):
    """Aggregate solve traces into result tables and convergence series.

    With --dataset (and optionally --model), also emits offline validation
    reports against the oracle and random selectors."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_files = sorted(Path(traces_dir).glob("*.trace"))
    if not trace_files:
        _fail(EXIT_INPUT, f"no .trace files in {traces_dir}")
    runs: Dict[str, Dict[str, list]] = {}
    iteration_counts = set()
    for path in trace_files:
        manifest_path = path.with_suffix(".manifest.json")
        if not manifest_path.exists():
            _fail(EXIT_INPUT, f"missing manifest for {path}")
        params = json.loads(manifest_path.read_text())["params"]
        trace = read_trace(str(path))
        iteration_counts.add(len(trace.records))
        inst = params.get("instance_name", Path(params["instance"]).stem)
        runs.setdefault(inst, {}).setdefault(params["selector"], []).append(trace)
    if len(iteration_counts) != 1:
        _fail(EXIT_INPUT, f"traces have inconsistent iteration counts: {sorted(iteration_counts)}")
    iters = iteration_counts.pop()
    averages = {
        inst: {
            sel: float(np.mean([t.records[-1].best_cost for t in traces]))
            for sel, traces in by_sel.items()
        }
        for inst, by_sel in runs.items()
    }
    bks = _read_bks(bks_path) if bks_path else None
    try:
        table = result_table(averages, bks)
    except LensVrpError as exc:
        _fail(EXIT_INPUT, str(exc))
    if not table.has_gaps:
        click.echo("note: oracle/random baselines missing, gap columns omitted", err=True)
    results_path = out_dir / f"results_{iters}.tsv"
    results_path.write_text(table.to_tsv())
    click.echo(table.render())
    outputs = [str(results_path)]
    for inst, by_sel in runs.items():
        for sel, traces in by_sel.items():
            series = convergence_series(traces)
            path = out_dir / f"convergence_{inst}.{sel}.tsv"
            with open(path, "w") as handle:
                handle.write("iteration\tmean_best_cost\n")
                for k, value in enumerate(series, start=1):
                    handle.write(f"{k}\t{value!r}\n")
            outputs.append(str(path))
    if dataset_path:
        try:
            dataset = read_dataset(dataset_path)
        except (OSError, ValueError, LensVrpError) as exc:
            _fail(EXIT_INPUT, f"cannot read dataset {dataset_path}: {exc}")
        groups = group_by_iteration(dataset.samples)
        selectors = {"oracle": oracle_selector, "random": random_selector(0)}
        if model_path:
            try:
                selectors[Path(model_path).stem] = model_selector(load_model(model_path))
            except (OSError, LensVrpError) as exc:
                _fail(EXIT_DATA, str(exc))
        for name, selector in selectors.items():
            try:
                report = validate_selector(groups, selector)
            except NoImprovingIterations as exc:
                _fail(EXIT_DATA, str(exc))
            path = out_dir / f"validation_{name}.tsv"
            path.write_text(
                "avg_true_rank\tfraction_improving\tavg_improvement\titerations\n"
                f"{report.avg_true_rank!r}\t{report.fraction_improving!r}\t"
                f"{report.avg_improvement!r}\t{report.iterations_considered}\n"
            )
            outputs.append(str(path))
    _write_manifest(
        out_dir / "report.manifest.json",
        "report",
        {"traces": traces_dir, "bks": bks_path, "dataset": dataset_path, "model": model_path},
        outputs,
    )


if __name__ == "__main__":
    main()
