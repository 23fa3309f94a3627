"""Command-line entry points: run experiments, replay genomes, analyse runs.

Flags override SDBC_* environment variables, which override the config
file.  Batch runs use seeds master+i so every run is independently
reproducible; `--parallel` distributes whole runs over worker processes,
which cannot change any run's results.
"""

from __future__ import annotations

import argparse
import csv
import multiprocessing as mp
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from . import runio
from .characterisation import apply_standardisation, compute_standardisation
from .config import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    default_config_text,
    load_config,
)
from .evolution import (
    ControllerSpec,
    EvolutionState,
    build_controller,
    init_population,
    run_generation,
)
from .tasks import make_task

ENV_PREFIX = "SDBC_"


def _env_default(name: str, cast=str):
    value = os.environ.get(ENV_PREFIX + name.upper())
    return None if value is None else cast(value)


def build_state(cfg: ExperimentConfig) -> EvolutionState:
    task = make_task(cfg.task, cfg.task_params)
    spec = ControllerSpec(
        inputs=task.n_inputs, hidden=cfg.ga.hidden_units, outputs=task.n_outputs
    )
    return EvolutionState(
        task=task,
        method=cfg.method,
        spec=spec,
        master_seed=cfg.seed,
        population_size=cfg.ga.population,
        trials=cfg.ga.trials,
        tournament_size=cfg.ga.tournament_size,
        p_crossover=cfg.ga.p_crossover,
        p_gene_mutation=cfg.ga.p_gene_mutation,
        mutation_sigma=cfg.ga.mutation_sigma,
        elites=cfg.ga.elites,
        init_range=cfg.ga.init_range,
        novelty_k=cfg.novelty.k,
        archive_rate=cfg.novelty.archive_rate,
        delta=cfg.sdbc.delta,
        mi_bins_min=cfg.sdbc.mi_bins_min,
        mi_bins_max=cfg.sdbc.mi_bins_max,
        weight_update_period=cfg.sdbc.weight_update_period,
    )


def execute_run(cfg: ExperimentConfig, run_dir: str | Path, resume: bool = False) -> dict:
    """Run one evolution to completion, writing a full run record."""
    state = build_state(cfg)
    task = state.task
    meta = {
        "task": cfg.task,
        "method": cfg.method,
        "seed": cfg.seed,
        "feature_names": list(task.feature_names()),
        "char_schema": list(task.char_schema()),
        "controller": {
            "inputs": state.spec.inputs,
            "hidden": state.spec.hidden,
            "outputs": state.spec.outputs,
        },
    }
    writer = runio.RunWriter(run_dir, cfg, meta)
    checkpoint = Path(run_dir) / "checkpoint.npz"
    if resume and checkpoint.exists() and not runio.is_complete(run_dir):
        runio.restore_state(state, run_dir)
        writer.preload_generations()
        writer.truncate_generations(state.generation - 1)
    else:
        init_population(state)

    schema = task.char_schema()
    while state.generation < cfg.ga.generations:
        stats, detail = run_generation(state)
        writer.append_generation(stats)
        if cfg.dump_population:
            writer.dump_population(stats.generation, detail)
            writer.dump_feature_stats(stats.generation, schema, detail)
        last = state.generation >= cfg.ga.generations
        if last or state.generation % cfg.checkpoint_every == 0:
            writer.write_checkpoint(state)
    writer.write_archive(state.archive)
    writer.write_best_genome(state, cfg.task)
    writer.mark_done(state)
    return {"best_fitness": state.best_so_far, "run_dir": str(run_dir)}


def _run_worker(payload: tuple[dict, str, bool]) -> dict:
    cfg_dict, run_dir, resume = payload
    return execute_run(config_from_dict(cfg_dict), run_dir, resume)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    runs = args.runs
    out_root = Path(cfg.out)
    out_root.mkdir(parents=True, exist_ok=True)

    jobs = []
    for i in range(runs):
        run_cfg_dict = cfg.to_dict()
        run_cfg_dict["seed"] = cfg.seed + i
        jobs.append((run_cfg_dict, str(out_root / f"run_{i:03d}"), args.resume))

    if args.parallel > 1 and runs > 1:
        with mp.get_context("spawn").Pool(min(args.parallel, runs)) as pool:
            results = pool.map(_run_worker, jobs)
    else:
        results = [_run_worker(job) for job in jobs]
    for res in results:
        print(f"{res['run_dir']}: best fitness {res['best_fitness']:.6f}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        header, weights = runio.load_genome_file(args.genome)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    task_params: dict = {}
    if args.config:
        task_params = load_config(args.config).task_params
    else:
        sibling = Path(args.genome).parent / "config.yaml"
        if sibling.exists():
            task_params = load_config(sibling).task_params
    task = make_task(header["task"], task_params)
    spec = ControllerSpec(
        inputs=int(header["inputs"]),
        hidden=int(header["hidden"]),
        outputs=int(header["outputs"]),
    )
    if len(weights) != spec.genome_length:
        print(
            f"error: genome length {len(weights)} does not match controller "
            f"spec ({spec.genome_length})",
            file=sys.stderr,
        )
        return 2
    seed = args.seed
    if seed is None:
        seeds = header.get("trial_seeds", "")
        seed = int(seeds.split(",")[0]) if seeds else 0
    controller = build_controller(weights, spec)
    batch = task.simulate(controller, [seed], record=True)
    rec = batch.record
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("step", "robot", "x", "y", "heading", "left", "right"))
            steps = int(batch.steps[0])
            n = rec["pos"].shape[2]
            for t in range(steps):
                for i in range(n):
                    w.writerow(
                        (
                            t,
                            i,
                            repr(float(rec["pos"][t, 0, i, 0])),
                            repr(float(rec["pos"][t, 0, i, 1])),
                            repr(float(rec["heading"][t, 0, i])),
                            repr(float(rec["wheels"][t, 0, i, 0])),
                            repr(float(rec["wheels"][t, 0, i, 1])),
                        )
                    )
                if "prey" in rec:
                    w.writerow(
                        (
                            t,
                            "prey",
                            repr(float(rec["prey"][t, 0, 0])),
                            repr(float(rec["prey"][t, 0, 1])),
                            "",
                            "",
                            "",
                        )
                    )
        print(f"trajectory written to {args.out}")
    print(f"seed {seed}: fitness {float(batch.fitness[0])!r}, steps {int(batch.steps[0])}")
    return 0


def _collect_runs(run_dirs: list[str]) -> dict[str, list[Path]]:
    """Group completed run directories by method, skipping incomplete ones."""
    by_method: dict[str, list[Path]] = {}
    for d in run_dirs:
        path = Path(d)
        if not (path / "meta.json").exists():
            print(f"skipping {d}: no meta.json", file=sys.stderr)
            continue
        if not runio.is_complete(path):
            print(f"skipping {d}: incomplete run", file=sys.stderr)
            continue
        meta = runio.read_meta(path)
        by_method.setdefault(meta["method"], []).append(path)
    return by_method


def cmd_analyze(args: argparse.Namespace) -> int:
    by_method = _collect_runs(args.run_dirs)
    if not by_method:
        print("error: no complete runs to analyse", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # fitness curves and per-run bests
    bests: dict[str, list[float]] = {}
    with open(out / "fitness_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "generation", "mean_best_so_far", "sd_best_so_far"))
        for method in sorted(by_method):
            curves = []
            for run in by_method[method]:
                rows = runio.read_generations(run)
                curves.append([row["best_so_far"] for row in rows])
                bests.setdefault(method, []).append(rows[-1]["best_so_far"])
            length = min(len(c) for c in curves)
            mat = np.array([c[:length] for c in curves])
            for g in range(length):
                w.writerow(
                    (method, g, repr(float(mat[:, g].mean())), repr(float(mat[:, g].std())))
                )
    with open(out / "best_fitness.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "run", "best_fitness"))
        for method in sorted(by_method):
            for i, value in enumerate(bests[method]):
                w.writerow((method, i, repr(value)))

    # pairwise Mann-Whitney comparisons of per-run best fitness
    methods = sorted(by_method)
    with open(out / "mann_whitney.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method_a", "method_b", "u", "p_two_sided", "p_a_greater"))
        for i in range(len(methods)):
            for j in range(i + 1, len(methods)):
                a, b = bests[methods[i]], bests[methods[j]]
                u, p2 = analysis.mann_whitney_u(a, b, "two-sided")
                _, pg = analysis.mann_whitney_u(a, b, "greater")
                w.writerow((methods[i], methods[j], repr(u), repr(p2), repr(pg)))

    # MI relevance tables for every method that logged MI
    for method in methods:
        records: list[dict[str, float]] = []
        for run in by_method[method]:
            for _, rows in runio.read_feature_stats(run):
                table = {r["feature"]: float(r["mi"]) for r in rows if r["mi"] != ""}
                if table:
                    records.append(table)
        if not records:
            continue
        with open(out / f"mi_table_{method.replace('+', 'plus')}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("feature", "mean_mi", "sd_mi"))
            for name, mean, sd in analysis.mi_relevance_table(records):
                w.writerow((name, repr(mean), repr(sd)))

    # behaviour-space exploration over a shared map
    samples: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for method in methods:
        chars, fits = [], []
        for run in by_method[method]:
            for _, cols in runio.read_population_dumps(run):
                raw_cols = sorted(
                    (k for k in cols if k.startswith("raw_")),
                    key=lambda k: int(k.split("_")[1]),
                )
                if not raw_cols:
                    continue
                chars.append(np.stack([cols[k] for k in raw_cols], axis=1))
                fits.append(cols["fitness"])
        if chars:
            samples[method] = (np.concatenate(chars), np.concatenate(fits))
    if samples:
        pooled = np.concatenate([xs for xs, _ in samples.values()])
        coeffs = compute_standardisation(pooled)
        standardised = {
            m: (np.stack([apply_standardisation(r, coeffs) for r in xs]), fs)
            for m, (xs, fs) in samples.items()
        }
        rng = np.random.default_rng(args.som_seed)
        train_pool = np.concatenate([xs for xs, _ in standardised.values()])
        if len(train_pool) > args.som_samples:
            train_pool = train_pool[
                rng.choice(len(train_pool), args.som_samples, replace=False)
            ]
        grid = analysis.train_som(
            train_pool, args.som_width, args.som_height, args.som_epochs, rng
        )
        counts, best_cell = analysis.exploration_density(grid, standardised)
        with open(out / "som_density.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("cell", "method", "count", "mean_fitness", "is_best_cell"))
            for method in sorted(standardised):
                xs, fs = standardised[method]
                bmus = grid.bmu_batch(xs)
                for cell in range(grid.width * grid.height):
                    mask = bmus == cell
                    mean_fit = repr(float(fs[mask].mean())) if mask.any() else ""
                    w.writerow(
                        (
                            cell,
                            method,
                            int(counts[method][cell]),
                            mean_fit,
                            int(cell == best_cell),
                        )
                    )
        for method in sorted(standardised):
            analysis.write_som_svg(
                str(out / f"som_{method.replace('+', 'plus')}.svg"),
                grid,
                counts[method],
                best_cell,
                title=f"behaviour-space exploration: {method}",
            )
    print(f"analysis written to {out}")
    return 0


def cmd_print_defaults(_args: argparse.Namespace) -> int:
    print(default_config_text(), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdbc",
        description="Evolve collective robot controllers with novelty search "
        "over systematically derived behaviour characterisations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one or more evolutionary runs")
    p_run.add_argument("--config", required=True, help="experiment config YAML")
    p_run.add_argument("--runs", type=int, default=_env_default("runs", int) or 1)
    p_run.add_argument("--parallel", type=int, default=_env_default("parallel", int) or 1)
    p_run.add_argument("--seed", type=int, default=_env_default("seed", int))
    p_run.add_argument("--out", default=_env_default("out"))
    p_run.add_argument("--resume", action="store_true", help="resume from checkpoints")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-simulate a saved genome")
    p_replay.add_argument("genome", help="best_genome.txt file")
    p_replay.add_argument("--config", help="config providing task overrides")
    p_replay.add_argument("--seed", type=int, help="trial seed (default: first logged)")
    p_replay.add_argument("--out", help="trajectory CSV path")
    p_replay.set_defaults(func=cmd_replay)

    p_an = sub.add_parser("analyze", help="aggregate and compare completed runs")
    p_an.add_argument("run_dirs", nargs="+", help="run directories")
    p_an.add_argument("--out", default="analysis")
    p_an.add_argument("--som-width", type=int, default=8)
    p_an.add_argument("--som-height", type=int, default=8)
    p_an.add_argument("--som-epochs", type=int, default=5)
    p_an.add_argument("--som-samples", type=int, default=20000)
    p_an.add_argument("--som-seed", type=int, default=7)
    p_an.set_defaults(func=cmd_analyze)

    p_def = sub.add_parser("print-defaults", help="emit an annotated default config")
    p_def.set_defaults(func=cmd_print_defaults)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
