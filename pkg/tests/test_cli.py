"""Configuration validation, run determinism, replay round trips, analyze."""

import csv
from pathlib import Path

import numpy as np
import pytest
import yaml

from sdbc.cli import execute_run, main
from sdbc.config import (
    ConfigError,
    config_from_dict,
    default_config_text,
    load_config,
)
from sdbc.runio import load_genome_file, read_generations, read_meta
from sdbc.tasks import make_task
from sdbc.tasks.predator_prey import pursuit_fitness

TINY = {
    "task": "resource_sharing",
    "method": "ns-sd+",
    "seed": 9,
    "dump_population": True,
    "ga": {"population": 8, "generations": 3, "trials": 2, "hidden_units": 4},
    "task_params": {"max_steps": 60, "n_robots": 3, "start_energy": 15.0},
}


def write_config(tmp_path, overrides=None, **top):
    data = yaml.safe_load(yaml.safe_dump(TINY))
    data.update(top)
    if overrides:
        for key, value in overrides.items():
            section, _, field = key.partition(".")
            if field:
                data.setdefault(section, {})[field] = value
            else:
                data[section] = value
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


class TestConfig:
    def test_defaults_text_round_trips(self, tmp_path):
        path = tmp_path / "defaults.yaml"
        path.write_text(default_config_text())
        cfg = load_config(path)
        assert cfg.task == "resource_sharing"
        assert cfg.method == "ns-sd+"
        assert cfg.ga.population == 100
        assert cfg.sdbc.delta == 0.25

    def test_unknown_method_names_field(self):
        with pytest.raises(ConfigError, match="method"):
            config_from_dict({"method": "simulated-annealing"})

    def test_unknown_task_names_field(self):
        with pytest.raises(ConfigError, match="task"):
            config_from_dict({"task": "soccer"})

    def test_unknown_top_level_field(self):
        with pytest.raises(ConfigError, match="generations"):
            config_from_dict({"generations": 5})

    def test_unknown_nested_field_has_dotted_path(self):
        with pytest.raises(ConfigError, match="ga.populatoin"):
            config_from_dict({"ga": {"populatoin": 10}})

    def test_unknown_task_param_rejected(self):
        with pytest.raises(ConfigError, match="task_params"):
            config_from_dict({"task_params": {"n_bots": 4}})

    def test_range_validation(self):
        with pytest.raises(ConfigError, match="elites"):
            config_from_dict({"ga": {"population": 4, "elites": 9}})
        with pytest.raises(ConfigError, match="archive_rate"):
            config_from_dict({"novelty": {"archive_rate": 1.5}})

    def test_type_validation(self):
        with pytest.raises(ConfigError, match="ga.population"):
            config_from_dict({"ga": {"population": "many"}})


class TestRun:
    def test_same_seed_byte_identical_logs(self, tmp_path):
        cfg_path = write_config(tmp_path)
        for sub in ("a", "b"):
            assert main([
                "run", "--config", str(cfg_path), "--out", str(tmp_path / sub)
            ]) == 0
        log_a = (tmp_path / "a/run_000/generations.csv").read_bytes()
        log_b = (tmp_path / "b/run_000/generations.csv").read_bytes()
        assert log_a == log_b
        pop_a = sorted((tmp_path / "a/run_000/population").glob("*.csv"))
        pop_b = sorted((tmp_path / "b/run_000/population").glob("*.csv"))
        assert [p.read_bytes() for p in pop_a] == [p.read_bytes() for p in pop_b]

    def test_parallel_matches_serial(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main([
            "run", "--config", str(cfg_path), "--runs", "2",
            "--parallel", "1", "--out", str(tmp_path / "serial"),
        ]) == 0
        assert main([
            "run", "--config", str(cfg_path), "--runs", "2",
            "--parallel", "2", "--out", str(tmp_path / "parallel"),
        ]) == 0
        for i in range(2):
            a = (tmp_path / f"serial/run_{i:03d}/generations.csv").read_bytes()
            b = (tmp_path / f"parallel/run_{i:03d}/generations.csv").read_bytes()
            assert a == b

    def test_batch_runs_use_incremented_seeds(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["run", "--config", str(cfg_path), "--runs", "2", "--out", str(tmp_path / "o")])
        meta0 = read_meta(tmp_path / "o/run_000")
        meta1 = read_meta(tmp_path / "o/run_001")
        assert meta1["seed"] == meta0["seed"] + 1
        a = (tmp_path / "o/run_000/generations.csv").read_bytes()
        b = (tmp_path / "o/run_001/generations.csv").read_bytes()
        assert a != b

    def test_invalid_config_fails_with_diagnostic(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("method: warp\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "method" in capsys.readouterr().err

    def test_resume_continues_to_identical_logs(self, tmp_path):
        cfg_path = write_config(tmp_path)
        full = load_config(cfg_path)
        full.ga.generations = 5
        full.out = str(tmp_path / "full")
        execute_run(full, tmp_path / "full/run_000")

        half = load_config(cfg_path)
        half.ga.generations = 2
        execute_run(half, tmp_path / "resumed/run_000")
        (tmp_path / "resumed/run_000/done.json").unlink()
        resumed = load_config(cfg_path)
        resumed.ga.generations = 5
        execute_run(resumed, tmp_path / "resumed/run_000", resume=True)

        a = (tmp_path / "full/run_000/generations.csv").read_bytes()
        b = (tmp_path / "resumed/run_000/generations.csv").read_bytes()
        assert a == b

    def test_run_record_contents(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        run = tmp_path / "o/run_000"
        for name in (
            "config.yaml", "meta.json", "generations.csv", "timing.csv",
            "archive.csv", "best_genome.txt", "checkpoint.npz", "done.json",
        ):
            assert (run / name).exists(), name
        meta = read_meta(run)
        assert len(meta["feature_names"]) == 10
        assert len(meta["char_schema"]) == 21
        rows = read_generations(run)
        assert [r["generation"] for r in rows] == [0.0, 1.0, 2.0]
        assert all(
            rows[i]["best_so_far"] <= rows[i + 1]["best_so_far"] for i in range(2)
        )


class TestReplay:
    def test_round_trip_reproduces_logged_trial_fitness(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        genome_path = tmp_path / "o/run_000/best_genome.txt"
        header, weights = load_genome_file(genome_path)
        seeds = [int(s) for s in header["trial_seeds"].split(",")]
        fits = [float(f) for f in header["trial_fitness"].split(",")]
        task = make_task(header["task"], TINY["task_params"])
        from sdbc.evolution import ControllerSpec, evaluate

        spec = ControllerSpec(int(header["inputs"]), int(header["hidden"]), int(header["outputs"]))
        res = evaluate(weights, task, spec, seeds)
        assert list(res.trial_fitness) == fits
        assert res.fitness == float(header["fitness"])

    def test_replay_cli_writes_trajectory(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        out_csv = tmp_path / "traj.csv"
        code = main([
            "replay", str(tmp_path / "o/run_000/best_genome.txt"),
            "--config", str(cfg_path), "--out", str(out_csv),
        ])
        assert code == 0
        with open(out_csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["robot"] for r in rows} == {"0", "1", "2"}
        assert "fitness" in capsys.readouterr().out

    def test_zero_genome_pursuit_matches_fitness_oracle(self, tmp_path, capsys):
        task = make_task("predator_prey", {"max_steps": 50, "prey_sense": 0.1})
        from sdbc.evolution import ControllerSpec

        spec = ControllerSpec(task.n_inputs, 4, task.n_outputs)
        genome_path = tmp_path / "zero_genome.txt"
        genome_path.write_text(
            "# task: predator_prey\n# inputs: 6\n# hidden: 4\n# outputs: 2\n"
            + "\n".join(["0.0"] * spec.genome_length)
            + "\n"
        )
        cfg = tmp_path / "pp.yaml"
        cfg.write_text(yaml.safe_dump({
            "task": "predator_prey",
            "task_params": {"max_steps": 50, "prey_sense": 0.1},
        }))
        code = main(["replay", str(genome_path), "--config", str(cfg), "--seed", "3"])
        assert code == 0
        out = capsys.readouterr().out
        # motionless predators, stationary prey: no capture, no progress
        batch = task.simulate(lambda x: np.zeros((x.shape[0], 2)), [3])
        rec = batch.record
        d = np.hypot(
            rec["pos"][..., 0] - rec["prey"][..., None, 0],
            rec["pos"][..., 1] - rec["prey"][..., None, 1],
        )
        expected = pursuit_fitness(
            False, int(batch.steps[0]), 50, float(d[0, 0].mean()),
            float(d[-1, 0].mean()), task.size,
        )
        assert batch.fitness[0] == expected == 0.0
        assert f"fitness {expected!r}" in out

    def test_corrupted_genome_fails(self, tmp_path):
        bad = tmp_path / "bad_genome.txt"
        bad.write_text("# task: gate_escape\n0.1\nnot-a-number\n")
        assert main(["replay", str(bad)]) == 2


@pytest.fixture(scope="module")
def run_batch(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("analyze_runs")
    dirs = []
    for method in ("fit", "ns-sd+"):
        for i in range(2):
            cfg_i = config_from_dict({**TINY, "method": method, "seed": 9 + i})
            run_dir = tmp / f"{method.replace('+', 'plus')}_{i}"
            execute_run(cfg_i, run_dir)
            dirs.append(run_dir)
    return tmp, dirs


class TestAnalyze:

    def test_outputs_exist(self, run_batch, tmp_path):
        tmp, dirs = run_batch
        out = tmp_path / "analysis"
        code = main(["analyze", *[str(d) for d in dirs], "--out", str(out),
                     "--som-epochs", "2", "--som-width", "3", "--som-height", "3"])
        assert code == 0
        for name in (
            "fitness_curves.csv", "best_fitness.csv", "mann_whitney.csv",
            "som_density.csv", "som_fit.svg", "som_ns-sdplus.svg",
            "mi_table_ns-sdplus.csv",
        ):
            assert (out / name).exists(), name
        # fit logs no MI, so no fit MI table, and the command still succeeds
        assert not (out / "mi_table_fit.csv").exists()

    def test_single_run_curve_equals_log(self, run_batch, tmp_path):
        tmp, dirs = run_batch
        out = tmp_path / "single"
        main(["analyze", str(dirs[0]), "--out", str(out), "--som-epochs", "1"])
        rows = read_generations(dirs[0])
        with open(out / "fitness_curves.csv", newline="") as fh:
            curve = list(csv.DictReader(fh))
        assert len(curve) == len(rows)
        for row, ref in zip(curve, rows):
            assert float(row["mean_best_so_far"]) == ref["best_so_far"]

    def test_incomplete_runs_skipped(self, run_batch, tmp_path, capsys):
        tmp, dirs = run_batch
        broken = tmp_path / "broken_run"
        broken.mkdir()
        (broken / "meta.json").write_text("{}")
        out = tmp_path / "skipped"
        code = main(["analyze", str(dirs[0]), str(broken), "--out", str(out),
                     "--som-epochs", "1"])
        assert code == 0
        assert "skipping" in capsys.readouterr().err


class TestEnvOverrides:
    def test_env_seed_applies(self, tmp_path, monkeypatch):
        cfg_path = write_config(tmp_path)
        monkeypatch.setenv("SDBC_SEED", "123")
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "env")])
        assert read_meta(tmp_path / "env/run_000")["seed"] == 123

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        cfg_path = write_config(tmp_path)
        monkeypatch.setenv("SDBC_SEED", "123")
        main(["run", "--config", str(cfg_path), "--seed", "55",
              "--out", str(tmp_path / "flag")])
        assert read_meta(tmp_path / "flag/run_000")["seed"] == 55


class TestPrintDefaults:
    def test_emits_annotated_yaml(self, capsys):
        assert main(["print-defaults"]) == 0
        text = capsys.readouterr().out
        assert "task:" in text
        assert "[heuristic]" in text
        parsed = yaml.safe_load(text)
        assert parsed["sdbc"]["delta"] == 0.25
