import json
import subprocess
import sys

from lmapf.cli import main
from lmapf.observe import read_dataset
from lmapf.policy import random_weights, save_weights


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


BASE = ["simulate", "--map", "maps/empty8.map", "--agents", "4",
        "--steps", "50", "--seed", "1", "--solver", "pibt", "--guidance", "bd"]


class TestSimulate:
    def test_prints_one_metrics_line(self, capsys):
        code, out, err = run_cli(BASE, capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["solver"] == "pibt"
        assert record["steps"] == 50
        assert record["throughput"] == record["goals_reached"] / 50
        assert "plan_time" in err  # timing lives on stderr only

    def test_identical_invocations_byte_identical(self, capsys):
        _, out1, _ = run_cli(BASE, capsys)
        _, out2, _ = run_cli(BASE, capsys)
        assert out1 == out2

    def test_multi_seed_sweep_ordered(self, capsys):
        argv = BASE.copy()
        argv[argv.index("--seed") + 1] = "3,1,2"
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        seeds = [json.loads(line)["seed"] for line in out.strip().splitlines()]
        assert seeds == [1, 2, 3]

    def test_seed_range(self, capsys):
        argv = BASE.copy()
        argv[argv.index("--seed") + 1] = "0..3"
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        assert len(out.strip().splitlines()) == 4

    def test_lpibt_without_weights_is_usage_error(self, capsys):
        argv = BASE.copy()
        argv[argv.index("--solver") + 1] = "lpibt"
        code, _, err = run_cli(argv, capsys)
        assert code == 2
        assert "weights" in err

    def test_missing_map_is_input_error(self, capsys):
        argv = BASE.copy()
        argv[argv.index("--map") + 1] = "maps/nope.map"
        code, _, _ = run_cli(argv, capsys)
        assert code == 3

    def test_trace_written(self, tmp_path, capsys):
        trace_path = tmp_path / "trace.txt"
        code, _, _ = run_cli(BASE + ["--trace", str(trace_path)], capsys)
        assert code == 0
        lines = trace_path.read_text().strip().splitlines()
        assert len(lines) == 50
        assert lines[0].startswith("0;0:")

    def test_scenario_supplies_starts_and_seed(self, tmp_path, capsys):
        scenario = tmp_path / "s.scen"
        scenario.write_text("seed 77\n0 0 0\n1 7 7\n")
        argv = ["simulate", "--map", "maps/empty8.map", "--scenario", str(scenario),
                "--steps", "10", "--solver", "pibt", "--guidance", "bd"]
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        assert json.loads(out.strip())["seed"] == 77

    def test_config_file_defaults_flags_win(self, tmp_path, capsys):
        cfg = tmp_path / "cfg"
        cfg.write_text("guidance.mode=sg\nguidance.crisscross_profile=soft\n")
        argv = ["simulate", "--map", "maps/empty8.map", "--agents", "2", "--steps", "5",
                "--seed", "0", "--solver", "pibt", "--config", str(cfg)]
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        assert json.loads(out.strip())["guidance"] == "sg"
        argv += ["--guidance", "bd"]
        code, out, _ = run_cli(argv, capsys)
        assert json.loads(out.strip().splitlines()[-1])["guidance"] == "bd"

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg"
        cfg.write_text("typo.key=1\n")
        code, _, _ = run_cli(BASE + ["--config", str(cfg)], capsys)
        assert code == 2


class TestCollect:
    def test_record_count_is_agents_times_steps(self, tmp_path, capsys):
        out_path = tmp_path / "data.sild"
        argv = ["collect", "--map", "maps/empty8.map", "--agents", "4", "--steps", "50",
                "--seed", "1", "--guidance", "bd", "--window", "3", "--iters", "5",
                "--out", str(out_path)]
        code, out, _ = run_cli(argv, capsys)
        assert code == 0
        assert out.strip() == "200"
        _, records, truncated = read_dataset(out_path)
        assert len(records) == 200 and not truncated

    def test_unwritable_out_leaves_no_garbage(self, tmp_path, capsys):
        target_dir = tmp_path / "missing"
        argv = ["collect", "--map", "maps/empty8.map", "--agents", "2", "--steps", "5",
                "--seed", "1", "--window", "2", "--iters", "2",
                "--out", str(target_dir / "data.sild")]
        code, _, _ = run_cli(argv, capsys)
        assert code == 3
        assert not target_dir.exists()
        assert list(tmp_path.iterdir()) == []

    def test_different_seeds_different_labels(self, tmp_path, capsys):
        counts = []
        for seed in ("1", "2"):
            out_path = tmp_path / f"d{seed}.sild"
            argv = ["collect", "--map", "maps/random16.map", "--agents", "12",
                    "--steps", "30", "--seed", seed, "--window", "3", "--iters", "10",
                    "--out", str(out_path)]
            code, _, _ = run_cli(argv, capsys)
            assert code == 0
            _, records, _ = read_dataset(out_path)
            histogram = [0] * 5
            for rec in records:
                histogram[rec.label] += 1
            counts.append(tuple(histogram))
        assert counts[0] != counts[1]


class TestScore:
    def write_metrics(self, path, rows):
        with open(path, "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")

    def test_two_solvers_one_group(self, tmp_path, capsys):
        path = tmp_path / "m.jsonl"
        self.write_metrics(path, [
            {"map": "m", "solver": "a", "guidance": "bd", "seed": 1, "steps": 10,
             "goals_reached": 100, "throughput": 10.0},
            {"map": "m", "solver": "b", "guidance": "bd", "seed": 1, "steps": 10,
             "goals_reached": 50, "throughput": 5.0},
        ])
        code, out, _ = run_cli(["score", "--metrics", str(path)], capsys)
        assert code == 0
        assert out.splitlines() == ["a+bd 1.000000", "b+bd 0.500000"]

    def test_single_solver_scores_one(self, tmp_path, capsys):
        path = tmp_path / "m.jsonl"
        self.write_metrics(path, [
            {"map": "m", "solver": "a", "guidance": "bd", "seed": 1, "steps": 10,
             "goals_reached": 10, "throughput": 1.0},
        ])
        code, out, _ = run_cli(["score", "--metrics", str(path)], capsys)
        assert code == 0
        assert out.strip() == "a+bd 1.000000"

    def test_disjoint_groups_error(self, tmp_path, capsys):
        path = tmp_path / "m.jsonl"
        self.write_metrics(path, [
            {"map": "m", "solver": "a", "guidance": "bd", "seed": 1, "steps": 10,
             "goals_reached": 10, "throughput": 1.0},
            {"map": "m", "solver": "b", "guidance": "bd", "seed": 2, "steps": 10,
             "goals_reached": 10, "throughput": 1.0},
        ])
        code, _, err = run_cli(["score", "--metrics", str(path)], capsys)
        assert code == 3
        assert "disjoint" in err


class TestDumpHeuristic:
    def test_golden_bd_grid(self, tmp_path, capsys):
        map_path = tmp_path / "t.map"
        map_path.write_text("type octile\nheight 3\nwidth 3\nmap\n.@.\n...\n...\n")
        code, out, _ = run_cli(
            ["dump-heuristic", "--map", str(map_path), "--goal", "0,0"], capsys)
        assert code == 0
        assert out == "0 inf 4\n1 2 3\n2 3 4\n"

    def test_dg_requires_start(self, capsys):
        code, _, _ = run_cli(
            ["dump-heuristic", "--map", "maps/empty8.map", "--goal", "0,0",
             "--guidance", "dg"], capsys)
        assert code == 2


class TestVerifyWeights:
    def test_valid_file(self, tmp_path, capsys):
        path = tmp_path / "w.silw"
        save_weights(random_weights(0), path)
        code, out, _ = run_cli(["verify-weights", "--weights", str(path)], capsys)
        assert code == 0
        assert out.strip() == "ok: 16 tensors, fov 11x11"

    def test_corrupt_file(self, tmp_path, capsys):
        path = tmp_path / "w.silw"
        path.write_bytes(b"garbage")
        code, _, _ = run_cli(["verify-weights", "--weights", str(path)], capsys)
        assert code == 3


class TestEntryPoints:
    def test_module_invocation(self):
        result = subprocess.run(
            [sys.executable, "-m", "lmapf", "simulate", "--map", "maps/empty8.map",
             "--agents", "2", "--steps", "5", "--seed", "0", "--solver", "pibt",
             "--guidance", "bd"],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        assert json.loads(result.stdout.strip())["steps"] == 5

    def test_usage_error_exit_code(self):
        result = subprocess.run(
            [sys.executable, "-m", "lmapf", "simulate"],
            capture_output=True, text=True,
        )
        assert result.returncode == 2

    def test_jobs_parallel_sweep_matches_serial(self):
        argv = [sys.executable, "-m", "lmapf", "simulate", "--map", "maps/empty8.map",
                "--agents", "3", "--steps", "20", "--seed", "0..2", "--solver", "pibt",
                "--guidance", "bd"]
        serial = subprocess.run(argv, capture_output=True, text=True)
        parallel = subprocess.run(argv + ["--jobs", "3"], capture_output=True, text=True)
        assert serial.returncode == parallel.returncode == 0
        assert serial.stdout == parallel.stdout

    def test_threads_env_override(self):
        argv = [sys.executable, "-m", "lmapf", "simulate", "--map", "maps/empty8.map",
                "--agents", "3", "--steps", "10", "--seed", "0,1", "--solver", "pibt",
                "--guidance", "bd"]
        import os
        env = dict(os.environ, SILLM_THREADS="2")
        result = subprocess.run(argv, capture_output=True, text=True, env=env)
        assert result.returncode == 0
        assert len(result.stdout.strip().splitlines()) == 2
