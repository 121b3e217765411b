import json
import os

import numpy as np
import pytest

from allwas.cli import main as cli_main
from allwas.errors import ConfigError
from allwas.harness import ExperimentConfig, load_corpus, run_experiment, run_sweep
from allwas.report import (
    learning_curve_svg,
    load_records,
    paired_f1,
    report,
    significance_table,
    validate_svg,
)

SMALL_CORPUS = {"synthetic": {"n": 260, "d": 6, "priors": [0.7, 0.3],
                              "noise": 0.8, "seed": 11}}


def small_cfg(tmp_path, **kw):
    base = dict(
        corpus=SMALL_CORPUS,
        out_dir=str(tmp_path / "runs"),
        label="cell",
        setting="balanced",
        seed_size=10,
        strategy="random",
        budget=30,
        k=10,
        repeats=2,
        model={"hidden_dim": 8, "epochs": 2},
        master_seed=5,
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_k_bounds(self, tmp_path):
        with pytest.raises(ConfigError):
            small_cfg(tmp_path, k=40, budget=30)

    def test_unknown_strategy(self, tmp_path):
        with pytest.raises(ConfigError):
            small_cfg(tmp_path, strategy="magic")

    def test_unknown_keys_in_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"corpus": SMALL_CORPUS, "out_dir": ".",
                                    "bogus_knob": 1}))
        with pytest.raises(ConfigError, match="bogus_knob"):
            ExperimentConfig.from_json(path)

    def test_iterations_per_repeat(self, tmp_path):
        cfg = small_cfg(tmp_path)
        assert cfg.iterations_per_repeat() == 3
        cfg2 = small_cfg(tmp_path, budget=10, k=5)
        assert cfg2.iterations_per_repeat() == 1


class TestRunExperiment:
    def test_budget_equals_seed_single_round(self, tmp_path):
        cfg = small_cfg(tmp_path, budget=10, k=5)
        record = run_experiment(cfg)
        assert len(record.rows) == cfg.repeats
        assert all(row.labeled == 10 and row.iteration == 0 for row in record.rows)

    def test_labeled_grows_by_k(self, tmp_path):
        cfg = small_cfg(tmp_path)
        record = run_experiment(cfg)
        for repeat in range(cfg.repeats):
            rows = [r for r in record.rows if r.seed == cfg.master_seed + repeat]
            assert [r.labeled for r in rows] == [10, 20, 30]
            assert [r.iteration for r in rows] == [0, 1, 2]

    def test_two_runs_identical_csv_bytes(self, tmp_path):
        cfg_a = small_cfg(tmp_path, out_dir=str(tmp_path / "a"))
        cfg_b = small_cfg(tmp_path, out_dir=str(tmp_path / "b"))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        a = (tmp_path / "a" / "cell.csv").read_bytes()
        b = (tmp_path / "b" / "cell.csv").read_bytes()
        assert a == b

    def test_random_improves_on_learnable_task(self, tmp_path):
        cfg = small_cfg(tmp_path, repeats=5, budget=60, k=25, seed_size=10,
                        corpus={"synthetic": {"n": 400, "d": 6,
                                              "priors": [0.5, 0.5],
                                              "noise": 0.5, "seed": 3}},
                        model={"hidden_dim": 16, "epochs": 5})
        record = run_experiment(cfg)
        first = np.mean([r.f1 for r in record.rows if r.iteration == 0])
        last_it = max(r.iteration for r in record.rows)
        last = np.mean([r.f1 for r in record.rows if r.iteration == last_it])
        assert last >= first

    def test_resume_skips_completed_repeats(self, tmp_path, monkeypatch):
        cfg = small_cfg(tmp_path)
        record = run_experiment(cfg)
        calls = []
        import allwas.harness as harness_mod
        original = harness_mod._run_repeat

        def spy(cfg_, corpus_, repeat_):
            calls.append(repeat_)
            return original(cfg_, corpus_, repeat_)

        monkeypatch.setattr(harness_mod, "_run_repeat", spy)
        again = run_experiment(cfg)
        assert calls == []
        assert again.rows == record.rows

    def test_resume_recomputes_partial_repeat(self, tmp_path):
        cfg = small_cfg(tmp_path)
        record = run_experiment(cfg)
        # Drop the last row of the second repeat to simulate a crash.
        path = tmp_path / "runs" / "cell.csv"
        lines = path.read_text().strip().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        again = run_experiment(cfg)
        assert again.rows == record.rows

    def test_config_change_guard(self, tmp_path):
        cfg = small_cfg(tmp_path)
        run_experiment(cfg)
        changed = small_cfg(tmp_path, master_seed=6)
        with pytest.raises(ConfigError, match="different config"):
            run_experiment(changed)

    def test_budget_exceeding_pool_rejected(self, tmp_path):
        cfg = small_cfg(tmp_path, budget=250, k=10)
        with pytest.raises(ConfigError, match="exceeds pool"):
            run_experiment(cfg)

    def test_timing_zero_by_default(self, tmp_path):
        cfg = small_cfg(tmp_path)
        record = run_experiment(cfg)
        assert all(row.seconds == 0.0 for row in record.rows)

    def test_augmented_cell_runs(self, tmp_path):
        cfg = small_cfg(tmp_path, label="aug",
                        augmentation={"mode": "wasserstein", "factor": 2,
                                      "group_size": 2, "outer_iter": 2,
                                      "sinkhorn_max_iter": 50},
                        budget=20, k=10)
        record = run_experiment(cfg)
        assert len(record.rows) == 2 * cfg.repeats


class TestSweep:
    def test_strategy_axis_shares_seeds(self, tmp_path):
        cfg = small_cfg(tmp_path, budget=20, k=10)
        records = run_sweep(cfg, "strategy", ["random", "lc"])
        assert [rec.label for rec in records] == ["cell_random", "cell_lc"]
        # Iteration-0 rows are paired: same seed, same labeled seed set,
        # same training seed -> identical f1 at the start.
        a = {r.seed: r.f1 for r in records[0].rows if r.iteration == 0}
        b = {r.seed: r.f1 for r in records[1].rows if r.iteration == 0}
        assert a == b

    def test_factor_axis_zero_matches_none(self, tmp_path):
        cfg = small_cfg(tmp_path, budget=20, k=10,
                        augmentation={"mode": "wasserstein", "factor": 2,
                                      "group_size": 2, "outer_iter": 2,
                                      "sinkhorn_max_iter": 50})
        records = run_sweep(cfg, "augmentation-factor", [0, 2])
        assert [rec.label for rec in records] == ["cell_factor0", "cell_factor2"]

    def test_empty_values_rejected(self, tmp_path):
        cfg = small_cfg(tmp_path)
        with pytest.raises(ConfigError):
            run_sweep(cfg, "strategy", [])

    def test_parallel_cells_match_serial(self, tmp_path, monkeypatch):
        cfg = small_cfg(tmp_path, budget=20, k=10, out_dir=str(tmp_path / "ser"))
        serial = run_sweep(cfg, "strategy", ["random", "lc"])
        monkeypatch.setenv("ALLWAS_THREADS", "2")
        cfg2 = small_cfg(tmp_path, budget=20, k=10, out_dir=str(tmp_path / "par"))
        parallel = run_sweep(cfg2, "strategy", ["random", "lc"])
        for s, p in zip(serial, parallel):
            assert s.rows == p.rows


class TestReport:
    @pytest.fixture
    def records(self, tmp_path):
        cfg = small_cfg(tmp_path, budget=20, k=10)
        return run_sweep(cfg, "strategy", ["random", "lc"])

    def test_csv_row_counts(self, records, tmp_path):
        out = tmp_path / "report"
        report(records, out)
        for rec in records:
            lines = (out / f"cell_{rec.label}.csv").read_text().strip().splitlines()
            assert len(lines) - 1 == 2 * 2  # repeats x iterations

    def test_significance_symmetric_with_direction(self, records, tmp_path):
        out = tmp_path / "report"
        results = significance_table(records)
        assert len(results) == 1
        a, b, n, stat, p, p_adj, better = results[0]
        assert {a, b} == {"cell_random", "cell_lc"}
        assert p_adj >= p
        assert better in (a, b, "none")

    def test_svg_well_formed(self, records):
        svg = learning_curve_svg(records, "demo")
        validate_svg(svg)

    def test_report_files_and_load_records(self, records, tmp_path):
        out = tmp_path / "report"
        paths = report(records, out)
        assert any(str(p).endswith("significance.csv") for p in paths)
        svgs = [p for p in paths if str(p).endswith(".svg")]
        assert svgs
        for p in svgs:
            validate_svg(open(p).read())
        loaded = load_records(tmp_path / "runs")
        assert {rec.label for rec in loaded} == {"cell_random", "cell_lc"}

    def test_paired_alignment(self, records):
        xs, ys = paired_f1(records[0], records[1])
        assert len(xs) == len(ys) == 4


class TestCli:
    def test_synth_run_report_stats_pipeline(self, tmp_path, capsys):
        spec = tmp_path / "synth.json"
        spec.write_text(json.dumps({"n": 200, "d": 5, "priors": [0.7, 0.3],
                                    "seed": 2}))
        corpus_path = tmp_path / "corpus.jsonl"
        assert cli_main(["synth", str(spec), "--out", str(corpus_path)]) == 0
        assert corpus_path.exists()

        assert cli_main(["ingest", str(corpus_path)]) == 0

        run_dir = tmp_path / "runs"
        cfg = {
            "corpus": {"path": str(corpus_path)},
            "out_dir": str(run_dir),
            "label": "demo",
            "seed_size": 8,
            "budget": 16,
            "k": 8,
            "repeats": 2,
            "strategy": "random",
            "model": {"hidden_dim": 8, "epochs": 2},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli_main(["run", str(cfg_path)]) == 0
        assert (run_dir / "demo.csv").exists()

        cfg2 = dict(cfg, label="demo2", master_seed=1)
        cfg2_path = tmp_path / "cfg2.json"
        cfg2_path.write_text(json.dumps(cfg2))
        assert cli_main(["run", str(cfg2_path)]) == 0

        assert cli_main(["report", str(run_dir)]) == 0
        assert (run_dir / "significance.csv").exists()

        code = cli_main(["stats", str(run_dir), "--pairs", "demo:demo2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "demo,demo2" in out

    def test_exit_code_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli_main(["run", str(bad)]) == 2

    def test_exit_code_data_error(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert cli_main(["ingest", str(empty)]) == 3

    def test_sweep_command(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"n": 150, "d": 4, "priors": [0.5, 0.5],
                                    "seed": 1}))
        cli_main(["synth", str(spec), "--out", str(corpus_path)])
        cfg = {
            "corpus": {"path": str(corpus_path)},
            "out_dir": str(tmp_path / "sweep"),
            "label": "s",
            "seed_size": 6,
            "budget": 12,
            "k": 6,
            "repeats": 1,
            "model": {"hidden_dim": 8, "epochs": 1},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli_main(["sweep", str(cfg_path), "--axis", "strategy",
                         "--values", "random,lc"]) == 0
        assert (tmp_path / "sweep" / "s_random.csv").exists()
        assert (tmp_path / "sweep" / "s_lc.csv").exists()
