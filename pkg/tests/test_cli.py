import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from latentscout import cli
from latentscout.errors import ConfigurationError, StateError
from latentscout.runstore import RunStore

TINY_TOML = """
name = "tiny"
seed = 5

[dataset]
kind = "colored"
n_samples = 120
image_size = 32
n_classes = 3
p_corr = 0.95

[train]
latent_dim = 4
beta = 1.0
max_epochs = 2

[analysis]
k = 1

[traversal]
steps = 3
extremes_l = 2
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY_TOML)
    return p


class TestLoadConfig:
    def test_toml_round_trip(self, config_file):
        cfg = cli.load_config(config_file)
        assert cfg["dataset"]["kind"] == "colored"
        assert cfg["train"]["latent_dim"] == 4

    def test_json_equivalent(self, tmp_path, config_file):
        cfg = cli.load_config(config_file)
        p = tmp_path / "tiny.json"
        p.write_text(json.dumps(cfg))
        assert cli.load_config(p) == cfg

    def test_unknown_top_level_key(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('typo_section = 1\n[dataset]\nkind = "colored"\n')
        with pytest.raises(ConfigurationError, match="typo_section"):
            cli.load_config(p)

    def test_unknown_nested_key(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('[dataset]\nkind = "colored"\nn_smaples = 10\n')
        with pytest.raises(ConfigurationError, match="n_smaples"):
            cli.load_config(p)

    def test_missing_dataset_section(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("seed = 1\n")
        with pytest.raises(ConfigurationError, match="dataset"):
            cli.load_config(p)

    def test_unsupported_extension(self, tmp_path):
        p = tmp_path / "cfg.yaml"
        p.write_text("a: 1")
        with pytest.raises(ConfigurationError):
            cli.load_config(p)


class TestStageOrdering:
    def test_analyze_before_train(self, tmp_path, config_file):
        cfg = cli.load_config(config_file)
        store = RunStore(tmp_path)
        m = store.create_run("x", "y", {"latent_dim": 4})
        with pytest.raises(StateError, match="train"):
            cli.stage_analyze(store, m.run_id, cfg, seed=0)

    def test_evidence_before_analyze(self, tmp_path, config_file):
        cfg = cli.load_config(config_file)
        store = RunStore(tmp_path)
        m = store.create_run("x", "y", {"latent_dim": 4})
        with pytest.raises(StateError, match="analyze"):
            cli.stage_evidence(store, m.run_id, cfg, seed=0)


@pytest.fixture(scope="module")
def pipeline_result(tmp_path_factory):
    """One full CLI pipeline run on a tiny config, shared across tests."""
    root = tmp_path_factory.mktemp("cli-root")
    cfg_path = root / "tiny.toml"
    cfg_path.write_text(TINY_TOML)
    runner = CliRunner()
    result = runner.invoke(
        cli.main,
        ["pipeline", "--config", str(cfg_path), "--run-root", str(root)],
        catch_exceptions=False)
    assert result.exit_code == 0, result.output
    run_id = result.output.strip().splitlines()[-1]
    return root, cfg_path, run_id


class TestPipeline:
    def test_artifacts_present(self, pipeline_result):
        root, _, run_id = pipeline_result
        run_dir = RunStore(root).run_dir(run_id)
        for name in ("manifest.json", "dataset.zip", "checkpoint.bin",
                     "training_log.jsonl", "latents.csv", "scores.json",
                     "head.json", "report.html", "report.md"):
            assert (run_dir / name).exists(), name
        assert list((run_dir / "grids").glob("dim_*_traversal.png"))
        assert list((run_dir / "kde").glob("dim_*.json"))

    def test_status_analyzed(self, pipeline_result):
        root, _, run_id = pipeline_result
        assert RunStore(root).get_run(run_id).status == "analyzed"

    def test_scoreboard_has_predictiveness(self, pipeline_result):
        root, _, run_id = pipeline_result
        board = RunStore(root).scoreboard(run_id)
        assert all(s.predictiveness is not None for s in board)

    def test_rerun_stage_is_noop(self, pipeline_result):
        root, cfg_path, run_id = pipeline_result
        store = RunStore(root)
        run_dir = store.run_dir(run_id)
        before = (run_dir / "scores.json").read_bytes()
        mtime = (run_dir / "latents.csv").stat().st_mtime_ns
        cfg = cli.load_config(cfg_path)
        cli.stage_analyze(store, run_id, cfg, seed=5)
        assert (run_dir / "latents.csv").stat().st_mtime_ns == mtime
        # probe already ran, so the scoreboard keeps its predictiveness
        assert (run_dir / "scores.json").read_bytes() == before

    def test_force_redoes_stage(self, pipeline_result):
        root, cfg_path, run_id = pipeline_result
        store = RunStore(root)
        run_dir = store.run_dir(run_id)
        mtime = (run_dir / "latents.csv").stat().st_mtime_ns
        cfg = cli.load_config(cfg_path)
        cli.stage_analyze(store, run_id, cfg, seed=5, force=True)
        assert (run_dir / "latents.csv").stat().st_mtime_ns != mtime
        # restore the probed scoreboard so later tests see the full pipeline
        cli.stage_probe(store, run_id, cfg, seed=5, force=True)
        cli.stage_evidence(store, run_id, cfg, seed=5, force=True)

    def test_report_regeneration_cli(self, pipeline_result):
        root, cfg_path, run_id = pipeline_result
        runner = CliRunner()
        result = runner.invoke(
            cli.main,
            ["report", "--config", str(cfg_path), "--run-root", str(root),
             "--run", run_id],
            catch_exceptions=False)
        assert result.exit_code == 0


class TestCliErrors:
    def test_missing_config_file(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            cli.main, ["train", "--config", str(tmp_path / "none.toml")])
        assert result.exit_code != 0

    def test_unknown_run_id(self, tmp_path, config_file):
        runner = CliRunner()
        result = runner.invoke(
            cli.main,
            ["analyze", "--config", str(config_file),
             "--run-root", str(tmp_path), "--run", "ghost"])
        assert result.exit_code != 0

    def test_dataset_gen_writes_archive(self, tmp_path, config_file):
        runner = CliRunner()
        out = tmp_path / "out.zip"
        result = runner.invoke(
            cli.main,
            ["dataset", "gen", "--config", str(config_file),
             "--run-root", str(tmp_path), "--out", str(out)],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert out.exists()

    def test_seed_flag_overrides_config(self, tmp_path, config_file):
        from latentscout import data

        runner = CliRunner()
        out_a = tmp_path / "a.zip"
        out_b = tmp_path / "b.zip"
        for out, seed in ((out_a, "1"), (out_b, "1")):
            result = runner.invoke(
                cli.main,
                ["dataset", "gen", "--config", str(config_file),
                 "--run-root", str(tmp_path), "--out", str(out),
                 "--seed", seed],
                catch_exceptions=False)
            assert result.exit_code == 0
        ds_a, meta_a = data.load_archive(out_a)
        ds_b, _ = data.load_archive(out_b)
        assert meta_a["seed"] == 1
        assert (ds_a.images == ds_b.images).all()
