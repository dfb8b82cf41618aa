import json
from unittest.mock import MagicMock, patch

from click.testing import CliRunner
import pytest

from mindmerger_lab.core import (
    EmptyDatasetError,
    MissingCheckpointError,
    RunComparisonError,
    SweepAxis,
    VariantId,
)
from mindmerger_lab.framework.cli import cli
from mindmerger_lab.pipeline.gradcheck_suite import GradCheckResult
from mindmerger_lab.utils import write_template
from tests.conftest import metrics_record


CLI = "mindmerger_lab.framework.cli.cli"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "mindlab.yml"
    write_template("mindlab.yml", path)
    return path


@pytest.fixture
def records():
    return [
        metrics_record(VariantId.FULL, 1, {"en": 1.0, "hi1": 0.5, "lo1": 0.25}),
        metrics_record(VariantId.MONOREASON, 1, {"en": 0.5, "hi1": 0.25, "lo1": 0.0}),
    ]


@pytest.mark.unit
class TestCliUnit:
    def test_group_lists_every_command(self, runner):
        result = runner.invoke(cli.cli, ["--help"])
        assert result.exit_code == 0
        for command in ("init", "run", "sweep", "compare", "gen-corpus", "eval-only", "gradcheck"):
            assert command in result.output

    def test_init(self, runner, tmp_path):
        path = tmp_path / "mindlab.yml"
        result = runner.invoke(cli.init, ["--path", str(path)])
        assert result.exit_code == 0
        assert "successfully updated" in result.output
        assert "schema_version" in path.read_text(encoding="utf-8")

    def test_init_existing_file_without_force_flag(self, runner, config_file):
        config_file.write_text("name: mine\n", encoding="utf-8")
        result = runner.invoke(cli.init, ["--path", str(config_file)])
        assert result.exit_code == 0
        assert "A config already exists" in result.output
        assert config_file.read_text(encoding="utf-8") == "name: mine\n"

    def test_init_existing_file_with_force_flag(self, runner, config_file):
        config_file.write_text("name: mine\n", encoding="utf-8")
        result = runner.invoke(cli.init, ["--path", str(config_file), "--force"])
        assert result.exit_code == 0
        assert config_file.read_text(encoding="utf-8") != "name: mine\n"

    def test_init_missing_directory(self, runner, tmp_path):
        result = runner.invoke(cli.init, ["--path", str(tmp_path / "missing" / "mindlab.yml")])
        assert "Please check this folder exists" in result.output


@pytest.mark.unit
class TestRunCommandUnit:
    def test_run(self, runner, config_file, records, tmp_path):
        result_obj = MagicMock()
        result_obj.ordered.return_value = records
        result_obj.layout.root = tmp_path / "abc"
        with patch(f"{CLI}.run_experiment", return_value=result_obj) as run:
            result = runner.invoke(
                cli.run, ["-c", str(config_file), "--seeds", "4,5", "--variants", "full", "--workers", "2"]
            )
        assert result.exit_code == 0, result.output
        config = run.call_args.args[0]
        assert config.seeds == [4, 5]
        assert config.variants == [VariantId.FULL]
        assert config.workers == 2
        assert "Lrl" in result.output
        assert f"Run directory: {tmp_path / 'abc'}" in result.output

    @pytest.mark.parametrize(
        "args,message",
        [
            (["--seeds", "1,x"], "--seeds must be comma-separated integers"),
            (["--variants", "full,bogus"], "Unknown variant"),
            (["--workers", "0"], "workers must be positive"),
        ],
        ids=["bad_seeds", "unknown_variant", "no_workers"],
    )
    def test_invalid_overrides(self, runner, config_file, args, message):
        with patch(f"{CLI}.run_experiment") as run:
            result = runner.invoke(cli.run, ["-c", str(config_file), *args])
        assert result.exit_code == 3
        assert "Invalid input" in result.output
        assert message in result.output
        run.assert_not_called()

    def test_invalid_config_file(self, runner, tmp_path):
        path = tmp_path / "broken.yml"
        path.write_text("seeds: [1, 1]\n", encoding="utf-8")
        result = runner.invoke(cli.run, ["-c", str(path)])
        assert result.exit_code == 3
        assert "Invalid experiment config" in result.output

    def test_runtime_failure(self, runner, config_file):
        with patch(f"{CLI}.run_experiment", side_effect=MissingCheckpointError("nothing cached")):
            result = runner.invoke(cli.run, ["-c", str(config_file)])
        assert result.exit_code == 4
        assert "Run failed: MissingCheckpointError: nothing cached" in result.output

    def test_zero_mapping_quota_is_invalid_input(self, runner, tmp_path):
        path = tmp_path / "zero.yml"
        path.write_text("quotas:\n  mapping_pairs_per_language: 0\n", encoding="utf-8")
        with patch(f"{CLI}.run_experiment") as run:
            result = runner.invoke(cli.run, ["-c", str(path)])
        assert result.exit_code == 3
        assert "stage 'mapping' would train on empty datasets" in result.output
        run.assert_not_called()

    def test_zero_mapping_quota_without_bridge_variants(self, runner, tmp_path, records):
        path = tmp_path / "zero.yml"
        path.write_text(
            "variants: [monoreason, multireason_sft]\nquotas:\n  mapping_pairs_per_language: 0\n",
            encoding="utf-8",
        )
        result_obj = MagicMock()
        result_obj.ordered.return_value = records
        result_obj.layout.root = tmp_path / "abc"
        with patch(f"{CLI}.run_experiment", return_value=result_obj) as run:
            result = runner.invoke(cli.run, ["-c", str(path)])
        assert result.exit_code == 0, result.output
        assert run.call_args.args[0].quotas.mapping_pairs_per_language == 0

    def test_empty_training_set_is_a_runtime_failure(self, runner, config_file):
        error = EmptyDatasetError("Stage 'mapping' needs a non-empty training set")
        with patch(f"{CLI}.run_experiment", side_effect=error):
            result = runner.invoke(cli.run, ["-c", str(config_file)])
        assert result.exit_code == 4
        assert "Run failed: EmptyDatasetError" in result.output

    def test_sweep(self, runner, config_file, tmp_path):
        table = MagicMock()
        table.to_string.return_value = "TABLE"
        with patch(f"{CLI}.run_sweep", return_value=(table, tmp_path / "sweep.csv")) as sweep:
            result = runner.invoke(
                cli.sweep, ["-c", str(config_file), "--axis", "stage2-size", "--values", "0, 100"]
            )
        assert result.exit_code == 0, result.output
        _, axis, values, _, _ = sweep.call_args.args
        assert axis is SweepAxis.STAGE2_SIZE
        assert values == ["0", "100"]
        assert "TABLE" in result.output

    def test_gen_corpus(self, runner, config_file, tmp_path):
        with (
            patch(f"{CLI}.corpora_for") as corpora,
            patch(f"{CLI}.write_corpus", return_value={"lm_pretrain": 12}) as write,
        ):
            result = runner.invoke(cli.gen_corpus, ["-c", str(config_file), "--out", str(tmp_path)])
        assert result.exit_code == 0
        write.assert_called_once_with(corpora.return_value, tmp_path)
        assert "lm_pretrain: 12" in result.output


@pytest.mark.unit
class TestEvalOnlyCommandUnit:
    @pytest.mark.parametrize(
        "matches,message",
        [(True, "Metrics match the stored files."), (False, "Metrics differ from the stored files")],
        ids=["match", "differ"],
    )
    def test_comparison_message(self, runner, config_file, records, tmp_path, matches, message):
        stored = {(record.variant, record.seed): record for record in records}
        with (
            patch(f"{CLI}.evaluate_stored", return_value=stored) as evaluate,
            patch(f"{CLI}.stored_metrics_match", return_value=matches),
        ):
            result = runner.invoke(
                cli.eval_only,
                ["-c", str(config_file), "--out", str(tmp_path), "--variants", "full", "--seeds", "1"],
            )
        assert result.exit_code == 0, result.output
        assert message in result.output
        assert evaluate.call_args.kwargs == {"variants": [VariantId.FULL], "seeds": [1]}

    def test_missing_checkpoints(self, runner, config_file):
        with patch(f"{CLI}.evaluate_stored", side_effect=MissingCheckpointError("No cached base models")):
            result = runner.invoke(cli.eval_only, ["-c", str(config_file)])
        assert result.exit_code == 4


@pytest.mark.unit
class TestCompareCommandUnit:
    def test_needs_two_runs(self, runner, tmp_path):
        result = runner.invoke(cli.compare, [str(tmp_path)])
        assert result.exit_code == 3
        assert "needs a baseline" in result.output

    def test_baseline_variant_needs_one_run(self, runner, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        result = runner.invoke(
            cli.compare, [str(tmp_path / "a"), str(tmp_path / "b"), "--baseline-variant", "monoreason"]
        )
        assert result.exit_code == 3

    def test_first_run_is_the_baseline(self, runner, tmp_path):
        for name in ("a", "b", "c"):
            (tmp_path / name).mkdir()
        table = MagicMock()
        table.to_csv.return_value = "run,variant\n"
        with patch(f"{CLI}.compare_runs", return_value=table) as compare:
            result = runner.invoke(
                cli.compare,
                [str(tmp_path / "a"), str(tmp_path / "b"), str(tmp_path / "c"), "-o", str(tmp_path / "d.csv")],
            )
        assert result.exit_code == 0, result.output
        compare.assert_called_once_with(tmp_path / "a", [tmp_path / "b", tmp_path / "c"])
        assert (tmp_path / "d.csv").read_text(encoding="utf-8") == "run,variant\n"

    def test_comparison_failure(self, runner, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        with patch(f"{CLI}.compare_runs", side_effect=RunComparisonError("Runs share no (variant, seed) pair")):
            result = runner.invoke(cli.compare, [str(tmp_path / "a"), str(tmp_path / "b")])
        assert result.exit_code == 4


@pytest.mark.unit
class TestGradCheckCommandUnit:
    def test_passing(self, runner, tmp_path):
        results = [GradCheckResult("matmul", 0, 1e-6), GradCheckResult("mapping_loss", 0, 2e-5)]
        with patch(f"{CLI}.run_gradcheck_suite", return_value=results) as suite:
            result = runner.invoke(cli.gradcheck, ["--seeds", "0", "-o", str(tmp_path / "grad.json")])
        assert result.exit_code == 0
        suite.assert_called_once_with([0], 1e-3)
        rows = json.loads((tmp_path / "grad.json").read_text(encoding="utf-8"))
        assert [row["name"] for row in rows] == ["matmul", "mapping_loss"]
        assert all(row["passed"] for row in rows)

    def test_failing(self, runner):
        results = [GradCheckResult("softmax", 1, 0.5)]
        with patch(f"{CLI}.run_gradcheck_suite", return_value=results):
            result = runner.invoke(cli.gradcheck, ["--seeds", "1"])
        assert result.exit_code == 4
        assert "1 gradient check(s) failed" in result.output
