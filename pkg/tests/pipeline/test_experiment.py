import json
from unittest.mock import patch

import pytest

from mindmerger_lab.core import ConfigError, MappingVariant, MissingCheckpointError, SweepAxis, VariantId
from mindmerger_lab.evalkit.report import read_accuracy_table
from mindmerger_lab.pipeline.base import save_base_models
from mindmerger_lab.pipeline.experiment import (
    SWEEP_COLUMNS,
    ExperimentResult,
    _sweep_config,
    eval_only,
    run_experiment,
    stored_metrics_match,
    sweep,
)
from mindmerger_lab.pipeline.rundir import RunLayout, base_layout
from tests.conftest import metrics_record


@pytest.fixture(scope="module")
def experiment_run(tmp_path_factory, tiny_config, tiny_base):
    root = tmp_path_factory.mktemp("runs")
    cache = tmp_path_factory.mktemp("cache")
    save_base_models(base_layout(cache, tiny_config), tiny_base)
    return run_experiment(tiny_config, root, cache), root, cache


@pytest.mark.unit
class TestRunExperimentUnit:
    def test_run_directory(self, experiment_run, tiny_config):
        result, root, _ = experiment_run
        assert result.layout.root == root / tiny_config.fingerprint()
        assert result.base_fingerprint == tiny_config.base_fingerprint()
        for variant in tiny_config.variants:
            assert result.layout.metrics_file(variant.value, 1).is_file()

    def test_reports(self, experiment_run, tiny_config):
        result, _, _ = experiment_run
        assert set(result.reports) == {"table", "metrics", "projection"}
        table = read_accuracy_table(result.reports["table"])
        assert list(table.columns) == ["variant", "seed", "en", "hi1", "lo1", "Lrl", "Hrl", "Avg"]
        assert list(table["variant"]) == [variant.value for variant in tiny_config.variants]

        metrics = json.loads(result.reports["metrics"].read_text(encoding="utf-8"))
        assert len(metrics["records"]) == len(tiny_config.variants)
        assert metrics["alignment"]

    def test_projection_includes_the_mapping_output(self, experiment_run):
        result, _, _ = experiment_run
        header, *rows = result.reports["projection"].read_text(encoding="utf-8").splitlines()
        assert header == "location,language,index,x,y"
        assert {row.split(",")[0] for row in rows} == {
            "encoder-last",
            "llm-embedding",
            "llm-last",
            "mapping-output",
        }

    def test_stored_metrics_match(self, experiment_run):
        result, _, _ = experiment_run
        for record in result.ordered():
            assert stored_metrics_match(result.layout, record)
        changed = result.ordered()[0].model_copy(update={"avg": -1.0})
        assert not stored_metrics_match(result.layout, changed)

    def test_eval_only_reproduces_the_metrics(self, experiment_run, tiny_config):
        result, root, cache = experiment_run
        records = eval_only(tiny_config, root, cache)
        assert set(records) == set(result.records)
        for record in records.values():
            assert stored_metrics_match(result.layout, record)

    def test_eval_only_subset(self, experiment_run, tiny_config):
        _, root, cache = experiment_run
        records = eval_only(tiny_config, root, cache, variants=[VariantId.MONOREASON], seeds=[1])
        assert list(records) == [(VariantId.MONOREASON, 1)]

    def test_eval_only_without_cached_models(self, tmp_path, tiny_config):
        with pytest.raises(MissingCheckpointError, match="No cached base models"):
            eval_only(tiny_config, tmp_path / "runs", tmp_path / "empty_cache")


@pytest.mark.unit
class TestSweepUnit:
    def test_stage2_size(self, tiny_config):
        swept = _sweep_config(tiny_config, SweepAxis.STAGE2_SIZE, "2")
        assert swept.quotas.query_translation_per_language == 2
        assert swept.base_fingerprint() == tiny_config.base_fingerprint()
        assert swept.fingerprint() != tiny_config.fingerprint()

    def test_mapping_variant(self, tiny_config):
        swept = _sweep_config(tiny_config, SweepAxis.MAPPING_VARIANT, "linear")
        assert swept.model.mapping_variant is MappingVariant.LINEAR

    @pytest.mark.parametrize(
        "axis,value,message",
        [
            (SweepAxis.STAGE2_SIZE, "many", "must be integers"),
            (SweepAxis.STAGE2_SIZE, "-1", "must not be negative"),
            (SweepAxis.MAPPING_VARIANT, "mlp7", "Unknown mapping variant"),
        ],
        ids=["not_an_integer", "negative", "unknown_variant"],
    )
    def test_invalid_values(self, tiny_config, axis, value, message):
        with pytest.raises(ConfigError, match=message):
            _sweep_config(tiny_config, axis, value)

    def test_no_values(self, tmp_path, tiny_config):
        with pytest.raises(ConfigError, match="at least one value"):
            sweep(tiny_config, SweepAxis.STAGE2_SIZE, [], tmp_path)

    def test_invalid_value_stops_before_any_run(self, tmp_path, tiny_config):
        with patch("mindmerger_lab.pipeline.experiment.run_experiment") as run:
            with pytest.raises(ConfigError):
                sweep(tiny_config, SweepAxis.STAGE2_SIZE, ["2", "x"], tmp_path)
        run.assert_not_called()

    def test_sweep_table(self, tmp_path, tiny_config):
        sizes = []

        def fake_run(config, root, cache):
            size = config.quotas.query_translation_per_language
            sizes.append(size)
            record = metrics_record(VariantId.FULL, 1, {"en": 1.0, "hi1": 0.5, "lo1": size / 10})
            layout = RunLayout(root / config.fingerprint())
            return ExperimentResult(layout, {(VariantId.FULL, 1): record}, "base123")

        with patch("mindmerger_lab.pipeline.experiment.run_experiment", side_effect=fake_run):
            table, path = sweep(tiny_config, SweepAxis.STAGE2_SIZE, ["0", "4"], tmp_path)

        assert sizes == [0, 4]
        assert list(table.columns) == SWEEP_COLUMNS
        assert list(table["value"]) == ["0", "4"]
        assert list(table["Lrl"]) == pytest.approx([0.0, 0.4])
        assert set(table["base_fingerprint"]) == {"base123"}
        assert path == tmp_path / "sweeps" / f"{tiny_config.fingerprint()}-stage2-size.csv"
        assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(SWEEP_COLUMNS)
