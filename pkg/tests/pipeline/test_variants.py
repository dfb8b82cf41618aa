import json
from unittest.mock import patch

import pytest

from mindmerger_lab.core import (
    VARIANT_STAGES,
    ComposeMode,
    MissingCheckpointError,
    StageKind,
    UnknownVariantError,
    VariantId,
)
from mindmerger_lab.framework.hooks.mindlab_hooks import MindLabHooks
from mindmerger_lab.pipeline.checkpoint import load_checkpoint
from mindmerger_lab.pipeline.rundir import RunLayout
from mindmerger_lab.pipeline.variants import (
    VARIANT_SPECS,
    VariantRunner,
    bridge_checkpoint,
    bridge_from_checkpoint,
    load_variant_state,
    run_variants,
    variant_spec,
)


TINY_VARIANTS = (VariantId.FULL, VariantId.NO_AUGMENTATION_STAGE, VariantId.MONOREASON)


@pytest.fixture(scope="module")
def variant_run(tmp_path_factory, tiny_config, tiny_bundle, tiny_base):
    layout = RunLayout(tmp_path_factory.mktemp("variant_run"))
    specs = [variant_spec(variant) for variant in TINY_VARIANTS]
    records = run_variants(specs, tiny_config.seeds, tiny_config, tiny_bundle, tiny_base, layout)
    return layout, records


@pytest.mark.unit
class TestVariantSpecUnit:
    @pytest.mark.parametrize(
        "variant,stages,eval_mode",
        [
            (VariantId.FULL, (StageKind.MAPPING, StageKind.AUGMENTATION), ComposeMode.AUGMENTED),
            (VariantId.NO_MAPPING_STAGE, (StageKind.AUGMENTATION,), ComposeMode.AUGMENTED),
            (VariantId.NO_AUGMENTATION_STAGE, (StageKind.MAPPING,), ComposeMode.AUGMENTED),
            (VariantId.REPLACEMENT_ONLY, (StageKind.MAPPING, StageKind.AUGMENTATION), ComposeMode.REPLACEMENT),
            (VariantId.MONOREASON, (), None),
            (VariantId.MULTIREASON_SFT, (StageKind.MULTIREASON_SFT,), None),
        ],
        ids=[
            "full",
            "no_mapping_stage",
            "no_augmentation_stage",
            "replacement_only",
            "monoreason",
            "multireason_sft",
        ],
    )
    def test_variant_table(self, variant, stages, eval_mode):
        spec = variant_spec(variant.value)
        assert spec.stages == stages
        assert spec.eval_mode is eval_mode
        assert spec.uses_bridge is (eval_mode is not None)

    def test_every_variant_has_a_spec(self):
        assert set(VARIANT_SPECS) == set(VariantId)
        assert all(spec.stages == VARIANT_STAGES[variant] for variant, spec in VARIANT_SPECS.items())

    def test_replacement_only_trains_in_replacement_form(self):
        assert variant_spec(VariantId.REPLACEMENT_ONLY).train_mode is ComposeMode.REPLACEMENT
        assert variant_spec(VariantId.FULL).train_mode is ComposeMode.AUGMENTED

    def test_unknown_variant(self):
        with pytest.raises(UnknownVariantError, match="no_such_variant"):
            variant_spec("no_such_variant")

    @pytest.mark.parametrize(
        "variant,steps",
        [
            (VariantId.FULL, ["init_bridge", "mapping_stage", "augmentation_stage", "evaluate"]),
            (VariantId.NO_MAPPING_STAGE, ["init_bridge", "augmentation_stage", "evaluate"]),
            (VariantId.MONOREASON, ["evaluate"]),
            (VariantId.MULTIREASON_SFT, ["multireason_sft", "evaluate"]),
        ],
        ids=["full", "no_mapping_stage", "monoreason", "multireason_sft"],
    )
    def test_node_names(self, tiny_config, variant, steps):
        pipeline = VariantRunner(tiny_config).pipeline(variant_spec(variant), 7)
        assert {node.name for node in pipeline.nodes} == {f"{variant.value}.s7.{step}" for step in steps}
        assert pipeline.outputs() == {f"{variant.value}.s7.metrics"}


@pytest.mark.unit
class TestStageDataUnit:
    @pytest.mark.parametrize(
        "datasets,source",
        [(["mapping_pairs"], "mapping_pairs"), (["encoder_pairs"], "encoder_pairs")],
        ids=["mapping_pairs", "encoder_pairs"],
    )
    def test_mapping_trains_on_the_configured_datasets(self, datasets, source, tiny_config, tiny_bundle, tiny_base):
        data = tiny_config.model_dump(mode="json")
        data["stages"]["mapping"]["datasets"] = datasets
        runner = VariantRunner(tiny_config.with_overrides(stages=data["stages"]))
        sigma = runner.init_sigma(1, tiny_base)
        with patch("mindmerger_lab.pipeline.variants.train_mapping_stage", return_value=sigma) as train:
            runner.mapping(variant_spec(VariantId.FULL), 1, tiny_base, tiny_bundle, sigma)
        pairs = train.call_args.args[3]
        assert len(pairs) == len(getattr(tiny_bundle, source))
        assert train.call_args.args[4].datasets == datasets

    def test_sft_trains_on_the_configured_datasets(self, tiny_config, tiny_bundle, tiny_base):
        data = tiny_config.model_dump(mode="json")
        data["stages"]["multireason_sft"]["datasets"] = ["query_translation"]
        runner = VariantRunner(tiny_config.with_overrides(stages=data["stages"]))
        with patch("mindmerger_lab.pipeline.variants.multireason_sft", return_value=tiny_base.phi) as train:
            runner.sft(variant_spec(VariantId.MULTIREASON_SFT), 1, tiny_base, tiny_bundle)
        examples = train.call_args.args[1]
        assert len(examples) == len(tiny_bundle.dataset("query_translation"))
        assert {example.language for example in examples} == {"hi1", "lo1"}


@pytest.mark.unit
class TestRunVariantsUnit:
    def test_missing_base_models(self, tiny_config, tiny_bundle):
        with pytest.raises(MissingCheckpointError, match="encoder"):
            run_variants([variant_spec(VariantId.FULL)], [1], tiny_config, tiny_bundle, None)

    def test_one_record_per_variant_and_seed(self, variant_run, tiny_config, tiny_bundle):
        _, records = variant_run
        assert set(records) == {(variant, seed) for variant in TINY_VARIANTS for seed in tiny_config.seeds}
        for (variant, seed), record in records.items():
            assert record.variant is variant
            assert record.seed == seed
            assert record.languages == list(tiny_bundle.eval_sets)
            assert record.low_tier == tiny_bundle.world.low_tier
            assert all(0.0 <= value <= 1.0 for value in record.accuracy.values())

    def test_translation_probe_follows_the_mapping_stage(self, variant_run):
        _, records = variant_run
        assert records[(VariantId.FULL, 1)].translation is not None
        assert records[(VariantId.NO_AUGMENTATION_STAGE, 1)].translation is not None
        assert records[(VariantId.MONOREASON, 1)].translation is None

    def test_checkpoints_are_written(self, variant_run):
        layout, _ = variant_run
        assert layout.checkpoint("full", 1, "mapping").is_file()
        assert layout.checkpoint("full", 1, "augmentation").is_file()
        assert layout.checkpoint("no_augmentation_stage", 1, "mapping").is_file()
        assert not layout.checkpoint("no_augmentation_stage", 1, "augmentation").exists()
        augmentation = load_checkpoint(layout.checkpoint("full", 1, "augmentation"))
        assert augmentation.provenance == ("mapping", "augmentation")

    def test_audit_rows(self, variant_run):
        layout, _ = variant_run
        rows = [json.loads(line) for line in layout.audit.read_text(encoding="utf-8").splitlines()]
        # four nodes for full, three without augmentation, one for monoreason
        assert len(rows) == 2 * 8
        assert {row["event"] for row in rows} == {"STARTED", "COMPLETED"}
        assert len({row["run_id"] for row in rows}) == 1
        assert {row["variant"] for row in rows} == {variant.value for variant in TINY_VARIANTS}
        assert {row["seed"] for row in rows} == {1}
        assert {row["runner"] for row in rows} == {"SequentialRunner"}

    def test_threads_give_the_same_metrics(self, variant_run, tiny_config, tiny_bundle, tiny_base):
        _, sequential = variant_run
        hooks = MindLabHooks()
        specs = [variant_spec(variant) for variant in TINY_VARIANTS]
        threaded = run_variants(
            specs, tiny_config.seeds, tiny_config, tiny_bundle, tiny_base, workers=2, hooks=hooks
        )
        for key, record in sequential.items():
            assert threaded[key].model_dump() == record.model_dump()
        assert {row.runner for row in hooks.rows} == {"ThreadRunner"}


@pytest.mark.unit
class TestVariantStateUnit:
    def test_bridge_state_is_reloaded(self, variant_run, tiny_base):
        layout, _ = variant_run
        sigma, phi = load_variant_state(variant_spec(VariantId.FULL), 1, layout, tiny_base)
        assert phi is None
        assert sigma.provenance == ("mapping", "augmentation")
        assert sigma.in_dim == tiny_base.theta.dim
        assert sigma.out_dim == tiny_base.phi.dim

    def test_monoreason_has_no_state(self, variant_run, tiny_base):
        layout, _ = variant_run
        assert load_variant_state(variant_spec(VariantId.MONOREASON), 1, layout, tiny_base) == (None, None)

    def test_missing_checkpoint(self, variant_run, tiny_base):
        layout, _ = variant_run
        with pytest.raises(MissingCheckpointError, match="replacement_only"):
            load_variant_state(variant_spec(VariantId.REPLACEMENT_ONLY), 1, layout, tiny_base)

    def test_bridge_checkpoint_keeps_its_shape(self, tiny_config, tiny_base):
        sigma = VariantRunner(tiny_config).init_sigma(3, tiny_base)
        restored = bridge_from_checkpoint(bridge_checkpoint(sigma, "abc"))
        assert restored.variant is sigma.variant
        assert (restored.in_dim, restored.out_dim, restored.hidden_dim) == (
            sigma.in_dim,
            sigma.out_dim,
            sigma.hidden_dim,
        )
        assert restored.params.snapshot() == sigma.params.snapshot()
