"""The variant matrix and its execution as a Kedro pipeline.

Every (variant, seed) becomes a chain of namespaced nodes ``<variant>.s<seed>.<step>``. The
chains of one experiment are summed into one pipeline over a shared catalog that holds the
frozen base models and the corpora.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
import logging
from typing import Any

from kedro import __version__ as kedro_version
from kedro.framework.hooks import _create_hook_manager
from kedro.framework.hooks.manager import _register_hooks
from kedro.io import DataCatalog, MemoryDataset
from kedro.pipeline import Pipeline, node
from kedro.runner import SequentialRunner, ThreadRunner
from ulid import ULID

from mindmerger_lab.config.experiment import ExperimentConfig
from mindmerger_lab.core import (
    VARIANT_STAGES,
    ComposeMode,
    MappingVariant,
    MissingCheckpointError,
    StageKind,
    UnknownVariantError,
    VariantId,
)
from mindmerger_lab.evalkit.accuracy import MergedPredictor, MetricsRecord, PlainPredictor, eval_accuracy
from mindmerger_lab.evalkit.alignment import alignment_reports
from mindmerger_lab.evalkit.translation import translation_eval
from mindmerger_lab.framework.hooks.mindlab_hooks import MindLabHooks
from mindmerger_lab.nets.bridge import BridgeParams, init_bridge
from mindmerger_lab.nets.lm import LMParams
from mindmerger_lab.pipeline.base import BaseModels
from mindmerger_lab.pipeline.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mindmerger_lab.pipeline.data import encode_all, stage_dataset
from mindmerger_lab.pipeline.rundir import RunLayout
from mindmerger_lab.pipeline.stages import (
    multireason_sft,
    train_augmentation_stage,
    train_mapping_stage,
)
from mindmerger_lab.pipeline.training import TrainingLog
from mindmerger_lab.synthlang.corpora import CorpusBundle
from mindmerger_lab.tensorcore.rng import rng_stream


logger = logging.getLogger(__name__)

BASE = "base"
CORPORA = "corpora"


@dataclass(frozen=True)
class VariantSpec:
    """Which stages a variant runs and how its evaluation composes the LLM input.

    ``eval_mode`` is ``None`` for variants without a bridge (plain LLM evaluation).
    ``train_mode`` is the composition used by the augmentation stage.
    """

    variant: VariantId
    stages: tuple[StageKind, ...]
    eval_mode: ComposeMode | None
    train_mode: ComposeMode = ComposeMode.AUGMENTED
    requires: tuple[str, ...] = ("llm", "encoder")

    @property
    def uses_bridge(self) -> bool:
        return self.eval_mode is not None

    @property
    def final_stage(self) -> StageKind | None:
        return self.stages[-1] if self.stages else None


VARIANT_SPECS: dict[VariantId, VariantSpec] = {
    VariantId.FULL: VariantSpec(
        VariantId.FULL, VARIANT_STAGES[VariantId.FULL], ComposeMode.AUGMENTED
    ),
    VariantId.NO_MAPPING_STAGE: VariantSpec(
        VariantId.NO_MAPPING_STAGE,
        VARIANT_STAGES[VariantId.NO_MAPPING_STAGE],
        ComposeMode.AUGMENTED,
    ),
    VariantId.NO_AUGMENTATION_STAGE: VariantSpec(
        VariantId.NO_AUGMENTATION_STAGE,
        VARIANT_STAGES[VariantId.NO_AUGMENTATION_STAGE],
        ComposeMode.AUGMENTED,
    ),
    VariantId.REPLACEMENT_ONLY: VariantSpec(
        VariantId.REPLACEMENT_ONLY,
        VARIANT_STAGES[VariantId.REPLACEMENT_ONLY],
        ComposeMode.REPLACEMENT,
        train_mode=ComposeMode.REPLACEMENT,
    ),
    VariantId.MONOREASON: VariantSpec(
        VariantId.MONOREASON, VARIANT_STAGES[VariantId.MONOREASON], None, requires=("llm",)
    ),
    VariantId.MULTIREASON_SFT: VariantSpec(
        VariantId.MULTIREASON_SFT,
        VARIANT_STAGES[VariantId.MULTIREASON_SFT],
        None,
        requires=("llm",),
    ),
}


def variant_spec(variant: VariantId | str) -> VariantSpec:
    try:
        return VARIANT_SPECS[VariantId(variant)]
    except ValueError as e:
        raise UnknownVariantError(
            f"Unknown variant '{variant}', expected one of {[v.value for v in VariantId]}"
        ) from e


def namespace(variant: VariantId, seed: int) -> str:
    return f"{variant.value}.s{seed}"


def bridge_checkpoint(sigma: BridgeParams, fingerprint: str) -> Checkpoint:
    return Checkpoint(
        sigma.params,
        sigma.provenance,
        fingerprint,
        {
            "mapping_variant": sigma.variant.value,
            "in_dim": sigma.in_dim,
            "out_dim": sigma.out_dim,
            "hidden_dim": sigma.hidden_dim,
        },
    )


def bridge_from_checkpoint(checkpoint: Checkpoint) -> BridgeParams:
    meta = checkpoint.meta
    return BridgeParams(
        params=checkpoint.params,
        variant=MappingVariant(meta["mapping_variant"]),
        in_dim=int(meta["in_dim"]),
        out_dim=int(meta["out_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
        provenance=checkpoint.provenance,
    )


class VariantRunner:
    """Node functions of every variant, bound to one experiment."""

    def __init__(self, config: ExperimentConfig, layout: RunLayout | None = None):
        self.config = config
        self.layout = layout
        self.fingerprint = config.fingerprint()

    def _log(self, variant: VariantId, seed: int, stage: StageKind) -> TrainingLog:
        if self.layout is None:
            return TrainingLog()
        return TrainingLog(self.layout.training_log(variant.value, seed, stage.value))

    def _save(self, variant: VariantId, seed: int, stage: StageKind, checkpoint: Checkpoint) -> None:
        if self.layout is not None:
            save_checkpoint(self.layout.checkpoint(variant.value, seed, stage.value), checkpoint)

    def init_sigma(self, seed: int, base: BaseModels) -> BridgeParams:
        return init_bridge(
            self.config.model.mapping_variant,
            base.theta.dim,
            base.phi.dim,
            base.phi,
            rng_stream(seed).fork("bridge_init"),
        )

    def mapping(
        self, spec: VariantSpec, seed: int, base: BaseModels, bundle: CorpusBundle, sigma: BridgeParams
    ) -> BridgeParams:
        cfg = self.config.stages.mapping
        trained = train_mapping_stage(
            base.theta,
            base.phi,
            sigma,
            encode_all(bundle.world, stage_dataset(bundle, cfg)),
            cfg,
            rng_stream(seed).fork("mapping"),
            self._log(spec.variant, seed, StageKind.MAPPING),
        )
        self._save(spec.variant, seed, StageKind.MAPPING, bridge_checkpoint(trained, self.fingerprint))
        return trained

    def augmentation(
        self, spec: VariantSpec, seed: int, base: BaseModels, bundle: CorpusBundle, sigma: BridgeParams
    ) -> BridgeParams:
        cfg = self.config.stages.augmentation
        trained = train_augmentation_stage(
            base.theta,
            base.phi,
            sigma,
            encode_all(bundle.world, stage_dataset(bundle, cfg)),
            cfg,
            rng_stream(seed).fork("augmentation"),
            mode=spec.train_mode,
            require_mapping=StageKind.MAPPING in spec.stages,
            log=self._log(spec.variant, seed, StageKind.AUGMENTATION),
        )
        self._save(
            spec.variant, seed, StageKind.AUGMENTATION, bridge_checkpoint(trained, self.fingerprint)
        )
        return trained

    def sft(self, spec: VariantSpec, seed: int, base: BaseModels, bundle: CorpusBundle) -> LMParams:
        cfg = self.config.stages.multireason_sft
        tuned = multireason_sft(
            base.phi,
            encode_all(bundle.world, stage_dataset(bundle, cfg)),
            cfg,
            rng_stream(seed).fork("multireason_sft"),
            self._log(spec.variant, seed, StageKind.MULTIREASON_SFT),
        )
        self._save(
            spec.variant,
            seed,
            StageKind.MULTIREASON_SFT,
            Checkpoint(tuned.params, (StageKind.MULTIREASON_SFT.value,), self.fingerprint),
        )
        return tuned

    def evaluate(
        self,
        spec: VariantSpec,
        seed: int,
        base: BaseModels,
        bundle: CorpusBundle,
        sigma: BridgeParams | None = None,
        phi: LMParams | None = None,
    ) -> MetricsRecord:
        return evaluate_variant(spec, seed, self.config, bundle, base, sigma, phi)

    def pipeline(self, spec: VariantSpec, seed: int) -> Pipeline:
        """The node chain of one (variant, seed)."""
        ns = namespace(spec.variant, seed)
        nodes = []

        def add(step: str, func: Callable, inputs: list[str], output: str) -> None:
            nodes.append(node(func, inputs=inputs, outputs=output, name=f"{ns}.{step}"))

        phi_input = None
        sigma = None
        if spec.uses_bridge:

            def init(base):
                return self.init_sigma(seed, base)

            sigma = f"{ns}.sigma_init"
            add("init_bridge", init, [BASE], sigma)
            if StageKind.MAPPING in spec.stages:

                def mapping(base, bundle, current):
                    return self.mapping(spec, seed, base, bundle, current)

                add("mapping_stage", mapping, [BASE, CORPORA, sigma], f"{ns}.sigma_mapping")
                sigma = f"{ns}.sigma_mapping"
            if StageKind.AUGMENTATION in spec.stages:

                def augmentation(base, bundle, current):
                    return self.augmentation(spec, seed, base, bundle, current)

                add("augmentation_stage", augmentation, [BASE, CORPORA, sigma], f"{ns}.sigma_augmentation")
                sigma = f"{ns}.sigma_augmentation"
        if StageKind.MULTIREASON_SFT in spec.stages:

            def sft(base, bundle):
                return self.sft(spec, seed, base, bundle)

            phi_input = f"{ns}.phi_sft"
            add("multireason_sft", sft, [BASE, CORPORA], phi_input)

        if sigma is not None:

            def evaluate_merged(base, bundle, current):
                return self.evaluate(spec, seed, base, bundle, sigma=current)

            add("evaluate", evaluate_merged, [BASE, CORPORA, sigma], metrics_dataset(spec.variant, seed))
        elif phi_input is not None:

            def evaluate_tuned(base, bundle, tuned):
                return self.evaluate(spec, seed, base, bundle, phi=tuned)

            add("evaluate", evaluate_tuned, [BASE, CORPORA, phi_input], metrics_dataset(spec.variant, seed))
        else:

            def evaluate_plain(base, bundle):
                return self.evaluate(spec, seed, base, bundle)

            add("evaluate", evaluate_plain, [BASE, CORPORA], metrics_dataset(spec.variant, seed))
        return Pipeline(nodes)


def metrics_dataset(variant: VariantId, seed: int) -> str:
    return f"{namespace(variant, seed)}.metrics"


def evaluate_variant(
    spec: VariantSpec,
    seed: int,
    config: ExperimentConfig,
    bundle: CorpusBundle,
    base: BaseModels,
    sigma: BridgeParams | None = None,
    phi: LMParams | None = None,
) -> MetricsRecord:
    """Accuracy, alignment and (after a mapping stage) the translation probe of one variant."""
    phi = phi if phi is not None else base.phi
    world = bundle.world
    max_new = config.evaluation.max_new_tokens
    batch_size = config.evaluation.batch_size
    if spec.uses_bridge:
        if sigma is None:
            raise MissingCheckpointError(f"Variant '{spec.variant.value}' needs bridge parameters")
        predictor = MergedPredictor(world, base.theta, sigma, phi, spec.eval_mode, max_new, batch_size)
    else:
        predictor = PlainPredictor(world, phi, max_new, batch_size)
    record = eval_accuracy(
        predictor,
        world,
        bundle.eval_sets,
        spec.variant,
        seed,
        bundle.ood_eval_sets,
        config.tasks.compare_label_mix,
    )
    alignment = alignment_reports(
        bundle.alignment_pool, world, base.theta, phi, sigma if spec.uses_bridge else None, batch_size=batch_size
    )
    translation = None
    if sigma is not None and StageKind.MAPPING.value in sigma.provenance:
        translation = translation_eval(
            base.theta, sigma, phi, world, bundle.translation_heldout, max_new, batch_size
        )
    return record.model_copy(update={"alignment": alignment, "translation": translation})


def _runner(workers: int):
    return ThreadRunner(max_workers=workers) if workers > 1 else SequentialRunner()


def run_variants(
    specs: Sequence[VariantSpec],
    seeds: Sequence[int],
    config: ExperimentConfig,
    bundle: CorpusBundle,
    base: BaseModels | None,
    layout: RunLayout | None = None,
    workers: int = 1,
    hooks: MindLabHooks | None = None,
) -> dict[tuple[VariantId, int], MetricsRecord]:
    """Run every (variant, seed) of ``specs`` x ``seeds`` in one Kedro pipeline."""
    if base is None:
        missing = sorted({name for spec in specs for name in spec.requires})
        raise MissingCheckpointError(f"Variants need base checkpoints {missing}")
    runner = VariantRunner(config, layout)
    pipeline = Pipeline([])
    for spec in specs:
        for seed in seeds:
            pipeline += runner.pipeline(spec, seed)

    catalog = DataCatalog(
        {
            BASE: MemoryDataset(base, copy_mode="assign"),
            CORPORA: MemoryDataset(bundle, copy_mode="assign"),
        }
    )
    if hooks is None:
        hooks = MindLabHooks(layout.audit if layout is not None else None)
    hook_manager = _create_hook_manager()
    _register_hooks(hook_manager, (hooks,))
    run_params: dict[str, Any] = {
        "run_id": str(ULID()),
        "pipeline_name": config.name,
        "fingerprint": runner.fingerprint,
        "kedro_version": kedro_version,
        "runner": "ThreadRunner" if workers > 1 else "SequentialRunner",
    }
    hook_manager.hook.before_pipeline_run(run_params=run_params, pipeline=pipeline, catalog=catalog)
    logger.info(
        f"Running {len(specs)} variant(s) x {len(seeds)} seed(s) as {len(pipeline.nodes)} nodes"
    )
    outputs = _runner(workers).run(pipeline, catalog, hook_manager)
    hook_manager.hook.after_pipeline_run(
        run_params=run_params, run_result=outputs, pipeline=pipeline, catalog=catalog
    )
    return {
        (spec.variant, seed): outputs[metrics_dataset(spec.variant, seed)]
        for spec in specs
        for seed in seeds
    }


def run_variant(
    spec: VariantSpec,
    bundle: CorpusBundle,
    seeds: Sequence[int],
    config: ExperimentConfig,
    base: BaseModels | None,
    layout: RunLayout | None = None,
    workers: int = 1,
) -> dict[int, MetricsRecord]:
    """Metrics of one variant per seed."""
    results = run_variants([spec], seeds, config, bundle, base, layout, workers)
    return {seed: results[(spec.variant, seed)] for seed in seeds}


def load_variant_state(
    spec: VariantSpec, seed: int, layout: RunLayout, base: BaseModels
) -> tuple[BridgeParams | None, LMParams | None]:
    """The trained bridge or LLM a finished variant left behind in its run directory."""
    stage = spec.final_stage
    if stage is None:
        return None, None
    path = layout.checkpoint(spec.variant.value, seed, stage.value)
    if not path.is_file():
        raise MissingCheckpointError(
            f"Variant '{spec.variant.value}' seed {seed} has no '{stage.value}' checkpoint at '{path}'"
        )
    checkpoint = load_checkpoint(path)
    if stage is StageKind.MULTIREASON_SFT:
        phi = base.phi
        tuned = LMParams(
            checkpoint.params, phi.vocab_size, phi.dim, phi.layers, phi.heads, phi.max_positions
        )
        return None, tuned
    return bridge_from_checkpoint(checkpoint), None
