"""Frozen base models shared by every variant and seed of an experiment.

The base LLM (pretrained, then fine-tuned on English tasks) and the encoder are trained once
per base fingerprint and cached as checkpoints.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path

from mindmerger_lab.config.experiment import ExperimentConfig
from mindmerger_lab.core import CheckpointError, StageKind
from mindmerger_lab.nets.encoder import EncoderParams
from mindmerger_lab.nets.lm import LMParams
from mindmerger_lab.nets.translator import TranslatorParams
from mindmerger_lab.pipeline.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from mindmerger_lab.pipeline.data import encode_all, encode_text, stage_dataset
from mindmerger_lab.pipeline.rundir import BaseLayout, base_layout
from mindmerger_lab.pipeline.stages import (
    finetune_english_task,
    lm_perplexity,
    pretrain_lm,
    train_translation_model,
)
from mindmerger_lab.pipeline.training import TrainingLog
from mindmerger_lab.synthlang.corpora import CorpusBundle, TextLine, World
from mindmerger_lab.tensorcore.rng import rng_stream


logger = logging.getLogger(__name__)


@dataclass
class BaseModels:
    phi: LMParams
    theta: EncoderParams
    decoder: TranslatorParams
    fingerprint: str
    cached: bool = False
    diagnostics: dict[str, float] = field(default_factory=dict)


def _lm_from(checkpoint: Checkpoint, world: World, config: ExperimentConfig) -> LMParams:
    net = config.model.llm
    return LMParams(
        checkpoint.params, len(world.llm_vocab), net.dim, net.layers, net.heads, net.max_positions
    )


def _encoder_from(checkpoint: Checkpoint, world: World, config: ExperimentConfig) -> EncoderParams:
    net = config.model.encoder
    return EncoderParams(
        checkpoint.params,
        len(world.encoder_vocab),
        net.dim,
        net.layers,
        net.heads,
        net.max_positions,
    )


def _translator_from(
    checkpoint: Checkpoint, world: World, config: ExperimentConfig
) -> TranslatorParams:
    net = config.model.encoder
    return TranslatorParams(
        checkpoint.params,
        len(world.encoder_vocab),
        net.dim,
        net.layers,
        net.heads,
        net.max_positions,
    )


def pool_perplexity(phi: LMParams, bundle: CorpusBundle, lang_ids: list[str]) -> float | None:
    """Perplexity of the base LLM on the alignment-pool sentences of ``lang_ids``."""
    lines = [
        encode_text(bundle.world, TextLine(lang_id, sentence), phi.max_positions)
        for lang_id in lang_ids
        for sentence in bundle.alignment_pool.get(lang_id, [])
    ]
    return lm_perplexity(phi, lines) if lines else None


def load_base_models(layout: BaseLayout, world: World, config: ExperimentConfig) -> BaseModels:
    fingerprint = config.base_fingerprint()
    llm = load_checkpoint(layout.llm)
    encoder = load_checkpoint(layout.encoder)
    translator = load_checkpoint(layout.translator)
    for name, checkpoint in (("llm", llm), ("encoder", encoder), ("translator", translator)):
        if checkpoint.fingerprint != fingerprint:
            raise CheckpointError(
                f"Cached {name} checkpoint was built for base fingerprint "
                f"'{checkpoint.fingerprint}', expected '{fingerprint}'"
            )
    return BaseModels(
        phi=_lm_from(llm, world, config),
        theta=_encoder_from(encoder, world, config),
        decoder=_translator_from(translator, world, config),
        fingerprint=fingerprint,
        cached=True,
        diagnostics=dict(llm.meta.get("diagnostics", {})),
    )


def train_base_models(
    config: ExperimentConfig, bundle: CorpusBundle, layout: BaseLayout | None = None
) -> BaseModels:
    world = bundle.world
    stages = config.stages
    rng = rng_stream(config.base_seed)
    fingerprint = config.base_fingerprint()

    def log_for(stage: StageKind) -> TrainingLog:
        return TrainingLog(layout.training_log(stage.value) if layout is not None else None)

    lm_log = log_for(StageKind.LM_PRETRAIN)
    max_length = min(stages.lm_pretrain.max_length, config.model.llm.max_positions)
    lines = [
        encode_text(world, line, max_length) for line in stage_dataset(bundle, stages.lm_pretrain)
    ]
    phi = pretrain_lm(world, lines, config.model.llm, stages.lm_pretrain, rng.fork("lm"), lm_log)

    diagnostics: dict[str, float] = {}
    english_ppl = pool_perplexity(phi, bundle, [world.english.language_id])
    low_ppl = pool_perplexity(phi, bundle, world.low_tier)
    if english_ppl is not None:
        diagnostics["english_perplexity"] = english_ppl
    if low_ppl is not None:
        diagnostics["low_tier_perplexity"] = low_ppl

    task_log = log_for(StageKind.TASK_FINETUNE)
    phi = finetune_english_task(
        phi,
        encode_all(world, stage_dataset(bundle, stages.task_finetune)),
        stages.task_finetune,
        rng.fork("finetune"),
        task_log,
    )

    encoder_log = log_for(StageKind.ENCODER_PRETRAIN)
    theta, decoder = train_translation_model(
        world,
        stage_dataset(bundle, stages.encoder_pretrain),
        config.model.encoder,
        stages.encoder_pretrain,
        rng.fork("encoder"),
        encoder_log,
    )
    for stage, log in (
        (StageKind.LM_PRETRAIN, lm_log),
        (StageKind.TASK_FINETUNE, task_log),
        (StageKind.ENCODER_PRETRAIN, encoder_log),
    ):
        means = log.epoch_means()
        if means:
            diagnostics[f"{stage.value}_first_epoch_loss"] = means[0]
            diagnostics[f"{stage.value}_last_epoch_loss"] = means[-1]
    return BaseModels(phi, theta, decoder, fingerprint, cached=False, diagnostics=diagnostics)


def save_base_models(layout: BaseLayout, models: BaseModels) -> None:
    save_checkpoint(
        layout.llm,
        Checkpoint(
            models.phi.params,
            (StageKind.LM_PRETRAIN.value, StageKind.TASK_FINETUNE.value),
            models.fingerprint,
            {"diagnostics": models.diagnostics},
        ),
    )
    save_checkpoint(
        layout.encoder,
        Checkpoint(models.theta.params, (StageKind.ENCODER_PRETRAIN.value,), models.fingerprint),
    )
    save_checkpoint(
        layout.translator,
        Checkpoint(models.decoder.params, (StageKind.ENCODER_PRETRAIN.value,), models.fingerprint),
    )


def prepare_base_models(
    config: ExperimentConfig, bundle: CorpusBundle, cache_dir: Path
) -> BaseModels:
    """Reuse the cached base models of this base fingerprint, or train and cache them."""
    layout = base_layout(cache_dir, config)
    if layout.is_complete():
        logger.info(f"Reusing cached base models from '{layout.root}'")
        return load_base_models(layout, bundle.world, config)
    logger.info(f"Training base models into '{layout.root}'")
    models = train_base_models(config, bundle, layout)
    save_base_models(layout, models)
    return models
