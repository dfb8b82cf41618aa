"""Training procedures: the base models, the two bridge stages and the full fine-tunes.

Every procedure works on a copy of its input parameters and returns the trained copy. The
frozen backbones handed to the bridge stages are checked to be bitwise unchanged afterwards.
"""

from collections.abc import Sequence
import logging
import math

from mindmerger_lab.config.experiment import NetConfig, StageConfig
from mindmerger_lab.core import (
    ComposeMode,
    ConfigError,
    EmptyDatasetError,
    FreezingLeakError,
    MissingCheckpointError,
    StageKind,
    StageOrderError,
)
from mindmerger_lab.nets.bridge import BridgeParams
from mindmerger_lab.nets.compose import lm_loss_batch, merged_prompts, token_prompts
from mindmerger_lab.nets.encoder import EncoderParams, init_encoder
from mindmerger_lab.nets.lm import LMParams, init_lm
from mindmerger_lab.nets.translator import TranslatorParams, init_translator, translation_loss
from mindmerger_lab.pipeline.data import EncodedExample, clip_query, iterate_batches
from mindmerger_lab.pipeline.training import FreezeGuard, TrainingLog, train_loop
from mindmerger_lab.synthlang.corpora import World
from mindmerger_lab.synthlang.tasks import TaskExample
from mindmerger_lab.synthlang.vocab import EOS_ID
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection


MAPPING = StageKind.MAPPING.value
AUGMENTATION = StageKind.AUGMENTATION.value

logger = logging.getLogger(__name__)


def _check_kind(cfg: StageConfig, kind: StageKind) -> None:
    if cfg.kind is not kind:
        raise ConfigError(f"Expected a '{kind.value}' stage config, got '{cfg.kind.value}'")


def _require_data(items: Sequence, stage: StageKind) -> None:
    if not items:
        raise EmptyDatasetError(f"Stage '{stage.value}' needs a non-empty training set")


def _stage_rng(rng: RngStream, cfg: StageConfig) -> RngStream:
    """The stream of one stage; a non-zero ``cfg.seed`` moves it onto its own branch."""
    return rng.fork(f"seed{cfg.seed}") if cfg.seed else rng


def _clipped(items: Sequence[EncodedExample], cfg: StageConfig) -> list[EncodedExample]:
    return [clip_query(item, cfg.max_length) for item in items]


def plain_loss(phi: LMParams):
    """Loss over plain LLM prompts: ``[bos, *query]`` followed by the target."""

    def loss(batch: list[EncodedExample]):
        prompts = token_prompts([item.plain_prompt for item in batch], phi)
        return lm_loss_batch(prompts, [item.target_ids for item in batch], phi)

    return loss


def merged_loss(theta: EncoderParams, sigma: BridgeParams, phi: LMParams, mode: ComposeMode):
    def loss(batch: list[EncodedExample]):
        natives = None if mode is ComposeMode.REPLACEMENT else [item.llm_ids for item in batch]
        prompts = merged_prompts(
            [item.encoder_ids for item in batch], natives, theta, sigma, phi
        )
        return lm_loss_batch(prompts, [item.target_ids for item in batch], phi)

    return loss


def lm_perplexity(phi: LMParams, items: Sequence[EncodedExample], batch_size: int = 64) -> float:
    """Per-token perplexity of the targets under plain prompts."""
    if not items:
        raise ValueError("Perplexity needs at least one example")
    loss = plain_loss(phi)
    total, tokens = 0.0, 0
    for batch in iterate_batches(items, batch_size):
        count = sum(len(item.target_ids) for item in batch)
        total += loss(batch).item() * count
        tokens += count
    return math.exp(total / tokens)


def _full_finetune(
    stage: StageKind,
    phi: LMParams,
    items: Sequence[EncodedExample],
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None,
) -> LMParams:
    _check_kind(cfg, stage)
    _require_data(items, stage)
    items, rng = _clipped(items, cfg), _stage_rng(rng, cfg)
    tuned = phi.copy()
    tuned.params.unfreeze()
    logger.info(f"[{stage.value}] full fine-tune on {len(items)} examples")
    train_loop(stage.value, tuned.params, items, plain_loss(tuned), cfg, rng.fork("order"), log)
    tuned.params.freeze()
    return tuned


def pretrain_lm(
    world: World,
    lines: Sequence[EncodedExample],
    net: NetConfig,
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> LMParams:
    """Causal next-token training of a fresh LLM; the result comes back frozen."""
    _check_kind(cfg, StageKind.LM_PRETRAIN)
    _require_data(lines, StageKind.LM_PRETRAIN)
    rng = _stage_rng(rng, cfg)
    phi = init_lm(
        len(world.llm_vocab), net.dim, net.layers, net.heads, net.max_positions, rng.fork("init")
    )
    logger.info(f"[{cfg.kind.value}] pretraining on {len(lines)} lines")
    train_loop(cfg.kind.value, phi.params, lines, plain_loss(phi), cfg, rng.fork("order"), log)
    phi.params.freeze()
    return phi


def finetune_english_task(
    phi: LMParams,
    examples: Sequence[EncodedExample],
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> LMParams:
    return _full_finetune(StageKind.TASK_FINETUNE, phi, examples, cfg, rng, log)


def multireason_sft(
    phi: LMParams,
    examples: Sequence[EncodedExample],
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> LMParams:
    """Full fine-tune of the LLM on multilingual task data; no bridge is involved."""
    return _full_finetune(StageKind.MULTIREASON_SFT, phi, examples, cfg, rng, log)


def encode_translation_pairs(
    world: World, pairs: Sequence[TaskExample], max_length: int | None = None
) -> list[tuple[list[int], list[int]]]:
    """(source ids, English target ids + eos), both in the encoder vocabulary.

    With ``max_length`` the source keeps its first ``max_length`` ids and the target its first
    ``max_length - 1`` before the end-of-sequence id.
    """
    source_end = max_length
    target_end = max_length - 1 if max_length is not None else None
    return [
        (
            world.encoder_vocab.encode(pair.source)[:source_end],
            [*world.encoder_vocab.encode(pair.target)[:target_end], EOS_ID],
        )
        for pair in pairs
    ]


def train_translation_model(
    world: World,
    pairs: Sequence[TaskExample],
    net: NetConfig,
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> tuple[EncoderParams, TranslatorParams]:
    """Encoder-decoder trained on L -> English translation. Both come back frozen."""
    _check_kind(cfg, StageKind.ENCODER_PRETRAIN)
    _require_data(pairs, StageKind.ENCODER_PRETRAIN)
    rng = _stage_rng(rng, cfg)
    vocab_size = len(world.encoder_vocab)
    theta = init_encoder(
        vocab_size, net.dim, net.layers, net.heads, net.max_positions, rng.fork("encoder")
    )
    decoder = init_translator(
        vocab_size, net.dim, net.layers, net.heads, net.max_positions, rng.fork("decoder")
    )
    params = theta.params.merged_with(decoder.params)
    items = encode_translation_pairs(world, pairs, cfg.max_length)

    def loss(batch):
        return translation_loss(theta, decoder, [s for s, _ in batch], [t for _, t in batch])

    logger.info(f"[{cfg.kind.value}] translation pretraining on {len(items)} pairs")
    train_loop(cfg.kind.value, params, items, loss, cfg, rng.fork("order"), log)
    theta.params.freeze()
    decoder.params.freeze()
    return theta, decoder


def pretrain_encoder(
    world: World,
    pairs: Sequence[TaskExample],
    net: NetConfig,
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> EncoderParams:
    theta, _ = train_translation_model(world, pairs, net, cfg, rng, log)
    return theta


def _bridge_census(
    stage: str, theta: EncoderParams, phi: LMParams, sigma: BridgeParams
) -> ParameterCollection:
    """The optimizer-visible parameters of a bridge stage, which must be exactly sigma."""
    visible = ParameterCollection(
        param
        for params in (theta.params, phi.params, sigma.params)
        for param in params.values()
        if param.trainable
    )
    sigma_size = sum(param.tensor.size for param in sigma.params.values())
    census = sum(param.tensor.size for param in visible.values())
    if census != sigma_size or set(visible) != set(sigma.params):
        raise FreezingLeakError(
            f"Stage '{stage}' would train {census} scalars, expected the {sigma_size} of the bridge"
        )
    return visible


def train_mapping_stage(
    theta: EncoderParams,
    phi: LMParams,
    sigma: BridgeParams,
    pairs: Sequence[EncodedExample],
    cfg: StageConfig,
    rng: RngStream,
    log: TrainingLog | None = None,
) -> BridgeParams:
    """Bridge training on bilingual pairs with the replacement composition [bos; X~; sep].

    The bridge must come straight from initialization: any recorded stage is rejected.
    """
    _check_kind(cfg, StageKind.MAPPING)
    if sigma.provenance:
        raise StageOrderError(
            f"Stage '{MAPPING}' starts from a freshly initialized bridge, got provenance "
            f"{list(sigma.provenance)}"
        )
    _require_data(pairs, StageKind.MAPPING)
    pairs, rng = _clipped(pairs, cfg), _stage_rng(rng, cfg)
    trained = sigma.copy()
    trained.params.unfreeze()
    with FreezeGuard(MAPPING, [theta.params, phi.params]):
        visible = _bridge_census(MAPPING, theta, phi, trained)
        logger.info(f"[{MAPPING}] training {visible.census()} bridge scalars on {len(pairs)} pairs")
        loss = merged_loss(theta, trained, phi, ComposeMode.REPLACEMENT)
        train_loop(MAPPING, visible, pairs, loss, cfg, rng.fork("order"), log)
    return trained.with_stage(MAPPING)


def train_augmentation_stage(
    theta: EncoderParams,
    phi: LMParams,
    sigma: BridgeParams,
    examples: Sequence[EncodedExample],
    cfg: StageConfig,
    rng: RngStream,
    mode: ComposeMode = ComposeMode.AUGMENTED,
    require_mapping: bool = True,
    log: TrainingLog | None = None,
) -> BridgeParams:
    """Bridge training on query-translation task data.

    Batches mix all languages. With no data the incoming sigma is returned as is.
    """
    _check_kind(cfg, StageKind.AUGMENTATION)
    if require_mapping and MAPPING not in sigma.provenance:
        raise MissingCheckpointError(
            f"Stage '{AUGMENTATION}' expects a bridge from the '{MAPPING}' stage, "
            f"got provenance {list(sigma.provenance)}"
        )
    if not examples:
        logger.warning(f"[{AUGMENTATION}] no training data, keeping the incoming bridge")
        return sigma
    examples, rng = _clipped(examples, cfg), _stage_rng(rng, cfg)
    trained = sigma.copy()
    trained.params.unfreeze()
    with FreezeGuard(AUGMENTATION, [theta.params, phi.params]):
        visible = _bridge_census(AUGMENTATION, theta, phi, trained)
        logger.info(
            f"[{AUGMENTATION}] training {visible.census()} bridge scalars on {len(examples)} "
            f"examples ({mode.value} inputs)"
        )
        loss = merged_loss(theta, trained, phi, mode)
        train_loop(AUGMENTATION, visible, examples, loss, cfg, rng.fork("order"), log)
    return trained.with_stage(AUGMENTATION)
