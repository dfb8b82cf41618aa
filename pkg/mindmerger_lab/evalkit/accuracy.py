from collections.abc import Mapping, Sequence
import logging
from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, Field, model_validator

from mindmerger_lab.core import ComposeMode, TaskKind, VariantId
from mindmerger_lab.evalkit.alignment import AlignmentReport
from mindmerger_lab.evalkit.translation import TranslationReport
from mindmerger_lab.nets.bridge import BridgeParams
from mindmerger_lab.nets.compose import merged_prompts, token_prompts
from mindmerger_lab.nets.decode import greedy_decode_batch
from mindmerger_lab.nets.encoder import EncoderParams
from mindmerger_lab.nets.lm import LMParams
from mindmerger_lab.pipeline.data import EncodedExample, encode_all, iterate_batches
from mindmerger_lab.synthlang.corpora import World
from mindmerger_lab.synthlang.tasks import DEFAULT_LABEL_MIX, TaskExample, chance_accuracy
from mindmerger_lab.synthlang.vocab import ANSWER_MARKER


MARKER = " ".join(ANSWER_MARKER)
METRICS_SCHEMA_VERSION = 1

logger = logging.getLogger(__name__)


class MetricsRecord(BaseModel):
    schema_version: Literal[1] = METRICS_SCHEMA_VERSION
    variant: VariantId
    seed: int
    languages: list[str]
    low_tier: list[str] = Field(default_factory=list)
    accuracy: dict[str, float]
    counts: dict[str, int]
    lrl: float | None = None
    hrl: float | None = None
    avg: float | None = None
    kind_accuracy: dict[str, dict[str, float]] = Field(default_factory=dict)
    ood_accuracy: dict[str, float] = Field(default_factory=dict)
    chance: dict[str, float] = Field(default_factory=dict)
    alignment: list[AlignmentReport] = Field(default_factory=list)
    translation: TranslationReport | None = None

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @model_validator(mode="after")
    def languages_are_covered(self):
        if set(self.accuracy) != set(self.languages) or set(self.counts) != set(self.languages):
            raise ValueError(
                f"accuracy and counts must cover exactly the languages {self.languages}"
            )
        return self


def extract_answer(decoded: str | Sequence[str], kind: TaskKind) -> str | None:
    """Final answer of a decoded output, or ``None`` when there is none.

    Math answers are the span after the last answer marker with spaces removed, so digit tokens
    join back into a number. Compare answers are the whole stripped output.
    """
    text = decoded if isinstance(decoded, str) else " ".join(decoded)
    if kind is TaskKind.COMPARE:
        return text.strip() or None
    at = text.rfind(MARKER)
    if at < 0:
        return None
    answer = "".join(text[at + len(MARKER) :].split())
    return answer or None


def is_correct(decoded: str | Sequence[str], example: TaskExample) -> bool:
    return extract_answer(decoded, example.kind) == example.gold


class Predictor(Protocol):
    def predict(self, items: Sequence[EncodedExample]) -> list[list[str]]: ...


class PlainPredictor:
    """The LLM on its own: prompt ``[bos, *query]``."""

    def __init__(self, world: World, phi: LMParams, max_new: int, batch_size: int = 64):
        self.world = world
        self.phi = phi
        self.max_new = max_new
        self.batch_size = batch_size

    def predict(self, items: Sequence[EncodedExample]) -> list[list[str]]:
        outputs = []
        for batch in iterate_batches(items, self.batch_size):
            prompts = token_prompts([item.plain_prompt for item in batch], self.phi)
            decoded = greedy_decode_batch(prompts, self.phi, self.max_new)
            outputs.extend(self.world.llm_vocab.decode(ids) for ids in decoded)
        return outputs


class MergedPredictor:
    """Encoder, bridge and LLM together, in augmented or replacement form."""

    def __init__(
        self,
        world: World,
        theta: EncoderParams,
        sigma: BridgeParams,
        phi: LMParams,
        mode: ComposeMode,
        max_new: int,
        batch_size: int = 64,
    ):
        self.world = world
        self.theta = theta
        self.sigma = sigma
        self.phi = phi
        self.mode = mode
        self.max_new = max_new
        self.batch_size = batch_size

    def predict(self, items: Sequence[EncodedExample]) -> list[list[str]]:
        outputs = []
        for batch in iterate_batches(items, self.batch_size):
            natives = None
            if self.mode is ComposeMode.AUGMENTED:
                natives = [item.llm_ids for item in batch]
            prompts = merged_prompts(
                [item.encoder_ids for item in batch], natives, self.theta, self.sigma, self.phi
            )
            decoded = greedy_decode_batch(prompts, self.phi, self.max_new)
            outputs.extend(self.world.llm_vocab.decode(ids) for ids in decoded)
        return outputs


def _score(
    predictor: Predictor, world: World, examples: Sequence[TaskExample]
) -> tuple[list[bool], dict[str, float]]:
    decoded = predictor.predict(encode_all(world, examples))
    hits = [is_correct(output, example) for output, example in zip(decoded, examples, strict=True)]
    by_kind = {}
    for kind in TaskKind:
        kind_hits = [hit for hit, example in zip(hits, examples, strict=True) if example.kind is kind]
        if kind_hits:
            by_kind[kind.value] = float(np.mean(kind_hits))
    return hits, by_kind


def eval_accuracy(
    predictor: Predictor,
    world: World,
    eval_sets: Mapping[str, Sequence[TaskExample]],
    variant: VariantId,
    seed: int,
    ood_sets: Mapping[str, Sequence[TaskExample]] | None = None,
    label_mix: Mapping[str, float] = DEFAULT_LABEL_MIX,
) -> MetricsRecord:
    """Greedy-decode every evaluation example and score exact answer matches per language."""
    accuracy, counts, kind_accuracy, ood_accuracy = {}, {}, {}, {}
    for lang_id, examples in eval_sets.items():
        hits, by_kind = _score(predictor, world, examples)
        accuracy[lang_id] = float(np.mean(hits)) if hits else 0.0
        counts[lang_id] = len(examples)
        kind_accuracy[lang_id] = by_kind
        if ood_sets and ood_sets.get(lang_id):
            ood_hits, _ = _score(predictor, world, ood_sets[lang_id])
            ood_accuracy[lang_id] = float(np.mean(ood_hits))
        logger.info(f"[{variant.value} seed={seed}] {lang_id}: accuracy {accuracy[lang_id]:.3f}")

    reference = next(iter(eval_sets.values()), [])
    chance = {
        kind.value: chance_accuracy(
            kind, [example for example in reference if example.kind is kind], label_mix
        )
        for kind in (TaskKind.MATH, TaskKind.COMPARE)
        if any(example.kind is kind for example in reference)
    }
    record = MetricsRecord(
        variant=variant,
        seed=seed,
        languages=list(eval_sets),
        accuracy=accuracy,
        counts=counts,
        kind_accuracy=kind_accuracy,
        ood_accuracy=ood_accuracy,
        chance=chance,
    )
    return aggregate_groups(record, world.low_tier)


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if values else None


def aggregate_groups(record: MetricsRecord, low_tier: Sequence[str]) -> MetricsRecord:
    """Lrl over the low tier, Hrl over every other language (English included), Avg over all."""
    missing = sorted(set(low_tier) - set(record.accuracy))
    if missing:
        raise ValueError(f"Low-tier languages {missing} are missing from the record")
    low = [lang for lang in record.languages if lang in set(low_tier)]
    rest = [lang for lang in record.languages if lang not in set(low_tier)]
    return record.model_copy(
        update={
            "low_tier": low,
            "lrl": _mean([record.accuracy[lang] for lang in low]),
            "hrl": _mean([record.accuracy[lang] for lang in rest]),
            "avg": _mean([record.accuracy[lang] for lang in record.languages]),
        }
    )


def chance_level(record: MetricsRecord, examples: Sequence[TaskExample]) -> float:
    """Expected content-blind accuracy on ``examples`` given the per-kind chance of ``record``."""
    if not examples:
        return 0.0
    return float(np.mean([record.chance.get(example.kind.value, 0.0) for example in examples]))
