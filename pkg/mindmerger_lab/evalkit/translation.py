"""Translation probe: token-level F1 and exact match against English references."""

from collections import Counter
from collections.abc import Mapping, Sequence

import numpy as np
from pydantic import BaseModel

from mindmerger_lab.core import MissingCheckpointError, StageKind
from mindmerger_lab.nets.bridge import BridgeParams
from mindmerger_lab.nets.compose import merged_prompts
from mindmerger_lab.nets.decode import greedy_decode_batch
from mindmerger_lab.nets.encoder import EncoderParams
from mindmerger_lab.nets.lm import LMParams
from mindmerger_lab.nets.translator import TranslatorParams, translate_batch
from mindmerger_lab.pipeline.data import iterate_batches
from mindmerger_lab.synthlang.corpora import World
from mindmerger_lab.synthlang.tasks import TaskExample


class TranslationReport(BaseModel):
    token_f1: dict[str, float]
    exact_match: dict[str, float]
    counts: dict[str, int]

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    def mean_f1(self, languages: Sequence[str] | None = None) -> float:
        languages = list(self.token_f1) if languages is None else list(languages)
        return float(np.mean([self.token_f1[lang] for lang in languages]))

    def mean_exact_match(self, languages: Sequence[str] | None = None) -> float:
        languages = list(self.exact_match) if languages is None else list(languages)
        return float(np.mean([self.exact_match[lang] for lang in languages]))


def token_f1(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    """Harmonic mean of token precision and recall over multiset overlap."""
    if not hypothesis and not reference:
        return 1.0
    overlap = sum((Counter(hypothesis) & Counter(reference)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(hypothesis)
    recall = overlap / len(reference)
    return 2 * precision * recall / (precision + recall)


def exact_match(hypothesis: Sequence[str], reference: Sequence[str]) -> bool:
    return " ".join(hypothesis) == " ".join(reference)


def score_translations(
    hypotheses: Mapping[str, Sequence[Sequence[str]]],
    references: Mapping[str, Sequence[Sequence[str]]],
) -> TranslationReport:
    f1, em, counts = {}, {}, {}
    for lang_id, refs in references.items():
        hyps = hypotheses[lang_id]
        if len(hyps) != len(refs):
            raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references for '{lang_id}'")
        counts[lang_id] = len(refs)
        if not refs:
            f1[lang_id] = em[lang_id] = 0.0
            continue
        f1[lang_id] = float(np.mean([token_f1(h, r) for h, r in zip(hyps, refs, strict=True)]))
        em[lang_id] = float(np.mean([exact_match(h, r) for h, r in zip(hyps, refs, strict=True)]))
    return TranslationReport(token_f1=f1, exact_match=em, counts=counts)


def translation_eval(
    theta: EncoderParams,
    sigma: BridgeParams,
    phi: LMParams,
    world: World,
    heldout: Mapping[str, Sequence[TaskExample]],
    max_new: int,
    batch_size: int = 64,
    require_mapping: bool = True,
) -> TranslationReport:
    """Greedy English decoding from the replacement input [bos; X~; sep]."""
    if require_mapping and StageKind.MAPPING.value not in sigma.provenance:
        raise MissingCheckpointError(
            f"Translation probe expects a bridge from the mapping stage, got provenance "
            f"{list(sigma.provenance)}"
        )
    hypotheses = {}
    for lang_id, examples in heldout.items():
        decoded = []
        for batch in iterate_batches(examples, batch_size):
            sources = [world.encoder_vocab.encode(example.source) for example in batch]
            prompts = merged_prompts(sources, None, theta, sigma, phi)
            decoded.extend(
                world.llm_vocab.decode(ids) for ids in greedy_decode_batch(prompts, phi, max_new)
            )
        hypotheses[lang_id] = decoded
    references = {lang_id: [example.target for example in examples] for lang_id, examples in heldout.items()}
    return score_translations(hypotheses, references)


def translator_eval(
    theta: EncoderParams,
    decoder: TranslatorParams,
    world: World,
    heldout: Mapping[str, Sequence[TaskExample]],
    max_new: int,
    batch_size: int = 64,
) -> TranslationReport:
    """The same probe on the encoder-decoder used for encoder pretraining."""
    hypotheses = {}
    for lang_id, examples in heldout.items():
        decoded = []
        for batch in iterate_batches(examples, batch_size):
            sources = [world.encoder_vocab.encode(example.source) for example in batch]
            decoded.extend(
                world.encoder_vocab.decode(ids)
                for ids in translate_batch(theta, decoder, sources, max_new)
            )
        hypotheses[lang_id] = decoded
    references = {lang_id: [example.target for example in examples] for lang_id, examples in heldout.items()}
    return score_translations(hypotheses, references)
