from collections.abc import Iterator, Sequence
from dataclasses import dataclass, replace

from mindmerger_lab.config.experiment import StageConfig
from mindmerger_lab.core import TaskKind
from mindmerger_lab.synthlang.corpora import CorpusBundle, TextLine, World
from mindmerger_lab.synthlang.tasks import TaskExample
from mindmerger_lab.synthlang.vocab import BOS_ID, EOS_ID
from mindmerger_lab.tensorcore.rng import RngStream


@dataclass(frozen=True)
class EncodedExample:
    """Model-ready ids of one example.

    ``encoder_ids`` feed the encoder, ``llm_ids`` are the LLM's own reading of the query (UNK
    wherever the surface form is unknown to it) and ``target_ids`` end with end-of-sequence.
    """

    language: str
    kind: TaskKind | None
    encoder_ids: tuple[int, ...]
    llm_ids: tuple[int, ...]
    target_ids: tuple[int, ...]

    @property
    def plain_prompt(self) -> list[int]:
        return [BOS_ID, *self.llm_ids]


def encode_example(world: World, example: TaskExample) -> EncodedExample:
    return EncodedExample(
        language=example.language,
        kind=example.kind,
        encoder_ids=tuple(world.encoder_vocab.encode(example.source)),
        llm_ids=tuple(world.llm_vocab.encode(example.source)),
        target_ids=(*world.llm_vocab.encode(example.target), EOS_ID),
    )


def encode_text(world: World, line: TextLine, max_length: int) -> EncodedExample:
    """An LM pretraining line: empty query, the line itself as target."""
    ids = world.llm_vocab.encode(line.tokens)[: max_length - 2]
    return EncodedExample(line.language, None, (), (), (*ids, EOS_ID))


def encode_all(world: World, examples: Sequence[TaskExample]) -> list[EncodedExample]:
    return [encode_example(world, example) for example in examples]


def stage_dataset(bundle: CorpusBundle, cfg: StageConfig) -> list:
    """The training datasets named by ``cfg``, concatenated in config order."""
    return [item for name in cfg.datasets for item in bundle.dataset(name)]


def clip_query(item: EncodedExample, max_length: int) -> EncodedExample:
    """Keep the first ``max_length`` query tokens on both the encoder and the LLM side."""
    if len(item.encoder_ids) <= max_length and len(item.llm_ids) <= max_length:
        return item
    return replace(
        item, encoder_ids=item.encoder_ids[:max_length], llm_ids=item.llm_ids[:max_length]
    )


def iterate_batches(
    items: Sequence, batch_size: int, rng: RngStream | None = None
) -> Iterator[list]:
    """Fixed-size batches in a fresh ``rng`` permutation, or in order without ``rng``."""
    order = rng.permutation(len(items)) if rng is not None else range(len(items))
    batch = []
    for index in order:
        batch.append(items[int(index)])
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch
