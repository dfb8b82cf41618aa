from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
import logging

from mindmerger_lab.config.experiment import ExperimentConfig, WorldConfig
from mindmerger_lab.core import CorpusCapacityError, Tier
from mindmerger_lab.synthlang.language import SynthLanguage, make_language, render
from mindmerger_lab.synthlang.tasks import (
    TaskExample,
    gen_compare_example,
    gen_english_sentence,
    gen_math_example,
    translation_example,
)
from mindmerger_lab.synthlang.vocab import INVARIANT, Lexicon, Vocab, build_lexicon
from mindmerger_lab.tensorcore.rng import RngStream


logger = logging.getLogger(__name__)

_ATTEMPTS_PER_ITEM = 50


@dataclass(frozen=True)
class TextLine:
    language: str
    tokens: tuple[str, ...]


@dataclass
class World:
    """Languages plus the two vocabularies built over their surface forms."""

    lexicon: Lexicon
    languages: dict[str, SynthLanguage]
    encoder_vocab: Vocab
    llm_vocab: Vocab

    @property
    def english(self) -> SynthLanguage:
        return next(lang for lang in self.languages.values() if lang.is_english)

    def ids_by_tier(self, tier: Tier) -> list[str]:
        return [lang_id for lang_id, lang in self.languages.items() if lang.tier is tier]

    @property
    def low_tier(self) -> list[str]:
        return self.ids_by_tier(Tier.LOW)

    @property
    def non_english(self) -> list[str]:
        return [lang_id for lang_id, lang in self.languages.items() if not lang.is_english]


def build_world(config: WorldConfig) -> World:
    lexicon = build_lexicon(config.content_vocab_size)
    languages = {}
    for index, language in enumerate(config.languages):
        seed = language.seed if language.seed is not None else config.seed * 1000 + index
        languages[language.id] = make_language(seed, language.tier, language.id, lexicon)

    shared = [*INVARIANT, *lexicon.content]
    encoder_tokens = list(shared)
    llm_tokens = list(shared)
    for lang in languages.values():
        if lang.is_english:
            continue
        encoder_tokens.extend(lang.surface_forms)
        if lang.tier is Tier.HIGH:
            llm_tokens.extend(lang.surface_forms)
    return World(
        lexicon=lexicon,
        languages=languages,
        encoder_vocab=Vocab(encoder_tokens, "encoder", allow_unk=False),
        llm_vocab=Vocab(llm_tokens, "llm", allow_unk=True),
    )


@dataclass
class CorpusBundle:
    world: World
    lm_pretrain: list[TextLine] = field(default_factory=list)
    encoder_pairs: list[TaskExample] = field(default_factory=list)
    mapping_pairs: list[TaskExample] = field(default_factory=list)
    english_tasks: list[TaskExample] = field(default_factory=list)
    query_translation: dict[str, list[TaskExample]] = field(default_factory=dict)
    eval_sets: dict[str, list[TaskExample]] = field(default_factory=dict)
    ood_eval_sets: dict[str, list[TaskExample]] = field(default_factory=dict)
    translation_heldout: dict[str, list[TaskExample]] = field(default_factory=dict)
    alignment_pool: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)
    seed: int = 0

    def dataset(self, name: str) -> list:
        """Training examples of a named dataset, languages in world order."""
        value = getattr(self, name)
        if isinstance(value, dict):
            return [example for lang_id in self.world.languages for example in value.get(lang_id, [])]
        return list(value)

    def eval_sources(self) -> set[tuple[str, ...]]:
        sources = set()
        for sets in (self.eval_sets, self.ood_eval_sets, self.translation_heldout):
            for examples in sets.values():
                sources.update(example.english_source for example in examples)
        for sentences in self.alignment_pool.values():
            sources.update(sentences)
        return sources

    def manifest(self) -> dict:
        def counts(sets: dict[str, list]) -> dict[str, int]:
            return {lang_id: len(items) for lang_id, items in sets.items()}

        return {
            "seed": self.seed,
            "languages": {lang_id: lang.tier.value for lang_id, lang in self.world.languages.items()},
            "content_vocab_size": self.world.lexicon.size,
            "encoder_vocab_size": len(self.world.encoder_vocab),
            "llm_vocab_size": len(self.world.llm_vocab),
            "lm_pretrain": _count_by_language(self.lm_pretrain),
            "encoder_pairs": _count_by_language(self.encoder_pairs),
            "mapping_pairs": _count_by_language(self.mapping_pairs),
            "english_tasks": len(self.english_tasks),
            "query_translation": counts(self.query_translation),
            "eval_sets": counts(self.eval_sets),
            "ood_eval_sets": counts(self.ood_eval_sets),
            "translation_heldout": counts(self.translation_heldout),
            "alignment_pool": counts(self.alignment_pool),
        }


def _count_by_language(items: Iterable) -> dict[str, int]:
    counts: dict[str, int] = {}
    for item in items:
        counts[item.language] = counts.get(item.language, 0) + 1
    return dict(sorted(counts.items()))


class _Generator:
    """Draws until ``count`` items pass the filters, or fails with a capacity error."""

    def __init__(self, name: str, rng: RngStream, reserved: set[tuple[str, ...]]):
        self.name = name
        self.rng = rng
        self.reserved = reserved

    def draw(
        self,
        count: int,
        make: Callable[[RngStream], TaskExample],
        unique: bool = False,
    ) -> list[TaskExample]:
        items, seen = [], set()
        budget = _ATTEMPTS_PER_ITEM * max(count, 1)
        attempts = 0
        while len(items) < count:
            if attempts >= budget:
                raise CorpusCapacityError(
                    f"Could only generate {len(items)} of {count} '{self.name}' examples after "
                    f"{attempts} attempts; lower the quota or enlarge the world"
                )
            attempts += 1
            example = make(self.rng)
            key = example.english_source
            if key in self.reserved or (unique and key in seen):
                continue
            seen.add(key)
            items.append(example)
        return items


def _task_maker(config: ExperimentConfig) -> Callable[[RngStream], TaskExample]:
    tasks = config.tasks

    def make(rng: RngStream) -> TaskExample:
        if rng.uniform() < tasks.math_share:
            difficulty = tasks.math_difficulties[int(rng.integers(0, len(tasks.math_difficulties)))]
            return gen_math_example(rng, difficulty)
        return gen_compare_example(rng, tasks.compare_label_mix)

    return make


def _sentence_maker(world: World) -> Callable[[RngStream], TaskExample]:
    def make(rng: RngStream) -> TaskExample:
        return translation_example(gen_english_sentence(rng, world.lexicon), world.english)

    return make


def build_corpora(config: ExperimentConfig, rng: RngStream) -> CorpusBundle:
    """Every dataset of one experiment, as a pure function of ``config`` and ``rng``.

    Evaluation material is drawn first; training generators then reject any English source
    already used for evaluation.
    """
    world = build_world(config.world)
    quotas = config.quotas
    english = world.english
    bundle = CorpusBundle(world=world, seed=rng.seed)
    task_maker = _task_maker(config)
    sentence_maker = _sentence_maker(world)

    eval_rng = rng.fork("eval")
    shared_eval = _Generator("eval", eval_rng.fork("tasks"), set()).draw(
        quotas.eval_per_language, task_maker, unique=True
    )
    difficulties = config.tasks.math_difficulties
    shared_ood = _Generator("ood-eval", eval_rng.fork("ood"), set()).draw(
        quotas.ood_eval_per_language,
        lambda r: gen_math_example(
            r, difficulties[int(r.integers(0, len(difficulties)))], out_of_domain=True
        ),
        unique=True,
    )
    held_out = _Generator("translation-heldout", eval_rng.fork("translation"), set()).draw(
        quotas.translation_heldout_per_language + quotas.alignment_pool_size,
        sentence_maker,
        unique=True,
    )
    heldout_pairs = held_out[: quotas.translation_heldout_per_language]
    pool = [example.english_source for example in held_out[quotas.translation_heldout_per_language :]]

    for lang_id, lang in world.languages.items():
        bundle.eval_sets[lang_id] = [example.in_language(lang) for example in shared_eval]
        bundle.ood_eval_sets[lang_id] = [example.in_language(lang) for example in shared_ood]
        bundle.alignment_pool[lang_id] = [tuple(render(sentence, lang)) for sentence in pool]
        if not lang.is_english:
            bundle.translation_heldout[lang_id] = [
                translation_example(example.english_source, lang) for example in heldout_pairs
            ]
    reserved = bundle.eval_sources()

    train_rng = rng.fork("train")
    english_lines = _Generator("lm-pretrain", train_rng.fork("lm").fork(english.language_id), reserved).draw(
        quotas.lm_pretrain_english, sentence_maker
    )
    bundle.lm_pretrain.extend(_text_lines(english_lines, english, quotas.echo_rate, train_rng.fork("echo")))
    high_count = round(quotas.high_tier_fraction * quotas.lm_pretrain_english)
    for lang_id in world.ids_by_tier(Tier.HIGH):
        lang = world.languages[lang_id]
        lines = _Generator("lm-pretrain", train_rng.fork("lm").fork(lang_id), reserved).draw(
            high_count, sentence_maker
        )
        bundle.lm_pretrain.extend(
            _text_lines(lines, lang, quotas.echo_rate, train_rng.fork("echo").fork(lang_id))
        )

    for lang_id, lang in world.languages.items():
        pairs = _Generator("encoder-pairs", train_rng.fork("encoder").fork(lang_id), reserved).draw(
            quotas.encoder_pairs_per_language, sentence_maker
        )
        bundle.encoder_pairs.extend(translation_example(p.english_source, lang) for p in pairs)
        if lang.is_english:
            continue
        pairs = _Generator("mapping-pairs", train_rng.fork("mapping").fork(lang_id), reserved).draw(
            quotas.mapping_pairs_per_language, sentence_maker
        )
        bundle.mapping_pairs.extend(translation_example(p.english_source, lang) for p in pairs)

    english_tasks = _Generator("english-tasks", train_rng.fork("tasks"), reserved).draw(
        quotas.english_tasks, task_maker
    )
    bundle.english_tasks = [example.in_language(english) for example in english_tasks]
    for lang_id in world.non_english:
        lang = world.languages[lang_id]
        examples = _Generator(
            "query-translation", train_rng.fork("query_translation").fork(lang_id), reserved
        ).draw(quotas.query_translation_per_language, task_maker)
        bundle.query_translation[lang_id] = [example.in_language(lang) for example in examples]

    logger.info(
        f"Built corpora: {len(bundle.lm_pretrain)} LM lines, {len(bundle.encoder_pairs)} "
        f"encoder pairs, {len(bundle.mapping_pairs)} mapping pairs, "
        f"{len(bundle.english_tasks)} English task examples"
    )
    return bundle


def _text_lines(
    examples: list[TaskExample], lang: SynthLanguage, echo_rate: float, rng: RngStream
) -> list[TextLine]:
    lines = []
    for example in examples:
        tokens = tuple(render(example.english_source, lang))
        if rng.uniform() < echo_rate:
            tokens = tokens + tokens
        lines.append(TextLine(lang.language_id, tokens))
    return lines
