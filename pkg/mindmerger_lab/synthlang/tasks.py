"""Task and sentence generators with exact gold answers.

Math queries write operands and operators with the shared symbols that no language permutes;
compare queries write their numbers as words. A reader who cannot understand the content
words therefore still sees the full expression of a math problem and nothing of a compare
problem.
"""

from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import itertools

from mindmerger_lab.core import CorpusCapacityError, TaskKind
from mindmerger_lab.synthlang.language import SynthLanguage, render
from mindmerger_lab.synthlang.vocab import (
    ANSWER_MARKER,
    ITEMS,
    LABELS,
    NAMES,
    NUMBER_WORDS,
    PREPOSITIONS,
    Lexicon,
)
from mindmerger_lab.tensorcore.rng import RngStream


MAX_TARGET_TOKENS = 30
DIFFICULTY = {1: (2, 20), 2: (3, 12), 3: (4, 9)}
OPERATORS = ("+", "-", "×")
DEFAULT_LABEL_MIX = {"yes": 0.4, "no": 0.4, "equal": 0.2}
_MAX_RESAMPLE = 256
_ORDERED_PAIRS = tuple(itertools.combinations(range(len(NUMBER_WORDS)), 2))


@dataclass(frozen=True)
class TaskExample:
    language: str
    kind: TaskKind
    source: tuple[str, ...]
    target: tuple[str, ...]
    gold: str
    english_source: tuple[str, ...]
    operands: tuple[int, ...] = field(default=(), compare=False)

    @property
    def length(self) -> int:
        return len(self.source)

    def in_language(self, lang: SynthLanguage) -> "TaskExample":
        """The same example with its query rendered in ``lang``; targets stay English."""
        source = tuple(render(self.english_source, lang))
        return TaskExample(
            lang.language_id, self.kind, source, self.target, self.gold, self.english_source, self.operands
        )


def number_tokens(value: int) -> list[str]:
    """Digit-by-digit spelling; negatives get a leading minus sign."""
    sign = ["-"] if value < 0 else []
    return sign + list(str(abs(value)))


def evaluate_expression(operands: Sequence[int], operators: Sequence[str]) -> int:
    """Evaluate with the usual precedence: every × first, then + and - left to right."""
    values, ops = _reduce_products(list(operands), list(operators), steps=None)
    total = values[0]
    for op, value in zip(ops, values[1:], strict=True):
        total = total + value if op == "+" else total - value
    return total


def _reduce_products(
    values: list[int], ops: list[str], steps: list[list[str]] | None
) -> tuple[list[int], list[str]]:
    while "×" in ops:
        at = ops.index("×")
        product = values[at] * values[at + 1]
        if steps is not None:
            steps.append(
                [*number_tokens(values[at]), "×", *number_tokens(values[at + 1]), "=", *number_tokens(product)]
            )
        values[at : at + 2] = [product]
        del ops[at]
    return values, ops


def derivation(operands: Sequence[int], operators: Sequence[str]) -> tuple[list[str], int]:
    """Step-by-step target tokens and the final value."""
    steps: list[list[str]] = []
    values, ops = _reduce_products(list(operands), list(operators), steps)
    total = values[0]
    for op, value in zip(ops, values[1:], strict=True):
        result = total + value if op == "+" else total - value
        steps.append([*number_tokens(total), op, *number_tokens(value), "=", *number_tokens(result)])
        total = result
    target: list[str] = []
    for index, step in enumerate(steps):
        if index:
            target.append(",")
        target.extend(step)
    target.extend([*ANSWER_MARKER, *number_tokens(total)])
    return target, total


def _math_query(name: str, item: str, operands: Sequence[int], operators: Sequence[str]) -> list[str]:
    expression = number_tokens(operands[0])
    for op, value in zip(operators, operands[1:], strict=True):
        expression += [op, *number_tokens(value)]
    return [name, "has", *expression, item, ".", "how", "many", item, "?"]


def _ood_math_query(name: str, item: str, operands: Sequence[int], operators: Sequence[str]) -> list[str]:
    expression = number_tokens(operands[0])
    for op, value in zip(operators, operands[1:], strict=True):
        expression += [op, *number_tokens(value)]
    return ["a", "box", "holds", *expression, item, ".", "what", "is", "the", "total", "?"]


def math_example_from_expression(
    operands: Sequence[int],
    operators: Sequence[str],
    name: str = NAMES[0],
    item: str = ITEMS[0],
    out_of_domain: bool = False,
) -> TaskExample:
    if len(operators) != len(operands) - 1:
        raise ValueError(f"{len(operands)} operands need {len(operands) - 1} operators")
    query_fn = _ood_math_query if out_of_domain else _math_query
    source = tuple(query_fn(name, item, operands, operators))
    target, value = derivation(operands, operators)
    return TaskExample(
        "en", TaskKind.MATH, source, tuple(target), str(value), source, tuple(operands)
    )


def gen_math_example(rng: RngStream, difficulty: int, out_of_domain: bool = False) -> TaskExample:
    """English word problem; targets longer than ``MAX_TARGET_TOKENS`` are resampled."""
    if difficulty not in DIFFICULTY:
        raise ValueError(f"difficulty must be one of {sorted(DIFFICULTY)}, got {difficulty}")
    count, high = DIFFICULTY[difficulty]
    for _ in range(_MAX_RESAMPLE):
        operands = [int(v) for v in rng.integers(0, high + 1, size=count)]
        operators = [OPERATORS[int(i)] for i in rng.integers(0, len(OPERATORS), size=count - 1)]
        example = math_example_from_expression(
            operands, operators, rng.choice(NAMES), rng.choice(ITEMS), out_of_domain
        )
        if len(example.target) <= MAX_TARGET_TOKENS:
            return example
    raise CorpusCapacityError(
        f"No math target within {MAX_TARGET_TOKENS} tokens after {_MAX_RESAMPLE} draws"
    )


def compare_label(a: int, b: int) -> str:
    if a > b:
        return "yes"
    if a < b:
        return "no"
    return "equal"


def compare_example(a: int, b: int, name: str, other: str, item: str) -> TaskExample:
    source = (
        name, "has", NUMBER_WORDS[a], item, "and", other, "has", NUMBER_WORDS[b], item, ".",
        "does", name, "have", "more", item, "than", other, "?",
    )  # fmt: skip
    label = compare_label(a, b)
    return TaskExample("en", TaskKind.COMPARE, source, (label,), label, source, (a, b))


def gen_compare_example(
    rng: RngStream, label_mix: Mapping[str, float] = DEFAULT_LABEL_MIX
) -> TaskExample:
    label = LABELS[int(rng.categorical([label_mix.get(label, 0.0) for label in LABELS]))]
    top = len(NUMBER_WORDS)
    if label == "equal":
        a = b = int(rng.integers(0, top))
    else:
        low, high = rng.choice(_ORDERED_PAIRS)
        a, b = (high, low) if label == "yes" else (low, high)
    name = rng.choice(NAMES)
    other = rng.choice([candidate for candidate in NAMES if candidate != name])
    return compare_example(a, b, name, other, rng.choice(ITEMS))


def _generic_sentence(rng: RngStream, lexicon: Lexicon) -> list[str]:
    return [
        "the", rng.choice(lexicon.adjectives), rng.choice(lexicon.nouns),
        rng.choice(lexicon.verbs), "a", rng.choice(lexicon.adjectives), rng.choice(lexicon.nouns),
        rng.choice(PREPOSITIONS), "the", rng.choice(lexicon.places), ".",
    ]  # fmt: skip


def _task_sentence(rng: RngStream, lexicon: Lexicon) -> list[str]:
    name, item, number = rng.choice(NAMES), rng.choice(ITEMS), rng.choice(NUMBER_WORDS)
    templates = (
        lambda: [name, "has", number, item, rng.choice(OPERATORS),
                 rng.choice(NUMBER_WORDS), item, "."],
        lambda: ["does", name, "have", "more", item, "than", rng.choice(NAMES), "?"],
        lambda: ["how", "many", item, "does", name, "have", "?"],
        lambda: [name, "add", "every", item, "to", "the", "box", ".", "what", "is", "the",
                 "total", "?"],
        lambda: [rng.choice(LABELS), ",", name, "has", number, item, "and", "some",
                 rng.choice(lexicon.nouns), "."],
        lambda: [name, "has", *number_tokens(int(rng.integers(0, 100))), item, "on", "the",
                 rng.choice(lexicon.places), "."],
    )  # fmt: skip
    return templates[int(rng.integers(0, len(templates)))]()


def gen_english_sentence(rng: RngStream, lexicon: Lexicon) -> list[str]:
    """One sentence of the translation grammar, covering every content word."""
    if rng.uniform() < 0.5:
        return _generic_sentence(rng, lexicon)
    return _task_sentence(rng, lexicon)


def gen_bilingual_pair(lang: SynthLanguage, rng: RngStream) -> tuple[list[str], list[str]]:
    if lang.is_english:
        raise ValueError("Bilingual pairs need a non-English language")
    english = gen_english_sentence(rng, lang.lexicon)
    return render(english, lang), english


def translation_example(english: Sequence[str], lang: SynthLanguage) -> TaskExample:
    sentence = tuple(english)
    return TaskExample(
        lang.language_id, TaskKind.TRANSLATE, tuple(render(sentence, lang)), sentence,
        " ".join(sentence), sentence,
    )  # fmt: skip


def chance_accuracy(
    kind: TaskKind,
    examples: Sequence[TaskExample],
    label_mix: Mapping[str, float] = DEFAULT_LABEL_MIX,
) -> float:
    """Accuracy of the best guesser that cannot read content words.

    Compare: always answering the most frequent label of the configured mix. Math: applying
    the best single operator pattern per operand count to the visible operands.
    """
    if kind is TaskKind.COMPARE:
        total = sum(label_mix.values())
        return max(label_mix.values()) / total if total else 0.0
    if kind is not TaskKind.MATH or not examples:
        return 0.0
    groups: dict[int, list[TaskExample]] = {}
    for example in examples:
        groups.setdefault(len(example.operands), []).append(example)
    hits = 0
    for count, group in groups.items():
        best = 0
        for pattern in itertools.product(OPERATORS, repeat=count - 1):
            matches = sum(
                str(evaluate_expression(example.operands, pattern)) == example.gold
                for example in group
            )
            best = max(best, matches)
        hits += best
    return hits / len(examples)


def label_distribution(examples: Sequence[TaskExample]) -> dict[str, float]:
    counts = Counter(example.gold for example in examples)
    return {label: counts.get(label, 0) / max(len(examples), 1) for label in LABELS}
