"""Shared lexicon and the two word-level vocabularies (encoder and LLM)."""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

from mindmerger_lab.core import ConfigError, OutOfVocabularyError


PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)

ANSWER_MARKER = ("####", "The", "answer", "is:")
DIGITS = tuple(str(d) for d in range(10))
OPERATORS = ("+", "-", "×", "=")
PUNCTUATION = (".", ",", "?")
INVARIANT = DIGITS + OPERATORS + PUNCTUATION + ANSWER_MARKER

NAMES = ("tom", "ana", "lee", "sam", "mia", "ben", "eva", "max", "ivy", "leo", "zoe", "kai")
ITEMS = (
    "apples", "pears", "books", "coins", "cards", "shells",
    "stamps", "pens", "cups", "eggs", "rocks", "keys",
)  # fmt: skip
NUMBER_WORDS = (
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
    "eighteen", "nineteen", "twenty",
)  # fmt: skip
LABELS = ("yes", "no", "equal")
FUNCTION_WORDS = (
    "has", "how", "many", "does", "have", "more", "than", "and", "the", "a", "box", "holds",
    "add", "what", "is", "total", "in", "on", "near", "under", "with", "to", "some", "every",
)  # fmt: skip
PREPOSITIONS = ("in", "on", "near", "under", "with", "to")

ADJECTIVES = (
    "red", "blue", "green", "small", "big", "old", "new", "quick", "slow", "happy",
    "sad", "bright", "dark", "warm", "cold", "soft", "hard", "loud", "quiet", "tall",
    "short", "young", "calm", "brave", "kind", "wild", "tiny", "huge", "clean", "busy",
)  # fmt: skip
NOUNS = (
    "cat", "dog", "bird", "fish", "horse", "cow", "lion", "bear", "fox", "wolf",
    "frog", "duck", "mouse", "goat", "sheep", "tiger", "whale", "snake", "owl", "crab",
    "child", "farmer", "doctor", "teacher", "baker", "sailor", "pilot", "singer", "painter",
    "driver",
)  # fmt: skip
VERBS = (
    "sees", "likes", "finds", "helps", "follows", "carries", "watches", "meets", "calls",
    "feeds", "paints", "pushes", "pulls", "visits", "chases", "greets", "hears", "knows",
    "loves", "makes", "takes", "brings", "leaves", "wants", "needs",
)  # fmt: skip
PLACES = (
    "park", "river", "house", "garden", "market", "school", "forest", "beach", "city",
    "village", "field", "hill", "lake", "road", "bridge", "farm", "shop", "church",
    "station", "harbor",
)  # fmt: skip

_TASK_WORDS = NAMES + ITEMS + NUMBER_WORDS + LABELS + FUNCTION_WORDS
_MIN_OPEN_CLASS = 4


@dataclass(frozen=True)
class Lexicon:
    """English content words, split into the classes the grammars draw from.

    Task words are always present; the open classes (adjectives, nouns, verbs, places) are
    trimmed or padded so the content vocabulary has exactly the configured size.
    """

    adjectives: tuple[str, ...]
    nouns: tuple[str, ...]
    verbs: tuple[str, ...]
    places: tuple[str, ...]

    @cached_property
    def content(self) -> tuple[str, ...]:
        return _TASK_WORDS + self.adjectives + self.nouns + self.verbs + self.places

    @cached_property
    def content_index(self) -> dict[str, int]:
        return {word: index for index, word in enumerate(self.content)}

    @property
    def size(self) -> int:
        return len(self.content)

    def is_invariant(self, token: str) -> bool:
        return token in _INVARIANT_SET

    def is_content(self, token: str) -> bool:
        return token in self.content_index


_INVARIANT_SET = frozenset(INVARIANT)


def build_lexicon(content_vocab_size: int = 180) -> Lexicon:
    open_classes = [list(ADJECTIVES), list(NOUNS), list(VERBS), list(PLACES)]
    budget = content_vocab_size - len(_TASK_WORDS)
    if budget < _MIN_OPEN_CLASS * len(open_classes):
        raise ConfigError(
            f"content_vocab_size={content_vocab_size} is too small; at least "
            f"{len(_TASK_WORDS) + _MIN_OPEN_CLASS * len(open_classes)} words are needed"
        )
    current = sum(len(words) for words in open_classes)
    while current > budget:
        longest = max(open_classes, key=len)
        longest.pop()
        current -= 1
    filler = 0
    while current < budget:
        open_classes[1].append(f"thing{filler}")
        filler += 1
        current += 1
    return Lexicon(*(tuple(words) for words in open_classes))


class Vocab:
    """Word-level vocabulary. Ids 0-3 are the special tokens in every vocabulary."""

    def __init__(self, tokens: Iterable[str], name: str, allow_unk: bool):
        self.name = name
        self.allow_unk = allow_unk
        self._tokens: list[str] = list(SPECIALS)
        self._index: dict[str, int] = {token: i for i, token in enumerate(SPECIALS)}
        for token in tokens:
            if token not in self._index:
                self._index[token] = len(self._tokens)
                self._tokens.append(token)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        ids = []
        for token in tokens:
            index = self._index.get(token)
            if index is None:
                if not self.allow_unk:
                    raise OutOfVocabularyError(f"Token '{token}' is not in the {self.name} vocabulary")
                index = UNK_ID
            ids.append(index)
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[int(i)] for i in ids]

    def __repr__(self) -> str:
        return f"Vocab(name={self.name!r}, size={len(self)})"
