from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from mindmerger_lab.core import OutOfVocabularyError, Tier
from mindmerger_lab.synthlang.vocab import Lexicon, build_lexicon
from mindmerger_lab.tensorcore.rng import rng_stream


ENGLISH_ID = "en"


@dataclass(frozen=True)
class SynthLanguage:
    """A content-word permutation over the shared lexicon plus a resource tier.

    English word ``i`` is written ``"<id>.w<perm[i]>"`` in any other language; English itself
    is the identity and keeps the plain words. Invariant tokens are written the same everywhere.
    """

    language_id: str
    tier: Tier
    permutation: tuple[int, ...]
    lexicon: Lexicon

    @property
    def is_english(self) -> bool:
        return self.tier is Tier.ENGLISH

    @cached_property
    def inverse(self) -> tuple[int, ...]:
        inverse = np.empty(len(self.permutation), dtype=np.int64)
        inverse[np.asarray(self.permutation)] = np.arange(len(self.permutation))
        return tuple(int(i) for i in inverse)

    def surface(self, position: int) -> str:
        if self.is_english:
            return self.lexicon.content[position]
        return f"{self.language_id}.w{position:03d}"

    @cached_property
    def surface_forms(self) -> tuple[str, ...]:
        """Every content surface form of this language, in lexicon order."""
        return tuple(self.surface(position) for position in range(self.lexicon.size))

    @cached_property
    def _surface_index(self) -> dict[str, int]:
        return {form: position for position, form in enumerate(self.surface_forms)}

    def __repr__(self) -> str:
        return f"SynthLanguage({self.language_id!r}, tier={self.tier.value})"


def make_language(
    seed: int,
    tier: Tier,
    language_id: str | None = None,
    lexicon: Lexicon | None = None,
) -> SynthLanguage:
    lexicon = lexicon or build_lexicon()
    if tier is Tier.ENGLISH:
        permutation = tuple(range(lexicon.size))
        language_id = language_id or ENGLISH_ID
    else:
        permutation = tuple(int(i) for i in rng_stream(seed).fork("permutation").permutation(lexicon.size))
        language_id = language_id or f"l{seed}"
    return SynthLanguage(language_id, tier, permutation, lexicon)


def render(tokens_en: Sequence[str], lang: SynthLanguage) -> list[str]:
    lexicon = lang.lexicon
    rendered = []
    for token in tokens_en:
        if lexicon.is_invariant(token):
            rendered.append(token)
        elif lexicon.is_content(token):
            rendered.append(lang.surface(lang.permutation[lexicon.content_index[token]]))
        else:
            raise OutOfVocabularyError(f"Token '{token}' is not part of the shared vocabulary")
    return rendered


def inverse_render(tokens: Sequence[str], lang: SynthLanguage) -> list[str]:
    lexicon = lang.lexicon
    english = []
    for token in tokens:
        if lexicon.is_invariant(token):
            english.append(token)
            continue
        position = lang._surface_index.get(token)
        if position is None:
            raise OutOfVocabularyError(f"Token '{token}' is not a {lang.language_id} surface form")
        english.append(lexicon.content[lang.inverse[position]])
    return english
