from .corpora import CorpusBundle, TextLine, World, build_corpora, build_world
from .language import SynthLanguage, inverse_render, make_language, render
from .tasks import (
    TaskExample,
    chance_accuracy,
    evaluate_expression,
    gen_bilingual_pair,
    gen_compare_example,
    gen_math_example,
)
from .vocab import Lexicon, Vocab, build_lexicon


__all__ = [
    "CorpusBundle",
    "Lexicon",
    "SynthLanguage",
    "TaskExample",
    "TextLine",
    "Vocab",
    "World",
    "build_corpora",
    "build_lexicon",
    "build_world",
    "chance_accuracy",
    "evaluate_expression",
    "gen_bilingual_pair",
    "gen_compare_example",
    "gen_math_example",
    "inverse_render",
    "make_language",
    "render",
]
