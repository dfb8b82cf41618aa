import pytest

from mindmerger_lab.core import TaskKind, Tier
from mindmerger_lab.synthlang.language import make_language, render
from mindmerger_lab.synthlang.tasks import (
    MAX_TARGET_TOKENS,
    chance_accuracy,
    compare_example,
    compare_label,
    derivation,
    evaluate_expression,
    gen_bilingual_pair,
    gen_compare_example,
    gen_math_example,
    label_distribution,
    math_example_from_expression,
    number_tokens,
)
from mindmerger_lab.synthlang.vocab import ANSWER_MARKER, build_lexicon
from mindmerger_lab.tensorcore.rng import rng_stream


@pytest.mark.unit
class TestMathUnit:
    @pytest.mark.parametrize(
        "operands,operators,expected",
        [
            ([2, 3, 4], ["+", "×"], 14),
            ([10, 2, 3], ["-", "-"], 5),
            ([2, 3, 4, 5], ["×", "+", "×"], 26),
            ([1, 9], ["-"], -8),
        ],
        ids=["product_first", "left_to_right", "two_products", "negative"],
    )
    def test_evaluate_expression(self, operands, operators, expected):
        assert evaluate_expression(operands, operators) == expected

    def test_number_tokens(self):
        assert number_tokens(0) == ["0"]
        assert number_tokens(-12) == ["-", "1", "2"]

    def test_derivation_steps(self):
        target, value = derivation([2, 3, 4], ["+", "×"])
        assert value == 14
        assert " ".join(target) == "3 × 4 = 1 2 , 2 + 1 2 = 1 4 #### The answer is: 1 4"

    def test_example_from_expression(self):
        example = math_example_from_expression([7, 5], ["-"], "ana", "pens")
        assert example.kind is TaskKind.MATH
        assert example.gold == "2"
        assert example.source == ("ana", "has", "7", "-", "5", "pens", ".", "how", "many", "pens", "?")
        assert example.operands == (7, 5)

    def test_out_of_domain_template(self):
        example = math_example_from_expression([1, 2], ["+"], out_of_domain=True)
        assert example.source[:3] == ("a", "box", "holds")

    @pytest.mark.parametrize("out_of_domain", [False, True], ids=["in_domain", "out_of_domain"])
    def test_expression_survives_rendering(self, out_of_domain):
        example = math_example_from_expression([3, 4, 12], ["+", "×"], "tom", "apples", out_of_domain)
        lang = make_language(7, Tier.LOW, "lo1", build_lexicon())
        rendered = render(example.source, lang)

        expression = ["3", "+", "4", "×", "1", "2"]
        start = list(example.source).index("3")
        assert rendered[start : start + len(expression)] == expression
        assert [t for t in rendered if t in {"+", "-", "×"}] == ["+", "×"]
        assert "tom" not in rendered

    def test_operator_count_must_match(self):
        with pytest.raises(ValueError, match="2 operands need 1 operators"):
            math_example_from_expression([1, 2], [])

    @pytest.mark.parametrize("difficulty", [1, 2, 3], ids=["one", "two", "three"])
    def test_generated_examples_are_consistent(self, difficulty):
        rng = rng_stream(4)
        for _ in range(20):
            example = gen_math_example(rng, difficulty)
            marker_end = len(example.target) - len(number_tokens(int(example.gold)))
            assert len(example.target) <= MAX_TARGET_TOKENS
            assert example.target[marker_end - len(ANSWER_MARKER) : marker_end] == ANSWER_MARKER
            assert "".join(example.target[marker_end:]) == example.gold

    def test_generation_is_seeded(self):
        assert gen_math_example(rng_stream(9), 2) == gen_math_example(rng_stream(9), 2)

    def test_unknown_difficulty(self):
        with pytest.raises(ValueError, match="difficulty"):
            gen_math_example(rng_stream(0), 4)


@pytest.mark.unit
class TestCompareUnit:
    @pytest.mark.parametrize(
        "a,b,label", [(5, 2, "yes"), (2, 5, "no"), (4, 4, "equal")], ids=["more", "fewer", "same"]
    )
    def test_label(self, a, b, label):
        assert compare_label(a, b) == label
        example = compare_example(a, b, "tom", "ana", "cups")
        assert example.gold == label and example.target == (label,)

    def test_label_mix_is_respected(self):
        rng = rng_stream(2)
        examples = [gen_compare_example(rng, {"yes": 0.0, "no": 0.0, "equal": 1.0}) for _ in range(10)]
        assert label_distribution(examples) == {"yes": 0.0, "no": 0.0, "equal": 1.0}

    def test_names_differ(self):
        rng = rng_stream(3)
        for _ in range(20):
            example = gen_compare_example(rng)
            assert example.source[0] != example.source[5]


@pytest.mark.unit
class TestChanceUnit:
    def test_compare_chance_is_the_majority_label(self):
        assert chance_accuracy(TaskKind.COMPARE, [], {"yes": 0.4, "no": 0.4, "equal": 0.2}) == 0.4

    def test_math_chance_uses_the_best_operator_pattern(self):
        examples = [
            math_example_from_expression([2, 3], ["+"]),
            math_example_from_expression([5, 1], ["+"]),
            math_example_from_expression([2, 4], ["×"]),
            math_example_from_expression([6, 1], ["-"]),
        ]
        assert chance_accuracy(TaskKind.MATH, examples) == 0.5

    def test_translation_has_no_chance(self):
        assert chance_accuracy(TaskKind.TRANSLATE, []) == 0.0


@pytest.mark.unit
class TestTranslationDataUnit:
    def test_in_language_keeps_english_targets(self):
        lang = make_language(3, Tier.LOW, "lo1", build_lexicon())
        example = math_example_from_expression([2, 3], ["+"]).in_language(lang)
        assert example.language == "lo1"
        assert example.source[2] == "2"
        assert example.source[0].startswith("lo1.w")
        assert example.target[-1] == "5"

    def test_bilingual_pair(self):
        lang = make_language(3, Tier.HIGH, "hi1", build_lexicon())
        source, english = gen_bilingual_pair(lang, rng_stream(1))
        assert len(source) == len(english)

    def test_bilingual_pair_needs_a_foreign_language(self):
        with pytest.raises(ValueError, match="non-English"):
            gen_bilingual_pair(make_language(0, Tier.ENGLISH), rng_stream(1))
