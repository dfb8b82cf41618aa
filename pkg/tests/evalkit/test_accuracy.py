import pytest

from mindmerger_lab.core import TaskKind, VariantId
from mindmerger_lab.evalkit.accuracy import MetricsRecord, aggregate_groups, eval_accuracy, extract_answer
from tests.conftest import metrics_record


class OraclePredictor:
    """Answers with the reference target."""

    def __init__(self, world):
        self.world = world
        self.calls = 0

    def predict(self, items):
        self.calls += 1
        return [self.world.llm_vocab.decode(item.target_ids[:-1]) for item in items]


class SilentPredictor:
    def predict(self, items):
        return [[] for _ in items]


@pytest.mark.unit
class TestExtractAnswerUnit:
    @pytest.mark.parametrize(
        "decoded,expected",
        [
            ("3 + 4 = 7 #### The answer is: 7", "7"),
            (["1", "2", "+", "3", "=", "1", "5", "####", "The", "answer", "is:", "1", "5"], "15"),
            ("#### The answer is: 1 #### The answer is: - 2", "-2"),
            ("3 + 4 = 7", None),
            ("#### The answer is:", None),
        ],
        ids=["string", "tokens", "last_marker_wins", "no_marker", "empty_answer"],
    )
    def test_math(self, decoded, expected):
        assert extract_answer(decoded, TaskKind.MATH) == expected

    def test_compare(self):
        assert extract_answer(["yes"], TaskKind.COMPARE) == "yes"
        assert extract_answer("  no ", TaskKind.COMPARE) == "no"
        assert extract_answer([], TaskKind.COMPARE) is None


@pytest.mark.unit
class TestAggregateGroupsUnit:
    def test_groups(self):
        record = metrics_record(VariantId.FULL, 1, {"en": 0.9, "hi1": 0.7, "lo1": 0.2, "lo2": 0.4}, ("lo1", "lo2"))
        assert record.low_tier == ["lo1", "lo2"]
        assert record.lrl == pytest.approx(0.3)
        assert record.hrl == pytest.approx(0.8)
        assert record.avg == pytest.approx(0.55)

    def test_no_low_tier(self):
        record = metrics_record(VariantId.FULL, 1, {"en": 1.0, "hi1": 0.5}, ())
        assert record.lrl is None
        assert record.hrl == pytest.approx(0.75)

    def test_missing_low_tier_language(self):
        record = metrics_record(VariantId.FULL, 1, {"en": 1.0, "lo1": 0.5})
        with pytest.raises(ValueError, match="lo9"):
            aggregate_groups(record, ["lo9"])

    def test_record_must_cover_its_languages(self):
        with pytest.raises(ValueError, match="exactly the languages"):
            MetricsRecord(
                variant=VariantId.FULL, seed=1, languages=["en", "lo1"], accuracy={"en": 1.0}, counts={"en": 1}
            )


@pytest.mark.unit
class TestEvalAccuracyUnit:
    def test_perfect_predictor(self, tiny_bundle):
        predictor = OraclePredictor(tiny_bundle.world)
        record = eval_accuracy(
            predictor,
            tiny_bundle.world,
            tiny_bundle.eval_sets,
            VariantId.MONOREASON,
            5,
            tiny_bundle.ood_eval_sets,
        )
        assert record.seed == 5
        assert record.languages == ["en", "hi1", "lo1"]
        assert record.accuracy == {"en": 1.0, "hi1": 1.0, "lo1": 1.0}
        assert record.counts == {"en": 4, "hi1": 4, "lo1": 4}
        assert record.ood_accuracy == {"en": 1.0, "hi1": 1.0, "lo1": 1.0}
        assert (record.lrl, record.hrl, record.avg) == (1.0, 1.0, 1.0)
        assert predictor.calls == 6

    def test_silent_predictor(self, tiny_bundle):
        record = eval_accuracy(SilentPredictor(), tiny_bundle.world, tiny_bundle.eval_sets, VariantId.FULL, 1)
        assert set(record.accuracy.values()) == {0.0}
        assert record.ood_accuracy == {}

    def test_chance_levels(self, tiny_bundle):
        record = eval_accuracy(SilentPredictor(), tiny_bundle.world, tiny_bundle.eval_sets, VariantId.FULL, 1)
        assert set(record.chance) <= {"math", "compare"}
        assert all(0.0 <= value <= 1.0 for value in record.chance.values())
