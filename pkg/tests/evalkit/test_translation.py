import pytest

from mindmerger_lab.core import MissingCheckpointError
from mindmerger_lab.evalkit.translation import exact_match, score_translations, token_f1, translation_eval
from mindmerger_lab.pipeline.variants import VariantRunner


@pytest.mark.unit
class TestTokenF1Unit:
    @pytest.mark.parametrize(
        "hypothesis,reference,expected",
        [
            (["a", "b"], ["a", "b"], 1.0),
            ([], [], 1.0),
            (["a"], [], 0.0),
            (["c", "d"], ["a", "b"], 0.0),
            (["a", "a", "b"], ["a", "b", "c", "d"], 4 / 7),
        ],
        ids=["identical", "both_empty", "empty_reference", "disjoint", "multiset_overlap"],
    )
    def test_token_f1(self, hypothesis, reference, expected):
        assert token_f1(hypothesis, reference) == pytest.approx(expected)

    def test_exact_match(self):
        assert exact_match(["a", "b"], ("a", "b"))
        assert not exact_match(["a"], ["a", "b"])


@pytest.mark.unit
class TestScoreTranslationsUnit:
    def test_scores_per_language(self):
        report = score_translations(
            {"hi1": [["a", "b"], ["x"]], "lo1": []},
            {"hi1": [["a", "b"], ["y"]], "lo1": []},
        )
        assert report.token_f1 == {"hi1": 0.5, "lo1": 0.0}
        assert report.exact_match == {"hi1": 0.5, "lo1": 0.0}
        assert report.counts == {"hi1": 2, "lo1": 0}
        assert report.mean_f1(["hi1"]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="1 hypotheses but 2 references"):
            score_translations({"hi1": [["a"]]}, {"hi1": [["a"], ["b"]]})

    def test_probe_needs_a_mapped_bridge(self, tiny_bundle, tiny_base, tiny_config):
        sigma = VariantRunner(tiny_config).init_sigma(1, tiny_base)
        with pytest.raises(MissingCheckpointError, match="provenance"):
            translation_eval(
                tiny_base.theta, sigma, tiny_base.phi, tiny_bundle.world, tiny_bundle.translation_heldout, 4
            )

    def test_probe_counts(self, tiny_bundle, tiny_base, tiny_config):
        sigma = VariantRunner(tiny_config).init_sigma(1, tiny_base)
        report = translation_eval(
            tiny_base.theta,
            sigma,
            tiny_base.phi,
            tiny_bundle.world,
            tiny_bundle.translation_heldout,
            4,
            require_mapping=False,
        )
        assert report.counts == {lang: len(items) for lang, items in tiny_bundle.translation_heldout.items()}
        assert all(0.0 <= value <= 1.0 for value in report.token_f1.values())
