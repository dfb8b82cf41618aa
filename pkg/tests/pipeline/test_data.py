import pytest

from mindmerger_lab.pipeline.data import (
    clip_query,
    encode_example,
    encode_text,
    iterate_batches,
    stage_dataset,
)
from mindmerger_lab.synthlang.corpora import TextLine
from mindmerger_lab.synthlang.vocab import BOS_ID, EOS_ID, UNK_ID
from mindmerger_lab.tensorcore.rng import rng_stream


@pytest.mark.unit
class TestEncodingUnit:
    def test_low_tier_queries_are_unknown_to_the_llm(self, tiny_bundle):
        example = tiny_bundle.eval_sets["lo1"][0]
        encoded = encode_example(tiny_bundle.world, example)
        content = [
            index for index, token in enumerate(example.source) if token.startswith("lo1.")
        ]

        assert len(encoded.encoder_ids) == len(encoded.llm_ids) == example.length
        assert all(encoded.llm_ids[index] == UNK_ID for index in content)
        assert UNK_ID not in encoded.encoder_ids
        assert encoded.target_ids[-1] == EOS_ID
        assert encoded.plain_prompt == [BOS_ID, *encoded.llm_ids]

    def test_high_tier_queries_are_known(self, tiny_bundle):
        encoded = encode_example(tiny_bundle.world, tiny_bundle.eval_sets["hi1"][0])
        assert UNK_ID not in encoded.llm_ids

    def test_text_lines_are_truncated(self, tiny_bundle):
        line = TextLine("en", ("the",) * 10)
        encoded = encode_text(tiny_bundle.world, line, max_length=6)
        assert encoded.encoder_ids == () and encoded.llm_ids == ()
        assert len(encoded.target_ids) == 5
        assert encoded.target_ids[-1] == EOS_ID

    @pytest.mark.parametrize("max_length", [1, 3, 5], ids=["one", "three", "five"])
    def test_clip_query_keeps_the_target(self, max_length, tiny_bundle):
        encoded = encode_example(tiny_bundle.world, tiny_bundle.eval_sets["lo1"][0])
        clipped = clip_query(encoded, max_length)

        assert clipped.encoder_ids == encoded.encoder_ids[:max_length]
        assert clipped.llm_ids == encoded.llm_ids[:max_length]
        assert clipped.target_ids == encoded.target_ids
        assert clip_query(encoded, 1000) is encoded


@pytest.mark.unit
class TestStageDatasetUnit:
    def test_datasets_are_concatenated_in_config_order(self, tiny_config, tiny_bundle):
        cfg = tiny_config.stages.multireason_sft.model_copy(
            update={"datasets": ["query_translation", "english_tasks"]}
        )
        examples = stage_dataset(tiny_bundle, cfg)

        split = len(tiny_bundle.dataset("query_translation"))
        assert examples[:split] == tiny_bundle.dataset("query_translation")
        assert examples[split:] == tiny_bundle.english_tasks

    def test_default_mapping_data(self, tiny_config, tiny_bundle):
        assert stage_dataset(tiny_bundle, tiny_config.stages.mapping) == tiny_bundle.mapping_pairs


        assert encoded.target_ids[-1] == EOS_ID


@pytest.mark.unit
class TestBatchesUnit:
    def test_in_order_without_rng(self):
        assert list(iterate_batches(list(range(7)), 3)) == [[0, 1, 2], [3, 4, 5], [6]]

    def test_shuffled_batches_cover_every_item(self):
        batches = list(iterate_batches(list(range(7)), 3, rng_stream(1)))
        assert [len(batch) for batch in batches] == [3, 3, 1]
        assert sorted(item for batch in batches for item in batch) == list(range(7))

    def test_shuffle_is_seeded(self):
        items = list(range(20))
        assert list(iterate_batches(items, 4, rng_stream(2))) == list(iterate_batches(items, 4, rng_stream(2)))
