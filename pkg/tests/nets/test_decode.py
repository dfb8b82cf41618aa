import numpy as np
import pytest

from mindmerger_lab.core import CompositionError
from mindmerger_lab.nets.bridge import map_states
from mindmerger_lab.nets.compose import compose_replacement, merged_prompts, token_prompts
from mindmerger_lab.nets.decode import greedy_decode, greedy_decode_batch
from mindmerger_lab.nets.encoder import encode, encode_batch
from mindmerger_lab.nets.translator import (
    decoder_logits,
    init_translator,
    translate_batch,
    translation_loss,
)
from mindmerger_lab.tensorcore.rng import rng_stream
from mindmerger_lab.tensorcore.tape import Tape, backward


@pytest.fixture
def tiny_decoder():
    return init_translator(12, 8, 1, 2, 10, rng_stream(0).fork("decoder"))


def _constant_head(params, prefix, favourite=None):
    params[f"{prefix}/head/weight"].data[:] = 0.0
    params[f"{prefix}/head/bias"].data[:] = 0.0
    if favourite is not None:
        params[f"{prefix}/head/bias"].data[favourite] = 1.0


@pytest.mark.unit
class TestGreedyDecodeUnit:
    def test_outputs_are_bounded_and_repeatable(self, tiny_lm):
        prompts = token_prompts([[1, 5, 6], [1, 7]], tiny_lm)
        first = greedy_decode_batch(prompts, tiny_lm, 3)
        second = greedy_decode_batch(prompts, tiny_lm, 3)

        assert first == second
        assert all(len(ids) <= 3 for ids in first)
        assert all(tiny_lm.eos_id not in ids for ids in first)

    def test_ties_go_to_the_lowest_id(self, tiny_lm):
        _constant_head(tiny_lm.params, "llm")
        assert greedy_decode_batch(token_prompts([[1, 5]], tiny_lm), tiny_lm, 3) == [[0, 0, 0]]

    def test_stops_at_end_of_sequence(self, tiny_lm):
        _constant_head(tiny_lm.params, "llm", favourite=tiny_lm.eos_id)
        assert greedy_decode_batch(token_prompts([[1, 5], [1]], tiny_lm), tiny_lm, 5) == [[], []]

    def test_full_prompt_generates_nothing(self, tiny_lm):
        assert greedy_decode_batch(token_prompts([[1] * 24], tiny_lm), tiny_lm, 4) == [[]]

    def test_generation_stops_at_the_position_limit(self, tiny_lm):
        _constant_head(tiny_lm.params, "llm", favourite=7)
        assert greedy_decode_batch(token_prompts([[1] * 22], tiny_lm), tiny_lm, 5) == [[7, 7]]

    def test_max_new_must_be_positive(self, tiny_lm):
        with pytest.raises(ValueError, match="at least 1"):
            greedy_decode_batch(token_prompts([[1]], tiny_lm), tiny_lm, 0)

    def test_composed_prefix_decodes_like_merged_prompts(self, tiny_encoder, tiny_bridge, tiny_lm):
        _constant_head(tiny_lm.params, "llm", favourite=9)
        prefix = compose_replacement(map_states(encode([4, 5], tiny_encoder), tiny_bridge), tiny_bridge, tiny_lm)
        batch = merged_prompts([[4, 5]], None, tiny_encoder, tiny_bridge, tiny_lm)

        assert greedy_decode(prefix, tiny_lm, 2) == [9, 9]
        assert greedy_decode_batch(batch, tiny_lm, 2) == [[9, 9]]


@pytest.mark.unit
class TestTranslatorUnit:
    def test_translation_loss_trains_encoder_and_decoder(self, tiny_encoder, tiny_decoder):
        with Tape():
            loss = translation_loss(tiny_encoder, tiny_decoder, [[4, 5], [6]], [[7, 2], [8, 9, 2]])
            grads = backward(loss)

        assert loss.item() > 0
        assert any(name.startswith("encoder/") for name in grads)
        assert any(name.startswith("translator/") for name in grads)

    def test_translate_batch_is_bounded(self, tiny_encoder, tiny_decoder):
        outputs = translate_batch(tiny_encoder, tiny_decoder, [[4, 5], [6]], max_new=4)
        assert len(outputs) == 2
        assert all(len(ids) <= 4 and tiny_decoder.eos_id not in ids for ids in outputs)

    def test_translate_batch_stops_at_end_of_sequence(self, tiny_encoder, tiny_decoder):
        _constant_head(tiny_decoder.params, "translator", favourite=2)
        assert translate_batch(tiny_encoder, tiny_decoder, [[4, 5], [6]], max_new=4) == [[], []]

    def test_decoder_input_is_bounded(self, tiny_encoder, tiny_decoder):
        memory, valid = encode_batch([[4]], tiny_encoder)
        with pytest.raises(CompositionError, match="exceeds 10"):
            decoder_logits(tiny_decoder, memory, valid, np.ones((1, 11), dtype=np.int64))
