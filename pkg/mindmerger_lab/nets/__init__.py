from .bridge import BridgeParams, init_bridge, map_rows, map_states
from .compose import (
    ComposedSequence,
    PromptBatch,
    Segments,
    compose_augmented,
    compose_replacement,
    lm_loss,
    lm_loss_batch,
    merged_prompts,
    token_prompts,
)
from .decode import greedy_decode, greedy_decode_batch
from .encoder import EncoderParams, encode, encode_batch, init_encoder
from .hidden import HiddenSeq
from .lm import LMParams, embed, init_lm, lm_forward
from .translator import TranslatorParams, init_translator, translate_batch, translation_loss


__all__ = [
    "BridgeParams",
    "ComposedSequence",
    "EncoderParams",
    "HiddenSeq",
    "LMParams",
    "PromptBatch",
    "Segments",
    "TranslatorParams",
    "compose_augmented",
    "compose_replacement",
    "embed",
    "encode",
    "encode_batch",
    "greedy_decode",
    "greedy_decode_batch",
    "init_bridge",
    "init_encoder",
    "init_lm",
    "init_translator",
    "lm_forward",
    "lm_loss",
    "lm_loss_batch",
    "map_rows",
    "map_states",
    "merged_prompts",
    "token_prompts",
    "translate_batch",
    "translation_loss",
]
