"""Throwaway translation decoder used to pretrain the encoder on L -> English pairs."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from mindmerger_lab.core import CompositionError
from mindmerger_lab.nets.encoder import EncoderParams, encode_batch
from mindmerger_lab.nets.layers import (
    affine_norm,
    block,
    causal_mask,
    init_block,
    init_linear,
    init_norm,
    key_padding_mask,
    linear,
    pad_ids,
    positions,
)
from mindmerger_lab.tensorcore.primitives import (
    add,
    constant,
    gather_rows,
    log_softmax,
    multiply,
    reduce_sum,
    scale,
    take_along,
)
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor


PREFIX = "translator"


@dataclass
class TranslatorParams:
    params: ParameterCollection
    vocab_size: int
    dim: int
    layers: int
    heads: int
    max_positions: int
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2


def init_translator(
    vocab_size: int,
    dim: int,
    layers: int,
    heads: int,
    max_positions: int,
    rng: RngStream,
) -> TranslatorParams:
    params = ParameterCollection()
    params.add(f"{PREFIX}/tok_emb", rng.fork("tok_emb").normal((vocab_size, dim), std=0.1))
    params.add(f"{PREFIX}/pos_emb", rng.fork("pos_emb").normal((max_positions, dim), std=0.1))
    for layer in range(layers):
        init_block(
            params,
            f"{PREFIX}/layer{layer}",
            dim,
            4 * dim,
            rng.fork(f"layer{layer}"),
            cross_attention=True,
        )
    init_norm(params, f"{PREFIX}/norm_out", dim)
    init_linear(params, f"{PREFIX}/head", dim, vocab_size, rng.fork("head"))
    return TranslatorParams(params, vocab_size, dim, layers, heads, max_positions)


def decoder_logits(
    decoder: TranslatorParams, memory: Tensor, memory_valid: np.ndarray, ids: np.ndarray
) -> Tensor:
    length = ids.shape[1]
    if length > decoder.max_positions:
        raise CompositionError(
            f"Decoder input of length {length} exceeds {decoder.max_positions} positions"
        )
    x = add(
        gather_rows(decoder.params.tensor(f"{PREFIX}/tok_emb"), ids),
        positions(decoder.params, f"{PREFIX}/pos_emb", length),
    )
    self_blocked = causal_mask(length)
    memory_blocked = key_padding_mask(memory_valid)
    for layer in range(decoder.layers):
        x = block(
            x,
            decoder.params,
            f"{PREFIX}/layer{layer}",
            decoder.heads,
            self_blocked,
            memory=memory,
            memory_blocked=memory_blocked,
        )
    return linear(affine_norm(x, decoder.params, f"{PREFIX}/norm_out"), decoder.params, f"{PREFIX}/head")


def translation_loss(
    theta: EncoderParams,
    decoder: TranslatorParams,
    sources: Sequence[Sequence[int]],
    targets: Sequence[Sequence[int]],
) -> Tensor:
    """Mean NLL of ``targets`` (which end in the end-of-sequence id) given the encoded sources."""
    memory, memory_valid = encode_batch(sources, theta)
    inputs = [[decoder.bos_id, *target[:-1]] for target in targets]
    ids, valid = pad_ids(inputs, decoder.pad_id)
    picks, _ = pad_ids([list(target) for target in targets], decoder.pad_id)
    log_probs = log_softmax(decoder_logits(decoder, memory, memory_valid, ids))
    picked = take_along(log_probs, picks)
    weights = valid.astype(np.float64)
    return scale(reduce_sum(multiply(picked, constant(weights))), -1.0 / weights.sum())


def translate_batch(
    theta: EncoderParams,
    decoder: TranslatorParams,
    sources: Sequence[Sequence[int]],
    max_new: int,
) -> list[list[int]]:
    memory, memory_valid = encode_batch(sources, theta)
    generated: list[list[int]] = [[] for _ in sources]
    finished = np.zeros(len(sources), dtype=bool)
    for _ in range(min(max_new, decoder.max_positions)):
        ids, valid = pad_ids([[decoder.bos_id, *tokens] for tokens in generated], decoder.pad_id)
        logits = decoder_logits(decoder, memory, memory_valid, ids).data.astype(np.float64)
        last = valid.sum(axis=1) - 1
        choices = np.argmax(logits[np.arange(len(sources)), last], axis=-1)
        for row, token in enumerate(choices):
            if finished[row]:
                continue
            if int(token) == decoder.eos_id:
                finished[row] = True
            else:
                generated[row].append(int(token))
        if finished.all():
            break
    return generated
