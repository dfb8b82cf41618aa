from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from mindmerger_lab.core import CompositionError, OutOfVocabularyError, Role, Space
from mindmerger_lab.nets.hidden import HiddenSeq
from mindmerger_lab.nets.layers import (
    affine_norm,
    block,
    init_block,
    init_norm,
    key_padding_mask,
    pad_ids,
    positions,
)
from mindmerger_lab.tensorcore.primitives import add, gather_rows, slice_axis
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor


PREFIX = "encoder"


@dataclass
class EncoderParams:
    """Multilingual encoder weights (theta) with hidden width d1."""

    params: ParameterCollection
    vocab_size: int
    dim: int
    layers: int
    heads: int
    max_positions: int
    pad_id: int = 0

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            params=self.params.copy(),
            vocab_size=self.vocab_size,
            dim=self.dim,
            layers=self.layers,
            heads=self.heads,
            max_positions=self.max_positions,
            pad_id=self.pad_id,
        )


def init_encoder(
    vocab_size: int,
    dim: int,
    layers: int,
    heads: int,
    max_positions: int,
    rng: RngStream,
    pad_id: int = 0,
) -> EncoderParams:
    if dim % heads:
        raise ValueError(f"Encoder width {dim} is not divisible by {heads} heads")
    params = ParameterCollection()
    params.add(f"{PREFIX}/tok_emb", rng.fork("tok_emb").normal((vocab_size, dim), std=0.1))
    params.add(f"{PREFIX}/pos_emb", rng.fork("pos_emb").normal((max_positions, dim), std=0.1))
    for layer in range(layers):
        init_block(params, f"{PREFIX}/layer{layer}", dim, 4 * dim, rng.fork(f"layer{layer}"))
    init_norm(params, f"{PREFIX}/norm_out", dim)
    return EncoderParams(params, vocab_size, dim, layers, heads, max_positions, pad_id)


def _check_queries(queries: Sequence[Sequence[int]], theta: EncoderParams) -> None:
    for query in queries:
        if len(query) == 0:
            raise CompositionError("Cannot encode an empty query")
        if len(query) > theta.max_positions:
            raise CompositionError(
                f"Query of length {len(query)} exceeds {theta.max_positions} encoder positions"
            )
        bad = [token for token in query if not 0 <= token < theta.vocab_size]
        if bad:
            raise OutOfVocabularyError(
                f"Token ids {bad} outside encoder vocabulary of size {theta.vocab_size}"
            )


def embed_tokens(theta: EncoderParams, ids: np.ndarray) -> Tensor:
    """Embedding-layer states: token plus positional rows, shape (B, L, d1)."""
    tokens = gather_rows(theta.params.tensor(f"{PREFIX}/tok_emb"), ids)
    return add(tokens, positions(theta.params, f"{PREFIX}/pos_emb", ids.shape[1]))


def encode_batch(
    queries: Sequence[Sequence[int]], theta: EncoderParams
) -> tuple[Tensor, np.ndarray]:
    """Last-layer states (B, L, d1) and the (B, L) validity mask of a right-padded batch.

    Padding keys are masked in every attention so they never influence real positions.
    """
    _check_queries(queries, theta)
    ids, valid = pad_ids([list(query) for query in queries], theta.pad_id)
    blocked = key_padding_mask(valid)
    x = embed_tokens(theta, ids)
    for layer in range(theta.layers):
        x = block(x, theta.params, f"{PREFIX}/layer{layer}", theta.heads, blocked)
    return affine_norm(x, theta.params, f"{PREFIX}/norm_out"), valid


def encode(
    query: Sequence[int], theta: EncoderParams, language: str | None = None
) -> HiddenSeq:
    states, _ = encode_batch([query], theta)
    values = slice_axis(states, 0, 1, axis=0)
    return HiddenSeq.from_batch_row(values, Space.ENCODER, Role.X, language, len(query))
