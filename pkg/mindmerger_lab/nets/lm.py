from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from mindmerger_lab.core import CompositionError, Role, Space
from mindmerger_lab.nets.hidden import HiddenSeq
from mindmerger_lab.nets.layers import (
    affine_norm,
    block,
    causal_mask,
    init_block,
    init_norm,
    positions,
)
from mindmerger_lab.tensorcore.primitives import add, gather_rows, matmul
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor


PREFIX = "llm"
TOK_EMB = f"{PREFIX}/tok_emb"


@dataclass
class LMParams:
    """Decoder-only LLM weights (phi) with hidden width d2."""

    params: ParameterCollection
    vocab_size: int
    dim: int
    layers: int
    heads: int
    max_positions: int
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2
    unk_id: int = 3

    @property
    def token_embeddings(self) -> Tensor:
        return self.params.tensor(TOK_EMB)

    def copy(self) -> "LMParams":
        return LMParams(
            params=self.params.copy(),
            vocab_size=self.vocab_size,
            dim=self.dim,
            layers=self.layers,
            heads=self.heads,
            max_positions=self.max_positions,
            pad_id=self.pad_id,
            bos_id=self.bos_id,
            eos_id=self.eos_id,
            unk_id=self.unk_id,
        )


def init_lm(
    vocab_size: int,
    dim: int,
    layers: int,
    heads: int,
    max_positions: int,
    rng: RngStream,
) -> LMParams:
    if dim % heads:
        raise ValueError(f"LLM width {dim} is not divisible by {heads} heads")
    params = ParameterCollection()
    params.add(TOK_EMB, rng.fork("tok_emb").normal((vocab_size, dim), std=0.1))
    params.add(f"{PREFIX}/pos_emb", rng.fork("pos_emb").normal((max_positions, dim), std=0.1))
    for layer in range(layers):
        init_block(params, f"{PREFIX}/layer{layer}", dim, 4 * dim, rng.fork(f"layer{layer}"))
    init_norm(params, f"{PREFIX}/norm_out", dim)
    params.add(f"{PREFIX}/head/weight", rng.fork("head").normal((dim, vocab_size), std=0.02))
    params.add(f"{PREFIX}/head/bias", np.zeros(vocab_size))
    return LMParams(params, vocab_size, dim, layers, heads, max_positions)


def embed_ids(phi: LMParams, ids: np.ndarray) -> Tensor:
    """Pure table lookup in the LLM embedding layer."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= phi.vocab_size):
        raise CompositionError(f"Token ids outside LLM vocabulary of size {phi.vocab_size}")
    return gather_rows(phi.token_embeddings, ids)


def embed(query: Sequence[int], phi: LMParams, language: str | None = None) -> HiddenSeq:
    if len(query) == 0:
        raise CompositionError("Cannot embed an empty query")
    rows = embed_ids(phi, np.asarray(query, dtype=np.int64))
    return HiddenSeq(rows, Space.LLM, Role.T, language, len(query))


def lm_hidden(phi: LMParams, inputs: Tensor) -> Tensor:
    """Final-layer states for embedded inputs of shape (B, L, d2).

    The whole sequence receives fresh positions 0..L-1 and a causal mask.
    """
    length = inputs.shape[1]
    if length > phi.max_positions:
        raise CompositionError(
            f"Sequence of length {length} exceeds {phi.max_positions} LLM positions"
        )
    x = add(inputs, positions(phi.params, f"{PREFIX}/pos_emb", length))
    blocked = causal_mask(length)
    for layer in range(phi.layers):
        x = block(x, phi.params, f"{PREFIX}/layer{layer}", phi.heads, blocked)
    return affine_norm(x, phi.params, f"{PREFIX}/norm_out")


def lm_forward(phi: LMParams, inputs: Tensor) -> Tensor:
    """Next-token logits (B, L, V) for embedded inputs (B, L, d2)."""
    hidden = lm_hidden(phi, inputs)
    return add(
        matmul(hidden, phi.params.tensor(f"{PREFIX}/head/weight")),
        phi.params.tensor(f"{PREFIX}/head/bias"),
    )
