"""Transformer building blocks shared by the encoder, the LLM and the translation decoder."""

import numpy as np

from mindmerger_lab.tensorcore.primitives import (
    add,
    gather_rows,
    layer_norm,
    masked_fill,
    matmul,
    multiply,
    nonlinearity,
    reshape,
    scale,
    softmax,
    transpose,
)
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor


INIT_STD = 0.02


def init_linear(
    params: ParameterCollection,
    prefix: str,
    in_dim: int,
    out_dim: int,
    rng: RngStream,
    std: float = INIT_STD,
) -> None:
    params.add(f"{prefix}/weight", rng.normal((in_dim, out_dim), std=std))
    params.add(f"{prefix}/bias", np.zeros(out_dim))


def init_norm(params: ParameterCollection, prefix: str, dim: int) -> None:
    params.add(f"{prefix}/gain", np.ones(dim))
    params.add(f"{prefix}/bias", np.zeros(dim))


def init_attention(params: ParameterCollection, prefix: str, dim: int, rng: RngStream) -> None:
    for proj in ("query", "key", "value", "out"):
        init_linear(params, f"{prefix}/{proj}", dim, dim, rng.fork(proj))


def init_block(
    params: ParameterCollection,
    prefix: str,
    dim: int,
    ffn_dim: int,
    rng: RngStream,
    cross_attention: bool = False,
) -> None:
    init_norm(params, f"{prefix}/norm_attn", dim)
    init_attention(params, f"{prefix}/attn", dim, rng.fork("attn"))
    if cross_attention:
        init_norm(params, f"{prefix}/norm_cross", dim)
        init_attention(params, f"{prefix}/cross", dim, rng.fork("cross"))
    init_norm(params, f"{prefix}/norm_ffn", dim)
    init_linear(params, f"{prefix}/ffn_in", dim, ffn_dim, rng.fork("ffn_in"))
    init_linear(params, f"{prefix}/ffn_out", ffn_dim, dim, rng.fork("ffn_out"))


def linear(x: Tensor, params: ParameterCollection, prefix: str) -> Tensor:
    return add(matmul(x, params.tensor(f"{prefix}/weight")), params.tensor(f"{prefix}/bias"))


def affine_norm(x: Tensor, params: ParameterCollection, prefix: str) -> Tensor:
    normed = layer_norm(x)
    return add(multiply(normed, params.tensor(f"{prefix}/gain")), params.tensor(f"{prefix}/bias"))


def positions(params: ParameterCollection, name: str, length: int) -> Tensor:
    return gather_rows(params.tensor(name), np.arange(length))


def causal_mask(length: int) -> np.ndarray:
    """Blocked-entry mask of shape (1, 1, L, L): True above the diagonal."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)[None, None]


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """Blocked-entry mask of shape (B, 1, 1, L) from a (B, L) validity matrix."""
    return ~np.asarray(valid, dtype=bool)[:, None, None, :]


def attention(
    x_query: Tensor,
    x_memory: Tensor,
    params: ParameterCollection,
    prefix: str,
    heads: int,
    blocked: np.ndarray | None,
) -> Tensor:
    batch, q_len, dim = x_query.shape
    k_len = x_memory.shape[1]
    head_dim = dim // heads

    def split(x: Tensor, length: int) -> Tensor:
        return transpose(reshape(x, (batch, length, heads, head_dim)), (0, 2, 1, 3))

    q = split(linear(x_query, params, f"{prefix}/query"), q_len)
    k = split(linear(x_memory, params, f"{prefix}/key"), k_len)
    v = split(linear(x_memory, params, f"{prefix}/value"), k_len)
    scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))
    if blocked is not None:
        scores = masked_fill(scores, np.broadcast_to(blocked, scores.shape))
    context = matmul(softmax(scores), v)
    merged = reshape(transpose(context, (0, 2, 1, 3)), (batch, q_len, dim))
    return linear(merged, params, f"{prefix}/out")


def block(
    x: Tensor,
    params: ParameterCollection,
    prefix: str,
    heads: int,
    self_blocked: np.ndarray | None,
    memory: Tensor | None = None,
    memory_blocked: np.ndarray | None = None,
) -> Tensor:
    """Pre-norm transformer block; cross-attention runs only when ``memory`` is given."""
    normed = affine_norm(x, params, f"{prefix}/norm_attn")
    x = add(x, attention(normed, normed, params, f"{prefix}/attn", heads, self_blocked))
    if memory is not None:
        normed = affine_norm(x, params, f"{prefix}/norm_cross")
        x = add(x, attention(normed, memory, params, f"{prefix}/cross", heads, memory_blocked))
    normed = affine_norm(x, params, f"{prefix}/norm_ffn")
    hidden = nonlinearity(linear(normed, params, f"{prefix}/ffn_in"), "gelu")
    return add(x, linear(hidden, params, f"{prefix}/ffn_out"))


def pad_ids(sequences: list[list[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id lists into a (B, L) matrix plus its (B, L) validity mask."""
    length = max(len(seq) for seq in sequences)
    ids = np.full((len(sequences), length), pad_id, dtype=np.int64)
    valid = np.zeros((len(sequences), length), dtype=bool)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
        valid[row, : len(seq)] = True
    return ids, valid
