"""Merged LLM inputs.

Every composed input, single or batched, is produced the same way: one ``gather_rows`` over a
row table holding the LLM token embeddings, the boundary vector and the mapped states. Shared
rows are copied, never recomputed, so the replacement prefix is bitwise the augmented prefix.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from mindmerger_lab.core import CompositionError, ComposeMode, Role, Space
from mindmerger_lab.nets.bridge import BridgeParams, map_rows
from mindmerger_lab.nets.encoder import EncoderParams, encode_batch
from mindmerger_lab.nets.hidden import HiddenSeq
from mindmerger_lab.nets.lm import LMParams, lm_forward, lm_hidden
from mindmerger_lab.tensorcore.primitives import (
    concat,
    constant,
    gather_rows,
    log_softmax,
    multiply,
    reduce_sum,
    reshape,
    scale,
    take_along,
)
from mindmerger_lab.tensorcore.tensor import Tensor


@dataclass(frozen=True)
class Segments:
    """Segment lengths of a composed input in their fixed order."""

    mapped: int
    native: int = 0
    bos: int = 1
    sep: int = 1

    @property
    def total(self) -> int:
        return self.bos + self.mapped + self.sep + self.native

    @property
    def order(self) -> tuple[str, ...]:
        names = ("bos", "mapped", "sep", "native")
        return tuple(name for name in names if getattr(self, name) > 0)

    @property
    def bounds(self) -> dict[str, tuple[int, int]]:
        spans, start = {}, 0
        for name in self.order:
            stop = start + getattr(self, name)
            spans[name] = (start, stop)
            start = stop
        return spans

    @property
    def sep_index(self) -> int:
        return self.bos + self.mapped


@dataclass(frozen=True)
class ComposedSequence:
    values: Tensor
    segments: Segments
    mode: ComposeMode
    language: str | None = None

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass
class PromptBatch:
    """Right-padded prompts expressed as row indices into ``table``.

    Rows ``token_offset + id`` of the table are the LLM token embeddings, so continuation tokens
    can be appended to any prompt by index.
    """

    table: Tensor
    prompts: list[list[int]]
    token_offset: int
    mode: ComposeMode | None = None
    segments: list[Segments] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.prompts)

    def token_index(self, token: int) -> int:
        return self.token_offset + token


def _check_length(length: int, phi: LMParams) -> None:
    if length > phi.max_positions:
        raise CompositionError(
            f"Composed length {length} exceeds {phi.max_positions} LLM positions"
        )


def _check_role(seq: HiddenSeq, role: Role, phi: LMParams) -> None:
    if seq.role is not role or seq.space is not Space.LLM:
        raise CompositionError(
            f"Expected role {role.value} in the llm space, got {seq.role.value} in "
            f"{seq.space.value}"
        )
    if seq.dim != phi.dim:
        raise CompositionError(f"Hidden width {seq.dim} does not match LLM width {phi.dim}")


def _compose(
    mapped: HiddenSeq,
    native: HiddenSeq | None,
    sigma: BridgeParams,
    phi: LMParams,
    mode: ComposeMode,
) -> ComposedSequence:
    _check_role(mapped, Role.X_MAPPED, phi)
    parts = [
        gather_rows(phi.token_embeddings, np.array([phi.bos_id])),
        reshape(sigma.sep, (1, phi.dim)),
        mapped.values,
    ]
    segments = Segments(mapped=mapped.length)
    if native is not None:
        _check_role(native, Role.T, phi)
        parts.append(native.values)
        segments = Segments(mapped=mapped.length, native=native.length)
    _check_length(segments.total, phi)

    mapped_rows = list(range(2, 2 + mapped.length))
    native_rows = list(range(2 + mapped.length, segments.total)) if native is not None else []
    index = np.array([0, *mapped_rows, 1, *native_rows], dtype=np.int64)
    values = gather_rows(concat(parts, axis=0), index)
    return ComposedSequence(values, segments, mode, mapped.language)


def compose_augmented(
    mapped: HiddenSeq, native: HiddenSeq, sigma: BridgeParams, phi: LMParams
) -> ComposedSequence:
    """[bos; X~; sep; T]."""
    return _compose(mapped, native, sigma, phi, ComposeMode.AUGMENTED)


def compose_replacement(mapped: HiddenSeq, sigma: BridgeParams, phi: LMParams) -> ComposedSequence:
    """[bos; X~; sep]."""
    return _compose(mapped, None, sigma, phi, ComposeMode.REPLACEMENT)


def sequence_prompt(prefix: ComposedSequence, phi: LMParams) -> PromptBatch:
    """A single composed sequence as a batch of one."""
    table = concat([prefix.values, phi.token_embeddings], axis=0)
    return PromptBatch(
        table=table,
        prompts=[list(range(prefix.length))],
        token_offset=prefix.length,
        mode=prefix.mode,
        segments=[prefix.segments],
    )


def token_prompts(prompts: Sequence[Sequence[int]], phi: LMParams) -> PromptBatch:
    """Plain LLM prompts made of token ids only."""
    return PromptBatch(
        table=phi.token_embeddings,
        prompts=[list(prompt) for prompt in prompts],
        token_offset=0,
    )


def merged_prompts(
    sources: Sequence[Sequence[int]],
    natives: Sequence[Sequence[int]] | None,
    theta: EncoderParams,
    sigma: BridgeParams,
    phi: LMParams,
) -> PromptBatch:
    """Encode, map and compose a batch of queries.

    ``natives`` holds the LLM token ids of each query for the augmented form; ``None`` gives
    the replacement form.
    """
    if natives is not None and len(natives) != len(sources):
        raise CompositionError(f"{len(sources)} sources but {len(natives)} native queries")
    states, valid = encode_batch(sources, theta)
    batch, width = valid.shape
    mapped = reshape(map_rows(sigma, states), (batch * width, phi.dim))
    table = concat([phi.token_embeddings, reshape(sigma.sep, (1, phi.dim)), mapped], axis=0)
    sep_row = phi.vocab_size
    mapped_row = phi.vocab_size + 1

    prompts, segments = [], []
    for row, source in enumerate(sources):
        native = list(natives[row]) if natives is not None else []
        prompt = [
            phi.bos_id,
            *(mapped_row + row * width + pos for pos in range(len(source))),
            sep_row,
            *native,
        ]
        segment = Segments(mapped=len(source), native=len(native))
        _check_length(segment.total, phi)
        prompts.append(prompt)
        segments.append(segment)
    mode = ComposeMode.REPLACEMENT if natives is None else ComposeMode.AUGMENTED
    return PromptBatch(table, prompts, token_offset=0, mode=mode, segments=segments)


def gather_inputs(
    batch: PromptBatch, phi: LMParams, continuations: Sequence[Sequence[int]] | None = None
) -> tuple[Tensor, np.ndarray]:
    """Embedded rows (B, L, d2) of every prompt followed by its continuation tokens."""
    rows = []
    for row, prompt in enumerate(batch.prompts):
        extra = continuations[row] if continuations is not None else ()
        rows.append([*prompt, *(batch.token_index(token) for token in extra)])
    length = max(len(row) for row in rows)
    _check_length(length, phi)
    index = np.full((len(rows), length), batch.token_index(phi.pad_id), dtype=np.int64)
    valid = np.zeros((len(rows), length), dtype=bool)
    for row, indices in enumerate(rows):
        index[row, : len(indices)] = indices
        valid[row, : len(indices)] = True
    return gather_rows(batch.table, index), valid


def lm_loss_batch(
    batch: PromptBatch, targets: Sequence[Sequence[int]], phi: LMParams
) -> Tensor:
    """Teacher-forced mean NLL over the target tokens of every row; prompts carry no loss."""
    if len(targets) != len(batch):
        raise CompositionError(f"{len(batch)} prompts but {len(targets)} targets")
    for target in targets:
        if len(target) == 0:
            raise CompositionError("Target sequence must not be empty")
    for prompt, target in zip(batch.prompts, targets, strict=True):
        _check_length(len(prompt) + len(target), phi)

    inputs, valid = gather_inputs(batch, phi, [target[:-1] for target in targets])
    picks = np.full(valid.shape, phi.pad_id, dtype=np.int64)
    weights = np.zeros(valid.shape, dtype=np.float64)
    for row, (prompt, target) in enumerate(zip(batch.prompts, targets, strict=True)):
        start = len(prompt) - 1
        picks[row, start : start + len(target)] = target
        weights[row, start : start + len(target)] = 1.0

    log_probs = log_softmax(lm_forward(phi, inputs))
    picked = take_along(log_probs, picks)
    total = reduce_sum(multiply(picked, constant(weights)))
    return scale(total, -1.0 / weights.sum())


def lm_loss(prefix: ComposedSequence, targets: Sequence[int], phi: LMParams) -> Tensor:
    return lm_loss_batch(sequence_prompt(prefix, phi), [list(targets)], phi)


def prompt_hidden(batch: PromptBatch, phi: LMParams) -> tuple[Tensor, np.ndarray]:
    """Last-layer LLM states over the prompts, with their validity mask."""
    inputs, valid = gather_inputs(batch, phi)
    return lm_hidden(phi, inputs), valid
