import numpy as np

from mindmerger_lab.nets.compose import ComposedSequence, PromptBatch, gather_inputs, sequence_prompt
from mindmerger_lab.nets.lm import LMParams, lm_forward


def greedy_decode_batch(batch: PromptBatch, phi: LMParams, max_new: int) -> list[list[int]]:
    """Argmax decoding of every prompt in ``batch``.

    The full forward pass is re-run at every step. Ties go to the lowest token id and the
    end-of-sequence token is not part of the returned ids.
    """
    if max_new < 1:
        raise ValueError(f"max_new must be at least 1, got {max_new}")
    generated: list[list[int]] = [[] for _ in range(len(batch))]
    active = [row for row, prompt in enumerate(batch.prompts) if len(prompt) < phi.max_positions]

    for _ in range(max_new):
        if not active:
            break
        step = PromptBatch(
            table=batch.table,
            prompts=[batch.prompts[row] for row in active],
            token_offset=batch.token_offset,
            mode=batch.mode,
        )
        inputs, valid = gather_inputs(step, phi, [generated[row] for row in active])
        logits = lm_forward(phi, inputs).data.astype(np.float64)
        last = valid.sum(axis=1) - 1
        choices = np.argmax(logits[np.arange(len(active)), last], axis=-1)

        still_active = []
        for position, row in enumerate(active):
            token = int(choices[position])
            if token == phi.eos_id:
                continue
            generated[row].append(token)
            if len(batch.prompts[row]) + len(generated[row]) < phi.max_positions:
                still_active.append(row)
        active = still_active
    return generated


def greedy_decode(prefix: ComposedSequence, phi: LMParams, max_new: int) -> list[int]:
    return greedy_decode_batch(sequence_prompt(prefix, phi), phi, max_new)[0]
