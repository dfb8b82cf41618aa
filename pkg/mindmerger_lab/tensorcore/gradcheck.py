from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from mindmerger_lab.core import NonDeterministicBuilderError, TapeError
from mindmerger_lab.tensorcore.rng import rng_stream
from mindmerger_lab.tensorcore.tape import Tape, backward
from mindmerger_lab.tensorcore.tensor import Parameter, Tensor, precision


def _evaluate(builder: Callable[[], Tensor]) -> float:
    loss = builder()
    if loss.size != 1:
        raise TapeError(f"grad_check builder must return a scalar, got shape {loss.shape}")
    return loss.item()


def grad_check(
    builder: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-3,
    max_coords: int = 16,
    seed: int = 0,
    dtype: Any = np.float64,
) -> float:
    """Max relative error between tape gradients and central differences.

    Up to ``max_coords`` coordinates per parameter are sampled. The graph is evaluated at
    ``dtype`` (float64 by default) on the parameters' float32 values; the parameters are
    restored bitwise afterwards.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    originals = [(param, param.tensor.data, param.trainable) for param in params]
    worst = 0.0
    try:
        for param, data, _ in originals:
            param.tensor.data = data.astype(dtype, copy=True)
            param.trainable = True
        with precision(dtype):
            reference = _evaluate(builder)
            if _evaluate(builder) != reference:
                raise NonDeterministicBuilderError(
                    "grad_check builder returned different losses for identical inputs"
                )
            with Tape():
                analytic = backward(builder())

            rng = rng_stream(seed)
            for param, _, _ in originals:
                values = param.tensor.data
                grad = analytic.get(param.name, np.zeros_like(values))
                picks = rng.fork(param.name).permutation(values.size)[:max_coords]
                for flat in picks:
                    index = np.unravel_index(int(flat), values.shape)
                    original = values[index]
                    values[index] = original + eps
                    plus = _evaluate(builder)
                    values[index] = original - eps
                    minus = _evaluate(builder)
                    values[index] = original
                    numeric = (plus - minus) / (2 * eps)
                    exact = float(grad[index])
                    error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
                    worst = max(worst, error)
    finally:
        for param, data, trainable in originals:
            param.tensor.data = data
            param.tensor.grad = None
            param.trainable = trainable
    return worst
