"""Finite-difference checks of every primitive and of both bridge-stage losses."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
import logging

import numpy as np

from mindmerger_lab.core import ComposeMode, MappingVariant
from mindmerger_lab.nets.bridge import init_bridge
from mindmerger_lab.nets.compose import lm_loss_batch, merged_prompts
from mindmerger_lab.nets.encoder import init_encoder
from mindmerger_lab.nets.lm import init_lm
from mindmerger_lab.tensorcore import primitives as P
from mindmerger_lab.tensorcore.gradcheck import grad_check
from mindmerger_lab.tensorcore.rng import RngStream, rng_stream
from mindmerger_lab.tensorcore.tensor import Parameter, Tensor


DEFAULT_SEEDS = (0, 1, 2, 3, 4)
TOLERANCE = 1e-3
COMPOSED_EPS = 1e-6

logger = logging.getLogger(__name__)

Case = tuple[Callable[[], Tensor], list[Parameter]]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    seed: int
    error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _param(rng: RngStream, name: str, shape: tuple[int, ...], away_from_zero: bool = False) -> Parameter:
    values = rng.fork(name).normal(shape)
    if away_from_zero:
        values = np.sign(values) * (0.1 + np.abs(values))
    return Parameter(name, values)


def _weighted(out: Tensor, rng: RngStream) -> Tensor:
    """Random projection to a scalar so no gradient vanishes by symmetry."""
    weights = P.constant(rng.fork("weights").normal(out.shape))
    return P.reduce_sum(P.multiply(out, weights))


def _unary(kind: str, shape: tuple[int, ...], apply: Callable[[Tensor], Tensor], away_from_zero: bool = False):
    def build(rng: RngStream) -> Case:
        x = _param(rng, f"{kind}/x", shape, away_from_zero)
        return (lambda: _weighted(apply(x.tensor), rng)), [x]

    return build


def _binary(kind: str, a_shape, b_shape, apply: Callable[[Tensor, Tensor], Tensor]):
    def build(rng: RngStream) -> Case:
        a = _param(rng, f"{kind}/a", a_shape)
        b = _param(rng, f"{kind}/b", b_shape)
        return (lambda: _weighted(apply(a.tensor, b.tensor), rng)), [a, b]

    return build


_MASK = np.array([[True, False, False, True], [False, False, True, False], [False, True, False, False]])
_POOL_MASK = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)

PRIMITIVE_CASES: dict[str, Callable[[RngStream], Case]] = {
    "matmul": _binary("matmul", (3, 4), (4, 2), P.matmul),
    "add": _binary("add", (3, 4), (4,), P.add),
    "multiply": _binary("multiply", (3, 4), (3, 4), P.multiply),
    "scale": _unary("scale", (3, 4), lambda x: P.scale(x, 0.7)),
    "concat": _binary("concat", (2, 3), (1, 3), lambda a, b: P.concat([a, b], axis=0)),
    "gather_rows": _unary(
        "gather_rows", (5, 3), lambda x: P.gather_rows(x, np.array([[0, 2, 2], [4, 1, 0]]))
    ),
    "take_along": _unary(
        "take_along", (2, 3, 5), lambda x: P.take_along(x, np.array([[0, 4, 2], [1, 1, 3]]))
    ),
    "softmax": _unary("softmax", (2, 5), P.softmax),
    "log_softmax": _unary("log_softmax", (2, 5), P.log_softmax),
    "layer_norm": _unary("layer_norm", (3, 6), P.layer_norm),
    "nonlinearity": _unary(
        "nonlinearity",
        (3, 4),
        lambda x: P.add(
            P.add(P.nonlinearity(x, "relu"), P.nonlinearity(x, "gelu")), P.nonlinearity(x, "tanh")
        ),
        away_from_zero=True,
    ),
    "masked_fill": _unary("masked_fill", (3, 4), lambda x: P.masked_fill(x, _MASK, 0.0)),
    "mean_pool": _unary("mean_pool", (2, 4, 3), lambda x: P.mean_pool(x, _POOL_MASK)),
    "sum": _unary("sum", (3, 4), lambda x: P.reduce_sum(x, axis=1, keepdims=True)),
    "reshape": _unary("reshape", (3, 4), lambda x: P.reshape(x, (2, 6))),
    "transpose": _unary("transpose", (2, 3, 4), lambda x: P.transpose(x, (2, 0, 1))),
    "slice": _unary("slice", (5, 3), lambda x: P.slice_axis(x, 1, 4, axis=0)),
}


def _composed(mode: ComposeMode) -> Callable[[RngStream], Case]:
    """Bridge-stage loss on tiny frozen backbones; only the bridge is checked."""

    def build(rng: RngStream) -> Case:
        theta = init_encoder(12, 8, 1, 2, 16, rng.fork("encoder"))
        phi = init_lm(14, 8, 1, 2, 24, rng.fork("llm"))
        theta.params.freeze()
        phi.params.freeze()
        sigma = init_bridge(MappingVariant.MLP2, 8, 8, phi, rng.fork("bridge"))
        sources = [[4, 5, 6], [7, 8]]
        natives = [[3, 9, 10], [11, 3]] if mode is ComposeMode.AUGMENTED else None
        targets = [[4, 6, 2], [12, 2]]

        def loss() -> Tensor:
            prompts = merged_prompts(sources, natives, theta, sigma, phi)
            return lm_loss_batch(prompts, targets, phi)

        return loss, list(sigma.params.values())

    return build


COMPOSED_CASES: dict[str, Callable[[RngStream], Case]] = {
    "mapping_loss": _composed(ComposeMode.REPLACEMENT),
    "augmentation_loss": _composed(ComposeMode.AUGMENTED),
}


def run_gradcheck_suite(
    seeds: Sequence[int] = DEFAULT_SEEDS,
    tolerance: float = TOLERANCE,
    max_coords: int = 16,
) -> list[GradCheckResult]:
    results = []
    for seed in seeds:
        rng = rng_stream(seed)
        for name, build in PRIMITIVE_CASES.items():
            builder, params = build(rng.fork(name))
            error = grad_check(builder, params, max_coords=max_coords, seed=seed)
            results.append(GradCheckResult(name, seed, error, tolerance))
        for name, build in COMPOSED_CASES.items():
            builder, params = build(rng.fork(name))
            error = grad_check(builder, params, eps=COMPOSED_EPS, max_coords=max_coords, seed=seed)
            results.append(GradCheckResult(name, seed, error, tolerance))
    failed = [result for result in results if not result.passed]
    logger.info(f"Gradient check: {len(results) - len(failed)}/{len(results)} cases passed")
    return results
