from dataclasses import dataclass, field

import numpy as np

from mindmerger_lab.core import CompositionError, MappingVariant, Role, Space
from mindmerger_lab.nets.hidden import HiddenSeq
from mindmerger_lab.nets.layers import init_linear, linear
from mindmerger_lab.nets.lm import LMParams
from mindmerger_lab.tensorcore.primitives import nonlinearity
from mindmerger_lab.tensorcore.rng import RngStream
from mindmerger_lab.tensorcore.tensor import ParameterCollection, Tensor


PREFIX = "bridge"
SEP = f"{PREFIX}/sep"

_DEPTH = {MappingVariant.LINEAR: 1, MappingVariant.MLP2: 2, MappingVariant.MLP3: 3}


@dataclass
class BridgeParams:
    """Mapping layer plus the boundary vector: the only weights the bridge stages train.

    ``provenance`` lists the bridge stages that produced the current values, oldest first.
    """

    params: ParameterCollection
    variant: MappingVariant
    in_dim: int
    out_dim: int
    hidden_dim: int
    provenance: tuple[str, ...] = field(default_factory=tuple)

    @property
    def depth(self) -> int:
        return _DEPTH[self.variant]

    @property
    def sep(self):
        return self.params.tensor(SEP)

    def copy(self) -> "BridgeParams":
        return BridgeParams(
            params=self.params.copy(),
            variant=self.variant,
            in_dim=self.in_dim,
            out_dim=self.out_dim,
            hidden_dim=self.hidden_dim,
            provenance=self.provenance,
        )

    def with_stage(self, stage: str) -> "BridgeParams":
        self.provenance = (*self.provenance, stage)
        return self


def hidden_width(in_dim: int, out_dim: int) -> int:
    return round((in_dim + out_dim) / 2)


def init_bridge(
    variant: MappingVariant,
    in_dim: int,
    out_dim: int,
    phi: LMParams,
    rng: RngStream,
) -> BridgeParams:
    """Fresh sigma: scaled-normal mapping weights, zero biases, and a boundary vector that
    starts at the mean LLM embedding plus small noise."""
    if phi.dim != out_dim:
        raise CompositionError(f"Bridge output width {out_dim} != LLM width {phi.dim}")
    hidden = hidden_width(in_dim, out_dim)
    depth = _DEPTH[variant]
    widths = [in_dim, *([hidden] * (depth - 1)), out_dim]
    params = ParameterCollection()
    for layer in range(depth):
        init_linear(
            params, f"{PREFIX}/map{layer}", widths[layer], widths[layer + 1], rng.fork(f"map{layer}")
        )
    mean_embedding = phi.token_embeddings.data.astype(np.float64).mean(axis=0)
    params.add(SEP, mean_embedding + rng.fork("sep").normal(out_dim, std=0.02))
    return BridgeParams(params, variant, in_dim, out_dim, hidden)


def map_rows(sigma: BridgeParams, x: Tensor) -> Tensor:
    """Apply the mapping position by position to (..., d1) states."""
    if x.shape[-1] != sigma.in_dim:
        raise CompositionError(f"Mapping expects width {sigma.in_dim}, got {x.shape[-1]}")
    for layer in range(sigma.depth):
        x = linear(x, sigma.params, f"{PREFIX}/map{layer}")
        if layer < sigma.depth - 1:
            x = nonlinearity(x, "relu")
    return x


def map_states(states: HiddenSeq, sigma: BridgeParams) -> HiddenSeq:
    if states.space is not Space.ENCODER:
        raise CompositionError(f"map_states expects encoder-space states, got {states.space.value}")
    mapped = map_rows(sigma, states.values)
    return HiddenSeq(mapped, Space.LLM, Role.X_MAPPED, states.language, states.source_length)
