from .gradcheck import grad_check
from .optim import AdamConfig, AdamState, adam_step
from .primitives import apply_primitive, constant, primitive_kinds
from .rng import RngStream, rng_stream
from .tape import Tape, backward
from .tensor import Parameter, ParameterCollection, Tensor, precision


__all__ = [
    "AdamConfig",
    "AdamState",
    "Parameter",
    "ParameterCollection",
    "RngStream",
    "Tape",
    "Tensor",
    "adam_step",
    "apply_primitive",
    "backward",
    "constant",
    "grad_check",
    "precision",
    "primitive_kinds",
    "rng_stream",
]
