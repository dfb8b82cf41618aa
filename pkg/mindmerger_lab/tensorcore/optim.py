from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, field_validator

from mindmerger_lab.core import FreezingLeakError, ShapeMismatchError
from mindmerger_lab.tensorcore.tensor import ParameterCollection


class AdamConfig(BaseModel):
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("lr", "eps")
    def must_be_positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @field_validator("beta1", "beta2")
    def must_be_a_decay_rate(cls, value):
        if not 0 < value < 1:
            raise ValueError(f"must lie in (0, 1), got {value}")
        return value


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: ParameterCollection,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamConfig,
) -> AdamState:
    """One bias-corrected Adam update of every parameter that received a gradient.

    A gradient for a frozen parameter means a freezing leak upstream and is rejected before
    anything is modified.
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"Gradient supplied for unknown parameter '{name}'")
        param = params[name]
        if not param.trainable:
            raise FreezingLeakError(f"Gradient supplied for frozen parameter '{name}'")
        if grad.shape != param.shape:
            raise ShapeMismatchError(
                f"adam_step: gradient shape {grad.shape} does not match parameter "
                f"'{name}' shape {param.shape}"
            )

    state.t += 1
    bias1 = 1.0 - hyper.beta1**state.t
    bias2 = 1.0 - hyper.beta2**state.t
    for name in sorted(grads):
        param = params[name]
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m.setdefault(name, np.zeros(param.shape, dtype=np.float32))
        v = state.v.setdefault(name, np.zeros(param.shape, dtype=np.float32))
        m_new = hyper.beta1 * m + (1.0 - hyper.beta1) * grad
        v_new = hyper.beta2 * v + (1.0 - hyper.beta2) * grad * grad
        m[...] = m_new
        v[...] = v_new
        update = hyper.lr * (m_new / bias1) / (np.sqrt(v_new / bias2) + hyper.eps)
        param.data[...] = (param.data - update).astype(np.float32)
    return state
