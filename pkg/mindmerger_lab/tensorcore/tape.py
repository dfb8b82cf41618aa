from collections.abc import Callable, Sequence
import contextvars
from dataclasses import dataclass

import numpy as np

from mindmerger_lab.core import TapeError
from mindmerger_lab.tensorcore.tensor import Tensor


VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "mindlab_active_tape", default=None
)


@dataclass(eq=False)
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: VJP
    tape: "Tape"


class Tape:
    """Single-use record of the primitives applied during one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, kind: str, inputs: tuple[Tensor, ...], output: Tensor, vjp: VJP) -> None:
        if self.consumed:
            raise TapeError("Cannot record on a tape whose backward pass already ran")
        node = Node(kind=kind, inputs=inputs, output=output, vjp=vjp, tape=self)
        output.node = node
        self.nodes.append(node)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``loss``.

    Returns the gradients of every named leaf that requires grad, keyed by parameter name.
    Frozen parameters never require grad, so they never appear in the map.
    """
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad and loss.name is None:
            raise TapeError("Loss was computed outside of an active tape")
        return {}

    tape = loss.node.tape
    if tape.consumed:
        raise TapeError("Tape already consumed by a previous backward pass")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        grad_out = grads.pop(id(node.output), None)
        if grad_out is None:
            continue
        for tensor, grad_in in zip(node.inputs, node.vjp(grad_out), strict=True):
            if grad_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad_in if key in grads else grad_in
            if tensor.node is None:
                leaves[key] = tensor

    result: dict[str, np.ndarray] = {}
    for key, tensor in leaves.items():
        grad = np.asarray(grads[key], dtype=tensor.data.dtype).reshape(tensor.data.shape)
        tensor.grad = grad
        if tensor.name is not None:
            result[tensor.name] = grad
    return dict(sorted(result.items()))
