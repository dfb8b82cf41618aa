from collections.abc import Iterable, Iterator, Mapping
import contextlib
import contextvars
import hashlib
from typing import TYPE_CHECKING, Any

import numpy as np

from mindmerger_lab.core import NonFiniteError


if TYPE_CHECKING:
    from mindmerger_lab.tensorcore.tape import Node


_COMPUTE_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar(
    "mindlab_compute_dtype", default=np.float32
)


@contextlib.contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Evaluate primitives at ``dtype`` inside the block.

    Parameters keep their float32 storage; only freshly produced tensors use the compute dtype.
    """
    token = _COMPUTE_DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _COMPUTE_DTYPE.reset(token)


def compute_dtype() -> type:
    return _COMPUTE_DTYPE.get()


class Tensor:
    """Dense array with an optional gradient buffer and a link to the node that produced it."""

    __slots__ = ("data", "grad", "name", "node", "requires_grad")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ):
        array = np.array(data, dtype=dtype or compute_dtype(), copy=True)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(
                f"Tensor{' ' + repr(name) if name else ''} contains non-finite values"
            )
        self.data: np.ndarray = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.node: Node | None = None

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = None
        tensor.node = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from mindmerger_lab.tensorcore.primitives import matmul

        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        from mindmerger_lab.tensorcore.primitives import add

        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from mindmerger_lab.tensorcore.primitives import multiply

        return multiply(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


class Parameter:
    """A named tensor with a trainable flag.

    The flag is mirrored onto ``tensor.requires_grad`` so frozen parameters are constants for
    the tape: no node ever asks for their gradient.
    """

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data: Any, trainable: bool = True):
        self.name = name
        self.tensor = Tensor(data, requires_grad=trainable, name=name, dtype=np.float32)

    @property
    def trainable(self) -> bool:
        return self.tensor.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.tensor.requires_grad = bool(value)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


class ParameterCollection(Mapping[str, Parameter]):
    """Ordered, name-unique set of parameters."""

    def __init__(self, params: Iterable[Parameter] = ()):
        self._params: dict[str, Parameter] = {}
        for param in params:
            self.register(param)

    def register(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ValueError(f"Duplicate parameter name '{param.name}'")
        self._params[param.name] = param
        return param

    def add(self, name: str, data: Any, trainable: bool = True) -> Parameter:
        return self.register(Parameter(name, data, trainable=trainable))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def tensor(self, name: str) -> Tensor:
        return self._params[name].tensor

    def freeze(self) -> "ParameterCollection":
        for param in self._params.values():
            param.trainable = False
        return self

    def unfreeze(self) -> "ParameterCollection":
        for param in self._params.values():
            param.trainable = True
        return self

    def trainable(self) -> list[Parameter]:
        return [param for param in self._params.values() if param.trainable]

    def census(self) -> int:
        """Number of trainable scalars."""
        return sum(param.tensor.size for param in self.trainable())

    def snapshot(self) -> str:
        """Digest over names, shapes and raw bytes; equal digests mean bitwise equal payloads."""
        digest = hashlib.sha256()
        for name, param in self._params.items():
            digest.update(name.encode("utf-8"))
            digest.update(repr(param.shape).encode("ascii"))
            digest.update(np.ascontiguousarray(param.data).tobytes())
        return digest.hexdigest()

    def state(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self._params.items()}

    def copy(self) -> "ParameterCollection":
        return ParameterCollection(
            Parameter(name, param.data, trainable=param.trainable)
            for name, param in self._params.items()
        )

    def merged_with(self, *others: "ParameterCollection") -> "ParameterCollection":
        """A view sharing the same Parameter objects, for optimizers spanning several models."""
        merged = ParameterCollection(self._params.values())
        for other in others:
            for param in other.values():
                merged.register(param)
        return merged
