"""Primitive operations of the tape engine.

Each primitive is a forward function returning its output array together with a
vector-Jacobian closure. ``apply_primitive`` validates, checks for non-finite results and
records the node on the active tape when any input requires grad.
"""

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from mindmerger_lab.core import NonFiniteError, ShapeMismatchError, UnknownPrimitiveError
from mindmerger_lab.tensorcore.tape import VJP, active_tape
from mindmerger_lab.tensorcore.tensor import Tensor, compute_dtype


Forward = Callable[[list[np.ndarray], dict[str, Any]], tuple[np.ndarray, VJP]]

_GELU_C = np.sqrt(2.0 / np.pi)
_REGISTRY: dict[str, Forward] = {}


def _primitive(kind: str) -> Callable[[Forward], Forward]:
    def register(fn: Forward) -> Forward:
        _REGISTRY[kind] = fn
        return fn

    return register


def primitive_kinds() -> list[str]:
    return sorted(_REGISTRY)


def _fsum(array: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
    return np.sum(array, axis=axis, keepdims=keepdims, dtype=np.float64).astype(array.dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = _fsum(grad, axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = _fsum(grad, axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(kind: str, *shapes: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as e:
        raise ShapeMismatchError(
            f"{kind}: shapes {' and '.join(str(s) for s in shapes)} do not broadcast"
        ) from e


def _arity(kind: str, arrays: list[np.ndarray], expected: int) -> None:
    if len(arrays) != expected:
        raise ShapeMismatchError(f"{kind}: expected {expected} inputs, got {len(arrays)}")


@_primitive("matmul")
def _matmul(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("matmul", arrays, 2)
    a, b = arrays
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul: inputs must be at least 2-D, got {a.shape}, {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions differ ({a.shape[-1]} vs {b.shape[-2]}) "
            f"for shapes {a.shape} @ {b.shape}"
        )
    _broadcast_shape("matmul", a.shape[:-2], b.shape[:-2])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
        grad_b = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
        return grad_a, grad_b

    return np.matmul(a, b), vjp


@_primitive("add")
def _add(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("add", arrays, 2)
    a, b = arrays
    _broadcast_shape("add", a.shape, b.shape)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return a + b, vjp


@_primitive("multiply")
def _multiply(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("multiply", arrays, 2)
    a, b = arrays
    _broadcast_shape("multiply", a.shape, b.shape)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

    return a * b, vjp


@_primitive("scale")
def _scale(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("scale", arrays, 1)
    (x,) = arrays
    factor = float(attrs["factor"])

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * factor,)

    return x * factor, vjp


@_primitive("concat")
def _concat(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    if not arrays:
        raise ShapeMismatchError("concat: needs at least one input")
    if "axis" not in attrs:
        raise ShapeMismatchError("concat: missing required attribute 'axis'")
    ndim = arrays[0].ndim
    axis = attrs["axis"] % ndim
    for array in arrays[1:]:
        if array.ndim != ndim or any(
            array.shape[i] != arrays[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise ShapeMismatchError(
                f"concat: shape {array.shape} incompatible with {arrays[0].shape} "
                f"along axis {axis}"
            )
    offsets = np.cumsum([array.shape[axis] for array in arrays])[:-1]

    def vjp(g: np.ndarray) -> list[np.ndarray]:
        return np.split(g, offsets, axis=axis)

    return np.concatenate(arrays, axis=axis), vjp


@_primitive("gather_rows")
def _gather_rows(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("gather_rows", arrays, 1)
    (table,) = arrays
    if table.ndim != 2:
        raise ShapeMismatchError(f"gather_rows: table must be 2-D, got {table.shape}")
    indices = np.asarray(attrs["indices"], dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ShapeMismatchError(
            f"gather_rows: index range [{indices.min()}, {indices.max()}] outside "
            f"table with {table.shape[0]} rows"
        )

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(table.shape, dtype=np.float64)
        np.add.at(grad, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad.astype(table.dtype),)

    return table[indices], vjp


@_primitive("take_along")
def _take_along(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("take_along", arrays, 1)
    (x,) = arrays
    indices = np.asarray(attrs["indices"], dtype=np.int64)
    if indices.shape != x.shape[:-1]:
        raise ShapeMismatchError(
            f"take_along: indices shape {indices.shape} must equal input shape {x.shape[:-1]}"
        )
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[-1]):
        raise ShapeMismatchError(f"take_along: index outside last dimension {x.shape[-1]}")
    expanded = indices[..., None]

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x)
        np.put_along_axis(grad, expanded, g[..., None], axis=-1)
        return (grad,)

    return np.take_along_axis(x, expanded, axis=-1)[..., 0], vjp


@_primitive("softmax")
def _softmax(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("softmax", arrays, 1)
    (x,) = arrays
    axis = attrs.get("axis", -1)
    exp = np.exp(x - np.max(x, axis=axis, keepdims=True))
    y = (exp / np.sum(exp, axis=axis, keepdims=True, dtype=np.float64)).astype(x.dtype)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - _fsum(g * y, axis=axis, keepdims=True)),)

    return y, vjp


@_primitive("log_softmax")
def _log_softmax(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("log_softmax", arrays, 1)
    (x,) = arrays
    axis = attrs.get("axis", -1)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True, dtype=np.float64))
    y = (shifted - log_norm).astype(x.dtype)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(y) * _fsum(g, axis=axis, keepdims=True),)

    return y, vjp


@_primitive("layer_norm")
def _layer_norm(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("layer_norm", arrays, 1)
    (x,) = arrays
    eps = attrs.get("eps", 1e-5)
    width = x.shape[-1]
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    centered = x64 - mean
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        g64 = g.astype(np.float64)
        grad = (rstd / width) * (
            width * g64
            - g64.sum(axis=-1, keepdims=True)
            - xhat * (g64 * xhat).sum(axis=-1, keepdims=True)
        )
        return (grad.astype(x.dtype),)

    return xhat.astype(x.dtype), vjp


@_primitive("nonlinearity")
def _nonlinearity(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("nonlinearity", arrays, 1)
    (x,) = arrays
    fn = attrs.get("fn", "relu")
    if fn == "relu":
        active = x > 0
        y = np.where(active, x, 0).astype(x.dtype)

        def vjp(g: np.ndarray) -> tuple[np.ndarray]:
            return (g * active,)

    elif fn == "gelu":
        inner = _GELU_C * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        y = 0.5 * x * (1.0 + t)

        def vjp(g: np.ndarray) -> tuple[np.ndarray]:
            d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
            return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    elif fn == "tanh":
        y = np.tanh(x)

        def vjp(g: np.ndarray) -> tuple[np.ndarray]:
            return (g * (1.0 - y * y),)

    else:
        raise UnknownPrimitiveError(f"nonlinearity: unknown function '{fn}'")
    return y, vjp


@_primitive("masked_fill")
def _masked_fill(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("masked_fill", arrays, 1)
    (x,) = arrays
    mask = np.asarray(attrs["mask"], dtype=bool)
    if _broadcast_shape("masked_fill", mask.shape, x.shape) != x.shape:
        raise ShapeMismatchError(
            f"masked_fill: mask shape {mask.shape} does not broadcast to input {x.shape}"
        )
    keep = ~mask

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * keep,)

    return np.where(mask, attrs.get("value", -1e9), x).astype(x.dtype), vjp


@_primitive("mean_pool")
def _mean_pool(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("mean_pool", arrays, 1)
    (x,) = arrays
    if x.ndim < 2:
        raise ShapeMismatchError(f"mean_pool: input must be at least 2-D, got {x.shape}")
    mask = attrs.get("mask")
    weights = (
        np.ones(x.shape[:-1], dtype=np.float64)
        if mask is None
        else np.asarray(mask, dtype=np.float64)
    )
    if weights.shape != x.shape[:-1]:
        raise ShapeMismatchError(
            f"mean_pool: mask shape {weights.shape} must equal input shape {x.shape[:-1]}"
        )
    counts = weights.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ShapeMismatchError("mean_pool: pooling window without any valid position")
    share = (weights / counts)[..., None]

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return ((g[..., None, :] * share).astype(x.dtype),)

    return (x * share).sum(axis=-2, dtype=np.float64).astype(x.dtype), vjp


@_primitive("sum")
def _sum(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("sum", arrays, 1)
    (x,) = arrays
    axis = attrs.get("axis")
    keepdims = attrs.get("keepdims", False)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return np.asarray(_fsum(x, axis=axis, keepdims=keepdims)), vjp


@_primitive("reshape")
def _reshape(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("reshape", arrays, 1)
    (x,) = arrays
    shape = tuple(attrs["shape"])
    try:
        y = x.reshape(shape)
    except ValueError as e:
        raise ShapeMismatchError(f"reshape: cannot reshape {x.shape} into {shape}") from e

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return y, vjp


@_primitive("transpose")
def _transpose(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("transpose", arrays, 1)
    (x,) = arrays
    axes = tuple(attrs["axes"])
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError(f"transpose: axes {axes} invalid for {x.ndim}-D input")
    inverse = tuple(np.argsort(axes))

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.transpose(g, inverse),)

    return np.transpose(x, axes), vjp


@_primitive("slice")
def _slice(arrays: list[np.ndarray], attrs: dict[str, Any]) -> tuple[np.ndarray, VJP]:
    _arity("slice", arrays, 1)
    (x,) = arrays
    axis = attrs.get("axis", 0) % x.ndim
    start, stop = attrs["start"], attrs["stop"]
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeMismatchError(
            f"slice: range [{start}, {stop}) invalid for axis {axis} of size {x.shape[axis]}"
        )
    index = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x)
        grad[index] = g
        return (grad,)

    return x[index], vjp


def apply_primitive(
    kind: str, inputs: Sequence[Tensor], attrs: dict[str, Any] | None = None
) -> Tensor:
    forward = _REGISTRY.get(kind)
    if forward is None:
        raise UnknownPrimitiveError(
            f"Unknown primitive '{kind}', expected one of {primitive_kinds()}"
        )
    inputs = tuple(inputs)
    out, vjp = forward([tensor.data for tensor in inputs], dict(attrs or {}))
    out = np.asarray(out, dtype=compute_dtype())
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(
            f"Primitive '{kind}' produced non-finite values (output shape {out.shape})"
        )
    requires_grad = any(tensor.requires_grad for tensor in inputs)
    result = Tensor.wrap(out, requires_grad=requires_grad)
    tape = active_tape()
    if requires_grad and tape is not None:
        tape.record(kind, inputs, result, vjp)
    return result


def constant(data: Any) -> Tensor:
    return Tensor(data)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("matmul", [a, b])


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("add", [a, b])


def multiply(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("multiply", [a, b])


def scale(x: Tensor, factor: float) -> Tensor:
    return apply_primitive("scale", [x], {"factor": factor})


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    return apply_primitive("concat", tensors, {"axis": axis})


def gather_rows(table: Tensor, indices: Any) -> Tensor:
    return apply_primitive("gather_rows", [table], {"indices": indices})


def take_along(x: Tensor, indices: Any) -> Tensor:
    return apply_primitive("take_along", [x], {"indices": indices})


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", [x], {"axis": axis})


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return apply_primitive("log_softmax", [x], {"axis": axis})


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    return apply_primitive("layer_norm", [x], {"eps": eps})


def nonlinearity(x: Tensor, fn: str = "relu") -> Tensor:
    return apply_primitive("nonlinearity", [x], {"fn": fn})


def masked_fill(x: Tensor, mask: Any, value: float = -1e9) -> Tensor:
    return apply_primitive("masked_fill", [x], {"mask": mask, "value": value})


def mean_pool(x: Tensor, mask: Any = None) -> Tensor:
    return apply_primitive("mean_pool", [x], {"mask": mask})


def reduce_sum(x: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return apply_primitive("sum", [x], {"axis": axis, "keepdims": keepdims})


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return apply_primitive("reshape", [x], {"shape": tuple(shape)})


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    return apply_primitive("transpose", [x], {"axes": tuple(axes)})


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    return apply_primitive("slice", [x], {"axis": axis, "start": start, "stop": stop})
