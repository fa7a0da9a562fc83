"""
Reverse-mode automatic differentiation over rank-4 float64 tensors.

A ``Tensor4`` wraps a (batch, channel, height, width) array. Operations executed
inside an active ``Tape`` whose inputs require gradients are recorded in
execution order; ``backward`` walks the recording in reverse and accumulates
gradients into the requested leaves.

    >>> x = Tensor4(np.ones((1, 1, 2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (x * x).sum() * 0.5
    >>> backward(loss, tape)
    >>> x.grad  # equals x
"""

import threading
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._validation import ShapeError, check_same_shape

DTYPE = np.float64

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Scalar = Union[int, float]

_local = threading.local()


class Tensor4:
    """Rank-4 real array with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: Union[np.ndarray, Sequence], requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=DTYPE)
        if array.ndim != 4:
            raise ShapeError(f"Tensor4 needs a rank-4 array, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def scalar(cls, value: float) -> "Tensor4":
        return cls(np.full((1, 1, 1, 1), value))

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor4":
        return Tensor4(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor4(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Arithmetic sugar. Only same-shape tensors or python scalars combine.
    def __add__(self, other: Union["Tensor4", Scalar]) -> "Tensor4":
        if isinstance(other, Tensor4):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor4", Scalar]) -> "Tensor4":
        if isinstance(other, Tensor4):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other: Scalar) -> "Tensor4":
        return add_scalar(scale(self, -1.0), float(other))

    def __mul__(self, other: Union["Tensor4", Scalar]) -> "Tensor4":
        if isinstance(other, Tensor4):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Tensor4":
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor4":
        return scale(self, -1.0)

    def sum(self) -> "Tensor4":
        return total_sum(self)

    def mean(self) -> "Tensor4":
        return total_mean(self)


class TapeEntry:
    """One recorded operation."""

    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name: str, inputs: Tuple[Tensor4, ...], output: Tensor4, backward_fn: BackwardFn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable operations.

    Tapes are bound per thread; distinct threads may each hold their own tape.
    """

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, name: str, inputs: Tuple[Tensor4, ...], output: Tensor4, backward_fn: BackwardFn) -> None:
        self.entries.append(TapeEntry(name, inputs, output, backward_fn))

    def op_names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    def backward(self, loss: Tensor4, params: Optional[Iterable[Tensor4]] = None) -> List[Tensor4]:
        return backward(loss, self, params)


class no_grad:
    """Suspend recording inside the block, even when a tape is active."""

    def __enter__(self) -> None:
        _stack().append(None)

    def __exit__(self, *exc: object) -> None:
        _stack().pop()


def _stack() -> List[Optional[Tape]]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def record(name: str, data: np.ndarray, inputs: Tuple[Tensor4, ...], backward_fn: BackwardFn) -> Tensor4:
    """Wrap ``data`` as an op output and put it on the active tape if needed."""
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor4.__new__(Tensor4)
    out.data = data
    out.requires_grad = needs_grad
    out.grad = None
    out.name = None
    if needs_grad:
        tape.record(name, inputs, out, backward_fn)  # type: ignore[union-attr]
    return out


def backward(loss: Tensor4, tape: Tape, params: Optional[Iterable[Tensor4]] = None) -> List[Tensor4]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad``.

    When ``params`` is given only those tensors receive gradients; otherwise every
    recorded leaf that requires gradients does. Leaves off every path to the loss
    receive zeros. Returns the leaves that were written.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar loss of shape (1, 1, 1, 1), got {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    for entry in reversed(tape.entries):
        produced.add(id(entry.output))
        grad_out = grads.pop(id(entry.output), None)
        if grad_out is None:
            continue
        input_grads = entry.backward_fn(grad_out)
        for tensor, grad_in in zip(entry.inputs, input_grads):
            if grad_in is None or not tensor.requires_grad:
                continue
            check_same_shape(grad_in.shape, tensor.shape, f"{entry.name} backward")
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad_in
            else:
                grads[key] = grad_in

    if params is None:
        seen = set()
        leaves = []
        for entry in tape.entries:
            for tensor in entry.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
    else:
        leaves = list(params)

    for leaf in leaves:
        grad = grads.get(id(leaf))
        if grad is None:
            grad = np.zeros_like(leaf.data)
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
    return leaves


# ---------------------------------------------------------------------------
# Elementwise arithmetic and reductions
# ---------------------------------------------------------------------------


def add(a: Tensor4, b: Tensor4) -> Tensor4:
    check_same_shape(a.shape, b.shape, "add")
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor4, b: Tensor4) -> Tensor4:
    check_same_shape(a.shape, b.shape, "sub")
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor4, b: Tensor4) -> Tensor4:
    check_same_shape(a.shape, b.shape, "mul")
    return record("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: Tensor4, b: Tensor4) -> Tensor4:
    check_same_shape(a.shape, b.shape, "div")
    return record("div", a.data / b.data, (a, b), lambda g: (g / b.data, -g * a.data / b.data**2))


def scale(x: Tensor4, factor: float) -> Tensor4:
    return record("scale", x.data * factor, (x,), lambda g: (g * factor,))


def add_scalar(x: Tensor4, value: float) -> Tensor4:
    return record("add_scalar", x.data + value, (x,), lambda g: (g,))


def absolute(x: Tensor4) -> Tensor4:
    # sign(0) = 0 gives the zero subgradient at the kink
    return record("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def log(x: Tensor4) -> Tensor4:
    return record("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def sigmoid(x: Tensor4) -> Tensor4:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def clamp(x: Tensor4, low: float, high: float) -> Tensor4:
    inside = (x.data >= low) & (x.data <= high)
    return record("clamp", np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def total_sum(x: Tensor4) -> Tensor4:
    out = np.array(x.data.sum(), dtype=DTYPE).reshape(1, 1, 1, 1)
    return record("sum", out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def total_mean(x: Tensor4) -> Tensor4:
    count = x.size
    out = np.array(x.data.sum() / count, dtype=DTYPE).reshape(1, 1, 1, 1)
    return record("mean", out, (x,), lambda g: (np.broadcast_to(g / count, x.shape).copy(),))


def reduce_sum(x: Tensor4, axes: Tuple[int, ...]) -> Tensor4:
    """Sum over ``axes`` keeping rank 4."""
    out = x.data.sum(axis=axes, keepdims=True)
    return record("reduce_sum", out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reduce_mean(x: Tensor4, axes: Tuple[int, ...]) -> Tensor4:
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.sum(axis=axes, keepdims=True) / count
    return record("reduce_mean", out, (x,), lambda g: (np.broadcast_to(g / count, x.shape).copy(),))


def norm_per_sample(x: Tensor4) -> Tensor4:
    """Euclidean norm of each sample, shape (n, 1, 1, 1).

    The gradient at a zero-norm sample is taken as zero.
    """
    norms = np.sqrt((x.data**2).sum(axis=(1, 2, 3), keepdims=True))

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        safe = np.where(norms > 0, norms, 1.0)
        return (np.where(norms > 0, g * x.data / safe, 0.0),)

    return record("norm_per_sample", norms, (x,), _backward)


# ---------------------------------------------------------------------------
# Layout operations
# ---------------------------------------------------------------------------


def reshape(x: Tensor4, shape: Tuple[int, int, int, int]) -> Tensor4:
    if len(shape) != 4 or int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}")
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat_channels(tensors: Sequence[Tensor4]) -> Tensor4:
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    n, _, h, w = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: shape mismatch {tensors[0].shape} vs {t.shape}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def _backward(g: np.ndarray) -> List[np.ndarray]:
        return [g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors))]

    return record("concat_channels", np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), _backward)


def slice_channels(x: Tensor4, start: int, stop: int) -> Tensor4:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_channels: [{start}:{stop}] out of range for {x.shape}")

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return record("slice_channels", x.data[:, start:stop], (x,), _backward)


def slice_spatial(x: Tensor4, rows: slice, cols: slice) -> Tensor4:
    out = x.data[:, :, rows, cols]
    if out.size == 0:
        raise ShapeError(f"slice_spatial: empty slice of {x.shape}")

    def _backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[:, :, rows, cols] = g
        return (full,)

    return record("slice_spatial", out, (x,), _backward)
