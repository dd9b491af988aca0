"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the link predictor needs are implemented: matmul,
broadcasting add/mul/sub/div, gather/slice of rows, segment sums, concat,
ReLU/LeakyReLU/sigmoid/exp/log/clip, and full reductions. Gradients follow the
dtype of the forward data (float32 for training, float64 for gradient checks).
"""

import numpy as np


_ACTIVE_MASK_TRACES: list[list] = []


class trace_masks:
    """Context manager collecting every activation mask computed inside it.

    Finite differences on a piecewise-smooth function are only valid when both
    probe points fall into the same linear region; comparing traced masks
    detects probes that crossed a ReLU/LeakyReLU/clip kink.
    """

    def __init__(self):
        self.masks: list[np.ndarray] = []

    def __enter__(self) -> list[np.ndarray]:
        _ACTIVE_MASK_TRACES.append(self.masks)
        return self.masks

    def __exit__(self, *exc):
        _ACTIVE_MASK_TRACES.pop()
        return False


def _record_mask(mask: np.ndarray) -> None:
    for trace in _ACTIVE_MASK_TRACES:
        trace.append(mask)


def same_masks(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum *grad* over broadcast axes so it matches *shape*."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """Reverse accumulation from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(self.data + other.data, parents=(self, other), backward=backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        return Tensor(-self.data, parents=(self,), backward=backward)

    def __sub__(self, other):
        return self + (-_as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return _as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(self.data * other.data, parents=(self, other), backward=backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other, self.dtype)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        return Tensor(self.data / other.data, parents=(self, other), backward=backward)

    def __matmul__(self, other):
        other = _as_tensor(other, self.dtype)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        return Tensor(self.data @ other.data, parents=(self, other), backward=backward)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _record_mask(mask)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(np.where(mask, x.data, 0.0).astype(x.dtype), parents=(x,), backward=backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    _record_mask(mask)
    scale = np.where(mask, 1.0, slope).astype(x.dtype)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * scale)

    return Tensor(x.data * scale, parents=(x,), backward=backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out * (1.0 - out))

    return Tensor(out, parents=(x,), backward=backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out)

    return Tensor(out, parents=(x,), backward=backward)


def log(x: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return Tensor(np.log(x.data), parents=(x,), backward=backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    _record_mask(inside)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * inside)

    return Tensor(np.clip(x.data, lo, hi), parents=(x,), backward=backward)


def mean(x: Tensor) -> Tensor:
    size = x.data.size

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g / size))

    return Tensor(
        np.asarray(x.data.mean(), dtype=x.dtype), parents=(x,), backward=backward
    )


def rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows (axis 0); repeated indices accumulate gradient."""

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.add.at(acc, idx, g)
            x._accumulate(acc)

    return Tensor(x.data[idx], parents=(x,), backward=backward)


def narrow(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice (axis 0)."""

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            acc[start:stop] = g
            x._accumulate(acc)

    return Tensor(x.data[start:stop], parents=(x,), backward=backward)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(a, b)
                p._accumulate(g[tuple(sl)])

    return Tensor(
        np.concatenate([p.data for p in parts], axis=axis),
        parents=tuple(parts),
        backward=backward,
    )


def segment_sum(x: Tensor, starts: np.ndarray) -> Tensor:
    """Sum of row segments; segments are contiguous and non-empty."""
    counts = np.diff(np.append(starts, x.data.shape[0]))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.repeat(g, counts, axis=0))

    return Tensor(
        np.add.reduceat(x.data, starts, axis=0), parents=(x,), backward=backward
    )


def segment_max_constant(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment max treated as a constant (softmax shift)."""
    return np.maximum.reduceat(values, starts, axis=0)
