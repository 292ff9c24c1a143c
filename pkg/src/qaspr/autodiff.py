"""A small reverse-mode tape over numpy arrays.

Only the operations the reasoner and loss need are provided. Every op
records a closure on the tape that pushes the output gradient back to
its inputs; ``backward`` replays the tape once, in reverse.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "tape", "requires_grad", "_backward", "name")

    def __init__(self, data, tape: "Tape | None" = None, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r})"


class Tape:
    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: dict[str, Tensor] = {}
        self.consumed = False

    def param(self, name: str, array: np.ndarray) -> Tensor:
        """Register a trainable leaf; the array is shared, not copied."""
        t = Tensor.__new__(Tensor)
        t.data = array
        t.grad = None
        t.tape = self
        t.requires_grad = True
        t._backward = None
        t.name = name
        self.leaves[name] = t
        return t

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
            for name, leaf in self.leaves.items()
        }


def constant(data) -> Tensor:
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _record(inputs: Sequence[Tensor], data: np.ndarray, backward: Callable[[np.ndarray], None]) -> Tensor:
    tape = next((x.tape for x in inputs if x.tape is not None and x.requires_grad), None)
    out = Tensor(data, tape=tape, requires_grad=tape is not None)
    if tape is not None:
        if tape.consumed:
            raise RuntimeError("tape already consumed by backward")
        out._backward = backward
        tape.nodes.append(out)
    return out


def _shape_error(op: str, *tensors: Tensor) -> ShapeError:
    shapes = ", ".join(str(t.shape) for t in tensors)
    return ShapeError(f"{op}: incompatible shapes {shapes}")


def linear(W: Tensor, x: Tensor) -> Tensor:
    """``W @ x`` for a vector ``x``, or row-wise ``x @ W.T`` for a matrix."""
    if W.data.ndim != 2 or x.data.ndim not in (1, 2) or x.shape[-1] != W.shape[1]:
        raise _shape_error("linear", W, x)
    if x.data.ndim == 1:
        out = W.data @ x.data

        def backward(g):
            _accum(W, np.outer(g, x.data))
            _accum(x, W.data.T @ g)
    else:
        out = x.data @ W.data.T

        def backward(g):
            _accum(W, g.T @ x.data)
            _accum(x, g @ W.data)

    return _record((W, x), out, backward)


def concat(x: Tensor, y: Tensor) -> Tensor:
    if x.data.ndim != y.data.ndim or x.shape[:-1] != y.shape[:-1]:
        raise _shape_error("concat", x, y)
    split = x.shape[-1]

    def backward(g):
        _accum(x, g[..., :split])
        _accum(y, g[..., split:])

    return _record((x, y), np.concatenate([x.data, y.data], axis=-1), backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise _shape_error("add", x, y)

    def backward(g):
        _accum(x, g)
        _accum(y, g)

    return _record((x, y), x.data + y.data, backward)


def scale(c: float, x: Tensor) -> Tensor:
    def backward(g):
        _accum(x, c * g)

    return _record((x,), c * x.data, backward)


def dot(w: Tensor, x: Tensor) -> Tensor:
    """``w . x``; with a matrix ``x`` this scores every row."""
    if w.data.ndim != 1 or x.data.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise _shape_error("dot", w, x)
    if x.data.ndim == 1:
        out = np.asarray(w.data @ x.data)

        def backward(g):
            _accum(w, g * x.data)
            _accum(x, g * w.data)
    else:
        out = x.data @ w.data

        def backward(g):
            _accum(w, x.data.T @ g)
            _accum(x, np.outer(g, w.data))

    return _record((w, x), out, backward)


def sum_list(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ValueError("sum_list: empty input")
    shape = xs[0].shape
    for x in xs:
        if x.shape != shape:
            raise _shape_error("sum_list", *xs)
    out = np.sum([x.data for x in xs], axis=0)

    def backward(g):
        for x in xs:
            _accum(x, g)

    return _record(tuple(xs), out, backward)


def relu(x: Tensor) -> Tensor:
    on = x.data > 0

    def backward(g):
        _accum(x, g * on)

    return _record((x,), np.where(on, x.data, 0.0), backward)


def _softmax(v: np.ndarray) -> tuple[np.ndarray, float]:
    m = v.max()
    e = np.exp(v - m)
    z = e.sum()
    return e / z, float(m + np.log(z))


def logsumexp(scores: Tensor) -> Tensor:
    if scores.data.ndim != 1 or scores.shape[0] == 0:
        raise _shape_error("logsumexp", scores)
    p, lse = _softmax(scores.data)

    def backward(g):
        _accum(scores, g * p)

    return _record((scores,), np.asarray(lse), backward)


def neg_logsoftmax_pick(scores: Tensor, index: int) -> Tensor:
    """``logsumexp(scores) - scores[index]``."""
    if scores.data.ndim != 1 or not 0 <= index < scores.shape[0]:
        raise _shape_error("neg_logsoftmax_pick", scores)
    p, lse = _softmax(scores.data)

    def backward(g):
        d = p.copy()
        d[index] -= 1.0
        _accum(scores, g * d)

    return _record((scores,), np.asarray(lse - scores.data[index]), backward)


def gather(x: Tensor, index) -> Tensor:
    """Rows ``x[index]``; ``index`` may be an int or an integer array."""
    index = np.asarray(index, dtype=np.int64) if not isinstance(index, (int, np.integer)) else int(index)
    out = x.data[index]

    def backward(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            np.add.at(buf, index, g)
            _accum(x, buf)

    return _record((x,), out, backward)


def index_add(x: Tensor, index: np.ndarray, size: int) -> Tensor:
    """Scatter-sum rows of ``x`` into ``size`` output rows."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:1]:
        raise _shape_error("index_add", x)
    out = np.zeros((size,) + x.shape[1:])
    np.add.at(out, index, x.data)

    def backward(g):
        _accum(x, g[index])

    return _record((x,), out, backward)


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into every leaf registered on ``tape``."""
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if tape.consumed:
        raise RuntimeError("backward: tape already consumed (double backward is not supported)")
    tape.consumed = True
    if loss.tape is tape:
        loss.grad = np.ones(())
        for node in reversed(tape.nodes):
            if node.grad is not None:
                node._backward(node.grad)
    return tape.gradients()
