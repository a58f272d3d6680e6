"""Reverse-mode automatic differentiation over dense float64 arrays.

Just enough tensor algebra for the two-stream localization model and its
losses. Every op records its parents and a vector-Jacobian closure on the
output tensor; backward() replays the graph once in reverse topological
order. Graphs are built per forward pass and garbage-collected with their
tensors, so independent forward passes never share state.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class Tensor:
    """Dense float64 tensor participating in the autodiff graph.

    Tensors produced by ops keep references to their parents together with
    the local vector-Jacobian products. After backward() on a scalar loss,
    every leaf created with requires_grad=True has its gradient accumulated
    into .grad (summed across all uses of the tensor).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents: tuple[tuple[Tensor, Callable[[Array], Array]], ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar. Python scalars are lifted to constant tensors.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, scalar_mul(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), scalar_mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all requires_grad leaves."""
        if self.data.size != 1:
            raise ShapeError(
                f"backward: loss must be scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, Array] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in node._parents:
                contrib = vjp(g)
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data: Array, parents: Sequence[tuple[Tensor, Callable[[Array], Array]]]) -> Tensor:
    out = Tensor(data)
    tracked = tuple((p, fn) for p, fn in parents if p.requires_grad)
    if tracked:
        out.requires_grad = True
        out._parents = tracked
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    return _op(data, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    return _op(data, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _op(a.data * c, [(a, lambda g: g * c)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _op(a.data @ b.data, [
        (a, lambda g: g @ b.data.T),
        (b, lambda g: a.data.T @ g),
    ])


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {a.shape}")
    return _op(np.ascontiguousarray(a.data.T), [(a, lambda g: g.T)])


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}")
    old = a.data.shape
    return _op(a.data.reshape(shape), [(a, lambda g: g.reshape(old))])


def flip(a: Tensor, axis: int = 0) -> Tensor:
    return _op(np.flip(a.data, axis=axis).copy(), [(a, lambda g: np.flip(g, axis=axis))])


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    parents = []
    offset = 0
    for t in tensors:
        n = t.data.shape[axis]
        sl = [slice(None)] * data.ndim
        sl[axis] = slice(offset, offset + n)
        parents.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += n
    return _op(data, parents)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.data.shape[axis]):
        raise ShapeError(
            f"slice: range [{start}, {stop}) invalid for shape {a.shape} axis {axis}"
        )
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def vjp(g: Array) -> Array:
        out = np.zeros_like(a.data)
        out[sl] = g
        return out

    return _op(a.data[sl].copy(), [(a, vjp)])


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    return _op(s, [(a, lambda g: g * s * (1.0 - s))])


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _op(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log: input must be strictly positive")
    return _op(np.log(a.data), [(a, lambda g: g / a.data)])


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise ValueError("sqrt: input must be nonnegative")
    r = np.sqrt(a.data)
    # Gradient is only defined away from zero; callers keep inputs positive.
    return _op(r, [(a, lambda g: g / (2.0 * r))])


def pow_const(a: Tensor, exponent: float) -> Tensor:
    c = float(exponent)
    if c == 0.0:
        return Tensor(np.ones_like(a.data))
    if np.any(a.data < 0):
        raise ValueError("pow_const: input must be nonnegative")
    data = a.data ** c
    return _op(data, [(a, lambda g: g * c * a.data ** (c - 1.0))])


def softmax(a: Tensor, axis: int) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: Array) -> Array:
        return s * (g - (g * s).sum(axis=axis, keepdims=True))

    return _op(s, [(a, vjp)])


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = a.data.size
        return _op(np.asarray(a.data.mean()), [(a, lambda g: np.full_like(a.data, g / n))])
    n = a.data.shape[axis]
    data = a.data.mean(axis=axis)
    return _op(data, [(a, lambda g: np.repeat(np.expand_dims(g / n, axis), n, axis=axis))])


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum as mean * count (keeps the recorded op set minimal)."""
    n = a.data.size if axis is None else a.data.shape[axis]
    return scalar_mul(mean(a, axis=axis), float(n))


def conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Same-padded correlation along axis 0: [T, C_in] x [k, C_in, C_out] -> [T, C_out]."""
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: expected [T,Cin] and [k,Cin,Cout], got {x.shape} and {w.shape}")
    k, cin, cout = w.data.shape
    if cin != x.data.shape[1] or k % 2 != 1:
        raise ShapeError(f"conv1d: incompatible shapes {x.shape} and {w.shape}")
    t = x.data.shape[0]
    pad = k // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    data = np.zeros((t, cout))
    for d in range(k):
        data += xp[d:d + t] @ w.data[d]

    def vjp_x(g: Array) -> Array:
        gp = np.zeros_like(xp)
        for d in range(k):
            gp[d:d + t] += g @ w.data[d].T
        return gp[pad:pad + t]

    def vjp_w(g: Array) -> Array:
        return np.stack([xp[d:d + t].T @ g for d in range(k)])

    return _op(data, [(x, vjp_x), (w, vjp_w)])


def conv2d(x: Tensor, w: Tensor) -> Tensor:
    """Same-padded 3x3 correlation over a grid: [H, W, C_in] x [3, 3, C_in, C_out]."""
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected [H,W,Cin] and [kh,kw,Cin,Cout], got {x.shape} and {w.shape}")
    kh, kw, cin, cout = w.data.shape
    if cin != x.data.shape[2] or kh % 2 != 1 or kw % 2 != 1:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {w.shape}")
    h, wd = x.data.shape[:2]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((ph, ph), (pw, pw), (0, 0)))
    data = np.zeros((h, wd, cout))
    for a in range(kh):
        for b in range(kw):
            patch = xp[a:a + h, b:b + wd].reshape(h * wd, cin)
            data += (patch @ w.data[a, b]).reshape(h, wd, cout)

    def vjp_x(g: Array) -> Array:
        gp = np.zeros_like(xp)
        gf = g.reshape(h * wd, cout)
        for a in range(kh):
            for b in range(kw):
                gp[a:a + h, b:b + wd] += (gf @ w.data[a, b].T).reshape(h, wd, cin)
        return gp[ph:ph + h, pw:pw + wd]

    def vjp_w(g: Array) -> Array:
        gf = g.reshape(h * wd, cout)
        out = np.empty_like(w.data)
        for a in range(kh):
            for b in range(kw):
                out[a, b] = xp[a:a + h, b:b + wd].reshape(h * wd, cin).T @ gf
        return out

    return _op(data, [(x, vjp_x), (w, vjp_w)])


def max_pool1d(x: Tensor) -> Tensor:
    """Width-2 stride-2 max pooling along axis 0; ties go to the lower index."""
    if x.data.ndim != 2 or x.data.shape[0] % 2 != 0:
        raise ShapeError(f"max_pool1d: need even leading dim, got shape {x.shape}")
    t, c = x.data.shape
    pairs = x.data.reshape(t // 2, 2, c)
    idx = np.argmax(pairs, axis=1)  # argmax takes the first max: low index wins ties
    data = np.take_along_axis(pairs, idx[:, None, :], axis=1)[:, 0, :]

    def vjp(g: Array) -> Array:
        gp = np.zeros_like(pairs)
        np.put_along_axis(gp, idx[:, None, :], g[:, None, :], axis=1)
        return gp.reshape(t, c)

    return _op(data, [(x, vjp)])


def upsample1d(x: Tensor) -> Tensor:
    """Nearest-neighbour factor-2 upsampling along axis 0."""
    if x.data.ndim != 2:
        raise ShapeError(f"upsample1d: expected 2-d tensor, got shape {x.shape}")
    data = np.repeat(x.data, 2, axis=0)
    return _op(data, [(x, lambda g: g[0::2] + g[1::2])])


def weighted_sum(stack: Tensor, weights: Tensor) -> Tensor:
    """Collapse axis 0 of `stack` with a weight vector: sum_n w[n] * stack[n]."""
    if weights.data.ndim != 1 or stack.data.shape[0] != weights.data.shape[0]:
        raise ShapeError(
            f"weighted_sum: incompatible shapes {stack.shape} and {weights.shape}"
        )
    n = weights.data.shape[0]
    data = np.tensordot(weights.data, stack.data, axes=(0, 0))

    def vjp_stack(g: Array) -> Array:
        return weights.data.reshape((n,) + (1,) * g.ndim) * g[None]

    def vjp_weights(g: Array) -> Array:
        return stack.data.reshape(n, -1) @ g.ravel()

    return _op(data, [(stack, vjp_stack), (weights, vjp_weights)])


def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of scalar f and central differences.

    Error per coordinate is |analytic - numeric| / max(1, |analytic|); the
    caller asserts a threshold.
    """
    x = Tensor(point.data.copy(), requires_grad=True)
    y = f(x)
    if y.data.size != 1:
        raise ShapeError(f"grad_check: f must be scalar-valued, got shape {y.shape}")
    y.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
    flat = point.data.copy().ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(flat.reshape(point.data.shape))).item()
        flat[i] = orig - h
        fm = f(Tensor(flat.reshape(point.data.shape))).item()
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * h)
    a = analytic.ravel()
    rel = np.abs(a - numeric) / np.maximum(1.0, np.abs(a))
    return float(rel.max()) if rel.size else 0.0
