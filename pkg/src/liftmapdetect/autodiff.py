"""Minimal reverse-mode autodiff on dense float32 numpy arrays.

The op set is exactly what the denoising network needs: add/mul with
broadcasting, an affine map, stride-1 "same" conv2d, SiLU, mean,
sum-of-squares and channel concatenation. Graphs are built eagerly by the
op functions and are single-use: one backward pass per graph.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    """Raised when op inputs do not conform; names the op and both shapes."""

    def __init__(self, op, shape_a, shape_b):
        super().__init__(f"{op}: incompatible shapes {tuple(shape_a)} vs {tuple(shape_b)}")


class GraphReuseError(RuntimeError):
    """Raised on a second backward pass through an already-consumed graph."""


def _as_f32(data):
    arr = np.asarray(data, dtype=np.float32)
    return arr


class Tensor:
    """A float32 array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False):
        self.data = _as_f32(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = grad.astype(np.float32, copy=True)
        else:
            self.grad += grad

    def backward(self):
        """Backpropagate from a scalar loss to every reachable parameter."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._consumed:
            raise GraphReuseError("graph already consumed by a previous backward pass")

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                if node._consumed:
                    raise GraphReuseError("graph node reused across backward passes")
                node._backward(node.grad)
                node._consumed = True

    # Convenience operators used by the network code.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return add(self, mul(other, Tensor(np.float32(-1.0))))


def _make(data, parents, backward):
    out = Tensor(data)
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    if needs:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum grad over the axes numpy broadcast to reach grad.shape from shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatch("add", a.shape, b.shape) from None

    def backward(grad):
        if a.requires_grad or a._backward is not None:
            a._accumulate(_unbroadcast(grad, a.shape))
        if b.requires_grad or b._backward is not None:
            b._accumulate(_unbroadcast(grad, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatch("mul", a.shape, b.shape) from None

    def backward(grad):
        if a.requires_grad or a._backward is not None:
            a._accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad or b._backward is not None:
            b._accumulate(_unbroadcast(grad * a.data, b.shape))

    return _make(data, (a, b), backward)


def affine(x, w, b):
    """x @ w.T + b with x of shape (batch, d_in), w (d_out, d_in), b (d_out,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch("affine", x.shape, w.shape)
    if b.data.shape != (w.shape[0],):
        raise ShapeMismatch("affine bias", b.shape, (w.shape[0],))
    data = x.data @ w.data.T + b.data

    def backward(grad):
        if x.requires_grad or x._backward is not None:
            x._accumulate(grad @ w.data)
        if w.requires_grad or w._backward is not None:
            w._accumulate(grad.T @ x.data)
        if b.requires_grad or b._backward is not None:
            b._accumulate(grad.sum(axis=0))

    return _make(data, (x, w, b), backward)


def _im2col(x, k):
    """(B, C, H, W) -> (B*H*W, C*k*k) patch matrix under zero 'same' padding."""
    b, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * k * k)
    return np.ascontiguousarray(cols)


def conv2d_raw(x, w):
    """Plain-array stride-1 zero-padded 'same' convolution, no graph."""
    b, c, h, wd = x.shape
    co, ci, k, k2 = w.shape
    cols = _im2col(x, k)
    out = cols @ w.reshape(co, ci * k * k).T
    return np.ascontiguousarray(out.reshape(b, h, wd, co).transpose(0, 3, 1, 2))


def conv2d_nhwc_raw(x, wmat, k):
    """Inference-path convolution on channels-last input.

    x: (B, H, W, C); wmat: (k*k*C, C_out), the kernel flattened in
    (ky, kx, C) order. Channels-last keeps the patch gather copying long
    contiguous runs, which dominates inference cost otherwise.
    """
    b, h, wd, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * wd, k * k * c)
    out = cols @ wmat
    return out.reshape(b, h, wd, wmat.shape[1])


def conv2d(x, w):
    """Stride-1 zero-padded conv keeping H and W; w shaped (C_out, C_in, k, k)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d", x.shape, w.shape)
    b, c, h, wd = x.shape
    co, ci, k, k2 = w.shape
    if ci != c or k != k2 or k % 2 != 1:
        raise ShapeMismatch("conv2d", x.shape, w.shape)
    cols = _im2col(x.data, k)
    out = (cols @ w.data.reshape(co, ci * k * k).T).reshape(b, h, wd, co)
    data = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(grad):
        grad_r = grad.transpose(0, 2, 3, 1).reshape(b * h * wd, co)
        if w.requires_grad or w._backward is not None:
            w._accumulate((grad_r.T @ cols).reshape(co, ci, k, k))
        if x.requires_grad or x._backward is not None:
            # dL/dx is the 'same' convolution of the output grad with the
            # spatially flipped, channel-transposed kernel.
            w_flip = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
            x._accumulate(conv2d_raw(grad, w_flip))

    return _make(data, (x, w), backward)


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x.data))
    data = x.data * s

    def backward(grad):
        if x.requires_grad or x._backward is not None:
            x._accumulate(grad * (s * (1.0 + x.data * (1.0 - s))))

    return _make(data, (x,), backward)


def mean(x):
    data = np.float32(x.data.mean())
    n = x.data.size

    def backward(grad):
        if x.requires_grad or x._backward is not None:
            x._accumulate(np.full_like(x.data, grad / n))

    return _make(data, (x,), backward)


def sum_of_squares(x):
    data = np.float32(np.square(x.data, dtype=np.float32).sum())

    def backward(grad):
        if x.requires_grad or x._backward is not None:
            x._accumulate(grad * 2.0 * x.data)

    return _make(data, (x,), backward)


def reshape(x, shape):
    orig = x.shape
    data = x.data.reshape(shape)

    def backward(grad):
        if x.requires_grad or x._backward is not None:
            x._accumulate(grad.reshape(orig))

    return _make(data, (x,), backward)


def concat_channels(tensors):
    """Concatenate (B, C_i, H, W) tensors along the channel axis."""
    shapes = [t.shape for t in tensors]
    ref = shapes[0]
    for s in shapes[1:]:
        if len(s) != 4 or s[0] != ref[0] or s[2:] != ref[2:]:
            raise ShapeMismatch("concat_channels", ref, s)
    data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([s[1] for s in shapes])[:-1]

    def backward(grad):
        for t, g in zip(tensors, np.split(grad, splits, axis=1)):
            if t.requires_grad or t._backward is not None:
                t._accumulate(g)

    return _make(data, tuple(tensors), backward)
