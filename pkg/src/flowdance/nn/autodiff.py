"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the tape in reverse topological order and accumulates gradients.
The op set is exactly what the models here need: broadcasting arithmetic,
matmul, pointwise nonlinearities, reductions, shape ops, im2col-based
conv2d/conv3d, nearest upsampling, and bilinear grid sampling. Convolution
and sampling route through flowdance.nn.backend, so they use the compiled
kernels when available.

Gradients are checked against central finite differences in the test
suite; keep new ops covered there.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from flowdance.nn import backend as K

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
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
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def _wrap(x, dtype=np.float32) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _from_op(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bw(g):
        _acc(a, g)
        _acc(b, g)

    return _from_op(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bw(g):
        _acc(a, g)
        _acc(b, -g)

    return _from_op(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bw(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _from_op(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bw(g):
        _acc(a, g / b.data)
        _acc(b, -g * a.data / (b.data * b.data))

    return _from_op(a.data / b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bw(g):
        _acc(a, -g)

    return _from_op(-a.data, (a,), bw)


def pow_scalar(a, p: float) -> Tensor:
    a = _wrap(a)
    p = float(p)

    def bw(g):
        _acc(a, g * p * np.power(a.data, p - 1.0))

    return _from_op(np.power(a.data, p), (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _acc(a, ga)
        _acc(b, gb)

    return _from_op(np.matmul(a.data, b.data), (a, b), bw)


# -- pointwise ----------------------------------------------------------


def exp(a) -> Tensor:
    a = _wrap(a)
    out_data = np.exp(a.data)

    def bw(g):
        _acc(a, g * out_data)

    return _from_op(out_data, (a,), bw)


def log(a) -> Tensor:
    a = _wrap(a)

    def bw(g):
        _acc(a, g / a.data)

    return _from_op(np.log(a.data), (a,), bw)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out_data = np.sqrt(a.data)

    def bw(g):
        _acc(a, g * 0.5 / out_data)

    return _from_op(out_data, (a,), bw)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def bw(g):
        _acc(a, g * (1.0 - out_data * out_data))

    return _from_op(out_data, (a,), bw)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype)

    def bw(g):
        _acc(a, g * out_data * (1.0 - out_data))

    return _from_op(out_data, (a,), bw)


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def bw(g):
        _acc(a, g * mask)

    return _from_op(a.data * mask, (a,), bw)


def silu(a) -> Tensor:
    return mul(a, sigmoid(a))


def abs_(a) -> Tensor:
    a = _wrap(a)
    sign = np.sign(a.data)

    def bw(g):
        _acc(a, g * sign)

    return _from_op(np.abs(a.data), (a,), bw)


# -- reductions ---------------------------------------------------------


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.data.shape))
            return
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, axes)
        _acc(a, np.broadcast_to(g, a.data.shape))

    return _from_op(out_data, (a,), bw)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(reduce_sum(a, axis, keepdims), 1.0 / count)


# -- shape ops ----------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    orig = a.data.shape

    def bw(g):
        _acc(a, g.reshape(orig))

    return _from_op(a.data.reshape(shape), (a,), bw)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = np.argsort(axes)

    def bw(g):
        _acc(a, g.transpose(inv))

    return _from_op(a.data.transpose(axes), (a,), bw)


def getitem(a, idx) -> Tensor:
    a = _wrap(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _acc(a, full)

    return _from_op(a.data[idx], (a,), bw)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _acc(t, piece)

    return _from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def pad(a, pad_width) -> Tensor:
    a = _wrap(a)
    slices = tuple(slice(lo, lo + dim) for (lo, _), dim in zip(pad_width, a.data.shape))

    def bw(g):
        _acc(a, g[slices])

    return _from_op(np.pad(a.data, pad_width), (a,), bw)


def broadcast_to(a, shape) -> Tensor:
    a = _wrap(a)

    def bw(g):
        _acc(a, g)

    return _from_op(np.broadcast_to(a.data, shape).copy(), (a,), bw)


# -- structured ops -----------------------------------------------------


def conv2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """x: (B, C, H, W); w: (OC, C, kh, kw); 'same' padding by default."""
    x, w = _wrap(x), _wrap(w)
    oc, c, kh, kw = w.data.shape
    if padding is None:
        padding = kh // 2
    s = int(stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    bsz, _, hp, wp = xp.shape
    oh = (hp - kh) // s + 1
    ow = (wp - kw) // s + 1
    cols = K.im2col2d(xp, kh, kw, s, s)  # (B, C*kh*kw, OH*OW)
    w2 = w.data.reshape(oc, -1)
    out_data = np.matmul(w2[None], cols).reshape(bsz, oc, oh, ow)
    parents = [x, w]
    if b is not None:
        b = _wrap(b)
        out_data = out_data + b.data.reshape(1, oc, 1, 1)
        parents.append(b)

    def bw(g):
        gf = g.reshape(bsz, oc, -1)
        if w.requires_grad:
            gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
            _acc(w, gw)
        if b is not None and b.requires_grad:
            _acc(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None], gf)
            dxp = K.col2im2d(dcols, bsz, c, hp, wp, kh, kw, s, s)
            if padding:
                dxp = dxp[:, :, padding:-padding, padding:-padding]
            _acc(x, dxp)

    return _from_op(out_data, tuple(parents), bw)


def conv3d(x, w, b=None, stride=(1, 1, 1), padding=None) -> Tensor:
    """x: (B, C, T, H, W); w: (OC, C, kt, kh, kw); 'same' padding by default."""
    x, w = _wrap(x), _wrap(w)
    oc, c, kt, kh, kw = w.data.shape
    if padding is None:
        padding = (kt // 2, kh // 2, kw // 2)
    pt, ph, pw = padding
    st, sh, sw = stride if isinstance(stride, tuple) else (stride,) * 3
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    bsz, _, tp, hp, wp = xp.shape
    ot = (tp - kt) // st + 1
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    cols = K.im2col3d(xp, kt, kh, kw, st, sh, sw)
    w2 = w.data.reshape(oc, -1)
    out_data = np.matmul(w2[None], cols).reshape(bsz, oc, ot, oh, ow)
    parents = [x, w]
    if b is not None:
        b = _wrap(b)
        out_data = out_data + b.data.reshape(1, oc, 1, 1, 1)
        parents.append(b)

    def bw(g):
        gf = g.reshape(bsz, oc, -1)
        if w.requires_grad:
            gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
            _acc(w, gw)
        if b is not None and b.requires_grad:
            _acc(b, g.sum(axis=(0, 2, 3, 4)))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None], gf)
            dxp = K.col2im3d(dcols, bsz, c, tp, hp, wp, kt, kh, kw, st, sh, sw)
            dxp = dxp[:, :, pt : tp - pt, ph : hp - ph, pw : wp - pw]
            _acc(x, dxp)

    return _from_op(out_data, tuple(parents), bw)


def upsample_nearest2d(x, factor: int = 2) -> Tensor:
    x = _wrap(x)
    f = int(factor)
    b, c, h, w = x.data.shape

    def bw(g):
        _acc(x, g.reshape(b, c, h, f, w, f).sum(axis=(3, 5)))

    out_data = np.repeat(np.repeat(x.data, f, axis=2), f, axis=3)
    return _from_op(out_data, (x,), bw)


def upsample_nearest3d_spatial(x, factor: int = 2) -> Tensor:
    """Upsample H and W of a (B, C, T, H, W) tensor; T untouched."""
    x = _wrap(x)
    f = int(factor)
    b, c, t, h, w = x.data.shape

    def bw(g):
        _acc(x, g.reshape(b, c, t, h, f, w, f).sum(axis=(4, 6)))

    out_data = np.repeat(np.repeat(x.data, f, axis=3), f, axis=4)
    return _from_op(out_data, (x,), bw)


def grid_sample(src, coords) -> Tensor:
    """Bilinear sampling of src (B,C,H,W) at pixel coords (B,OH,OW,2)."""
    src, coords = _wrap(src), _wrap(coords)
    out_data = K.grid_sample_forward(src.data, coords.data)

    def bw(g):
        gsrc, gcoords = K.grid_sample_backward(src.data, coords.data, g)
        _acc(src, gsrc)
        _acc(coords, gcoords)

    return _from_op(out_data, (src, coords), bw)


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy; logits (B, K), labels int (B,)."""
    labels = np.asarray(labels)
    shift = logits.data.max(axis=1, keepdims=True)  # constant for stability
    z = sub(logits, Tensor(shift))
    log_denom = log(reduce_sum(exp(z), axis=1, keepdims=True))
    logp = sub(z, log_denom)
    picked = getitem(logp, (np.arange(labels.shape[0]), labels))
    return neg(reduce_mean(picked))
