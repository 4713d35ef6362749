"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and records the op that produced it; backward()
walks the tape in reverse topological order and accumulates gradients into
every tensor with requires_grad=True. Only the ops needed by the networks
and losses in this package are implemented. dtype follows the inputs, so
the same graph code runs in float32 for training and float64 for
finite-difference checks.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, np.generic):
            data = np.asarray(data)
        elif not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float32)
        self.data = data
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

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        _accum(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add(self, -other)
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        return mul(self, powi(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_astensor(other), powi(self, -1.0))

    def __pow__(self, e):
        return powi(self, e)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"


def _astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad += g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        def bwd_s(g):
            _accum(a, g)
        return _make(a.data + b, (a,), bwd_s)
    a, b = _astensor(a), _astensor(b)
    data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd)


def neg(a) -> Tensor:
    a = _astensor(a)

    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        def bwd_s(g):
            _accum(a, g * b)
        return _make(a.data * b, (a,), bwd_s)
    a, b = _astensor(a), _astensor(b)
    data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd)


def powi(a, e: float) -> Tensor:
    a = _astensor(a)
    e = float(e)
    data = a.data ** e

    def bwd(g):
        _accum(a, g * e * a.data ** (e - 1.0))

    return _make(data, (a,), bwd)


def exp(a) -> Tensor:
    a = _astensor(a)
    data = np.exp(a.data)

    def bwd(g):
        _accum(a, g * data)

    return _make(data, (a,), bwd)


def log(a) -> Tensor:
    a = _astensor(a)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def tanh(a) -> Tensor:
    a = _astensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), bwd)


def relu(a) -> Tensor:
    a = _astensor(a)
    mask = a.data > 0

    def bwd(g):
        _accum(a, g * mask)

    return _make(a.data * mask, (a,), bwd)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _astensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data)

    def bwd(g):
        _accum(a, np.where(mask, g, slope * g))

    return _make(data, (a,), bwd)


def abs_(a) -> Tensor:
    a = _astensor(a)
    sign = np.sign(a.data)

    def bwd(g):
        _accum(a, g * sign)

    return _make(np.abs(a.data), (a,), bwd)


# reductions and shape ops -------------------------------------------


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = _astensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(data, (a,), bwd)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _astensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(data.size, 1)

    def bwd(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accum(a, np.broadcast_to(g / count, a.shape))

    return _make(data, (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = _astensor(a)
    old = a.shape

    def bwd(g):
        _accum(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), bwd)


def slice_(a, idx) -> Tensor:
    a = _astensor(a)

    def bwd(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        full[idx] = g
        _accum(a, full)

    return _make(a.data[idx], (a,), bwd)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_astensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def bwd(g):
        start = 0
        for t, n in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            _accum(t, g[tuple(sl)])
            start += n

    return _make(data, tuple(tensors), bwd)


def matmul(a, b) -> Tensor:
    a, b = _astensor(a), _astensor(b)
    data = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), bwd)


# softmax family ------------------------------------------------------


def log_softmax(a, axis: int = 1) -> Tensor:
    a = _astensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def bwd(g):
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(data, (a,), bwd)


def softmax(a, axis: int = 1) -> Tensor:
    a = _astensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - dot))

    return _make(data, (a,), bwd)


# spatial ops ---------------------------------------------------------


def _pad_reflect_backward(g: np.ndarray, ph: int, pw: int) -> np.ndarray:
    """Adjoint of np.pad(mode='reflect') on the last two axes. Axes fold
    sequentially (corner pads route through both reflections); the border
    index mapping is read off np.pad itself so degenerate sizes stay exact."""
    Hp, Wp = g.shape[-2], g.shape[-1]
    H, W = Hp - 2 * ph, Wp - 2 * pw
    tmp = g[..., ph:ph + H, :].copy()
    if ph:
        src_h = np.pad(np.arange(H), (ph, ph), mode="reflect")
        for k in list(range(ph)) + list(range(ph + H, Hp)):
            tmp[..., src_h[k], :] += g[..., k, :]
    out = tmp[..., :, pw:pw + W].copy()
    if pw:
        src_w = np.pad(np.arange(W), (pw, pw), mode="reflect")
        for k in list(range(pw)) + list(range(pw + W, Wp)):
            out[..., :, src_w[k]] += tmp[..., :, k]
    return out


def _pad2d(x: np.ndarray, p: int, reflect: bool) -> np.ndarray:
    """Pad the last two axes; specialized p=1 fast path (np.pad is slow)."""
    if p == 1:
        N, C, H, W = x.shape
        out = np.zeros((N, C, H + 2, W + 2), dtype=x.dtype)
        out[:, :, 1:-1, 1:-1] = x
        if reflect:
            t = 1 if H > 1 else 0
            l = 1 if W > 1 else 0
            out[:, :, 0, 1:-1] = x[:, :, t, :]
            out[:, :, -1, 1:-1] = x[:, :, H - 1 - t, :]
            out[:, :, :, 0] = out[:, :, :, 1 + l]
            out[:, :, :, -1] = out[:, :, :, -2 - l]
        return out
    mode = "reflect" if reflect else "constant"
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode=mode)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 1,
           pad_mode: str = "reflect") -> Tensor:
    """2-D convolution, NCHW x OCkk -> NOHW. Fused primitive: padding,
    correlation and bias are one tape node with a hand-written backward.

    Internally works channels-last with an explicit im2col buffer so both
    directions are single GEMMs; the buffer is kept for the weight gradient
    only when the weight requires grad.
    """
    x, w = _astensor(x), _astensor(w)
    parents = [x, w]
    if b is not None:
        b = _astensor(b)
        parents.append(b)
    N, C, H, W = x.shape
    O, C2, kh, kw = w.shape
    assert C == C2, f"conv2d channel mismatch: input {C}, weight {C2}"
    s, p = stride, padding
    if p:
        xp = _pad2d(x.data, p, pad_mode == "reflect")
    else:
        xp = x.data
    Hp, Wp = xp.shape[2], xp.shape[3]
    Ho = (Hp - kh) // s + 1
    Wo = (Wp - kw) // s + 1
    xt = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))  # (N,Hp,Wp,C)
    cols = np.empty((N, Ho, Wo, kh * kw, C), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i * kw + j, :] = xt[:, i:i + s * Ho:s, j:j + s * Wo:s, :]
    cols = cols.reshape(N * Ho * Wo, kh * kw * C)
    wt = np.ascontiguousarray(w.data.transpose(2, 3, 1, 0)).reshape(kh * kw * C, O)
    out = (cols @ wt).reshape(N, Ho, Wo, O)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if b is not None:
        out += b.data.reshape(1, O, 1, 1)
    cols_saved = cols if w.requires_grad else None

    def bwd(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(N * Ho * Wo, O)
        if w.requires_grad:
            dw = (cols_saved.T @ gt).reshape(kh, kw, C, O)
            _accum(w, np.ascontiguousarray(dw.transpose(3, 2, 0, 1)))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (gt @ wt.T).reshape(N, Ho, Wo, kh * kw, C)
            dxt = np.zeros((N, Hp, Wp, C), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxt[:, i:i + s * Ho:s, j:j + s * Wo:s, :] += dcols[:, :, :, i * kw + j, :]
            dxp = np.ascontiguousarray(dxt.transpose(0, 3, 1, 2))
            if p:
                if pad_mode == "reflect":
                    dx = _pad_reflect_backward(dxp, p, p)
                else:
                    dx = dxp[:, :, p:-p, p:-p]
            else:
                dx = dxp
            _accum(x, dx)

    return _make(out, tuple(parents), bwd)


def avg_pool2d(x, k: int = 2) -> Tensor:
    x = _astensor(x)
    N, C, H, W = x.shape
    assert H % k == 0 and W % k == 0
    data = x.data.reshape(N, C, H // k, k, W // k, k).mean(axis=(3, 5))

    def bwd(g):
        gexp = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        _accum(x, gexp)

    return _make(data, (x,), bwd)


def upsample_nearest2d(x, scale: int = 2) -> Tensor:
    x = _astensor(x)
    N, C, H, W = x.shape
    data = np.repeat(np.repeat(x.data, scale, axis=2), scale, axis=3)

    def bwd(g):
        _accum(x, g.reshape(N, C, H, scale, W, scale).sum(axis=(3, 5)))

    return _make(data, (x,), bwd)
