"""Shaped-array engine with reverse-mode differentiation.

Tensors wrap numpy arrays and record the ops applied to them. Backward
closures are themselves written in terms of tensor ops, so running a
backward sweep with ``create_graph=True`` yields gradients that are graph
nodes; differentiating through a gradient (as the WGAN gradient penalty
requires) then works with no special casing.

Only the op set needed by the translation networks is provided; there is
no general broadcasting beyond what those ops use, and no view semantics:
every op allocates its output.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class ShapeError(ValueError):
    """Raised when op inputs do not conform; message names the op and shapes."""


# Grad mode is a stack so backward sweeps can locally disable recording.
_GRAD_MODE = [True]


def grad_enabled() -> bool:
    return _GRAD_MODE[-1]


class _GradMode:
    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        _GRAD_MODE.append(self.enabled)
        return self

    def __exit__(self, *exc):
        _GRAD_MODE.pop()
        return False


def no_grad() -> _GradMode:
    """Context manager: ops inside record nothing on the graph."""
    return _GradMode(False)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for the scalar-heavy loss code.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents) -> Tensor:
    """Create an op output; records parents only when tracking applies."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def _const(arr) -> Tensor:
    """Non-differentiable tensor from raw data (masks, samples, one-hots)."""
    return Tensor(arr)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def _sum_to(g: Tensor, shape) -> Tensor:
    """Reduce a broadcast gradient back to `shape` (adjoint of broadcasting)."""
    if g.data.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.data.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.data.shape != shape:
        g = reshape(g, shape)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data + b.data, (a, b))
    if out.requires_grad:
        out._bwd = lambda g: (_sum_to(g, a.data.shape), _sum_to(g, b.data.shape))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data - b.data, (a, b))
    if out.requires_grad:
        out._bwd = lambda g: (_sum_to(g, a.data.shape), _sum_to(neg(g), b.data.shape))
    return out


def neg(a: Tensor) -> Tensor:
    out = _make(-a.data, (a,))
    if out.requires_grad:
        out._bwd = lambda g: (neg(g),)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data * b.data, (a, b))
    if out.requires_grad:
        out._bwd = lambda g: (_sum_to(mul(g, b), a.data.shape),
                              _sum_to(mul(g, a), b.data.shape))
    return out


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _make(a.data * c, (a,))
    if out.requires_grad:
        out._bwd = lambda g: (mul_scalar(g, c),)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = _make(a.data + float(c), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (g,)
    return out


def pow_const(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = _make(a.data ** p, (a,))
    if out.requires_grad:
        out._bwd = lambda g: (mul_scalar(mul(g, pow_const(a, p - 1.0)), p),)
    return out


def sqrt(a: Tensor) -> Tensor:
    return pow_const(a, 0.5)


def exp(a: Tensor) -> Tensor:
    out = _make(np.exp(a.data), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (mul(g, out),)
    return out


def log(a: Tensor) -> Tensor:
    out = _make(np.log(a.data), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (mul(g, pow_const(a, -1.0)),)
    return out


def relu(a: Tensor) -> Tensor:
    out = _make(np.maximum(a.data, 0.0), (a,))
    if out.requires_grad:
        mask = _const((a.data > 0).astype(a.data.dtype))
        out._bwd = lambda g: (mul(g, mask),)
    return out


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    out = _make(np.where(a.data > 0, a.data, slope * a.data), (a,))
    if out.requires_grad:
        factor = _const(np.where(a.data > 0, 1.0, slope).astype(a.data.dtype))
        out._bwd = lambda g: (mul(g, factor),)
    return out


def tanh(a: Tensor) -> Tensor:
    out = _make(np.tanh(a.data), (a,))
    if out.requires_grad:
        # d tanh = 1 - tanh^2, expressed on the output node for 2nd order
        out._bwd = lambda g: (mul(g, add_scalar(neg(pow_const(out, 2.0)), 1.0)),)
    return out


def absolute(a: Tensor) -> Tensor:
    out = _make(np.abs(a.data), (a,))
    if out.requires_grad:
        # sign(0) = 0: L1 subgradient at exact zeros is defined as zero
        sgn = _const(np.sign(a.data))
        out._bwd = lambda g: (mul(g, sgn),)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: non-conforming shapes {a.data.shape} @ {b.data.shape}")
    out = _make(a.data @ b.data, (a, b))
    if out.requires_grad:
        out._bwd = lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g))
    return out


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.data.ndim))[::-1]
    inv = tuple(int(i) for i in np.argsort(axes))
    out = _make(np.transpose(a.data, axes), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (transpose(g, inv),)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = _make(a.data.reshape(shape), (a,))
    if out.requires_grad:
        orig = a.data.shape
        out._bwd = lambda g: (reshape(g, orig),)
    return out


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        orig = a.data.shape

        def bwd(g):
            if axis is None:
                kept = (1,) * len(orig)
            elif keepdims:
                kept = g.data.shape
            else:
                ax = axis if isinstance(axis, tuple) else (axis,)
                ax = tuple(x % len(orig) for x in ax)
                kept = tuple(1 if i in ax else s for i, s in enumerate(orig))
            return (broadcast_to(reshape(g, kept), orig),)

        out._bwd = bwd
    return out


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _make(np.broadcast_to(a.data, shape), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (_sum_to(g, a.data.shape),)
    return out


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for x in ax:
            n *= a.data.shape[x]
    return mul_scalar(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def slice_(a: Tensor, idx) -> Tensor:
    out = _make(np.ascontiguousarray(a.data[idx]), (a,))
    if out.requires_grad:
        orig = a.data.shape
        out._bwd = lambda g: (scatter(g, orig, idx),)
    return out


def scatter(a: Tensor, shape, idx) -> Tensor:
    """Place `a` into zeros of `shape` at basic-slicing index `idx`."""
    data = np.zeros(shape, dtype=a.data.dtype)
    data[idx] = a.data
    out = _make(data, (a,))
    if out.requires_grad:
        out._bwd = lambda g: (slice_(g, idx),)
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        s = list(t.data.shape)
        s[axis] = base[axis]
        if s != base:
            raise ShapeError(
                f"concat: shapes {[t.data.shape for t in tensors]} differ off axis {axis}")
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        nd = out.data.ndim

        def bwd(g):
            grads = []
            for i in range(len(sizes)):
                idx = tuple(
                    slice(offsets[i], offsets[i + 1]) if d == axis % nd else slice(None)
                    for d in range(nd))
                grads.append(slice_(g, idx))
            return tuple(grads)

        out._bwd = bwd
    return out


# -- convolution plumbing ----------------------------------------------------

def _conv_geometry(h, w, kh, kw, stride, pad):
    # floor((H + 2p - kh)/s) + 1: trailing rows that do not fit are dropped
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho <= 0 or wo <= 0 or kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(
            f"conv: kernel {kh}x{kw} stride {stride} pad {pad} does not fit input {h}x{w}")
    return ho, wo


def _im2col_data(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho, wo = _conv_geometry(h, w, kh, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    sn, sc, sh, sw = xp.strides
    view = as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
    )
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, ho * wo)


def _col2im_data(cols, x_shape, kh, kw, stride, pad):
    n, c, h, w = x_shape
    ho, wo = _conv_geometry(h, w, kh, kw, stride, pad)
    cols6 = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols6[:, :, i, j]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
    return xp


def im2col(a: Tensor, kh, kw, stride, pad) -> Tensor:
    """Unfold NCHW into (N, C*kh*kw, L) patch columns; adjoint is col2im."""
    out = _make(_im2col_data(a.data, kh, kw, stride, pad), (a,))
    if out.requires_grad:
        x_shape = a.data.shape
        out._bwd = lambda g: (col2im(g, x_shape, kh, kw, stride, pad),)
    return out


def col2im(a: Tensor, x_shape, kh, kw, stride, pad) -> Tensor:
    """Scatter-add patch columns back to NCHW; adjoint is im2col."""
    out = _make(_col2im_data(a.data, x_shape, kh, kw, stride, pad), (a,))
    if out.requires_grad:
        out._bwd = lambda g: (im2col(g, kh, kw, stride, pad),)
    return out


# ---------------------------------------------------------------------------
# network-level ops
# ---------------------------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x (N, din) @ w (din, dout) + b (dout,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense: input {x.data.shape} does not match weight {w.data.shape}")
    y = matmul(x, w)
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"dense: bias {b.data.shape} does not match weight {w.data.shape}")
        y = add(y, b)
    return y


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """NCHW convolution, kernel (Cout, Cin, kh, kw)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input/kernel, got {x.data.shape}, {w.data.shape}")
    n, c, h, wd = x.data.shape
    cout, cin, kh, kw = w.data.shape
    if c != cin:
        raise ShapeError(f"conv2d: input channels {c} != kernel channels {cin} "
                         f"(input {x.data.shape}, kernel {w.data.shape})")
    ho, wo = _conv_geometry(h, wd, kh, kw, stride, pad)
    cols = im2col(x, kh, kw, stride, pad)                 # (N, C*kh*kw, L)
    cols = reshape(transpose(cols, (1, 0, 2)), (cin * kh * kw, n * ho * wo))
    wmat = reshape(w, (cout, cin * kh * kw))
    y = matmul(wmat, cols)                                # (Cout, N*L)
    y = transpose(reshape(y, (cout, n, ho * wo)), (1, 0, 2))
    y = reshape(y, (n, cout, ho, wo))
    if b is not None:
        if b.data.shape != (cout,):
            raise ShapeError(f"conv2d: bias {b.data.shape} does not match kernel {w.data.shape}")
        y = add(y, reshape(b, (1, cout, 1, 1)))
    return y


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None,
                     stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed NCHW convolution, kernel (Cin, Cout, kh, kw).

    Output spatial size is (H-1)*stride - 2*pad + kh: the exact adjoint of
    the matching forward convolution.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d: need 4-d input/kernel, got "
                         f"{x.data.shape}, {w.data.shape}")
    n, c, h, wd = x.data.shape
    cin, cout, kh, kw = w.data.shape
    if c != cin:
        raise ShapeError(f"conv_transpose2d: input channels {c} != kernel channels {cin} "
                         f"(input {x.data.shape}, kernel {w.data.shape})")
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (wd - 1) * stride - 2 * pad + kw
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d: output {ho}x{wo} not positive")
    x2 = reshape(transpose(x, (1, 0, 2, 3)), (cin, n * h * wd))
    wmat = reshape(w, (cin, cout * kh * kw))
    cols = matmul(transpose(wmat), x2)                    # (Cout*kh*kw, N*L)
    cols = transpose(reshape(cols, (cout * kh * kw, n, h * wd)), (1, 0, 2))
    y = col2im(cols, (n, cout, ho, wo), kh, kw, stride, pad)
    if b is not None:
        if b.data.shape != (cout,):
            raise ShapeError(f"conv_transpose2d: bias {b.data.shape} does not match kernel "
                             f"{w.data.shape}")
        y = add(y, reshape(b, (1, cout, 1, 1)))
    return y


def instance_stats(x: Tensor):
    """Per-(sample, channel) spatial mean and population std of NCHW input."""
    if x.data.ndim != 4:
        raise ShapeError(f"instance_stats: need NCHW input, got {x.data.shape}")
    if x.data.shape[2] * x.data.shape[3] < 2:
        raise ShapeError(f"instance_stats: spatial size {x.data.shape[2:]} too small "
                         "(statistics need more than one element)")
    m = mean(x, axis=(2, 3), keepdims=True)
    var = mean(pow_const(sub(x, m), 2.0), axis=(2, 3), keepdims=True)
    return m, sqrt(var)


def spatial_normalize(x: Tensor, eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(var + eps) per sample and channel."""
    if x.data.ndim != 4:
        raise ShapeError(f"spatial_normalize: need NCHW input, got {x.data.shape}")
    if x.data.shape[2] * x.data.shape[3] < 2:
        raise ShapeError(f"spatial_normalize: spatial size {x.data.shape[2:]} too small "
                         "(statistics need more than one element)")
    m = mean(x, axis=(2, 3), keepdims=True)
    var = mean(pow_const(sub(x, m), 2.0), axis=(2, 3), keepdims=True)
    inv = pow_const(add_scalar(var, eps), -0.5)
    return mul(sub(x, m), inv)


def affine_per_channel(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Per-channel y = scale*x + shift; scale/shift are (C,) or (N, C)."""
    if x.data.ndim != 4:
        raise ShapeError(f"affine_per_channel: need NCHW input, got {x.data.shape}")
    n, c = x.data.shape[:2]
    for name, t in (("scale", scale), ("shift", shift)):
        if t.data.shape not in ((c,), (n, c)):
            raise ShapeError(f"affine_per_channel: {name} {t.data.shape} does not fit "
                             f"input {x.data.shape}")
    s4 = reshape(scale, (1, c, 1, 1) if scale.data.shape == (c,) else (n, c, 1, 1))
    t4 = reshape(shift, (1, c, 1, 1) if shift.data.shape == (c,) else (n, c, 1, 1))
    return add(mul(x, s4), t4)


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over every element."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l1_mean: shapes {a.data.shape} vs {b.data.shape}")
    return mean(absolute(sub(a, b)))


def l2_norm_mean(a: Tensor, b: Tensor) -> Tensor:
    """Per-sample Euclidean norm of (a - b), averaged over the batch."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l2_norm_mean: shapes {a.data.shape} vs {b.data.shape}")
    n = a.data.shape[0]
    d = reshape(sub(a, b), (n, int(np.prod(a.data.shape[1:]))))
    return mean(sqrt(tsum(pow_const(d, 2.0), axis=1)))


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of (N, k) logits against integer targets."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_xent: need (N, k) logits, got {logits.data.shape}")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.data.shape
    if targets.shape[0] != n:
        raise ShapeError(f"softmax_xent: {targets.shape[0]} targets for {n} logit rows")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= k:
        raise IndexError(f"softmax_xent: target out of range [0, {k})")
    # detached max-shift: logsumexp value and derivative are shift-invariant
    shift = _const(logits.data.max(axis=1, keepdims=True))
    z = sub(logits, broadcast_to(shift, logits.data.shape))
    lse = log(tsum(exp(z), axis=1, keepdims=True))
    logp = sub(z, broadcast_to(lse, z.data.shape))
    onehot = _const(np.eye(k, dtype=logits.data.dtype)[targets])
    return mul_scalar(tsum(mul(logp, onehot)), -1.0 / n)


def interpolate_pair(a: Tensor, b: Tensor, u) -> Tensor:
    """Per-sample convex combination u*a + (1-u)*b; u is a constant (N,) vector."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"interpolate_pair: shapes {a.data.shape} vs {b.data.shape}")
    u = np.asarray(u, dtype=a.data.dtype).reshape(-1)
    if u.shape[0] != a.data.shape[0]:
        raise ShapeError(f"interpolate_pair: {u.shape[0]} weights for batch {a.data.shape[0]}")
    u4 = _const(u.reshape((-1,) + (1,) * (a.data.ndim - 1)))
    one_minus = _const(1.0 - u4.data)
    return add(mul(a, broadcast_to(u4, a.data.shape)),
               mul(b, broadcast_to(one_minus, b.data.shape)))


# ---------------------------------------------------------------------------
# backward sweep
# ---------------------------------------------------------------------------

def _toposort(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _sweep(loss: Tensor, create_graph: bool):
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    topo = _toposort(loss)
    grads = {id(loss): Tensor(np.ones_like(loss.data))}
    with _GradMode(create_graph):
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None or node._bwd is None:
                continue
            for p, ig in zip(node._parents, node._bwd(g)):
                if ig is None or not p.requires_grad:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = ig if acc is None else add(acc, ig)
    return topo, grads


def backward(loss: Tensor, create_graph: bool = False) -> None:
    """Accumulate gradients into `.grad` of every reachable requires_grad leaf."""
    topo, grads = _sweep(loss, create_graph)
    for node in topo:
        if node._bwd is None and node.requires_grad:
            g = grads.get(id(node))
            if g is None:
                continue
            if node.grad is None:
                node.grad = Tensor(g.data)
            else:
                node.grad = Tensor(node.grad.data + g.data)


def grad_of(loss: Tensor, wrt, create_graph: bool = False):
    """Gradients of scalar `loss` for each tensor in `wrt`.

    Does not touch `.grad`. Tensors that do not participate in the graph
    get zero gradients. With create_graph=True the returned tensors are
    themselves differentiable graph nodes.
    """
    _, grads = _sweep(loss, create_graph)
    out = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# op registry: name -> callable(inputs, attrs)
# ---------------------------------------------------------------------------

OP_KINDS = (
    "conv2d", "conv_transpose2d", "dense", "relu", "leaky_relu", "tanh",
    "add", "mul_scalar", "concat", "instance_stats", "affine_per_channel",
    "l1_mean", "l2_norm_mean", "softmax_xent", "mean", "interpolate_pair",
)


def forward_op(kind: str, inputs, attrs: dict | None = None):
    """Apply a registered op by name; records it on the graph when tracked."""
    attrs = attrs or {}
    ins = [_as_tensor(x) for x in inputs]
    if kind == "conv2d":
        return conv2d(ins[0], ins[1], ins[2] if len(ins) > 2 else None,
                      stride=attrs.get("stride", 1), pad=attrs.get("pad", 0))
    if kind == "conv_transpose2d":
        return conv_transpose2d(ins[0], ins[1], ins[2] if len(ins) > 2 else None,
                                stride=attrs.get("stride", 1), pad=attrs.get("pad", 0))
    if kind == "dense":
        return dense(ins[0], ins[1], ins[2] if len(ins) > 2 else None)
    if kind == "relu":
        return relu(ins[0])
    if kind == "leaky_relu":
        return leaky_relu(ins[0], attrs.get("slope", 0.01))
    if kind == "tanh":
        return tanh(ins[0])
    if kind == "add":
        return add(ins[0], ins[1])
    if kind == "mul_scalar":
        return mul_scalar(ins[0], attrs["value"])
    if kind == "concat":
        return concat(ins, axis=attrs.get("axis", 0))
    if kind == "instance_stats":
        return instance_stats(ins[0])
    if kind == "affine_per_channel":
        return affine_per_channel(ins[0], ins[1], ins[2])
    if kind == "l1_mean":
        return l1_mean(ins[0], ins[1])
    if kind == "l2_norm_mean":
        return l2_norm_mean(ins[0], ins[1])
    if kind == "softmax_xent":
        return softmax_xent(ins[0], attrs["targets"])
    if kind == "mean":
        return mean(ins[0], axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))
    if kind == "interpolate_pair":
        return interpolate_pair(ins[0], ins[1], attrs["u"])
    raise ValueError(f"forward_op: unknown kind {kind!r}")
