"""Dense float64 tensors with reverse-mode gradient accumulation.

Everything downstream (recurrent cells, attention, losses) is composed from
the primitive set in this module. Primitives are pure: given identical
inputs they reproduce identical outputs bit for bit, so a recorded
computation can be replayed exactly. Gradients are accumulated into the
tensors that participated in a computation when ``backward`` is called on a
scalar result; tensors that never entered the graph report an exactly-zero
gradient.

All data lives in 64-bit floats. Gradient checks at 1e-4 relative tolerance
are not reliable in 32-bit, and nothing here is large enough for speed to
matter more than correctness.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericalError, ShapeMismatchError


class Tensor:
    """N-dimensional float64 array, optionally tracked for gradients.

    ``requires_grad=True`` marks a leaf parameter. Results of primitive ops
    track gradients iff any input does, so pure data paths (augmentation,
    evaluation) build no graph at all.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; exactly zero for tensors unused by the loss."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable tensor. Scalar only."""
        if self.data.size != 1:
            raise ShapeMismatchError(
                f"backward() needs a scalar, got shape {self.data.shape}"
            )
        order = _toposort(self)
        self._grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bw is not None and node._grad is not None:
                node._bw(node._grad)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, shape):
        return reshape(self, shape)


def param(data, rng=None, scale: float | None = None, shape=None) -> Tensor:
    """Leaf tensor with gradient tracking.

    With ``rng`` and ``shape`` given, initializes uniform in [-scale, scale].
    """
    if rng is not None:
        if shape is None or scale is None:
            raise ValueError("rng initialization needs shape and scale")
        data = rng.uniform(-scale, scale, size=shape)
    return Tensor(data, requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, bw) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


def _toposort(root: Tensor):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _acc(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t._grad is None:
        t._grad = np.zeros_like(t.data)
    t._grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _acc(a, _unbroadcast(g / b.data, a.data.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(a.data / b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _acc(a, -g)

    return _node(-a.data, (a,), bw)


def tsum(a: Tensor) -> Tensor:
    def bw(g):
        _acc(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(a.data.sum(), (a,), bw)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size

    def bw(g):
        _acc(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _node(a.data.mean(), (a,), bw)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bw(g):
        _acc(a, g * out_data)

    return _node(out_data, (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(g):
        _acc(a, g / a.data)

    return _node(np.log(a.data), (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bw(g):
        _acc(a, g / (2.0 * out_data))

    return _node(out_data, (a,), bw)


# -- activations --------------------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split form avoids overflow in exp for large |x|
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bw(g):
        _acc(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g):
        _acc(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _acc(a, g * mask)

    return _node(np.where(mask, a.data, 0.0), (a,), bw)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "identity": lambda t: t}


def activation(a: Tensor, kind: str) -> Tensor:
    """Elementwise activation dispatch: sigmoid | tanh | relu | identity."""
    try:
        return _ACTIVATIONS[kind](a)
    except KeyError:
        raise DomainError(f"unknown activation kind {kind!r}") from None


# -- shape manipulation --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bw(g):
        _acc(a, g.reshape(old))

    return _node(a.data.reshape(shape), (a,), bw)


def _getitem(a: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _acc(a, full)

    return _node(a.data[index], (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _acc(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def take_channels(a: Tensor, idx) -> Tensor:
    """Select channels (axis 0) by index list; used for shuffles and feature masks."""
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _acc(a, full)

    return _node(a.data[idx], (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D @ 1-D matrix-vector product (the only case the pipeline needs)."""
    if a.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeMismatchError(
            f"matmul supports [m,n] @ [n], got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )

    def bw(g):
        _acc(a, np.outer(g, b.data))
        _acc(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bw)


# -- spatial primitives ---------------------------------------------------------


def conv2d(x: Tensor, kernels: Tensor, padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation of a [C_in,H,W] map with [C_out,C_in,k,k] kernels.

    Zero padding, square odd kernels, unit stride. ``dilation`` spaces the
    kernel taps (effective size k + (k-1)(dilation-1)).
    """
    xd, kd = x.data, kernels.data
    if xd.ndim != 3 or kd.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d expects input [C,H,W] and kernels [O,C,k,k], got {xd.shape} and {kd.shape}"
        )
    c_out, c_in, kh, kw = kd.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeMismatchError(f"kernels must be square with odd size, got {kh}x{kw}")
    if xd.shape[0] != c_in:
        raise ShapeMismatchError(
            f"input has {xd.shape[0]} channels but kernels expect {c_in}"
        )
    if padding < 0 or dilation < 1:
        raise ShapeMismatchError(f"bad padding={padding} / dilation={dilation}")
    k_eff = kh + (kh - 1) * (dilation - 1)
    h_out = xd.shape[1] + 2 * padding - k_eff + 1
    w_out = xd.shape[2] + 2 * padding - k_eff + 1
    if h_out < 1 or w_out < 1:
        raise ShapeMismatchError(
            f"conv2d output would be {h_out}x{w_out} for input {xd.shape}, "
            f"kernel {kh} (dilation {dilation}), padding {padding}"
        )

    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k_eff, k_eff), axis=(1, 2))
    win = win[:, :, :, ::dilation, ::dilation]  # [C,H',W',k,k]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(h_out * w_out, c_in * kh * kw)
    kmat = kd.reshape(c_out, c_in * kh * kw)
    out_data = (cols @ kmat.T).T.reshape(c_out, h_out, w_out)

    def bw(g):
        gmat = g.reshape(c_out, h_out * w_out)
        if kernels.requires_grad:
            _acc(kernels, (gmat @ cols).reshape(kd.shape))
        if x.requires_grad:
            dcols = (gmat.T @ kmat).reshape(h_out, w_out, c_in, kh, kw)
            dxp = np.zeros_like(xp)
            for a in range(kh):
                for b in range(kw):
                    dxp[:, a * dilation:a * dilation + h_out,
                        b * dilation:b * dilation + w_out] += dcols[:, :, :, a, b].transpose(2, 0, 1)
            if padding:
                dxp = dxp[:, padding:-padding, padding:-padding]
            _acc(x, dxp)

    return _node(out_data, (x, kernels), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean of a [C,H,W] map."""
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"global_avg_pool expects [C,H,W], got {x.data.shape}")
    _, h, w = x.data.shape
    n = h * w

    def bw(g):
        _acc(x, np.repeat(g, n).reshape(x.data.shape) / n)

    return _node(x.data.mean(axis=(1, 2)), (x,), bw)


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """dot(u, v) / (|u| |v|) for 1-D tensors of equal length."""
    if u.data.shape != v.data.shape or u.data.ndim != 1:
        raise ShapeMismatchError(
            f"cosine_similarity expects equal 1-D shapes, got {u.data.shape} and {v.data.shape}"
        )
    if not np.any(u.data) or not np.any(v.data):
        raise DomainError("cosine_similarity undefined for a zero-norm vector")
    nu = sqrt(tsum(mul(u, u)))
    nv = sqrt(tsum(mul(v, v)))
    return div(tsum(mul(u, v)), mul(nu, nv))


def softmax1d(logits: Tensor) -> Tensor:
    """Probability vector over a 1-D logit tensor (max-shifted for stability)."""
    shifted = sub(logits, Tensor(np.max(logits.data)))
    e = exp(shifted)
    return div(e, tsum(e))


# -- verification ---------------------------------------------------------------


def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative disagreement between reverse-mode and central differences.

    ``f`` maps the tensor to a scalar Tensor. Relative error per coordinate is
    |analytic - numeric| / max(1, |numeric|); the max over coordinates is
    returned. Raises NumericalError on non-finite intermediates.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise DomainError(f"eps {eps} outside [1e-7, 1e-3]")
    x.zero_grad()
    out = f(x)
    if not np.all(np.isfinite(out.data)):
        raise NumericalError("non-finite value in grad_check forward pass")
    out.backward()
    analytic = x.grad.copy()
    if not np.all(np.isfinite(analytic)):
        raise NumericalError("non-finite analytic gradient in grad_check")

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x).data)
        flat[i] = orig - eps
        lo = float(f(x).data)
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericalError("non-finite value in finite-difference probe")
        numeric = (hi - lo) / (2.0 * eps)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
