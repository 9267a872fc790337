"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: only the primitives the taggers need, each with a
hand-written backward rule. Everything runs single-threaded on numpy and
is bit-deterministic for fixed inputs.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "no_grad",
    "matmul",
    "bmm",
    "embedding",
    "lstm_direction",
    "layer_norm",
    "softmax",
    "sigmoid",
    "tanh",
    "gelu",
    "log",
    "clamp_min",
    "concat",
    "reshape",
    "transpose",
    "flip_time",
    "gather_time",
    "dropout",
    "reduce_sum",
    "reduce_mean",
]

_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """A numpy float64 array plus an optional gradient buffer.

    Nodes created by primitive ops carry a backward closure; calling
    ``backward()`` on a scalar loss walks the graph in reverse topological
    order and accumulates gradients into every reachable leaf with
    ``requires_grad`` set.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar Tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None  # free interior buffers

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), Tensor(-1.0)))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, Tensor(-1.0)))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; divide by a scalar")
        return mul(self, Tensor(1.0 / float(other)))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """`a @ b` where b is a 2-D weight; a may carry leading batch dims."""
    if b.data.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand; use bmm for batched")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            k = a.data.shape[-1]
            n = g.shape[-1]
            b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, n))

    return Tensor._node(out_data, (a, b), backward)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over matching leading dimensions."""
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return Tensor._node(out_data, (a, b), backward)


# -- shape ops ----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return Tensor._node(out_data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    out_data = np.transpose(a.data, axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return Tensor._node(out_data, (a,), backward)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            if p.requires_grad:
                p._accumulate(piece)

    return Tensor._node(out_data, tuple(parts), backward)


def flip_time(a: Tensor) -> Tensor:
    """Reverse axis 1 (the time axis of a (B, K, F) tensor)."""
    out_data = a.data[:, ::-1].copy()

    def backward(g):
        a._accumulate(g[:, ::-1])

    return Tensor._node(out_data, (a,), backward)


def gather_time(a: Tensor, positions: np.ndarray) -> Tensor:
    """Pick one time step per batch row: (B,K,F), (B,) -> (B,F)."""
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, positions]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, positions), g)
        a._accumulate(ga)

    return Tensor._node(out_data, (a,), backward)


# -- reductions ---------------------------------------------------------------


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            ga = np.broadcast_to(g, a.data.shape)
        elif keepdims:
            ga = np.broadcast_to(g, a.data.shape)
        else:
            ga = np.broadcast_to(np.expand_dims(g, axis), a.data.shape)
        a._accumulate(ga.astype(np.float64))

    return Tensor._node(out_data, (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return reduce_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# -- pointwise nonlinearities ---------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._node(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._node(out_data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit: x * Phi(x), erf based."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accumulate(g * (cdf + x * pdf))

    return Tensor._node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return Tensor._node(out_data, (a,), backward)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    out_data = np.maximum(a.data, floor)

    def backward(g):
        a._accumulate(g * (a.data >= floor))

    return Tensor._node(out_data, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return Tensor._node(out_data, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; only call in training mode."""
    if p <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)
    out_data = a.data * keep

    def backward(g):
        a._accumulate(g * keep)

    return Tensor._node(out_data, (a,), backward)


# -- table lookup ---------------------------------------------------------------


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out_data = weight.data[ids]

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.data.shape[1]))
        weight._accumulate(gw)

    return Tensor._node(out_data, (weight,), backward)


# -- fused layers ---------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = gamma.data * xhat + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (dxhat - m1 - xhat * m2))

    return Tensor._node(out_data, (x, gamma, beta), backward)


def lstm_direction(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One LSTM direction over (B, K, E) input, returning (B, K, H) states.

    Gate layout along the 4H axis is [input, forget, cell, output]; the
    full sequence BPTT is fused here so a 64-step unroll costs one graph
    node instead of hundreds.
    """
    B, K, E = x.data.shape
    H = wh.data.shape[0]
    gates_x = (x.data.reshape(B * K, E) @ wx.data).reshape(B, K, 4 * H)

    i_s = np.empty((B, K, H))
    f_s = np.empty((B, K, H))
    g_s = np.empty((B, K, H))
    o_s = np.empty((B, K, H))
    c_s = np.empty((B, K, H))
    tc_s = np.empty((B, K, H))
    h_all = np.zeros((B, K + 1, H))

    c = np.zeros((B, H))
    for t in range(K):
        pre = gates_x[:, t, :] + h_all[:, t, :] @ wh.data + b.data
        i = 1.0 / (1.0 + np.exp(-pre[:, :H]))
        f = 1.0 / (1.0 + np.exp(-pre[:, H : 2 * H]))
        g = np.tanh(pre[:, 2 * H : 3 * H])
        o = 1.0 / (1.0 + np.exp(-pre[:, 3 * H :]))
        c = f * c + i * g
        tc = np.tanh(c)
        h_all[:, t + 1, :] = o * tc
        i_s[:, t], f_s[:, t], g_s[:, t], o_s[:, t] = i, f, g, o
        c_s[:, t], tc_s[:, t] = c, tc

    out_data = h_all[:, 1:, :].copy()

    def backward(gout):
        d_pre = np.empty((B, K, 4 * H))
        dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        dwh = np.zeros_like(wh.data)
        for t in range(K - 1, -1, -1):
            i, f, g, o = i_s[:, t], f_s[:, t], g_s[:, t], o_s[:, t]
            tc = tc_s[:, t]
            c_prev = c_s[:, t - 1] if t > 0 else np.zeros((B, H))
            dh = dh + gout[:, t, :]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            d_pre[:, t, :H] = di * i * (1.0 - i)
            d_pre[:, t, H : 2 * H] = df * f * (1.0 - f)
            d_pre[:, t, 2 * H : 3 * H] = dg * (1.0 - g * g)
            d_pre[:, t, 3 * H :] = do * o * (1.0 - o)
            dc = dc * f
            da = d_pre[:, t, :]
            dh = da @ wh.data.T
            if wh.requires_grad:
                dwh += h_all[:, t, :].T @ da
        flat = d_pre.reshape(B * K, 4 * H)
        if wx.requires_grad:
            wx._accumulate(x.data.reshape(B * K, E).T @ flat)
        if wh.requires_grad:
            wh._accumulate(dwh)
        if b.requires_grad:
            b._accumulate(flat.sum(axis=0))
        if x.requires_grad:
            x._accumulate((flat @ wx.data.T).reshape(B, K, E))

    return Tensor._node(out_data, (x, wx, wh, b), backward)
