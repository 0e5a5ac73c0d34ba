"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-free graph engine: every Tensor remembers its parent Tensors
and a vjp closure, and `backward` walks the graph in reverse topological
order. Training runs in float32; the identical graph code runs in float64
for gradient checking because all ops follow the dtype of their inputs.

Plain numpy arrays and python scalars passed to ops are treated as
constants (they never receive gradients).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from . import kernels

# Flip off to skip per-op NaN detection in hot loops.
NAN_CHECKS = True

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    __slots__ = ("data", "grad", "op", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None, op="leaf"):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.op = op
        self._parents = parents
        self._vjp = vjp
        if NAN_CHECKS and self.data.dtype.kind == "f" and np.isnan(self.data).any():
            raise NumericError(op)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _val(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _parents_of(*xs):
    return tuple(x for x in xs if isinstance(x, Tensor))


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, out, vjp_a, vjp_b, op):
    parents = _parents_of(a, b)
    va, vb = _val(a), _val(b)

    def vjp(g):
        grads = []
        if isinstance(a, Tensor):
            grads.append(_unbroadcast(vjp_a(g), va.shape))
        if isinstance(b, Tensor):
            grads.append(_unbroadcast(vjp_b(g), vb.shape))
        return grads

    return Tensor(out, parents, vjp, op)


def add(a, b):
    return _binary(a, b, _val(a) + _val(b), lambda g: g, lambda g: g, "add")


def sub(a, b):
    return _binary(a, b, _val(a) - _val(b), lambda g: g, lambda g: -g, "sub")


def mul(a, b):
    va, vb = _val(a), _val(b)
    return _binary(a, b, va * vb, lambda g: g * vb, lambda g: g * va, "mul")


def neg(a):
    return Tensor(-a.data, (a,), lambda g: [-g], "neg")


def matmul(a, b):
    va, vb = _val(a), _val(b)
    out = va @ vb

    def vjp(g):
        grads = []
        if isinstance(a, Tensor):
            ga = g @ np.swapaxes(vb, -1, -2)
            grads.append(_unbroadcast(ga, va.shape))
        if isinstance(b, Tensor):
            gb = np.swapaxes(va, -1, -2) @ g
            grads.append(_unbroadcast(gb, vb.shape))
        return grads

    return Tensor(out, _parents_of(a, b), vjp, "matmul")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup table[ids]; ids is a constant integer array."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return [gt]

    return Tensor(out, (table,), vjp, "embedding")


def row_select(t: Tensor, idx) -> Tensor:
    """Select rows of a 2-D tensor by a constant index vector."""
    idx = np.asarray(idx)
    out = t.data[idx]

    def vjp(g):
        gt = np.zeros_like(t.data)
        np.add.at(gt, idx, g)
        return [gt]

    return Tensor(out, (t,), vjp, "row_select")


def select_index(t: Tensor, ids) -> Tensor:
    """out[i] = t[i, ids[i]] for a 2-D tensor."""
    ids = np.asarray(ids)
    rows = np.arange(t.data.shape[0])
    out = t.data[rows, ids]

    def vjp(g):
        gt = np.zeros_like(t.data)
        np.add.at(gt, (rows, ids), g)
        return [gt]

    return Tensor(out, (t,), vjp, "select_index")


def getitem(t: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing only; each output element maps to one input."""
    out = t.data[key]

    def vjp(g):
        gt = np.zeros_like(t.data)
        gt[key] = g
        return [gt]

    return Tensor(out, (t,), vjp, "getitem")


def reshape(t: Tensor, shape) -> Tensor:
    orig = t.data.shape
    return Tensor(t.data.reshape(shape), (t,), lambda g: [g.reshape(orig)], "reshape")


def transpose(t: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return Tensor(np.transpose(t.data, axes), (t,), lambda g: [np.transpose(g, inv)], "transpose")


def concat(ts: Sequence[Tensor], axis: int) -> Tensor:
    datas = [x.data for x in ts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return list(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate(datas, axis=axis), tuple(ts), vjp, "concat")


def tsum(t: Tensor, axis=None, keepdims=False) -> Tensor:
    out = t.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [np.broadcast_to(g, t.data.shape).astype(t.data.dtype, copy=False)]

    return Tensor(out, (t,), vjp, "sum")


def tmean(t: Tensor, axis=None, keepdims=False) -> Tensor:
    out = t.data.mean(axis=axis, keepdims=keepdims)
    n = t.data.size if axis is None else t.data.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [(np.broadcast_to(g, t.data.shape) / n).astype(t.data.dtype, copy=False)]

    return Tensor(out, (t,), vjp, "mean")


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)
    return Tensor(y, (t,), lambda g: [g * (1.0 - y * y)], "tanh")


def _sigmoid_stable(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    y = _sigmoid_stable(t.data)
    return Tensor(y, (t,), lambda g: [g * y * (1.0 - y)], "sigmoid")


def gelu(t: Tensor) -> Tensor:
    """Smooth-ramp nonlinearity (tanh form of the Gaussian error linear unit)."""
    x = t.data
    u = _GELU_C * (x + _GELU_A * x**3)
    th = np.tanh(u)

    def vjp(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return [g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)]

    return Tensor(0.5 * x * (1.0 + th), (t,), vjp, "gelu")


def log(t: Tensor) -> Tensor:
    return Tensor(np.log(t.data), (t,), lambda g: [g / t.data], "log")


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    x = t.data
    mask = (x >= lo) & (x <= hi)
    return Tensor(np.clip(x, lo, hi), (t,), lambda g: [g * mask], "clip")


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    x = t.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return [y * (g - (g * y).sum(axis=axis, keepdims=True))]

    return Tensor(y, (t,), vjp, "softmax")


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    x = t.data
    s = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(s).sum(axis=axis, keepdims=True))
    y = s - lse

    def vjp(g):
        return [g - np.exp(y) * g.sum(axis=axis, keepdims=True)]

    return Tensor(y, (t,), vjp, "log_softmax")


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x = t.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data
    n = x.shape[-1]

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return [dx.astype(x.dtype, copy=False), dgain, dbias]

    return Tensor(out, (t, gain, bias), vjp, "layer_norm")


def dropout(t: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate <= 0."""
    if rate <= 0.0:
        return t
    keep = (rng.random(t.data.shape) >= rate).astype(t.data.dtype)
    scale = t.data.dtype.type(1.0 / (1.0 - rate))
    m = keep * scale
    return Tensor(t.data * m, (t,), lambda g: [g * m], "dropout")


def lstm_seq(xp: Tensor, w_hh: Tensor, lengths) -> Tensor:
    """LSTM over a padded batch; returns the final hidden state per row.

    xp is (B, T, 4h) with the input projection (incl. bias) precomputed;
    the recurrence itself runs in the kernel backend.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    h_seq, c_seq, gates, h_final = kernels.lstm_seq_forward(xp.data, w_hh.data, lengths)

    def vjp(g):
        dxp, dw = kernels.lstm_seq_backward(
            np.ascontiguousarray(g), h_seq, c_seq, gates, w_hh.data, lengths
        )
        return [dxp, dw]

    return Tensor(h_final, (xp, w_hh), vjp, "lstm_seq")


def bce(p1: Tensor, y, eps: float = 1e-7) -> Tensor:
    """Elementwise binary cross-entropy on probabilities, clamped to
    [eps, 1-eps]; `y` is a constant 0/1 array."""
    y = np.asarray(y, dtype=p1.data.dtype)
    pc = clip(p1, eps, 1.0 - eps)
    return neg(add(mul(log(pc), y), mul(log(sub(1.0, pc)), 1.0 - y)))


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable Tensor."""
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# Probability / loss helpers shared by models and evaluation (array-level,
# outside the graph).


def binary_class_probs(logit):
    """Class probabilities of a logistic output, branch-stable.

    Returns (p0, p1) with p1 = 1/(1+e^-logit); the larger side is computed
    as the complement so p0 + p1 == 1 exactly.
    """
    x = np.asarray(logit, dtype=np.float64)
    p0 = np.empty_like(x)
    p1 = np.empty_like(x)
    pos = x >= 0
    e = np.exp(-x[pos])
    p0[pos] = e / (1.0 + e)
    p1[pos] = 1.0 - p0[pos]
    e = np.exp(x[~pos])
    p1[~pos] = e / (1.0 + e)
    p0[~pos] = 1.0 - p1[~pos]
    if np.isscalar(logit) or np.ndim(logit) == 0:
        return float(p0), float(p1)
    return p0, p1


def bce_loss(p1, y, eps: float = 1e-7):
    """Binary cross-entropy -[y ln p + (1-y) ln(1-p)] with p clamped to
    [eps, 1-eps]."""
    p = np.clip(np.asarray(p1, dtype=np.float64), eps, 1.0 - eps)
    ya = np.asarray(y, dtype=np.float64)
    out = -(ya * np.log(p) + (1.0 - ya) * np.log(1.0 - p))
    if np.ndim(p1) == 0 and np.ndim(y) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Gradient evaluation entry points.


def evaluate_with_gradients(
    computation: Callable,
    params,
    inputs=None,
):
    """Run `computation(param_tensors, inputs)` and differentiate its loss.

    The computation returns either a scalar loss Tensor or a
    (loss, aux) pair. Returns ((loss_value, aux), grads) where grads maps
    every parameter name to an array (zeros when the loss does not depend
    on it).
    """
    values = params.values if hasattr(params, "values") else params
    leaves = {name: Tensor(arr, op=name) for name, arr in values.items()}
    result = computation(leaves, inputs)
    if isinstance(result, tuple):
        loss, aux = result
    else:
        loss, aux = result, None
    if not isinstance(loss, Tensor):
        raise ContractError("computation must return a Tensor loss")
    backward(loss)
    grads = {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
        for name, leaf in leaves.items()
    }
    return (float(loss.data.reshape(())), aux), grads


def finite_difference_grads(computation, values: dict, inputs=None, step: float = 1e-5):
    """Central-difference gradients in float64. Independent of backward()."""

    def loss_at(vals):
        leaves = {name: Tensor(arr, op=name) for name, arr in vals.items()}
        result = computation(leaves, inputs)
        loss = result[0] if isinstance(result, tuple) else result
        return float(loss.data.reshape(()))

    vals64 = {k: np.asarray(v, dtype=np.float64).copy() for k, v in values.items()}
    grads = {}
    for name, arr in vals64.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_at(vals64)
            flat[j] = orig - step
            down = loss_at(vals64)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def gradient_check(computation, values: dict, inputs=None, step: float = 1e-5):
    """Max relative error between backward() and central differences.

    Runs everything in float64; the relative error uses an absolute floor
    of 1e-5 so components with near-zero gradient do not dominate.
    """
    vals64 = {k: np.asarray(v, dtype=np.float64).copy() for k, v in values.items()}
    _, analytic = evaluate_with_gradients(computation, vals64, inputs)
    numeric = finite_difference_grads(computation, vals64, inputs, step=step)
    worst = 0.0
    for name in vals64:
        ga, gn = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-5)
        worst = max(worst, float((np.abs(ga - gn) / denom).max()))
    return worst
