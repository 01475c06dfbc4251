"""A small reverse-mode autodiff engine over float64 numpy arrays.

Graphs are built eagerly, one per batch, and thrown away after ``backward``.
Every op returns a new :class:`Node`; values are never mutated after the
forward pass. Only the ops the CBM pipeline needs are provided, and
broadcasting is limited to the row-wise bias add in :func:`dense`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, ValidationError

LOG_2PI = float(np.log(2.0 * np.pi))


class Node:
    """A value in the computation graph together with how to backpropagate into it."""

    __slots__ = ("value", "grad", "parents", "op", "_backward", "requires_grad", "stop_grad")

    def __init__(self, value, parents: Sequence["Node"] = (), op: str = "leaf",
                 backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
                 requires_grad: bool = False, stop_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.op = op
        self._backward = backward
        self.requires_grad = requires_grad
        self.stop_grad = stop_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape})"

    # Thin operator sugar; the named functions below are the real API.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def parameter(value) -> Node:
    return Node(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value) -> Node:
    return Node(np.array(value, dtype=np.float64))


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise and reductions


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _same_shape(a, b, "add")
    return Node(a.value + b.value, (a, b), "add", lambda g: (g, g))


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _same_shape(a, b, "sub")
    return Node(a.value - b.value, (a, b), "sub", lambda g: (g, -g))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return Node(av * bv, (a, b), "mul", lambda g: (g * bv, g * av))


def scale(a: Node, k: float) -> Node:
    k = float(k)
    return Node(a.value * k, (a,), "scale", lambda g: (g * k,))


def add_scalar(a: Node, k: float) -> Node:
    return Node(a.value + float(k), (a,), "add_scalar", lambda g: (g,))


def total(a: Node) -> Node:
    shape = a.shape
    return Node(a.value.sum(), (a,), "sum", lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Node) -> Node:
    n = a.value.size
    shape = a.shape
    return Node(a.value.mean(), (a,), "mean", lambda g: (np.full(shape, g / n),))


def row_sum(a: Node) -> Node:
    """Sum a [B×K] node over its columns, giving [B]."""
    if a.value.ndim != 2:
        raise DimensionError("row_sum expects a 2-d node")
    k = a.shape[1]
    return Node(a.value.sum(axis=1), (a,), "row_sum", lambda g: (np.repeat(g[:, None], k, axis=1),))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, (a,), "exp", lambda g: (g * out,))


def log(a: Node) -> Node:
    av = a.value
    if np.any(av <= 0):
        raise DomainError("log of non-positive value")
    return Node(np.log(av), (a,), "log", lambda g: (g / av,))


def relu(x: Node) -> Node:
    mask = x.value > 0
    return Node(np.where(mask, x.value, 0.0), (x,), "relu", lambda g: (g * mask,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split form avoids overflow in exp for large |v|
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Node) -> Node:
    s = _sigmoid(x.value)
    return Node(s, (x,), "sigmoid", lambda g: (g * s * (1.0 - s),))


def _logsumexp_rows(v: np.ndarray) -> np.ndarray:
    m = v.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(v - m).sum(axis=1, keepdims=True)))[:, 0]


def logsumexp_rows(x: Node) -> Node:
    """Row-wise log-sum-exp of a [B×M] node, giving [B]."""
    if x.value.ndim != 2:
        raise DimensionError("logsumexp_rows expects a 2-d node")
    out = _logsumexp_rows(x.value)
    soft = np.exp(x.value - out[:, None])
    return Node(out, (x,), "logsumexp", lambda g: (g[:, None] * soft,))


def stop_gradient(x: Node) -> Node:
    """Identity on values; nothing flows back through it."""
    return Node(x.value, (), "stop_gradient", None, stop_grad=True)


def binarize(x: Node, threshold: float = 0.0) -> Node:
    """1[x > threshold] with no gradient path (hard concepts)."""
    return Node((x.value > threshold).astype(np.float64), (), "binarize", None, stop_grad=True)


# ---------------------------------------------------------------------------
# layers and losses


def dense(W: Node, b: Node, x: Node) -> Node:
    """y = x Wᵀ + b for a single row [n] or a batch [B×n]."""
    W, b, x = as_node(W), as_node(b), as_node(x)
    if W.value.ndim != 2 or b.value.ndim != 1:
        raise DimensionError("dense expects W [m×n] and b [m]")
    m, n = W.shape
    if b.shape[0] != m:
        raise DimensionError(f"dense: bias length {b.shape[0]} != {m}")
    if x.value.ndim not in (1, 2) or x.shape[-1] != n:
        raise DimensionError(f"dense: input shape {x.shape} does not match W {W.shape}")
    Wv, xv = W.value, x.value
    out = xv @ Wv.T + b.value

    def backward(g):
        if xv.ndim == 1:
            return np.outer(g, xv), g, g @ Wv
        return g.T @ xv, g.sum(axis=0), g @ Wv

    return Node(out, (W, b, x), "dense", backward)


def _check_binary(t: np.ndarray, what: str) -> None:
    if not np.all((t == 0) | (t == 1)):
        raise ValidationError(f"{what} must be binary")


def bce_with_logits(logits: Node, targets) -> Node:
    """Mean binary cross-entropy, stable for any finite logit."""
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise DimensionError(f"bce_with_logits: {logits.shape} vs targets {t.shape}")
    _check_binary(t, "bce targets")
    l = logits.value
    # max(l,0) - l*t + log(1+exp(-|l|))
    vals = np.maximum(l, 0.0) - l * t + np.log1p(np.exp(-np.abs(l)))
    n = l.size
    s = _sigmoid(l)
    return Node(vals.mean(), (logits,), "bce", lambda g: (g * (s - t) / n,))


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Mean of -log softmax(logits)[label] over the batch."""
    y = np.asarray(labels)
    if logits.value.ndim != 2 or y.shape != (logits.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: {logits.shape} vs labels {y.shape}")
    k = logits.shape[1]
    if not np.issubdtype(y.dtype, np.integer) or np.any((y < 0) | (y >= k)):
        raise ValidationError(f"labels must be integers in [0, {k})")
    l = logits.value
    lse = _logsumexp_rows(l)
    rows = np.arange(len(y))
    loss = (lse - l[rows, y]).mean()
    p = np.exp(l - lse[:, None])
    p[rows, y] -= 1.0
    p /= len(y)
    return Node(loss, (logits,), "softmax_ce", lambda g: (g * p,))


def reparam_sample(mu: Node, log_sigma: Node, eps) -> Node:
    """mu + exp(log_sigma) * eps, with eps drawn by the caller."""
    e = np.asarray(eps, dtype=np.float64)
    if mu.shape != log_sigma.shape or e.shape != mu.shape:
        raise DimensionError("reparam_sample: mu, log_sigma and eps must share a shape")
    sig = np.exp(log_sigma.value)
    return Node(mu.value + sig * e, (mu, log_sigma), "reparam", lambda g: (g, g * sig * e))


def gauss_logpdf_diag(c: Node, mu: Node, sigma: Node) -> Node:
    """Row-wise diagonal Gaussian log density log N(c_i; mu_i, diag(sigma_i²)) -> [B]."""
    c, mu, sigma = as_node(c), as_node(mu), as_node(sigma)
    if not (c.shape == mu.shape == sigma.shape) or c.value.ndim != 2:
        raise DimensionError("gauss_logpdf_diag: c, mu, sigma must be equal [B×K]")
    s = sigma.value
    if np.any(s <= 0):
        raise DomainError("sigma must be strictly positive")
    d = (c.value - mu.value) / s
    k = c.shape[1]
    out = -0.5 * k * LOG_2PI - np.log(s).sum(axis=1) - 0.5 * (d * d).sum(axis=1)

    def backward(g):
        gc = -g[:, None] * d / s
        gs = g[:, None] * (d * d - 1.0) / s
        return gc, -gc, gs

    return Node(out, (c, mu, sigma), "gauss_logpdf", backward)


def gauss_logpdf_pairwise(c: Node, mu: Node, sigma: Node) -> Node:
    """L[i, j] = log N(c_i; mu_j, diag(sigma_j²)) for c [B×K], mu/sigma [M×K] -> [B×M]."""
    c, mu, sigma = as_node(c), as_node(mu), as_node(sigma)
    if mu.shape != sigma.shape or c.value.ndim != 2 or mu.value.ndim != 2 or c.shape[1] != mu.shape[1]:
        raise DimensionError("gauss_logpdf_pairwise: c [B×K], mu and sigma [M×K]")
    s = sigma.value
    if np.any(s <= 0):
        raise DomainError("sigma must be strictly positive")
    k = c.shape[1]
    d = (c.value[:, None, :] - mu.value[None, :, :]) / s[None, :, :]  # B×M×K
    out = -0.5 * k * LOG_2PI - np.log(s).sum(axis=1)[None, :] - 0.5 * (d * d).sum(axis=2)

    def backward(g):
        gd = g[:, :, None] * d / s[None, :, :]
        gc = -gd.sum(axis=1)
        gmu = gd.sum(axis=0)
        gs = (g[:, :, None] * (d * d - 1.0)).sum(axis=0) / s
        return gc, gmu, gs

    return Node(out, (c, mu, sigma), "gauss_logpdf_pairwise", backward)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Backpropagate from a scalar root; returns {node: gradient} for every reached node.

    Gradients are also written to ``node.grad`` on each visited node.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {loss.shape}")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            g = np.zeros_like(node.value)
            grads[id(node)] = g
        node.grad = g
        if node._backward is None or not node.parents:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    return {node: node.grad for node in order}


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 0.003
    wd: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Node], grads: Sequence[np.ndarray | None], state: AdamState) -> None:
    """One Adam update with decoupled weight decay; replaces ``p.value`` on each param."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    gs = [np.zeros_like(p.value) if g is None else g for p, g in zip(params, grads)]
    if state.clip_norm:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in gs)))
        if norm > state.clip_norm:
            gs = [g * (state.clip_norm / norm) for g in gs]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, gs)):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        update = (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
        p.value = p.value - state.lr * (update + state.wd * p.value)


# ---------------------------------------------------------------------------
# finite-difference oracle


def numeric_grad(f: Callable[[], Node], param: Node, eps: float = 1e-5) -> np.ndarray:
    base = param.value
    out = np.zeros_like(base)
    flat = out.reshape(-1)
    for idx in range(base.size):
        bumped = base.copy().reshape(-1)
        bumped[idx] += eps
        param.value = bumped.reshape(base.shape)
        fp = float(f().value)
        bumped[idx] -= 2 * eps
        param.value = bumped.reshape(base.shape)
        fm = float(f().value)
        flat[idx] = (fp - fm) / (2 * eps)
    param.value = base
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def grad_check(f: Callable[[], Node], params: Sequence[Node], eps: float = 1e-5,
               analytic: Sequence[np.ndarray] | None = None, rtol: float = 1e-4) -> float:
    """Max relative error between backprop gradients and central differences.

    Central differences carry round-off of about 4 * machine-eps * |f| / eps, so
    entries smaller than that resolution divided by ``rtol`` are measured
    against the resolution instead of their own size. ``analytic`` may be
    passed to check externally supplied gradients instead of the ones produced
    by :func:`backward` (useful as a negative control).
    """
    f0 = float(f().value)
    if analytic is None:
        gmap = backward(f())
        analytic = [gmap.get(p, np.zeros_like(p.value)) for p in params]
        analytic = [np.zeros_like(p.value) if g is None else g for p, g in zip(params, analytic)]
    resolution = 4 * np.finfo(np.float64).eps * max(1.0, abs(f0)) / eps
    floor = max(1e-6, resolution / rtol)
    worst = 0.0
    for p, a in zip(params, analytic):
        worst = max(worst, relative_error(a, numeric_grad(f, p, eps), floor))
    return worst
