"""Reverse-mode automatic differentiation for scalar objectives.

A ``Node`` wraps a numpy array (or python float) and records the operations
applied to it.  Calling :func:`grad` on a scalar-valued function replays the
recorded tape backwards and returns the exact gradient with respect to every
input coordinate.  The supported operation set is deliberately small: the
elementwise arithmetic and link functions needed by log-density models, plus
the reductions (sum, dot) and one multivariate-normal primitive needed to
express Gaussian-process marginals efficiently.

Tapes are single-use and confined to the thread that built them; there is no
shared mutable state between evaluations.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class UnsupportedOperationError(TypeError):
    """An objective used an operation the tape cannot differentiate."""


class NonFiniteValueError(FloatingPointError):
    """A non-finite intermediate appeared during evaluation."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by operation '{op}'")
        self.op = op


def _check_finite(value, op):
    if not np.all(np.isfinite(value)):
        raise NonFiniteValueError(op)
    return value


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g, dtype=float)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Node:
    """One value on the tape.  Supports +, -, *, /, ** and numpy-style ops."""

    __slots__ = ("value", "parents", "_grad")

    # make ndarray <op> Node defer to Node's reflected operators instead of
    # producing an object array; numpy ufuncs applied to a Node then raise,
    # which is the desired unsupported-operation rejection
    __array_ufunc__ = None

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents  # tuple of (Node, vjp callable)
        self._grad = None

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return Node(-self.value, ((self, lambda g: -g),))

    def __sub__(self, other):
        return add(self, -_as_node(other))

    def __rsub__(self, other):
        return add(_as_node(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_node(other), self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(_as_node(other), self)

    def __getitem__(self, idx):
        def vjp(g, idx=idx, shape=self.value.shape):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return out

        return Node(self.value[idx], ((self, vjp),))

    # comparisons read values only; they never enter the tape
    def __lt__(self, other):
        return self.value < _value_of(other)

    def __gt__(self, other):
        return self.value > _value_of(other)

    def __le__(self, other):
        return self.value <= _value_of(other)

    def __ge__(self, other):
        return self.value >= _value_of(other)

    def __floordiv__(self, other):
        raise UnsupportedOperationError("floor division is not differentiable")

    __rfloordiv__ = __floordiv__

    def __mod__(self, other):
        raise UnsupportedOperationError("modulo is not differentiable")

    __rmod__ = __mod__

    def __repr__(self):
        return f"Node({self.value!r})"


def _as_node(x):
    return x if isinstance(x, Node) else Node(x)


def _value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=float)


def _is_const(x):
    return not isinstance(x, Node)


# -- elementary operations --------------------------------------------------


def add(a, b):
    a, b = _as_node(a), _as_node(b)
    val = _check_finite(a.value + b.value, "add")
    return Node(
        val,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def mul(a, b):
    a, b = _as_node(a), _as_node(b)
    val = _check_finite(a.value * b.value, "mul")
    return Node(
        val,
        (
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def div(a, b):
    a, b = _as_node(a), _as_node(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = _check_finite(a.value / b.value, "div")
    return Node(
        val,
        (
            (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / b.value**2, b.value.shape)),
        ),
    )


def power(a, b):
    a = _as_node(a)
    if _is_const(b):
        bval = np.asarray(b, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = _check_finite(a.value**bval, "pow")
        return Node(
            val,
            ((a, lambda g: _unbroadcast(g * bval * a.value ** (bval - 1), a.value.shape)),),
        )
    b = _as_node(b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = _check_finite(a.value**b.value, "pow")
    return Node(
        val,
        (
            (a, lambda g: _unbroadcast(g * b.value * a.value ** (b.value - 1), a.value.shape)),
            (b, lambda g: _unbroadcast(g * val * np.log(a.value), b.value.shape)),
        ),
    )


def exp(x):
    if _is_const(x):
        return np.exp(x)
    with np.errstate(over="ignore"):
        val = _check_finite(np.exp(x.value), "exp")
    return Node(val, ((x, lambda g: g * val),))


def log(x):
    if _is_const(x):
        return np.log(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = _check_finite(np.log(x.value), "log")
    return Node(val, ((x, lambda g: g / x.value),))


def sqrt(x):
    if _is_const(x):
        return np.sqrt(x)
    with np.errstate(invalid="ignore"):
        val = _check_finite(np.sqrt(x.value), "sqrt")
    return Node(val, ((x, lambda g: g * 0.5 / val),))


def tanh(x):
    if _is_const(x):
        return np.tanh(x)
    val = _check_finite(np.tanh(x.value), "tanh")
    return Node(val, ((x, lambda g: g * (1.0 - val**2)),))


def _softplus_np(x):
    # stable: softplus(x) = max(x, 0) + log1p(exp(-|x|))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid_np(x):
    out = np.empty_like(np.asarray(x, dtype=float))
    x = np.asarray(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    if _is_const(x):
        return _softplus_np(np.asarray(x, dtype=float))
    val = _check_finite(_softplus_np(x.value), "softplus")
    sig = _sigmoid_np(x.value)
    return Node(val, ((x, lambda g: g * sig),))


def sigmoid(x):
    if _is_const(x):
        return _sigmoid_np(x)
    val = _check_finite(_sigmoid_np(x.value), "sigmoid")
    return Node(val, ((x, lambda g: g * val * (1.0 - val)),))


def vsum(x):
    if _is_const(x):
        return np.sum(x)
    val = _check_finite(np.sum(x.value), "sum")
    return Node(val, ((x, lambda g, shape=x.value.shape: np.broadcast_to(g, shape).copy()),))


def dot(a, b):
    """Inner/matrix product; either side may be a constant array."""
    a, b = _as_node(a), _as_node(b)
    val = _check_finite(a.value @ b.value, "dot")

    def vjp_a(g):
        if b.value.ndim == 1 and a.value.ndim == 1:
            return g * b.value
        if a.value.ndim == 1:
            return g @ b.value.T if b.value.ndim > 1 else g * b.value
        return np.outer(g, b.value) if b.value.ndim == 1 else g @ b.value.T

    def vjp_b(g):
        if a.value.ndim == 1 and b.value.ndim == 1:
            return g * a.value
        if b.value.ndim == 1:
            return a.value.T @ g
        return np.outer(a.value, g) if a.value.ndim == 1 else a.value.T @ g

    return Node(val, ((a, vjp_a), (b, vjp_b)))


def concat(parts):
    parts = [_as_node(p) for p in parts]
    sizes = [np.atleast_1d(p.value).size for p in parts]
    val = np.concatenate([np.atleast_1d(p.value) for p in parts])
    offsets = np.cumsum([0] + sizes)
    links = []
    for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        links.append((p, lambda g, lo=lo, hi=hi, shape=p.value.shape: g[lo:hi].reshape(shape)))
    return Node(val, tuple(links))


def gaussian_spd_logpdf(resid, cov):
    """log N(resid; 0, cov) for symmetric positive-definite ``cov``.

    A single tape primitive so that Gaussian-process marginals cost one
    Cholesky factorization instead of O(n^3) scalar records.  Raises
    ``np.linalg.LinAlgError`` if the factorization fails.
    """
    r, K = _as_node(resid), _as_node(cov)
    n = r.value.shape[0]
    c, low = cho_factor(K.value, lower=True)
    alpha = cho_solve((c, low), r.value)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    val = -0.5 * (n * np.log(2.0 * np.pi) + logdet + r.value @ alpha)
    _check_finite(val, "gaussian_spd_logpdf")

    def vjp_r(g):
        return -g * alpha

    def vjp_K(g):
        Kinv = cho_solve((c, low), np.eye(n))
        return g * 0.5 * (np.outer(alpha, alpha) - Kinv)

    return Node(val, ((r, vjp_r), (K, vjp_K)))


# -- reverse sweep ----------------------------------------------------------


def _toposort(root):
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
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(out: Node):
    """Reverse sweep from scalar ``out``; fills ``_grad`` on every node."""
    if np.asarray(out.value).size != 1:
        raise ValueError("backward requires a scalar output")
    order = _toposort(out)
    for node in order:
        node._grad = None
    out._grad = np.ones_like(out.value)
    for node in reversed(order):
        if node._grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node._grad)
            if parent._grad is None:
                parent._grad = np.zeros_like(parent.value)
            parent._grad = parent._grad + contrib


def grad(f, x):
    """Evaluate ``f`` at ``x`` and return ``(value, gradient)``.

    ``f`` must map a 1-d parameter node to a scalar node using only the
    supported operations; the gradient has the same length as ``x``.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteValueError("input")
    leaf = Node(x)
    out = f(leaf)
    if not isinstance(out, Node):
        # constant objective: gradient is exactly zero
        return float(np.asarray(out)), np.zeros_like(x)
    backward(out)
    g = leaf._grad
    if g is None:
        g = np.zeros_like(x)
    _check_finite(g, "backward")
    return float(out.value), np.asarray(g, dtype=float).reshape(x.shape)


def value(f, x):
    """Evaluate ``f`` at ``x`` without touching gradients."""
    out = f(Node(np.asarray(x, dtype=float)))
    return float(out.value if isinstance(out, Node) else np.asarray(out))


def finite_diff_check(f, x, h=1e-5):
    """Max relative discrepancy between the tape gradient and central
    differences with step ``h``: max_i |g_i - fd_i| / (|g_i| + h)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    _, g = grad(f, x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (value(f, x + e) - value(f, x - e)) / (2.0 * h)
        worst = max(worst, abs(g[i] - fd) / (abs(g[i]) + h))
    return worst
