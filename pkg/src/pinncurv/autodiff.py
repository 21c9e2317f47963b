"""Scalar forward-over-reverse differentiation engine.

Input derivatives of the network (du/dx, du/dt) are carried by
:class:`DualScalar` numbers pushed through the forward pass.  Parameter
gradients come from a reverse sweep over a :class:`Tape` that records the
real-valued arithmetic, including the arithmetic performed on the dual
tangents, so losses containing input derivatives are differentiated exactly.

The engine is deliberately scalar and small.  It is the reference route used
to validate the batched numpy kernel in :mod:`pinncurv.model` and is practical
for networks up to a few hundred parameters.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError

__all__ = [
    "DualScalar",
    "Tape",
    "TapeNode",
    "Var",
    "eval_with_input_derivs",
    "finite_diff_gradient",
    "grad_params",
    "mean",
    "sin",
    "square",
    "tanh",
    "vsum",
]


class TapeNode(NamedTuple):
    op: str
    operands: tuple[int, ...]
    partials: tuple[float, ...]


class Tape:
    """Linear record of scalar operations, in creation (= topological) order."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def _push(self, op, value, operands=(), partials=()):
        self.nodes.append(TapeNode(op, tuple(operands), tuple(partials)))
        return Var(self, len(self.nodes) - 1, float(value))

    def var(self, value: float) -> "Var":
        return self._push("leaf", value)

    def gradient(self, output: "Var", wrt: Sequence["Var"]) -> np.ndarray:
        """Reverse sweep: d(output)/d(leaf) for every leaf in ``wrt``."""
        if output.tape is not self:
            raise ConfigurationError("output was not recorded on this tape")
        adj = [0.0] * (output.index + 1)
        adj[output.index] = 1.0
        nodes = self.nodes
        for i in range(output.index, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            node = nodes[i]
            for j, p in zip(node.operands, node.partials):
                adj[j] += a * p
        return np.array([adj[v.index] if v.index <= output.index else 0.0 for v in wrt])


class Var:
    """A real number recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: Tape, index: int, value: float):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self):
        return f"Var({self.value!r})"

    def _lift(self, other):
        if isinstance(other, Var):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return None
        return NotImplemented

    def __add__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return self.tape._push("add", self.value + other, (self.index,), (1.0,))
        return self.tape._push("add", self.value + o.value, (self.index, o.index), (1.0, 1.0))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return self.tape._push("sub", self.value - other, (self.index,), (1.0,))
        return self.tape._push("sub", self.value - o.value, (self.index, o.index), (1.0, -1.0))

    def __rsub__(self, other):
        if self._lift(other) is NotImplemented:
            return NotImplemented
        return self.tape._push("sub", other - self.value, (self.index,), (-1.0,))

    def __neg__(self):
        return self.tape._push("neg", -self.value, (self.index,), (-1.0,))

    def __mul__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = float(other)
            return self.tape._push("mul", self.value * c, (self.index,), (c,))
        return self.tape._push(
            "mul", self.value * o.value, (self.index, o.index), (o.value, self.value)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            c = float(other)
            return self.tape._push("div", self.value / c, (self.index,), (1.0 / c,))
        q = self.value / o.value
        return self.tape._push("div", q, (self.index, o.index), (1.0 / o.value, -q / o.value))

    def __rtruediv__(self, other):
        if self._lift(other) is NotImplemented:
            return NotImplemented
        q = other / self.value
        return self.tape._push("div", q, (self.index,), (-q / self.value,))


class DualScalar:
    """``value + tangent * eps`` with ``eps**2 = 0``.

    Components may be plain floats or tape :class:`Var` objects.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent=0.0):
        self.value = value
        self.tangent = tangent

    def __repr__(self):
        return f"DualScalar({self.value!r}, {self.tangent!r})"

    @staticmethod
    def _lift(other):
        if isinstance(other, DualScalar):
            return other
        if isinstance(other, (int, float, np.floating, np.integer, Var)):
            return DualScalar(other, 0.0)
        return NotImplemented

    def __add__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        return DualScalar(self.value + o.value, self.tangent + o.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        return DualScalar(self.value - o.value, self.tangent - o.tangent)

    def __rsub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        return o - self

    def __neg__(self):
        return DualScalar(-self.value, -self.tangent)

    def __mul__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        return DualScalar(
            self.value * o.value, self.tangent * o.value + self.value * o.tangent
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        q = self.value / o.value
        return DualScalar(q, (self.tangent - q * o.tangent) / o.value)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        return o / self


# elementary functions, dispatching on float / Var / DualScalar


def tanh(a):
    if isinstance(a, DualScalar):
        y = tanh(a.value)
        return DualScalar(y, (1.0 - y * y) * a.tangent)
    if isinstance(a, Var):
        y = math.tanh(a.value)
        return a.tape._push("tanh", y, (a.index,), (1.0 - y * y,))
    return math.tanh(a)


def sin(a):
    if isinstance(a, DualScalar):
        # cos(a) = sin(a + pi/2) keeps the op set closed
        return DualScalar(sin(a.value), sin(a.value + math.pi / 2) * a.tangent)
    if isinstance(a, Var):
        return a.tape._push("sin", math.sin(a.value), (a.index,), (math.cos(a.value),))
    return math.sin(a)


def square(a):
    if isinstance(a, DualScalar):
        return DualScalar(square(a.value), 2.0 * a.value * a.tangent)
    if isinstance(a, Var):
        return a.tape._push("square", a.value * a.value, (a.index,), (2.0 * a.value,))
    return a * a


def vsum(items):
    """Sum of a sequence, recorded as a single tape node when possible."""
    items = list(items)
    if not items:
        return 0.0
    if any(isinstance(v, DualScalar) for v in items):
        duals = [DualScalar._lift(v) for v in items]
        return DualScalar(vsum(d.value for d in duals), vsum(d.tangent for d in duals))
    vars_ = [v for v in items if isinstance(v, Var)]
    if not vars_:
        return math.fsum(items)
    const = math.fsum(v for v in items if not isinstance(v, Var))
    tape = vars_[0].tape
    total = math.fsum(v.value for v in vars_) + const
    return tape._push(
        "sum", total, tuple(v.index for v in vars_), (1.0,) * len(vars_)
    )


def mean(items):
    items = list(items)
    if not items:
        raise ConfigurationError("mean of an empty sequence")
    return vsum(items) / len(items)


def _layer_sizes(arch):
    sizes = list(getattr(arch, "layer_sizes", arch))
    if len(sizes) < 2 or sizes[0] != 2 or sizes[-1] != 1:
        raise ConfigurationError(f"invalid architecture {sizes}")
    return sizes


def _dual_forward(sizes, params, x, t, seed_x, seed_t):
    acts = [DualScalar(x, seed_x), DualScalar(t, seed_t)]
    pos = 0
    n_layers = len(sizes) - 1
    for layer in range(n_layers):
        n_in, n_out = sizes[layer], sizes[layer + 1]
        w_off, b_off = pos, pos + n_in * n_out
        out = []
        for j in range(n_out):
            z = DualScalar(params[b_off + j])
            row = w_off + j * n_in
            for i in range(n_in):
                z = z + params[row + i] * acts[i]
            out.append(tanh(z) if layer < n_layers - 1 else z)
        acts = out
        pos = b_off + n_out
    return acts[0]


def eval_with_input_derivs(arch, params, x, t):
    """Return ``(u, du/dx, du/dt)`` of the tanh MLP at one point.

    ``params`` may hold floats or tape :class:`Var` objects; in the latter
    case all three outputs are recorded on the tape.
    """
    sizes = _layer_sizes(arch)
    n = sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))
    if len(params) != n:
        raise ConfigurationError(f"expected {n} parameters, got {len(params)}")
    params = [p if isinstance(p, Var) else float(p) for p in params]
    ux = _dual_forward(sizes, params, x, t, 1.0, 0.0)
    ut = _dual_forward(sizes, params, x, t, 0.0, 1.0)
    return ux.value, ux.tangent, ut.tangent


def _as_float(v):
    return v.value if isinstance(v, Var) else float(v)


def grad_params(loss: Callable, params) -> np.ndarray:
    """Gradient of ``loss(params)`` with respect to every parameter.

    ``loss`` receives a list of tape variables and must return a scalar built
    from the elementary operations of this module.
    """
    params = np.asarray(params, dtype=np.float64)
    tape = Tape()
    leaves = [tape.var(p) for p in params]
    out = loss(leaves)
    value = _as_float(out)
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}", value=value)
    if not isinstance(out, Var):
        return np.zeros_like(params)
    return tape.gradient(out, leaves)


def finite_diff_gradient(loss: Callable, params, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time."""
    if not h > 0:
        raise ConfigurationError(f"step h must be positive, got {h}")
    params = np.array(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        orig = params[i]
        params[i] = orig + h
        fp = float(loss(params))
        params[i] = orig - h
        fm = float(loss(params))
        params[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise DivergenceError(f"non-finite loss near coordinate {i}", value=fp)
        grad[i] = (fp - fm) / (2.0 * h)
    return grad
