"""Gradient descent, ADAM, LBFGS and bouncing Born-Infeld (BBI).

Each optimizer exposes pure step functions plus a small stateful wrapper with
a common ``epoch(params, objective)`` method.  ``objective`` is any object with

* ``value_and_grad(params) -> (loss, grad)`` on the full training set, and
* ``minibatches(rng, batch_size)`` yielding closures of the same signature
  (only used by ADAM).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search

from .errors import ConfigurationError, DegenerateStartError, DivergenceError, DomainError
from .rng import stream

KINDS = ("GD", "ADAM", "LBFGS", "BBI")


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 400


@dataclass(frozen=True)
class LbfgsParams:
    max_iter: int = 20
    tolerance_grad: float = 1e-7
    tolerance_change: float = 1e-9
    history_size: int = 100
    line_search: bool = False


@dataclass(frozen=True)
class BbiParams:
    delta_v: float = 0.0
    delta_e: float = 2.0
    n_bounces: int = 4
    t0: int = 500
    t1: int = 100
    rescale_energy: bool = True
    progress_threshold: float = 1e-3


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str
    learning_rate: float
    adam: AdamParams = field(default_factory=AdamParams)
    lbfgs: LbfgsParams = field(default_factory=LbfgsParams)
    bbi: BbiParams = field(default_factory=BbiParams)

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ConfigurationError(f"unknown optimizer {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.lbfgs.history_size < 1 or self.lbfgs.max_iter < 1:
            raise ConfigurationError("LBFGS needs history_size >= 1 and max_iter >= 1")
        if self.bbi.n_bounces < 0 or self.bbi.t0 < 1 or self.bbi.t1 < 1:
            raise ConfigurationError("BBI needs n_bounces >= 0 and positive bounce periods")
        if self.adam.batch_size < 1:
            raise ConfigurationError("ADAM batch size must be positive")


def _check_finite(vec, what="gradient"):
    if not np.all(np.isfinite(vec)):
        raise DivergenceError(f"non-finite {what}")


# --------------------------------------------------------------------------
# gradient descent


def gd_step(params, gradient, lr):
    _check_finite(gradient)
    return params - lr * gradient


class GradientDescent:
    def __init__(self, config: OptimizerConfig):
        self.config = config

    def epoch(self, params, objective):
        _, g = objective.value_and_grad(params)
        return gd_step(params, g, self.config.learning_rate)


# --------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params, gradient, config: OptimizerConfig):
    """Bias-corrected ADAM update; advances ``state`` in place."""
    _check_finite(gradient)
    hp = config.adam
    g = gradient + hp.weight_decay * params if hp.weight_decay else gradient
    state.step += 1
    state.m *= hp.beta1
    state.m += (1.0 - hp.beta1) * g
    state.v *= hp.beta2
    state.v += (1.0 - hp.beta2) * g * g
    m_hat = state.m / (1.0 - hp.beta1**state.step)
    v_hat = state.v / (1.0 - hp.beta2**state.step)
    return params - config.learning_rate * m_hat / (np.sqrt(v_hat) + hp.eps)


class Adam:
    def __init__(self, config: OptimizerConfig, n_params: int, seed: int = 0):
        self.config = config
        self.state = AdamState.zeros(n_params)
        self.rng = stream(seed, "shuffle")

    def epoch(self, params, objective):
        for closure in objective.minibatches(self.rng, self.config.adam.batch_size):
            _, g = closure(params)
            params = adam_step(self.state, params, g, self.config)
        return params


# --------------------------------------------------------------------------
# LBFGS

CURVATURE_EPS = 1e-10


@dataclass
class LbfgsState:
    history: deque
    prev_grad: np.ndarray | None = None
    last_step: np.ndarray | None = None
    n_iter: int = 0
    n_evals: int = 0

    @classmethod
    def empty(cls, history_size):
        return cls(deque(maxlen=history_size))


def lbfgs_direction(history, gradient):
    """Two-loop recursion: ``-H g`` for the implicit inverse Hessian ``H``."""
    if not history:
        return -gradient
    q = gradient.copy()
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((a, rho))
    s, y = history[-1]
    r = q * ((s @ y) / (y @ y))
    for (s, y), (a, rho) in zip(history, reversed(alphas)):
        b = rho * (y @ r)
        r += (a - b) * s
    return -r


def _push_pair(state: LbfgsState, s, y):
    if y @ s > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
        state.history.append((s, y))


def _wolfe_step(closure, params, d, loss, g):
    cache = {}

    def fg(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = closure(x)
        return cache[key]

    t, *_ = line_search(lambda x: fg(x)[0], lambda x: fg(x)[1], params, d, g, loss)
    return t


def lbfgs_epoch(state: LbfgsState, params, closure: Callable, config: OptimizerConfig):
    """Up to ``max_iter`` quasi-Newton iterations with a fixed step length.

    Returns ``(params, status, n_iterations)``; status is one of
    ``"grad-converged"``, ``"change-converged"`` or ``"max-iter"``.
    """
    hp = config.lbfgs
    lr = config.learning_rate
    loss, g = closure(params)
    state.n_evals += 1
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}", value=loss, step=0)
    if np.max(np.abs(g)) <= hp.tolerance_grad:
        return params, "grad-converged", 0
    status = "max-iter"
    n_done = 0
    for it in range(hp.max_iter):
        state.n_iter += 1
        if state.prev_grad is None:
            d = -g
        else:
            _push_pair(state, state.last_step, g - state.prev_grad)
            d = lbfgs_direction(state.history, g)
        state.prev_grad = g
        # the very first step is damped by the gradient 1-norm, as in common LBFGS codes
        t = min(1.0, 1.0 / np.abs(g).sum()) * lr if state.n_iter == 1 else lr
        if hp.line_search:
            t_ls = _wolfe_step(closure, params, d, loss, g)
            if t_ls is not None:
                t = t_ls
        step = t * d
        params = params + step
        state.last_step = step
        n_done += 1
        if it == hp.max_iter - 1:
            break
        try:
            loss, g = closure(params)
        except DivergenceError as exc:
            exc.step = it + 1
            raise
        state.n_evals += 1
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss}", value=loss, step=it + 1)
        if np.max(np.abs(g)) <= hp.tolerance_grad:
            status = "grad-converged"
            break
        if np.max(np.abs(step)) <= hp.tolerance_change:
            status = "change-converged"
            break
    return params, status, n_done


class Lbfgs:
    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.state = LbfgsState.empty(config.lbfgs.history_size)
        self.last_status = None
        self.last_iterations = 0

    def epoch(self, params, objective):
        params, self.last_status, self.last_iterations = lbfgs_epoch(
            self.state, params, objective.value_and_grad, self.config
        )
        return params

    @property
    def converged(self):
        return self.last_status == "grad-converged" and self.last_iterations == 0


# --------------------------------------------------------------------------
# bouncing Born-Infeld


@dataclass
class BbiState:
    momentum: np.ndarray
    energy: float
    v0: float
    step: int = 0
    bounces_used: int = 0
    steps_since_bounce: int = 0
    recent: deque = field(default_factory=deque)


def bbi_init(params, closure: Callable, config: OptimizerConfig) -> BbiState:
    hp = config.bbi
    loss, g = closure(params)
    v0 = loss + hp.delta_v
    if not v0 > 0:
        raise ConfigurationError(f"shifted objective must be positive at the start, got V0={v0}")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        raise DegenerateStartError("zero gradient at the initial point")
    energy = v0 + hp.delta_e
    momentum = -(g / gnorm) * math.sqrt(energy * energy / v0 - v0)
    return BbiState(momentum, energy, v0, recent=deque(maxlen=hp.t1 + 1))


def bbi_step(state: BbiState, params, gradient, potential, config: OptimizerConfig):
    """One BBI update: momentum first, then position with the new momentum."""
    if not potential > 0:
        raise DomainError(f"BBI needs a positive potential, got {potential}")
    _check_finite(gradient)
    dt = config.learning_rate
    e = state.energy
    ratio = potential / e
    momentum = state.momentum - 0.5 * dt * (ratio + e / potential) * gradient
    if config.bbi.rescale_energy:
        target_sq = e * e / potential - potential
        norm = float(np.linalg.norm(momentum))
        if target_sq > 0 and norm > 0:
            momentum *= math.sqrt(target_sq) / norm
    _check_finite(momentum, "momentum")
    state.momentum = momentum
    state.step += 1
    state.steps_since_bounce += 1
    new = params + dt * ratio * momentum
    _check_finite(new, "parameters")
    return new


def bbi_bounce(state: BbiState, rng: np.random.Generator, config: OptimizerConfig) -> str:
    """Replace the momentum by an isotropic random vector of equal norm."""
    if state.bounces_used >= config.bbi.n_bounces:
        return "exhausted"
    norm = np.linalg.norm(state.momentum)
    direction = rng.standard_normal(state.momentum.size)
    state.momentum = direction * (norm / np.linalg.norm(direction))
    state.bounces_used += 1
    state.steps_since_bounce = 0
    state.recent.clear()
    return "bounced"


def bbi_should_bounce(state: BbiState, config: OptimizerConfig) -> bool:
    hp = config.bbi
    if state.bounces_used >= hp.n_bounces:
        return False
    if state.step % hp.t0 == 0:
        return True
    if state.steps_since_bounce >= hp.t1 and len(state.recent) == state.recent.maxlen:
        old, new = state.recent[0], state.recent[-1]
        return (old - new) / old < hp.progress_threshold
    return False


class Bbi:
    def __init__(self, config: OptimizerConfig, seed: int = 0):
        self.config = config
        self.state: BbiState | None = None
        self.rng = stream(seed, "bounce")

    def epoch(self, params, objective):
        if self.state is None:
            self.state = bbi_init(params, objective.value_and_grad, self.config)
        loss, g = objective.value_and_grad(params)
        potential = loss + self.config.bbi.delta_v
        params = bbi_step(self.state, params, g, potential, self.config)
        self.state.recent.append(potential)
        if bbi_should_bounce(self.state, self.config):
            bbi_bounce(self.state, self.rng, self.config)
        return params


def make_optimizer(config: OptimizerConfig, n_params: int, seed: int = 0):
    if config.kind == "GD":
        return GradientDescent(config)
    if config.kind == "ADAM":
        return Adam(config, n_params, seed)
    if config.kind == "LBFGS":
        return Lbfgs(config)
    return Bbi(config, seed)
