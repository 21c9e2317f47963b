"""Local curvature of a training trajectory from consecutive parameter steps.

With ``V_k = w_{k+1} - w_k`` and ``a = <V_k, V_k>``, ``b = <V_{k-1}, V_k>``,
``c = <V_{k-1}, V_{k-1}>``::

    kappa_t     = sqrt(c - b**2 / a) / sqrt(a)
    kappa_omega = kappa_t / sqrt(a)

``kappa_t`` is the turning rate of the unit tangent per step and
``kappa_omega`` the speed-independent geometric curvature.  Quantities that
need a division by a zero step norm are reported as ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigurationError

CLAMP_RTOL = 1e-12


@dataclass(frozen=True)
class CurvatureSample:
    step_index: int
    kappa_t: float | None
    kappa_omega: float | None
    speed: float
    cos_theta: float | None


def _check(v_prev, v_curr):
    if v_prev.shape != v_curr.shape:
        raise ConfigurationError(f"step vectors differ in shape: {v_prev.shape} vs {v_curr.shape}")


# below this fraction of c the subtraction c - b^2/a has lost most of its digits
REFINE_RTOL = 1e-4


def _perp_sq(a, b, c, v_prev, v_curr):
    """``c - b^2/a``: squared norm of the part of ``v_prev`` orthogonal to ``v_curr``.

    Values within ``CLAMP_RTOL * c`` of zero are rounding noise of collinear
    steps (turning angle below about 1e-6 rad) and are returned as exactly 0.
    """
    d = c - b * (b / a)
    if d < -CLAMP_RTOL * c:
        raise RuntimeError(f"Cauchy-Schwarz violated: c - b^2/a = {d} (c={c})")
    if d < REFINE_RTOL * c:
        r = v_prev - (b / a) * v_curr
        d = float(r @ r)
    return 0.0 if d <= CLAMP_RTOL * c else d


def _unit_scaled(v):
    """``(v * 2**e, e)`` with the largest entry in [0.5, 1); exact, so tiny or
    huge steps keep full precision in their inner products."""
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if m == 0.0 or not math.isfinite(m):
        return v, 0
    e = -math.frexp(m)[1]
    return np.ldexp(v, e), e


def _ldexp(x, e):
    try:
        return math.ldexp(x, e)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class _Products:
    kappa_t: float | None
    speed: float
    cos_theta: float | None


def _products(v_prev, v_curr) -> _Products:
    v_prev = np.asarray(v_prev, dtype=np.float64)
    v_curr = np.asarray(v_curr, dtype=np.float64)
    _check(v_prev, v_curr)
    p, ep = _unit_scaled(v_prev)
    q, eq = _unit_scaled(v_curr)
    a = float(q @ q)
    if a == 0.0:
        return _Products(None, 0.0, None)
    b = float(p @ q)
    c = float(p @ p)
    kt = _ldexp(math.sqrt(_perp_sq(a, b, c, p, q)) / math.sqrt(a), eq - ep)
    cos = None if c == 0.0 else min(1.0, max(-1.0, b / math.sqrt(a * c)))
    return _Products(kt, math.ldexp(math.sqrt(a), -eq), cos)


def kappa_t(v_prev, v_curr) -> float | None:
    return _products(v_prev, v_curr).kappa_t


def kappa_omega(v_prev, v_curr) -> float | None:
    r = _products(v_prev, v_curr)
    return None if r.kappa_t is None else r.kappa_t / r.speed


def cosine_similarity(v_prev, v_curr) -> float | None:
    return _products(v_prev, v_curr).cos_theta


def sample(step_index: int, v_prev, v_curr) -> CurvatureSample:
    """All telemetry for one step, sharing the three inner products."""
    r = _products(v_prev, v_curr)
    if r.kappa_t is None:
        return CurvatureSample(step_index, None, None, 0.0, None)
    return CurvatureSample(step_index, r.kappa_t, r.kappa_t / r.speed, r.speed, r.cos_theta)


class CurvatureTracker:
    """Streams parameter snapshots; keeps only the previous snapshot and step."""

    def __init__(self):
        self._last = None
        self._step = None
        self.count = 0

    def push(self, snapshot) -> CurvatureSample | None:
        snapshot = np.array(snapshot, dtype=np.float64)
        index = self.count
        self.count += 1
        out = None
        if self._last is not None:
            step = snapshot - self._last
            if self._step is not None:
                out = sample(index, self._step, step)
            self._step = step
        self._last = snapshot
        return out


def track(snapshots: Iterable) -> Iterator[CurvatureSample]:
    """One :class:`CurvatureSample` per snapshot from the third onwards."""
    tracker = CurvatureTracker()
    for snap in snapshots:
        out = tracker.push(snap)
        if out is not None:
            yield out
