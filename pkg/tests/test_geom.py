import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pinncurv.errors import ConfigurationError
from pinncurv.geom import CurvatureTracker, cosine_similarity, kappa_omega, kappa_t, sample, track

vec = arrays(np.float64, 6, elements=st.floats(-100, 100))


def circle(radius, step, n, dim=751, seed=0):
    """Snapshots along a planar circle embedded in a random 2-plane."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
    phi = step * np.arange(n)
    return radius * (np.outer(np.cos(phi), basis[:, 0]) + np.outer(np.sin(phi), basis[:, 1])) + rng.normal(size=dim)


def test_orthogonal_unit_steps():
    assert kappa_t([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert kappa_omega([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_collinear_steps_have_zero_curvature():
    v = np.array([0.3, -1.2, 2.5])
    assert kappa_t(2 * v, v) == 0.0
    assert kappa_omega(2 * v, v) == 0.0


def test_undefined_when_current_step_is_zero():
    assert kappa_t([1.0, 2.0], [0.0, 0.0]) is None
    assert kappa_omega([1.0, 2.0], [0.0, 0.0]) is None
    assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) is None
    # a zero previous step is a well-defined straight continuation
    assert kappa_t([0.0, 0.0], [1.0, 2.0]) == 0.0


def test_shape_mismatch():
    for f in (kappa_t, kappa_omega, cosine_similarity):
        with pytest.raises(ConfigurationError):
            f([1.0, 2.0], [1.0, 2.0, 3.0])


@pytest.mark.parametrize("radius", [1.0, 2.0, 0.25])
def test_circle_oracle(radius):
    phi = 1e-3
    samples = list(track(circle(radius, phi, 100)))
    assert len(samples) == 98
    for s in samples:
        assert s.kappa_omega == pytest.approx(1.0 / radius, rel=1e-4)
        assert s.kappa_t == pytest.approx(phi, rel=1e-4)


def test_circle_converges_to_angular_rate():
    # exact discrete value is sin(phi); error relative to phi is O(phi^2)
    for phi in (1e-1, 1e-2, 1e-3):
        s = list(track(circle(1.0, phi, 3, dim=3)))[0]
        assert s.kappa_t == pytest.approx(math.sin(phi), rel=1e-9)
        assert abs(s.kappa_t / phi - 1.0) < phi**2


@settings(max_examples=100)
@given(vec, vec, st.floats(1e-3, 1e3))
def test_scaling(u, v, s):
    assume(v @ v > 1e-6 and u @ u > 1e-6)
    kt, ko = kappa_t(u, v), kappa_omega(u, v)
    assert kappa_t(s * u, s * v) == pytest.approx(kt, rel=1e-9, abs=1e-9)
    assert kappa_omega(s * u, s * v) == pytest.approx(ko / s, rel=1e-9, abs=1e-9 / s)


def test_sin_angle_formula_agrees():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        dim = int(rng.integers(2, 20))
        u, v = rng.normal(size=(2, dim)) * rng.uniform(0.01, 10, 2)[:, None]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        # angle from atan2 of the wedge norm and the dot product: no cancellation near 0 or pi
        alpha = math.atan2(np.linalg.norm(np.outer(u, v) - np.outer(v, u)) / math.sqrt(2), u @ v)
        oracle = nu * abs(math.sin(alpha)) / nv
        worst = max(worst, abs(kappa_t(u, v) - oracle) / max(oracle, 1e-300))
    assert worst < 1e-12


@given(vec, vec)
def test_cosine_properties(u, v):
    c = cosine_similarity(u, v)
    assume(c is not None)
    assert -1.0 <= c <= 1.0
    assert cosine_similarity(v, u) == c
    assert cosine_similarity(3.0 * u, v) == pytest.approx(c, abs=1e-12)


def test_cosine_examples():
    v = np.array([1.0, -2.0, 0.5])
    assert cosine_similarity(v, v) == 1.0
    assert cosine_similarity(v, -v) == -1.0
    assert cosine_similarity([1.0, 0.0], [0.0, 3.0]) == 0.0


@given(vec, vec)
def test_sample_is_consistent(u, v):
    s = sample(4, u, v)
    assert s.step_index == 4
    if s.speed > 0:
        assert s.kappa_t >= 0 and s.kappa_omega == s.kappa_t / s.speed
        assert s.kappa_t == kappa_t(u, v)
    else:
        assert s.kappa_t is None and s.kappa_omega is None and s.cos_theta is None


@pytest.mark.parametrize("scale", [4.7e-149, 1e-160, 1e150])
def test_extreme_step_magnitudes(scale):
    # inner products of these vectors under- or overflow when multiplied together
    u = np.full(6, scale)
    s = sample(1, u, u)
    assert (s.kappa_t, s.kappa_omega, s.cos_theta) == (0.0, 0.0, 1.0)
    assert cosine_similarity(u, -u) == -1.0
    w = np.array([scale, 0.0])
    assert kappa_t(np.array([0.0, scale]), w) == pytest.approx(1.0)
    assert cosine_similarity(np.array([0.0, scale]), w) == 0.0


def test_curvature_beyond_float_range_is_infinite():
    s = sample(1, np.ones(6), np.array([5e-324, 0, 0, 0, 0, 0]))
    assert s.kappa_t == math.inf and s.kappa_omega == math.inf
    assert s.cos_theta == pytest.approx(1 / math.sqrt(6))


def test_track_on_a_line():
    (s,) = track([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    assert (s.kappa_t, s.kappa_omega, s.cos_theta) == (0.0, 0.0, 1.0)
    assert s.step_index == 2


def test_track_identical_snapshots():
    samples = list(track([np.ones(4)] * 6))
    assert len(samples) == 4
    assert all(s.kappa_t is None and s.kappa_omega is None and s.cos_theta is None for s in samples)


def test_tracker_memory_is_constant():
    tracker = CurvatureTracker()
    for snap in circle(1.0, 1e-2, 500, dim=10):
        tracker.push(snap)
    held = [v for v in vars(tracker).values() if isinstance(v, np.ndarray)]
    assert len(held) == 2 and tracker.count == 500


def test_clamping_of_rounding_negatives():
    # nearly parallel vectors where c - b^2/a rounds below zero
    v = np.array([1.0, 1e-9, 1e-9])
    assert kappa_t(v * (1 + 1e-15), v) == pytest.approx(0.0, abs=1e-8)


def test_turning_below_noise_floor_is_zero():
    u = np.array([1.0, 0.0])
    assert kappa_t(u, np.array([1.0, 1e-8])) == 0.0
    assert kappa_t(u, np.array([1.0, 1e-5])) == pytest.approx(1e-5, rel=1e-9)


def test_large_cauchy_schwarz_violation_is_an_error():
    from pinncurv.geom import _perp_sq

    with pytest.raises(RuntimeError):
        _perp_sq(1.0, 2.0, 1.0, np.zeros(1), np.zeros(1))
