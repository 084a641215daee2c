import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpush.trajectory import (BoundaryConditions, MotionLimits, TrajectoryParams, discretize, evaluate,
                                   smoothness_prior, state_at_fraction, time_scale)

shapes = st.tuples(st.integers(1, 5), st.integers(1, 4))


def _random(seed, n_via, n_dof):
    rng = np.random.default_rng(seed)
    via = rng.normal(size=(n_via, n_dof))
    bc = BoundaryConditions(rng.normal(size=n_dof), rng.normal(size=n_dof))
    return TrajectoryParams.from_via_points(via), bc, rng


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_interpolation_is_exact(shape, seed, T):
    params, bc, _ = _random(seed, *shape)
    N = params.n_via
    q, qd, _ = evaluate(params, bc, T, T * np.arange(N + 1) / N)
    np.testing.assert_allclose(q[0], bc.q0, atol=1e-9)
    np.testing.assert_allclose(q[1:], params.via_points, atol=1e-9)
    np.testing.assert_allclose(qd[0], bc.qdot0, atol=1e-9)
    np.testing.assert_allclose(qd[-1], 0.0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_acceleration_is_continuous_at_knots(n_via, seed):
    params, bc, _ = _random(seed, n_via, 2)
    T, d = 1.3, 1e-7
    for k in range(1, n_via):
        t = T * k / n_via
        a_left = evaluate(params, bc, T, t - d)[2]
        a_right = evaluate(params, bc, T, t + d)[2]
        np.testing.assert_allclose(a_left, a_right, atol=1e-4 * (1 + np.abs(a_left).max()))


def test_velocity_matches_finite_difference():
    params, bc, _ = _random(1, 3, 2)
    T, t, h = 2.0, 0.77, 1e-6
    q_p, q_m = evaluate(params, bc, T, t + h)[0], evaluate(params, bc, T, t - h)[0]
    np.testing.assert_allclose(evaluate(params, bc, T, t)[1], (q_p - q_m) / (2 * h), rtol=1e-6, atol=1e-8)


def test_time_outside_range():
    params, bc, _ = _random(0, 2, 2)
    with pytest.raises(ValueError):
        evaluate(params, bc, 1.0, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_time_scale_respects_limits_and_is_tight(n_via, seed):
    rng = np.random.default_rng(seed)
    via = rng.normal(scale=0.2, size=(n_via, 2))
    bc = BoundaryConditions(rng.normal(scale=0.1, size=2), rng.normal(scale=0.05, size=2))
    lim = MotionLimits([0.5, 0.4], [2.0, 3.0])
    params = TrajectoryParams.from_via_points(via)
    T = time_scale(params, bc, lim)
    t = np.linspace(0, T, 2001)
    _, qd, qdd = evaluate(params, bc, T, t)
    assert np.all(np.abs(qd) <= lim.v_max * 1.02)
    assert np.all(np.abs(qdd) <= lim.a_max * 1.02)
    if T > 0.1 * 1.02:
        _, qd, qdd = evaluate(params, bc, 0.97 * T, 0.97 * t)
        assert np.any(np.abs(qd) > lim.v_max) or np.any(np.abs(qdd) > lim.a_max)


def test_discretize_ends_at_final_via_point():
    params, bc, _ = _random(2, 3, 3)
    cmds = discretize(params, bc, 1.5, 20)
    assert len(cmds) == 20
    np.testing.assert_allclose(cmds[-1], params.final, atol=1e-12)
    np.testing.assert_allclose(cmds[6], evaluate(params, bc, 1.5, 1.5 * 7 / 20)[0], atol=1e-12)


def test_state_at_fraction_matches_evaluate():
    params, bc, _ = _random(3, 3, 2)
    q, qd = state_at_fraction(params.via_points, bc, 1.2, 0.2)
    q2, qd2, _ = evaluate(params, bc, 1.2, 0.24)
    np.testing.assert_allclose(q, q2, atol=1e-12)
    np.testing.assert_allclose(qd, qd2, atol=1e-12)


def _quadrature_cost(params, bc, T, R, n=20_001):
    t = np.linspace(0, T, n)
    qdd = evaluate(params, bc, T, t)[2]
    f = np.einsum("ti,ij,tj->t", qdd, R, qdd)
    return 0.5 * np.trapezoid(f, t)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000), st.floats(0.3, 3.0))
def test_smoothness_cost_equals_integral(n_via, seed, T):
    params, bc, rng = _random(seed, n_via, 2)
    A = rng.normal(size=(2, 2))
    R = A @ A.T + np.eye(2)
    sp = smoothness_prior(bc, R, n_via, T)
    assert sp.cost(params.theta) == pytest.approx(_quadrature_cost(params, bc, T, R), rel=1e-5)


def test_smoothness_mean_minimises_cost():
    _, bc, rng = _random(4, 3, 2)
    sp = smoothness_prior(bc, np.eye(2), 3, 1.0)
    base = sp.cost(sp.mean)
    for _ in range(20):
        assert sp.cost(sp.mean + 1e-3 * rng.normal(size=sp.mean.shape)) > base


def test_smoothness_at_rest_prefers_staying():
    sp = smoothness_prior(BoundaryConditions.at_rest([0.3, -0.2]), np.eye(2), 3, 1.0)
    np.testing.assert_allclose(sp.mean.reshape(3, 2), np.tile([0.3, -0.2], (3, 1)), atol=1e-9)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        MotionLimits([0.0], [1.0])
    with pytest.raises(ValueError):
        BoundaryConditions([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        TrajectoryParams(np.zeros(5), 2, 3)
    with pytest.raises(ValueError):
        smoothness_prior(BoundaryConditions.at_rest([0.0, 0.0]), -np.eye(2), 2, 1.0)
