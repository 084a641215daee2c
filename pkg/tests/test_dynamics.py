import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpush.dynamics import (InfeasibleContact, NoiseModel, Scene, contact_indicator, nominal_step, push_1d,
                                 stochastic_rollout_batch, stochastic_step)
from robustpush.geometry import CircleGeom, RectGeom

EPS_PEN = 1e-6


def projection_oracle(scene, u, q_o, n_dirs=20000):
    """Smallest displacement that clears every effector, by dense search over directions."""
    best = None
    for a in np.linspace(0, 2 * np.pi, n_dirs, endpoint=False):
        d = np.array([np.cos(a), np.sin(a)])
        lo, hi = 0.0, 1.0
        if scene.min_distance(q_o + hi * d, u) < 0:
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if scene.min_distance(q_o + mid * d, u) >= 0 else (mid, hi)
        if best is None or hi < best[0]:
            best = (hi, q_o + hi * d)
    return best[1]


def test_circle_push_matches_projection_oracle():
    scene = Scene(0.05, (CircleGeom(0.05),))
    u = scene.command([0.0, 0.0])
    out = nominal_step([0.08, 0.0], u, scene).position
    np.testing.assert_allclose(out, [0.10, 0.0], atol=1e-6)
    np.testing.assert_allclose(out, projection_oracle(scene, u, np.array([0.08, 0.0])), atol=1e-4)


def test_rect_push_matches_face_oracle():
    scene = Scene(0.05, (RectGeom((0.1, 0.02)),))
    u = scene.command([0.0, 0.0, 0.0])
    out = nominal_step([0.0, 0.05], u, scene).position
    np.testing.assert_allclose(out, [0.0, 0.07], atol=1e-6)
    np.testing.assert_allclose(out, projection_oracle(scene, u, np.array([0.0, 0.05])), atol=1e-4)


def test_no_contact_is_bit_exact():
    scene = Scene(0.05, (CircleGeom(0.05),))
    q = np.array([0.31234567, -0.1])
    assert np.array_equal(nominal_step(q, scene.command([0.0, 0.0]), scene).position, q)


@pytest.mark.parametrize("x, eta", [(0.3, 0), (0.08, 1), (0.1, 1)])
def test_contact_indicator(x, eta):
    scene = Scene(0.05, (CircleGeom(0.05),))
    assert contact_indicator([x, 0.0], scene.command([0.0, 0.0]), scene) == eta


def test_zero_noise_equals_nominal():
    scene = Scene(0.05, (CircleGeom(0.05),))
    u = scene.command([0.0, 0.0])
    a = stochastic_step([0.08, 0.01], u, scene, NoiseModel(0.0), np.random.default_rng(0)).position
    np.testing.assert_array_equal(a, nominal_step([0.08, 0.01], u, scene).position)


def test_no_contact_ignores_noise():
    scene = Scene(0.05, (CircleGeom(0.05),))
    q = np.array([0.5, 0.5])
    out = stochastic_step(q, scene.command([0.0, 0.0]), scene, NoiseModel(1.0), np.random.default_rng(0)).position
    assert np.array_equal(out, q)


@pytest.mark.parametrize("family", ["gaussian-tangential", "uniform-tangential"])
def test_noise_statistics_match_nominal_and_variance(family):
    scene = Scene(0.05, (CircleGeom(0.05),))
    noise = NoiseModel(1e-4, family)
    n = 100_000
    poses = scene.poses(np.array([[0.0, 0.0], [0.0, 0.0]]))
    traj, _, _ = stochastic_rollout_batch(np.tile([0.08, 0.0], (n, 1)), poses, scene, noise, np.random.default_rng(1))
    x = traj[-1]
    nominal = nominal_step([0.08, 0.0], scene.command([0.0, 0.0]), scene).position
    se_mean = x.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(x.mean(axis=0) - nominal) <= 3 * se_mean + 1e-12)
    dev = x - x.mean(axis=0)
    d2 = np.sum(dev * dev, axis=1)
    assert abs(d2.mean() - noise.variance_w) <= 3 * d2.std() / np.sqrt(n)


@pytest.mark.parametrize("family", ["gaussian-tangential", "uniform-tangential"])
def test_noise_draws_are_zero_mean_unit_variance(family):
    w = NoiseModel(1e-4, family).draw(np.random.default_rng(2), 100_000)
    assert abs(w.mean()) <= 3 * w.std() / np.sqrt(w.size)
    assert w.var() == pytest.approx(1.0, rel=0.02)


def test_invalid_noise():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)
    with pytest.raises(ValueError):
        NoiseModel(1e-4, "laplace")


def test_squeezed_object_raises():
    scene = Scene(0.05, (CircleGeom(0.02), CircleGeom(0.02)))
    with pytest.raises(InfeasibleContact):
        nominal_step([0.0, 0.0], scene.command([-0.06, 0.0, 0.06, 0.0]), scene)


def test_push_1d_half_line():
    q = np.array([0.1, 0.4, 0.7])
    out, eta = push_1d(q, 0.5, np.array([0.01, 0.02, 0.03]))
    np.testing.assert_allclose(out, [0.51, 0.52, 0.7])
    np.testing.assert_array_equal(eta, [1, 1, 0])


scene_strategy = st.sampled_from([
    Scene(0.05, (CircleGeom(0.03),)),
    Scene(0.05, (RectGeom((0.02, 0.08)),)),
    Scene(0.05, (CircleGeom(0.02), CircleGeom(0.02))),
    Scene(0.05, (CircleGeom(0.02), RectGeom((0.02, 0.05)))),
])


def _random_command(scene, rng):
    q = rng.uniform(-0.1, 0.1, scene.n_dof)
    if scene.n_effectors == 2:
        # keep the effectors far enough apart that the object can always pass between them
        sl = scene.effector_dofs(1)
        q[sl.start] = q[0] + 0.3
    return q


@settings(max_examples=50, deadline=None)
@given(scene_strategy, st.integers(0, 10_000))
def test_non_penetration_after_steps(scene, seed):
    rng = np.random.default_rng(seed)
    prev, cur = _random_command(scene, rng), _random_command(scene, rng)
    q_o = rng.uniform(-0.1, 0.1, 2)
    u, up = scene.command(cur), scene.command(prev)
    out = nominal_step(q_o, u, scene, up).position
    assert scene.min_distance(out, u) >= -EPS_PEN
    out = stochastic_step(q_o, u, scene, NoiseModel(1e-4), rng, up).position
    assert scene.min_distance(out, u) >= -EPS_PEN


@settings(max_examples=40, deadline=None)
@given(scene_strategy, st.integers(0, 10_000))
def test_quasi_static_idempotence(scene, seed):
    rng = np.random.default_rng(seed)
    u = scene.command(_random_command(scene, rng))
    once = nominal_step(rng.uniform(-0.1, 0.1, 2), u, scene).position
    np.testing.assert_array_equal(nominal_step(once, u, scene).position, once)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100.0))
def test_inertia_scale_does_not_change_step(seed, scale):
    rng = np.random.default_rng(seed)
    a = Scene(0.05, (RectGeom((0.02, 0.08)),))
    b = Scene(0.05, (RectGeom((0.02, 0.08)),), inertia=scale)
    q, p = rng.uniform(-0.1, 0.1, 3), rng.uniform(-0.1, 0.1, 3)
    q_o = rng.uniform(-0.1, 0.1, 2)
    np.testing.assert_array_equal(nominal_step(q_o, a.command(q), a, a.command(p)).position,
                                  nominal_step(q_o, b.command(q), b, b.command(p)).position)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_substep_refinement(seed):
    rng = np.random.default_rng(seed)
    fine = Scene(0.05, (CircleGeom(0.03),), n_substeps=8)
    coarse = Scene(0.05, (CircleGeom(0.03),), n_substeps=4)
    y = rng.uniform(-0.03, 0.03)
    start = np.array([-0.09, y])
    end = start + np.array([0.01, rng.uniform(-0.002, 0.002)])
    q_o = np.array([0.0, rng.uniform(-0.02, 0.02)])
    a = nominal_step(q_o, fine.command(end), fine, fine.command(start)).position
    b = nominal_step(q_o, coarse.command(end), coarse, coarse.command(start)).position
    assert np.linalg.norm(a - b) < 1e-4
