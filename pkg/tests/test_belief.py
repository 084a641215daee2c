import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpush.belief import (ParticleBelief, contact_probability, empirical_mean, empirical_variance,
                               gains_from_rollout, gaussian_fit, measurement_update, nominal_rollout,
                               predict_variance, systematic_resample, trajectory_gains, variance_gain)
from robustpush.dynamics import NoiseModel, Scene
from robustpush.geometry import CircleGeom, RectGeom
from robustpush.oracles import mc_variance_oracle
from robustpush.scenarios import canonical_scenes, random_contact_scene


def test_weighted_statistics():
    b = ParticleBelief([[0.0, 0.0], [2.0, 0.0]], [0.25, 0.75])
    np.testing.assert_allclose(empirical_mean(b), [1.5, 0.0])
    assert empirical_variance(b) == pytest.approx(0.75)


def test_invalid_weights():
    with pytest.raises(ValueError):
        ParticleBelief([[0, 0], [1, 1]], [0.7, 0.7])
    with pytest.raises(ValueError):
        ParticleBelief(np.zeros((0, 2)))


def test_gaussian_fit_regularised():
    mean, cov = gaussian_fit(ParticleBelief.point([0.3, 0.4]))
    np.testing.assert_allclose(mean, [0.3, 0.4])
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_no_contact_prediction_keeps_variance():
    rng = np.random.default_rng(0)
    b = ParticleBelief.gaussian([0.5, 0.5], np.eye(2) * 1e-4, 30, rng)
    scene = Scene(0.05, (CircleGeom(0.02),))
    u = scene.command([0.0, 0.0])
    noise = NoiseModel(1e-4)
    assert contact_probability(b, u, scene) == 0.0
    assert predict_variance(b, u, scene, noise) == empirical_variance(b)
    assert variance_gain(empirical_variance(b), predict_variance(b, u, scene, noise), noise) < 1


def test_gain_zero_denominator():
    assert variance_gain(0.0, 0.0, NoiseModel(0.0)) == 0.0
    assert variance_gain(0.0, 1e-6, NoiseModel(0.0)) == np.inf
    with pytest.raises(ValueError):
        variance_gain(-1.0, 0.0, NoiseModel(0.0))


def test_prediction_is_deterministic():
    rng = np.random.default_rng(3)
    scene, b, u, noise = random_contact_scene(rng)
    assert predict_variance(b, u, scene, noise) == predict_variance(b, u, scene, noise)


@pytest.mark.parametrize("seed", range(3))
def test_prediction_matches_monte_carlo(seed):
    rng = np.random.default_rng([seed, 99])
    scene, b, u, noise = random_contact_scene(rng)
    v, se = mc_variance_oracle(b, u, scene, noise, 50_000, rng)
    assert abs(predict_variance(b, u, scene, noise) - v) <= 3 * se


def test_canonical_gain_ordering():
    g = {s.name: s.gain(NoiseModel(1e-5)) for s in canonical_scenes()}
    assert g["single-point"] > 1
    assert g["flat-face"] == pytest.approx(1.0, abs=0.05)
    assert g["two-point"] < 1


def test_rollout_gains_match_scalar_gains():
    rng = np.random.default_rng(4)
    scene = Scene(0.05, (RectGeom((0.02, 0.08)),))
    b = ParticleBelief.gaussian([0, 0], np.eye(2) * 1e-4, 20, rng)
    q = np.c_[np.linspace(-0.12, 0.05, 10), np.zeros(10), np.zeros(10)]
    noise = NoiseModel(1e-5)
    bt = nominal_rollout(b, list(q), scene, noise, q_start=[-0.15, 0.0, 0.0])
    vec = gains_from_rollout(np.array(bt.variances), np.array(bt.contact_fractions), noise.variance_w)
    np.testing.assert_allclose(vec, trajectory_gains(bt, noise), rtol=1e-12)


def test_systematic_resample_counts():
    w = np.array([0.5, 0.25, 0.0, 0.25])
    for seed in range(5):
        idx = systematic_resample(w, np.random.default_rng(seed))
        np.testing.assert_array_equal(np.bincount(idx, minlength=4), [2, 1, 0, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=40), st.integers(0, 1000))
def test_systematic_resample_is_low_variance(raw, seed):
    w = np.array(raw) / np.sum(raw)
    n = w.shape[0]
    counts = np.bincount(systematic_resample(w, np.random.default_rng(seed)), minlength=n)
    assert counts.sum() == n
    assert np.all(np.abs(counts - n * w) < 1 + 1e-9)


def test_measurement_update_concentrates_near_observation():
    rng = np.random.default_rng(5)
    b = ParticleBelief(rng.normal(0, 0.05, (500, 2)))
    out = measurement_update(b, [0.02, -0.01], np.eye(2) * 1e-4, rng)
    assert out.n_particles == 500
    assert np.linalg.norm(empirical_mean(out) - [0.02, -0.01]) < 0.01
    assert empirical_variance(out) < empirical_variance(b)
    assert not out.degenerate_update


def test_measurement_update_degenerate_flag():
    b = ParticleBelief(np.zeros((10, 2)))
    out = measurement_update(b, [100.0, 100.0], np.eye(2) * 1e-6, np.random.default_rng(0))
    assert out.degenerate_update
    np.testing.assert_array_equal(out.particles, b.particles)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_variance_is_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(15, 2))
    shift = rng.normal(size=2) * 10
    assert empirical_variance(ParticleBelief(p)) == pytest.approx(empirical_variance(ParticleBelief(p + shift)),
                                                                   rel=1e-9, abs=1e-12)
