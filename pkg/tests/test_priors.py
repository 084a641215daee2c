import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpush.kinematics import IKFailure, PlanarChain
from robustpush.priors import (ContactModel, GaussianPrior, contact_prior_joint, contact_prior_task,
                               latent_decode, lift_to_trajectory, product_of_gaussians)


def _spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.5 * np.eye(n)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_precisions_add(n, seed):
    rng = np.random.default_rng(seed)
    a = GaussianPrior(rng.normal(size=n), _spd(rng, n))
    b = GaussianPrior(rng.normal(size=n), _spd(rng, n))
    p = product_of_gaussians(a, b)
    np.testing.assert_allclose(p.precision, a.precision + b.precision, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_product_mean_matches_covariance_form(n, seed):
    rng = np.random.default_rng(seed)
    Sa, Sb = _spd(rng, n), _spd(rng, n)
    ma, mb = rng.normal(size=n), rng.normal(size=n)
    p = product_of_gaussians(GaussianPrior.from_covariance(ma, Sa), GaussianPrior.from_covariance(mb, Sb))
    # classical fusion: m = Sb (Sa + Sb)^-1 ma + Sa (Sa + Sb)^-1 mb
    S = np.linalg.inv(Sa + Sb)
    np.testing.assert_allclose(p.mean, Sb @ S @ ma + Sa @ S @ mb, rtol=1e-8, atol=1e-10)


def test_product_with_singular_factor_is_proper():
    rng = np.random.default_rng(0)
    full = GaussianPrior(rng.normal(size=4), _spd(rng, 4))
    P = np.zeros((4, 4))
    P[2:, 2:] = _spd(rng, 2)
    partial = GaussianPrior(np.r_[0, 0, 1.0, 2.0], P)
    p = product_of_gaussians(full, partial)
    assert np.all(np.linalg.eigvalsh(p.precision) > 0)


def test_latent_decode_distribution():
    rng = np.random.default_rng(1)
    prior = GaussianPrior.from_covariance([1.0, -2.0, 0.5], _spd(rng, 3))
    theta = latent_decode(rng.standard_normal((200_000, 3)), prior)
    np.testing.assert_allclose(theta.mean(axis=0), prior.mean, atol=0.02)
    np.testing.assert_allclose(np.cov(theta.T), prior.covariance, rtol=0.03, atol=0.02)
    np.testing.assert_allclose(latent_decode(np.zeros(3), prior), prior.mean)


def test_contact_prior_task_covariance():
    cm = ContactModel(np.eye(2) * 4e-4)
    cov_o = np.array([[1e-4, 2e-5], [2e-5, 3e-4]])
    p = contact_prior_task([0.1, 0.2], cov_o, cm)
    np.testing.assert_allclose(p.mean, [0.1, 0.2])
    np.testing.assert_allclose(p.covariance, cm.sigma_ro + cov_o, rtol=1e-10)


def test_lift_places_block_on_final_via_point():
    final = GaussianPrior([1.0, 2.0], np.eye(2) * 3)
    lifted = lift_to_trajectory(final, 3, 2)
    np.testing.assert_allclose(lifted.mean, [0, 0, 0, 0, 1, 2])
    assert np.all(lifted.precision[:4] == 0)
    np.testing.assert_allclose(lifted.precision[4:, 4:], final.precision)


def test_chain_jacobian_matches_finite_difference():
    chain = PlanarChain([0.3, 0.25, 0.1])
    q = np.array([0.3, -0.5, 0.9])
    h = 1e-6
    fd = np.stack([(chain.forward(q + h * e) - chain.forward(q - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    np.testing.assert_allclose(chain.jacobian(q), fd, atol=1e-8)


def test_ik_round_trip_and_failure():
    chain = PlanarChain([0.3, 0.25])
    q = chain.inverse([0.35, 0.2], [0.2, 0.4])
    np.testing.assert_allclose(chain.forward(q), [0.35, 0.2], atol=1e-6)
    with pytest.raises(IKFailure):
        chain.inverse([2.0, 0.0], [0.1, 0.1])


def test_joint_prior_is_pullback():
    chain = PlanarChain([0.3, 0.25, 0.1])
    task = GaussianPrior.from_covariance([0.4, 0.15], np.eye(2) * 1e-3)
    p = contact_prior_joint(chain, task, np.array([0.2, 0.3, 0.1]))
    np.testing.assert_allclose(chain.forward(p.mean), task.mean, atol=1e-6)
    J = chain.jacobian(p.mean)
    np.testing.assert_allclose(p.precision, J.T @ task.precision @ J, rtol=1e-10)
    assert np.linalg.matrix_rank(p.precision) == 2


def test_invalid_priors():
    with pytest.raises(ValueError):
        GaussianPrior([0.0, 0.0], np.eye(3))
    with pytest.raises(ValueError):
        GaussianPrior([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        ContactModel(-np.eye(2))
    with pytest.raises(ValueError):
        product_of_gaussians(GaussianPrior([0.0], [[1.0]]), GaussianPrior([0.0, 0.0], np.eye(2)))
