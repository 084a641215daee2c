"""Gaussian priors over via-point parameters: contact prior, its lift, and the product with smoothness."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from robustpush.kinematics import IKFailure, PlanarChain
from robustpush.trajectory import RIDGE, SmoothnessPrior

KinematicModel = PlanarChain

__all__ = ["GaussianPrior", "ContactModel", "KinematicModel", "IKFailure", "contact_prior_task",
           "contact_prior_joint", "lift_to_trajectory", "product_of_gaussians", "latent_decode",
           "default_contact_model", "task_space_prior"]


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian in information form. The precision may be singular before a product."""

    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        P = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if P.shape != (m.shape[0], m.shape[0]):
            raise ValueError(f"precision shape {P.shape} does not match mean length {m.shape[0]}")
        if not np.allclose(P, P.T, atol=1e-10 * max(1.0, np.abs(P).max())):
            raise ValueError("precision must be symmetric")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "precision", 0.5 * (P + P.T))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    @property
    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.covariance)

    @classmethod
    def from_covariance(cls, mean, cov) -> "GaussianPrior":
        return cls(mean, np.linalg.inv(np.atleast_2d(np.asarray(cov, dtype=float))))

    @classmethod
    def from_smoothness(cls, sp: SmoothnessPrior) -> "GaussianPrior":
        return cls(sp.mean, sp.precision)


@dataclass(frozen=True)
class ContactModel:
    """Effector configurations likely to touch an object at q_o: N(f_c(q_o), sigma_ro)."""

    sigma_ro: np.ndarray
    mean_map: Callable = lambda q_o: np.asarray(q_o, dtype=float)
    jacobian: np.ndarray = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.sigma_ro, dtype=float))
        if not np.allclose(S, S.T) or np.any(np.linalg.eigvalsh(S) <= 0):
            raise ValueError("contact covariance must be symmetric positive definite")
        object.__setattr__(self, "sigma_ro", S)
        A = np.eye(S.shape[0], 2) if self.jacobian is None else np.asarray(self.jacobian, dtype=float)
        object.__setattr__(self, "jacobian", A)


def default_contact_model(object_radius: float, effector_radius: float) -> ContactModel:
    """Isotropic ball over the contact shell around the object center."""
    s = (object_radius + effector_radius) * 0.75
    return ContactModel(s**2 * np.eye(2))


def contact_prior_task(obj_mean, obj_cov, cm: ContactModel) -> GaussianPrior:
    """Linearised marginal over the final effector position: Sigma_ro + A Sigma_o A^T."""
    obj_cov = np.asarray(obj_cov, dtype=float)
    A = cm.jacobian
    cov = cm.sigma_ro + A @ obj_cov @ A.T
    return GaussianPrior.from_covariance(cm.mean_map(np.asarray(obj_mean, dtype=float)), 0.5 * (cov + cov.T))


def contact_prior_joint(km: PlanarChain, task_prior: GaussianPrior, seed_joints) -> GaussianPrior:
    """Joint-space contact prior with precision J^T Q_x J at the IK solution (rank-deficient)."""
    q_bar = km.inverse(task_prior.mean, seed_joints)
    if np.linalg.norm(km.forward(q_bar) - task_prior.mean) > 1e-4:
        raise IKFailure("IK solution misses the contact prior mean")
    J = km.jacobian(q_bar)
    return GaussianPrior(q_bar, J.T @ task_prior.precision @ J)


def task_space_prior(task_prior: GaussianPrior, scene, q_ref) -> GaussianPrior:
    """Contact prior over the full task-space configuration of a (possibly two-effector) robot.

    Every effector's position block gets the task prior; yaw entries keep
    ``q_ref`` with zero precision.
    """
    n = scene.n_dof
    mean = np.array(q_ref, dtype=float).reshape(n)
    P = np.zeros((n, n))
    for e in range(scene.n_effectors):
        sl = scene.effector_dofs(e)
        idx = np.arange(sl.start, sl.start + 2)
        mean[idx] = task_prior.mean
        P[np.ix_(idx, idx)] = task_prior.precision
    return GaussianPrior(mean, P)


def lift_to_trajectory(final_prior: GaussianPrior, N: int, n_dof: int) -> GaussianPrior:
    """Place the final-configuration prior on the last via-point block of theta."""
    if final_prior.dim != n_dof:
        raise ValueError("final prior dimension does not match n_dof")
    mean = np.zeros(N * n_dof)
    P = np.zeros((N * n_dof, N * n_dof))
    mean[-n_dof:] = final_prior.mean
    P[-n_dof:, -n_dof:] = final_prior.precision
    return GaussianPrior(mean, P)


def product_of_gaussians(a: GaussianPrior, b: GaussianPrior) -> GaussianPrior:
    """Normalised product: precisions add, means combine precision-weighted."""
    if a.dim != b.dim:
        raise ValueError("priors have different dimensions")
    P = a.precision + b.precision
    rhs = a.precision @ a.mean + b.precision @ b.mean
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        warnings.warn("product precision is singular; adding a 1e-10 ridge", RuntimeWarning, stacklevel=2)
        P = P + RIDGE * np.eye(a.dim)
    return GaussianPrior(np.linalg.solve(P, rhs), P)


def latent_decode(eps, product: GaussianPrior, L: np.ndarray | None = None) -> np.ndarray:
    """theta = mean + L eps with L the lower Cholesky factor of the covariance.

    ``eps`` may be a single latent (d,) or a batch (n, d).
    """
    if L is None:
        L = product.cholesky
    eps = np.asarray(eps, dtype=float)
    return product.mean + eps @ L.T
