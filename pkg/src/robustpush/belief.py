"""Particle beliefs over the object position and their sampling-free variance prediction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from robustpush.dynamics import (InfeasibleContact, NoiseModel, RobotCommand, Scene, contact_indicator,
                                 nominal_step, rollout_batch)

log = logging.getLogger(__name__)

EPS_REG = 1e-8
LIKELIHOOD_FLOOR = 1e-300


@dataclass
class ParticleBelief:
    particles: np.ndarray
    weights: np.ndarray | None = None
    degenerate_update: bool = field(default=False, compare=False)
    jammed: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.particles = np.array(self.particles, dtype=float).reshape(-1, 2)
        n = self.particles.shape[0]
        if n < 1:
            raise ValueError("a belief needs at least one particle")
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(self.weights, dtype=float).reshape(n)
            if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be non-negative and sum to one")

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @classmethod
    def gaussian(cls, mean, cov, n_particles: int, rng: np.random.Generator) -> "ParticleBelief":
        return cls(rng.multivariate_normal(np.asarray(mean, float), np.asarray(cov, float), n_particles))

    @classmethod
    def uniform_box(cls, low, high, n_particles: int, rng: np.random.Generator) -> "ParticleBelief":
        return cls(rng.uniform(np.asarray(low, float), np.asarray(high, float), (n_particles, 2)))

    @classmethod
    def point(cls, position) -> "ParticleBelief":
        return cls(np.asarray(position, dtype=float).reshape(1, 2))


@dataclass
class BeliefTrajectory:
    beliefs: list[ParticleBelief]
    contact_fractions: list[float]
    variances: list[float]


def empirical_mean(b: ParticleBelief) -> np.ndarray:
    return b.weights @ b.particles


def empirical_variance(b: ParticleBelief) -> float:
    """Trace of the weighted particle covariance."""
    dev = b.particles - empirical_mean(b)
    return float(b.weights @ np.einsum("ij,ij->i", dev, dev))


def contact_probability(b: ParticleBelief, u: RobotCommand, scene: Scene) -> float:
    eta = np.array([contact_indicator(p, u, scene) for p in b.particles], dtype=float)
    return float(b.weights @ eta)


def predict_variance(b: ParticleBelief, u: RobotCommand, scene: Scene, noise: NoiseModel,
                     u_prev: RobotCommand | None = None) -> float:
    """Variance after ``u`` from nominal propagation plus injected contact noise.

    No perturbation is sampled, so the prediction is deterministic.
    """
    moved = ParticleBelief(np.stack([nominal_step(p, u, scene, u_prev).position for p in b.particles]),
                           b.weights.copy())
    return empirical_variance(moved) + contact_probability(b, u, scene) * noise.variance_w


def variance_gain(v_prev: float, v_pred: float, noise: NoiseModel) -> float:
    """Ratio of predicted variance to current variance plus noise variance.

    With a zero denominator the gain is +inf for a positive prediction and 0
    otherwise.
    """
    if v_prev < 0 or v_pred < 0:
        raise ValueError("variances must be non-negative")
    denom = v_prev + noise.variance_w
    if denom == 0:
        return float("inf") if v_pred > 0 else 0.0
    return v_pred / denom


def variances_of(traj: np.ndarray) -> np.ndarray:
    """Equal-weight trace variance over the particle axis (second to last)."""
    n = traj.shape[-2]
    dev = traj - traj.sum(axis=-2, keepdims=True) / n
    return (dev * dev).sum(axis=(-2, -1)) / n


def gains_from_rollout(variances: np.ndarray, contact_fractions: np.ndarray, variance_w: float) -> np.ndarray:
    """Per-step variance gains from a nominal rollout, vectorised over leading axes."""
    pred = variances[..., 1:] + contact_fractions * variance_w
    denom = variances[..., :-1] + variance_w
    with np.errstate(divide="ignore", invalid="ignore"):
        g = pred / denom
    zero = denom == 0
    if np.any(zero):
        g = np.where(zero, np.where(pred > 0, np.inf, 0.0), g)
    return g


def nominal_rollout(b0: ParticleBelief, controls, scene: Scene, noise: NoiseModel,
                    q_start=None) -> BeliefTrajectory:
    """Propagate every particle through the nominal dynamics along ``controls``.

    ``controls`` is a sequence of robot configurations (K, n_dof) or
    RobotCommands. ``q_start`` is the robot configuration before the first
    command; without it the first command is applied in a single projection.
    """
    cmds = [c.as_array() if isinstance(c, RobotCommand) else scene.poses(c) for c in controls]
    if len(cmds) == 0:
        return BeliefTrajectory([b0], [], [empirical_variance(b0)])
    if q_start is None:
        start = cmds[0]
    elif isinstance(q_start, RobotCommand):
        start = q_start.as_array()
    else:
        start = scene.poses(q_start)
    poses = np.stack([start] + cmds)[None]
    traj, eta, ok = rollout_batch(b0.particles, poses, scene)
    if not ok[0]:
        raise InfeasibleContact("nominal rollout hit a non-converging projection")
    beliefs = [ParticleBelief(traj[0, k].copy(), b0.weights.copy()) for k in range(traj.shape[1])]
    fractions = [float(b0.weights @ eta[0, k]) for k in range(eta.shape[1])]
    return BeliefTrajectory(beliefs, fractions, [empirical_variance(b) for b in beliefs])


def trajectory_gains(bt: BeliefTrajectory, noise: NoiseModel) -> list[float]:
    return [variance_gain(bt.variances[k], bt.variances[k + 1] + bt.contact_fractions[k] * noise.variance_w, noise)
            for k in range(len(bt.contact_fractions))]


def gaussian_fit(b: ParticleBelief, eps_reg: float = EPS_REG) -> tuple[np.ndarray, np.ndarray]:
    mean = empirical_mean(b)
    dev = b.particles - mean
    cov = (b.weights[:, None] * dev).T @ dev
    return mean, cov + eps_reg * np.eye(2)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset, N evenly spaced pointers)."""
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def measurement_update(b: ParticleBelief, observation, obs_noise_cov, rng: np.random.Generator) -> ParticleBelief:
    """Gaussian-likelihood reweighting followed by systematic resampling.

    If every likelihood underflows, the weights fall back to uniform and the
    returned belief is flagged ``degenerate_update``.
    """
    obs = np.asarray(observation, dtype=float).reshape(2)
    cov = np.asarray(obs_noise_cov, dtype=float).reshape(2, 2)
    dev = b.particles - obs
    maha = np.einsum("ij,ij->i", dev @ np.linalg.inv(cov), dev)
    norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
    lik = norm * np.exp(-0.5 * maha)
    degenerate = bool(np.all(lik < LIKELIHOOD_FLOOR))
    if degenerate:
        log.warning("measurement update degenerate: all likelihoods underflow, keeping prior weights")
        w = np.full(b.n_particles, 1.0 / b.n_particles)
    else:
        w = b.weights * lik
        w = w / w.sum()
    idx = systematic_resample(w, rng)
    return ParticleBelief(b.particles[idx].copy(), degenerate_update=degenerate)
