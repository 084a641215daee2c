"""Canonical one-step pushes that show the three signs of the variance gain, and random contact scenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustpush.belief import ParticleBelief, empirical_variance, predict_variance, variance_gain
from robustpush.dynamics import NoiseModel, RobotCommand, Scene
from robustpush.geometry import CircleGeom, EffectorPose, RectGeom

OBJECT_RADIUS = 0.05
LATERAL_STD = 0.01


@dataclass(frozen=True)
class GainScene:
    """A belief, a scene and one pushing step from ``u_prev`` to ``u``."""

    name: str
    scene: Scene
    belief: ParticleBelief
    u_prev: RobotCommand
    u: RobotCommand

    def gain(self, noise: NoiseModel) -> float:
        v0 = empirical_variance(self.belief)
        return variance_gain(v0, predict_variance(self.belief, self.u, self.scene, noise, self.u_prev), noise)


def lateral_belief(n_particles: int = 20, seed: int = 0) -> ParticleBelief:
    """Object known along x, uncertain along y: the shared start of the canonical pushes."""
    y = np.random.default_rng(seed).normal(0.0, LATERAL_STD, n_particles)
    return ParticleBelief(np.c_[np.zeros(n_particles), y])


def single_point_push(belief: ParticleBelief) -> GainScene:
    """A small disk pushes along x; off-axis objects slide off to the side."""
    scene = Scene(OBJECT_RADIUS, (CircleGeom(0.02),))
    return GainScene("single-point", scene, belief, scene.command([-0.08, 0.0]), scene.command([-0.03, 0.0]))


def flat_face_push(belief: ParticleBelief) -> GainScene:
    """A wide flat face pushes along x; every object moves by the same amount."""
    scene = Scene(OBJECT_RADIUS, (RectGeom((0.01, 0.1)),))
    return GainScene("flat-face", scene, belief, scene.command([-0.08, 0.0, 0.0]),
                     scene.command([-0.03, 0.0, 0.0]))


def two_point_push(belief: ParticleBelief) -> GainScene:
    """One disk pushes along y toward a second, fixed disk that stops the object."""
    scene = Scene(OBJECT_RADIUS, (CircleGeom(0.02), CircleGeom(0.02)))
    return GainScene("two-point", scene, belief, scene.command([0.0, -0.12, 0.0, 0.11]),
                     scene.command([0.0, -0.035, 0.0, 0.11]))


def canonical_scenes(n_particles: int = 20, seed: int = 0) -> list[GainScene]:
    b = lateral_belief(n_particles, seed)
    return [single_point_push(b), flat_face_push(b), two_point_push(b)]


def random_contact_scene(rng: np.random.Generator, n_particles: int = 20):
    """Single-effector scene whose command touches part of a Gaussian belief.

    Returns (scene, belief, command, noise).
    """
    if rng.random() < 0.5:
        geom = CircleGeom(rng.uniform(0.02, 0.06))
        yaw = 0.0
    else:
        geom = RectGeom((rng.uniform(0.01, 0.03), rng.uniform(0.03, 0.08)))
        yaw = None
    scene = Scene(OBJECT_RADIUS, (geom,))
    belief = ParticleBelief.gaussian([0.0, 0.0], np.eye(2) * rng.uniform(1e-4, 1e-3), n_particles, rng)
    ang = rng.uniform(-np.pi, np.pi)
    d = OBJECT_RADIUS + 0.8 * geom.contact_radius
    u = RobotCommand((EffectorPose([-d * np.cos(ang), -d * np.sin(ang)], ang if yaw is None else yaw),))
    family = "gaussian-tangential" if rng.random() < 0.5 else "uniform-tangential"
    return scene, belief, u, NoiseModel(rng.uniform(1e-5, 1e-3), family)
