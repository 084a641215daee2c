"""Quasi-static object dynamics under commanded effector poses.

The object is a disk whose position is the whole state. A command places the
effectors exactly (infinitely stiff robot); the object moves only as much as
needed to stop overlapping them. With an isotropic inertia metric the minimal
work displacement is the Euclidean projection, which is what the kernels do.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from robustpush import _kernels
from robustpush.geometry import EffectorPose, Geom, RectGeom, signed_distance
from robustpush.kinematics import PlanarChain

NOISE_FAMILIES = ("gaussian-tangential", "uniform-tangential")


class InfeasibleContact(RuntimeError):
    """Projection did not converge; the effectors are squeezing the object."""


@dataclass(frozen=True)
class ObjectState:
    position: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        if not np.all(np.isfinite(pos)):
            raise ValueError("object position must be finite")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class RobotCommand:
    effectors: tuple[EffectorPose, ...]

    def as_array(self) -> np.ndarray:
        return np.stack([e.as_row() for e in self.effectors])


@dataclass(frozen=True)
class NoiseModel:
    variance_w: float = 1e-4
    family: str = "gaussian-tangential"

    def __post_init__(self):
        if not self.variance_w >= 0:
            raise ValueError("variance_w must be non-negative")
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Unit-variance, zero-mean draws of the configured family."""
        if self.family == "gaussian-tangential":
            return rng.standard_normal(shape)
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)


@dataclass
class Scene:
    """Object radius plus the robot: its effector shapes and how q maps onto them.

    Without ``kinematics`` the robot configuration stacks, per effector,
    (x, y) for circles and (x, y, yaw) for rectangles. With a planar chain the
    configuration is the joint vector and there must be a single effector.
    """

    object_radius: float
    effectors: tuple[Geom, ...]
    kinematics: PlanarChain | None = None
    n_substeps: int = 4
    eps_pen: float = 1e-6
    max_proj_iters: int = 50
    inertia: float = 1.0
    _kinds: np.ndarray = field(init=False, repr=False)
    _params: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.object_radius > 0:
            raise ValueError("object radius must be positive")
        if not self.inertia > 0:
            raise ValueError("inertia scale must be positive")
        self.effectors = tuple(self.effectors)
        if not 1 <= len(self.effectors) <= 2:
            raise ValueError("scenes support one or two effectors")
        if self.kinematics is not None and len(self.effectors) != 1:
            raise ValueError("joint-space scenes drive a single effector")
        self._kinds = np.array([g.kind for g in self.effectors], dtype=np.int64)
        self._params = np.array([g.params for g in self.effectors], dtype=float)

    @property
    def n_effectors(self) -> int:
        return len(self.effectors)

    def effector_dofs(self, e: int) -> slice:
        """Slice of the task-space configuration owned by effector ``e``."""
        start = 0
        for i, g in enumerate(self.effectors):
            width = 3 if isinstance(g, RectGeom) else 2
            if i == e:
                return slice(start, start + width)
            start += width
        raise IndexError(e)

    @property
    def n_dof(self) -> int:
        if self.kinematics is not None:
            return self.kinematics.n_dof
        return self.effector_dofs(self.n_effectors - 1).stop

    def poses(self, q) -> np.ndarray:
        """Effector poses (..., E, 3) for configurations q (..., n_dof)."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1] + (self.n_effectors, 3))
        if self.kinematics is not None:
            out[..., 0, :2] = self.kinematics.forward(q)
            if isinstance(self.effectors[0], RectGeom):
                out[..., 0, 2] = self.kinematics.tip_yaw(q)
            return out
        for e, g in enumerate(self.effectors):
            sl = q[..., self.effector_dofs(e)]
            out[..., e, :2] = sl[..., :2]
            if isinstance(g, RectGeom):
                out[..., e, 2] = sl[..., 2]
        return out

    def command(self, q) -> RobotCommand:
        rows = self.poses(q)
        return RobotCommand(tuple(EffectorPose(r[:2], r[2]) for r in rows))

    def min_distance(self, obj_center, u: RobotCommand) -> float:
        return min(signed_distance(g, p, obj_center, self.object_radius).signed_distance
                   for g, p in zip(self.effectors, u.effectors))

    def kernel_args(self):
        return self._kinds, self._params, float(self.object_radius)


def _as_position(q_o) -> np.ndarray:
    if isinstance(q_o, ObjectState):
        return q_o.position
    return np.asarray(q_o, dtype=float).reshape(2)


def _pose_rows(u: RobotCommand, scene: Scene) -> np.ndarray:
    rows = u.as_array()
    if rows.shape[0] != scene.n_effectors:
        raise ValueError(f"command has {rows.shape[0]} effectors, scene has {scene.n_effectors}")
    return rows


def contact_indicator(q_o, u: RobotCommand, scene: Scene) -> int:
    """1 if any effector touches or overlaps the object, else 0."""
    return int(scene.min_distance(_as_position(q_o), u) <= 0.0)


def nominal_step(q_o, u: RobotCommand, scene: Scene, u_prev: RobotCommand | None = None) -> ObjectState:
    """Quasi-static successor of the object under command ``u``.

    When ``u_prev`` is given the effectors sweep from it to ``u`` in
    ``scene.n_substeps`` projections; otherwise the object is projected once.
    """
    cur = _pose_rows(u, scene)
    prev = cur if u_prev is None else _pose_rows(u_prev, scene)
    kinds, params, ro = scene.kernel_args()
    ox, oy = _as_position(q_o)
    n_sub = scene.n_substeps if u_prev is not None else 1
    x, y, ok = _kernels.step(ox, oy, ro, kinds, params, prev, cur, n_sub,
                             scene.eps_pen, scene.max_proj_iters)
    if not ok:
        raise InfeasibleContact(f"projection did not converge within {scene.max_proj_iters} iterations")
    return ObjectState(np.array([x, y]))


def stochastic_step(q_o, u: RobotCommand, scene: Scene, noise: NoiseModel,
                    rng: np.random.Generator, u_prev: RobotCommand | None = None) -> ObjectState:
    """Nominal step plus, on contact, a tangential perturbation of variance ``noise.variance_w``."""
    cur = _pose_rows(u, scene)
    prev = cur if u_prev is None else _pose_rows(u_prev, scene)
    kinds, params, ro = scene.kernel_args()
    poses = np.stack([prev, cur])
    w = noise.draw(rng, (1, 1))
    n_sub = scene.n_substeps if u_prev is not None else 1
    traj, _, jammed = _kernels.rollout_stochastic(
        _as_position(q_o).reshape(1, 2), poses, w, float(np.sqrt(noise.variance_w)),
        kinds, params, ro, n_sub, scene.eps_pen, scene.max_proj_iters)
    if jammed[0]:
        raise InfeasibleContact(f"projection did not converge within {scene.max_proj_iters} iterations")
    return ObjectState(traj[1, 0].copy())


def rollout_batch(obj0, poses, scene: Scene):
    """Nominal rollout of particles ``obj0`` (P, 2) under pose sequences (C, K+1, E, 3)."""
    kinds, params, ro = scene.kernel_args()
    return _kernels.rollout_nominal(np.ascontiguousarray(obj0, dtype=float),
                                    np.ascontiguousarray(poses, dtype=float),
                                    kinds, params, ro, scene.n_substeps,
                                    scene.eps_pen, scene.max_proj_iters)


def stochastic_rollout_batch(obj0, poses, scene: Scene, noise: NoiseModel, rng: np.random.Generator):
    """Noisy rollout of particles (P, 2) under one pose sequence (K+1, E, 3)."""
    kinds, params, ro = scene.kernel_args()
    obj0 = np.ascontiguousarray(obj0, dtype=float)
    n_k = poses.shape[0] - 1
    w = noise.draw(rng, (obj0.shape[0], n_k))
    return _kernels.rollout_stochastic(obj0, np.ascontiguousarray(poses, dtype=float), w,
                                       float(np.sqrt(noise.variance_w)), kinds, params, ro,
                                       scene.n_substeps, scene.eps_pen, scene.max_proj_iters)


def push_1d(q, u: float, perturbation) -> tuple[np.ndarray, np.ndarray]:
    """Half-line push: objects left of ``u`` end at ``u`` plus the perturbation.

    Runs through the same projection kernel as the planar dynamics, with a
    wide flat pusher whose face sits at ``u``. Returns new positions and the
    contact indicator per object.
    """
    q = np.ascontiguousarray(q, dtype=float)
    w = np.ascontiguousarray(np.broadcast_to(perturbation, q.shape), dtype=float)
    return _kernels.push_line(q, float(u), w, 1e-6, 50)
