"""Receding-horizon planning: plan a horizon, execute its prefix on the belief, shift, repeat.

Also the closed-loop variant with particle-filter measurement updates, the
nominal-model baseline, and the stochastic evaluation of finished plans.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from robustpush.belief import ParticleBelief, empirical_mean, measurement_update
from robustpush.dynamics import NoiseModel, RobotCommand, Scene, stochastic_rollout_batch
from robustpush.optimizer import (CandidateResult, NoValidPlan, PathTask, PlannerConfig, TargetTask,
                                  bs_vp_sto)
from robustpush.trajectory import BoundaryConditions, state_at_fraction

log = logging.getLogger(__name__)

SUCCESS = "success"
MAX_ITERATIONS = "max_iterations"
NO_VALID_PLAN = "no_valid_plan"


@dataclass(frozen=True)
class HorizonConfig:
    execute_steps: int = 4
    tolerance: float = 0.01
    max_outer: int = 500

    def __post_init__(self):
        if self.execute_steps < 1:
            raise ValueError("execute_steps must be at least 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    def check(self, pconfig: PlannerConfig):
        if self.execute_steps > pconfig.n_steps:
            raise ValueError(f"execute_steps {self.execute_steps} exceeds the horizon of {pconfig.n_steps} steps")


def execute_steps_for(seconds: float, horizon_duration: float, n_steps: int) -> int:
    """Command steps covering ``seconds`` of a horizon of ``horizon_duration`` split into ``n_steps``."""
    return int(min(n_steps, max(1, round(seconds / horizon_duration * n_steps))))


@dataclass
class PlanLog:
    q_start: np.ndarray
    commands: list = field(default_factory=list)
    beliefs: list = field(default_factory=list)
    gains: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    outcome: str = MAX_ITERATIONS
    n_outer: int = 0
    progress: float = 0.0

    @property
    def n_horizons(self) -> int:
        return len(self.gains)

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    def command_array(self) -> np.ndarray:
        if not self.commands:
            return np.zeros((0, self.q_start.shape[0]))
        return np.asarray(self.commands, dtype=float)

    def final_belief(self) -> ParticleBelief:
        return self.beliefs[-1]


def stochastic_rollout(b: ParticleBelief, commands, scene: Scene, noise: NoiseModel, rng: np.random.Generator,
                       q_start=None) -> ParticleBelief:
    """Propagate each particle through the noisy dynamics along ``commands``.

    Commands are configurations (H, n_dof) or RobotCommands; ``q_start`` is the
    robot configuration before the first one. Particles whose projection fails
    stay put and are marked in ``jammed``.
    """
    cmds = [c.as_array() if isinstance(c, RobotCommand) else scene.poses(c) for c in commands]
    if not cmds:
        return ParticleBelief(b.particles.copy(), b.weights.copy())
    if q_start is None:
        start = cmds[0]
    elif isinstance(q_start, RobotCommand):
        start = q_start.as_array()
    else:
        start = scene.poses(q_start)
    poses = np.stack([start] + cmds)
    traj, _, jammed = stochastic_rollout_batch(b.particles, poses, scene, noise, rng)
    if np.any(jammed):
        log.info("%d particles jammed during rollout", int(jammed.sum()))
    prev = b.jammed if b.jammed is not None else np.zeros(b.n_particles, dtype=bool)
    return ParticleBelief(traj[-1].copy(), b.weights.copy(), jammed=prev | jammed)


class _Progress:
    """Termination predicate; the path task accumulates arc progress of the mean."""

    def __init__(self, task, tolerance: float):
        self.task, self.tol, self.total = task, tolerance, 0.0

    def update(self, m_before, m_after):
        if isinstance(self.task, PathTask):
            self.total += float(self.task.progress(m_before, m_after))

    def done(self, m) -> bool:
        if isinstance(self.task, PathTask):
            return self.total >= 1.0 and float(self.task.error(m)) <= self.tol
        return self.task.error(m) <= self.tol


def _substream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng([int(seed), *keys])


def _plan_seed(seed: int, outer: int) -> int:
    return int(np.random.SeedSequence([int(seed), 7, outer]).generate_state(1, np.uint64)[0] >> 1)


def plan_receding(bc: BoundaryConditions, b0: ParticleBelief, scene: Scene, task, hconfig: HorizonConfig,
                  pconfig: PlannerConfig, seed: int = 0, rollout_noise: NoiseModel | None = None) -> PlanLog:
    """Alternate single-horizon search with stochastic execution of its first H commands.

    Only executable candidates run: no constraint penalties and, for a robust
    planner, every variance gain at or below one. Otherwise the planner
    replans with a fresh stream. Each attempt counts as one outer iteration.
    """
    hconfig.check(pconfig)
    noise = pconfig.noise if rollout_noise is None else rollout_noise
    H, K = hconfig.execute_steps, pconfig.n_steps
    plog = PlanLog(q_start=bc.q0.copy(), beliefs=[b0], boundary=[bc])
    pred = _Progress(task, hconfig.tolerance)
    rng = _substream(seed, 1)
    b = b0
    for outer in range(hconfig.max_outer):
        if pred.done(empirical_mean(b)):
            plog.outcome = SUCCESS
            break
        plog.n_outer = outer + 1
        try:
            best = bs_vp_sto(bc, b, scene, task, pconfig, rng=_plan_seed(seed, outer))
        except NoValidPlan:
            plog.outcome = NO_VALID_PLAN
            return _finish(plog, pred)
        if not best.executable(pconfig.robust):
            continue
        b, bc = _execute(best, b, bc, scene, noise, rng, H, K, pconfig, plog, pred)
    else:
        if pred.done(empirical_mean(b)):
            plog.outcome = SUCCESS
    return _finish(plog, pred)


def _finish(plog: PlanLog, pred: _Progress) -> PlanLog:
    plog.progress = pred.total
    return plog


def _execute(best: CandidateResult, b, bc, scene, noise, rng, H, K, pconfig, plog: PlanLog, pred: _Progress):
    u = best.commands[:H]
    m_before = empirical_mean(b)
    b_next = stochastic_rollout(b, u, scene, noise, rng, q_start=bc.q0)
    via = best.theta.reshape(pconfig.n_via, scene.n_dof)
    q, qd = state_at_fraction(via, bc, best.duration, H / K)
    bc_next = BoundaryConditions(q, qd)
    plog.commands.extend(np.array(c) for c in u)
    plog.beliefs.append(b_next)
    plog.gains.append(best.gains.copy())
    plog.boundary.append(bc_next)
    plog.candidates.append(best)
    pred.update(m_before, empirical_mean(b_next))
    return b_next, bc_next


def baseline_plan(q_o_known, bc: BoundaryConditions, scene: Scene, task, hconfig: HorizonConfig,
                  pconfig: PlannerConfig, seed: int = 0) -> PlanLog:
    """Same pipeline on a point belief with the nominal model only (no variance terms, no noise)."""
    cfg = replace(pconfig, robust=False, n_particles=1)
    b0 = ParticleBelief.point(np.asarray(q_o_known, dtype=float))
    return plan_receding(bc, b0, scene, task, hconfig, cfg, seed, rollout_noise=NoiseModel(0.0))


@dataclass
class MpcStep:
    commands: np.ndarray
    belief: ParticleBelief
    boundary: BoundaryConditions
    ok: bool
    candidate: CandidateResult | None


def mpc_step(belief: ParticleBelief, observation, bc: BoundaryConditions, scene: Scene, task,
             pconfig: PlannerConfig, hconfig: HorizonConfig, obs_noise_cov=None, seed: int = 0) -> MpcStep:
    """Optional measurement update, one planning call, and the first H commands.

    Without a valid plan, or with a robust plan whose gains exceed one, the
    robot holds position and ``ok`` is False.
    """
    hconfig.check(pconfig)
    H, K = hconfig.execute_steps, pconfig.n_steps
    if observation is not None:
        if obs_noise_cov is None:
            raise ValueError("an observation needs its noise covariance")
        belief = measurement_update(belief, observation, obs_noise_cov, _substream(seed, 2))
    try:
        best = bs_vp_sto(bc, belief, scene, task, pconfig, rng=_plan_seed(seed, 0))
    except NoValidPlan:
        best = None
    if best is None or not best.executable(pconfig.robust):
        log.info("no valid plan; holding position")
        return MpcStep(np.tile(bc.q0, (H, 1)), belief, BoundaryConditions.at_rest(bc.q0), False, best)
    via = best.theta.reshape(pconfig.n_via, scene.n_dof)
    q, qd = state_at_fraction(via, bc, best.duration, H / K)
    return MpcStep(best.commands[:H].copy(), belief, BoundaryConditions(q, qd), True, best)


@dataclass
class MpcSimulation:
    true_path: np.ndarray
    belief_means: np.ndarray
    commands: np.ndarray
    success: bool
    final_error: float


def simulate_mpc(b0: ParticleBelief, true_start, bc: BoundaryConditions, scene: Scene, task: TargetTask,
                 pconfig: PlannerConfig, hconfig: HorizonConfig, obs_noise_cov, n_cycles: int,
                 perturb_at: int | None = None, perturbation=(0.0, 0.0), seed: int = 0,
                 process_std: float = 0.0) -> MpcSimulation:
    """Closed loop against a simulated world; the object may be displaced once mid-run.

    ``process_std`` adds a random walk to every particle before each update so
    the filter can follow disturbances the contact model does not explain.
    """
    obs_cov = np.asarray(obs_noise_cov, dtype=float)
    world_rng = _substream(seed, 3)
    belief_rng = _substream(seed, 4)
    x = np.asarray(true_start, dtype=float).reshape(1, 2).copy()
    b = b0
    path, means, cmds = [x[0].copy()], [empirical_mean(b)], []
    for i in range(n_cycles):
        if perturb_at is not None and i == perturb_at:
            x = x + np.asarray(perturbation, dtype=float)
        obs = world_rng.multivariate_normal(x[0], obs_cov)
        if process_std > 0:
            b = ParticleBelief(b.particles + process_std * belief_rng.standard_normal(b.particles.shape), b.weights)
        if i > 0 and task.error(x[0]) <= hconfig.tolerance and task.error(empirical_mean(b)) <= hconfig.tolerance:
            # on target: only track the object, keep the robot still
            b = measurement_update(b, obs, obs_cov, _substream(seed, 5, i))
            path.append(x[0].copy())
            means.append(empirical_mean(b))
            continue
        step = mpc_step(b, obs, bc, scene, task, pconfig, hconfig, obs_cov, seed=_plan_seed(seed, 1000 + i))
        start = bc.q0
        world = stochastic_rollout(ParticleBelief(x), step.commands, scene, pconfig.noise, world_rng, q_start=start)
        x = world.particles
        b = stochastic_rollout(step.belief, step.commands, scene, pconfig.noise, belief_rng, q_start=start)
        bc = step.boundary
        cmds.extend(step.commands)
        path.append(x[0].copy())
        means.append(empirical_mean(b))
    err = task.error(x[0])
    return MpcSimulation(np.array(path), np.array(means), np.array(cmds), err <= hconfig.tolerance, err)


# ---------------------------------------------------------------- evaluation


def plan_poses(plog: PlanLog, scene: Scene) -> np.ndarray:
    """Pose sequence (n+1, E, 3) of a plan, starting at the initial robot configuration."""
    q = np.concatenate([plog.q_start[None], plog.command_array()])
    return scene.poses(q)


def rollout_outcomes(poses, starts, scene: Scene, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Final object positions (n, 2) of independent noisy executions from ``starts`` (n, 2)."""
    traj, _, _ = stochastic_rollout_batch(np.asarray(starts, dtype=float), np.asarray(poses, dtype=float),
                                          scene, noise, rng)
    return traj[-1]


def evaluate_plan(plog: PlanLog, starts, scene: Scene, noise: NoiseModel, goal, tolerance: float,
                  rng: np.random.Generator) -> float:
    """Fraction of noisy executions ending within ``tolerance`` of ``goal``."""
    final = rollout_outcomes(plan_poses(plog, scene), starts, scene, noise, rng)
    return float(np.mean(np.linalg.norm(final - np.asarray(goal, dtype=float), axis=1) <= tolerance))


def reflect_poses(poses, center) -> np.ndarray:
    """Point reflection of a pose sequence about ``center`` (yaw turned by pi)."""
    out = np.array(poses, dtype=float)
    out[..., :2] = 2 * np.asarray(center, dtype=float) - out[..., :2]
    out[..., 2] = np.mod(out[..., 2] + 2 * np.pi, 2 * np.pi) - np.pi
    return out


def back_and_forth(poses, start, end, scene: Scene, noise: NoiseModel, n_cycles: int, escape_radius: float,
                   rng: np.random.Generator) -> int:
    """Cycles completed before the object escapes when a plan is replayed forward and mirrored back.

    ``poses`` pushes the object from ``start`` to ``end``; the return leg is its
    point reflection about the midpoint. A half-cycle fails when the object
    ends farther than ``escape_radius`` from where that leg should leave it.
    """
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    back = reflect_poses(poses, 0.5 * (start + end))
    x = start.reshape(1, 2)
    for cycle in range(n_cycles):
        for legs, goal in ((poses, end), (back, start)):
            traj, _, jammed = stochastic_rollout_batch(x, legs, scene, noise, rng)
            x = traj[-1]
            if jammed[0] or np.linalg.norm(x[0] - goal) > escape_radius:
                return cycle
    return n_cycles
