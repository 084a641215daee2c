"""CMA-ES in the latent space of the trajectory prior, and one planning horizon of belief-space search.

Candidates are latent vectors eps; theta = mean + L eps decodes them through
the product of the contact and smoothness priors, so the first population is
already concentrated on smooth trajectories ending near the object.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from robustpush.belief import ParticleBelief, gains_from_rollout, gaussian_fit, variances_of
from robustpush.dynamics import NoiseModel, Scene, rollout_batch
from robustpush.priors import (GaussianPrior, contact_prior_joint, contact_prior_task, default_contact_model,
                               lift_to_trajectory, product_of_gaussians, task_space_prior)
from robustpush.trajectory import (BoundaryConditions, MotionLimits, discretize_batch, smoothness_prior,
                                   time_scale_batch)

log = logging.getLogger(__name__)

SENTINEL = 1e6
BARRIER = 1e3
PENALTY = 1e3
# gains within this of one are treated as one (floating-point slack on flat pushes)
GAIN_TOL = 1e-9


class NoValidPlan(RuntimeError):
    pass


# ---------------------------------------------------------------- CMA-ES


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    pc: np.ndarray
    ps: np.ndarray
    generation: int
    popsize: int
    weights: np.ndarray = field(repr=False)
    mueff: float = field(repr=False)
    cc: float = field(repr=False)
    cs: float = field(repr=False)
    c1: float = field(repr=False)
    cmu: float = field(repr=False)
    damps: float = field(repr=False)
    chi_n: float = field(repr=False)
    B: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def cma_init(dim: int, popsize: int, sigma0: float = 1.0, mean=None) -> CmaState:
    """Standard (mu/mu_w, lambda) strategy parameters for a white start."""
    if dim < 1 or popsize < 2:
        raise ValueError("need dim >= 1 and popsize >= 2")
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    n = float(dim)
    mu = popsize // 2
    w = math.log((popsize + 1) / 2) - np.log(np.arange(1, mu + 1))
    w = w / w.sum()
    mueff = 1.0 / np.sum(w**2)
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
    m = np.zeros(dim) if mean is None else np.array(mean, dtype=float)
    return CmaState(m, float(sigma0), np.eye(dim), np.zeros(dim), np.zeros(dim), 0, popsize,
                    w, mueff, cc, cs, c1, cmu, damps, chi_n, np.eye(dim), np.ones(dim))


def cma_ask(state: CmaState, rng: np.random.Generator) -> np.ndarray:
    """Sample a population (popsize, dim) from N(mean, sigma^2 C)."""
    z = rng.standard_normal((state.popsize, state.dim))
    return state.mean + state.sigma * (z * state.D) @ state.B.T


def cmaes_step(state: CmaState, scored, fitness=None) -> CmaState:
    """Rank-based update from ``scored`` = [(eps, fitness), ...] or (eps array, fitness array).

    Only the ordering of the fitness values matters; ties keep sample order.
    """
    if fitness is None:
        if len(scored) == 0:
            raise ValueError("no scored candidates")
        eps = np.array([s[0] for s in scored], dtype=float)
        fit = np.array([s[1] for s in scored], dtype=float)
    else:
        eps = np.asarray(scored, dtype=float)
        fit = np.asarray(fitness, dtype=float)
    if eps.shape[0] == 0:
        raise ValueError("no scored candidates")
    if not np.all(np.isfinite(fit)):
        raise ValueError("fitness values must be finite")
    n = state.dim
    mu = min(state.weights.shape[0], eps.shape[0])
    w = state.weights[:mu] / state.weights[:mu].sum()
    order = np.argsort(fit, kind="stable")[:mu]
    x_old = state.mean
    y = (eps[order] - x_old) / state.sigma
    y_w = w @ y
    mean = x_old + state.sigma * y_w

    inv_sqrt = state.B @ np.diag(1.0 / state.D) @ state.B.T
    ps = (1 - state.cs) * state.ps + math.sqrt(state.cs * (2 - state.cs) * state.mueff) * inv_sqrt @ y_w
    gen = state.generation + 1
    ps_norm = np.linalg.norm(ps)
    hsig = ps_norm / math.sqrt(1 - (1 - state.cs) ** (2 * gen)) / state.chi_n < 1.4 + 2 / (n + 1)
    pc = (1 - state.cc) * state.pc + hsig * math.sqrt(state.cc * (2 - state.cc) * state.mueff) * y_w
    rank_mu = (y * w[:, None]).T @ y
    cov = ((1 - state.c1 - state.cmu) * state.cov
           + state.c1 * (np.outer(pc, pc) + (1 - hsig) * state.cc * (2 - state.cc) * state.cov)
           + state.cmu * rank_mu)
    cov = 0.5 * (cov + cov.T)
    sigma = state.sigma * math.exp(min(1.0, (state.cs / state.damps) * (ps_norm / state.chi_n - 1)))
    evals, B = np.linalg.eigh(cov)
    D = np.sqrt(np.maximum(evals, 1e-20))
    return replace(state, mean=mean, sigma=sigma, cov=cov, pc=pc, ps=ps, generation=gen, B=B, D=D)


# ---------------------------------------------------------------- costs


def robustness_cost(gains) -> float | np.ndarray:
    """Barrier on variance gains; vectorised over leading axes of a (..., K) array."""
    g = np.asarray(gains, dtype=float)
    K = g.shape[-1]
    lam = np.where(np.max(g, axis=-1) > 1.0 + GAIN_TOL, BARRIER, 1.0)
    with np.errstate(over="ignore"):
        c = lam * np.exp(-np.sum(1.0 - g, axis=-1) / max(K - 1, 1))
    return float(c) if c.ndim == 0 else c


def _mean(b):
    if isinstance(b, ParticleBelief):
        return b.weights @ b.particles
    return np.asarray(b, dtype=float)


def progress_cost(b0, bK, target, w_progress: float = 100.0):
    """exp(-w (d_0 - d_K)) on distances of the belief means to the target.

    ``b0``/``bK`` are beliefs or mean arrays (..., 2).
    """
    target = np.asarray(target, dtype=float)
    d0 = np.linalg.norm(_mean(b0) - target, axis=-1)
    dk = np.linalg.norm(_mean(bK) - target, axis=-1)
    with np.errstate(over="ignore"):
        c = np.exp(-w_progress * (d0 - dk))
    return float(c) if np.ndim(c) == 0 else c


@dataclass(frozen=True)
class TargetTask:
    target: np.ndarray
    w_progress: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(2))

    def cost(self, m0, mK):
        return progress_cost(m0, mK, self.target, self.w_progress)

    def error(self, m) -> float:
        return float(np.linalg.norm(np.asarray(m) - self.target))


@dataclass(frozen=True)
class PathTask:
    """Counter-clockwise lap around a circle; s in [0, 1) is the angular fraction."""

    center: np.ndarray
    radius: float = 0.15
    w_progress: float = 100.0
    w_error: float = 2000.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        if not self.radius > 0:
            raise ValueError("path radius must be positive")

    def param(self, m) -> np.ndarray:
        d = np.asarray(m, dtype=float) - self.center
        return np.mod(np.arctan2(d[..., 1], d[..., 0]) / (2 * np.pi), 1.0)

    def point(self, s) -> np.ndarray:
        a = 2 * np.pi * np.asarray(s, dtype=float)
        return self.center + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def progress(self, m0, mK):
        """Shortest signed arc from s_0 to s_K, in [-0.5, 0.5)."""
        return np.mod(self.param(mK) - self.param(m0) + 0.5, 1.0) - 0.5

    def error(self, m):
        d = np.linalg.norm(np.asarray(m, dtype=float) - self.center, axis=-1)
        return np.abs(d - self.radius)

    def cost(self, m0, mK):
        return path_tracking_cost(m0, mK, self, self.w_progress, self.w_error)


def path_tracking_cost(b0, bK, path: PathTask, w_progress: float = 100.0, w_error: float = 2000.0):
    m0, mK = _mean(b0), _mean(bK)
    with np.errstate(over="ignore"):
        c = np.exp(-w_progress * path.progress(m0, mK)) + w_error * path.error(mK) ** 2
    return float(c) if np.ndim(c) == 0 else c


# ---------------------------------------------------------------- planning


@dataclass(frozen=True)
class PlannerConfig:
    n_candidates: int = 30
    n_iterations: int = 4
    n_via: int = 3
    n_steps: int = 20
    n_particles: int = 20
    noise: NoiseModel = NoiseModel()
    limits: MotionLimits | None = None
    prior_duration: float = 1.0
    smoothness_weight: float = 1.0
    use_contact_prior: bool = True
    contact_sigma: float | None = None
    robust: bool = True
    workspace: tuple[float, float, float, float] | None = None
    min_effector_gap: float = 0.0
    max_effector_gap: float | None = None
    no_crossing: bool = False
    sigma0: float = 1.0
    n_threads: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_candidates", "n_iterations", "n_via", "n_steps", "n_particles", "n_threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.n_candidates < 2:
            raise ValueError("n_candidates must be at least 2")
        if not self.prior_duration > 0 or not self.smoothness_weight > 0:
            raise ValueError("prior_duration and smoothness_weight must be positive")


@dataclass
class CandidateResult:
    theta: np.ndarray
    duration: float
    gains: np.ndarray
    max_gain: float
    c_robust: float
    c_task: float
    penalty: float
    fitness: float
    feasible: bool
    commands: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    eps: np.ndarray = field(repr=False)
    generation: int = 0
    index: int = 0

    @property
    def robust(self) -> bool:
        return self.feasible and self.max_gain <= 1.0 + GAIN_TOL

    def executable(self, robust: bool) -> bool:
        """Feasible and free of constraint penalties; a robust planner also needs every gain <= 1."""
        return self.feasible and self.penalty == 0 and (not robust or self.max_gain <= 1.0 + GAIN_TOL)


@dataclass
class BatchResult:
    theta: np.ndarray
    T: np.ndarray
    commands: np.ndarray
    gains: np.ndarray
    c_robust: np.ndarray
    c_task: np.ndarray
    penalty: np.ndarray
    fitness: np.ndarray
    feasible: np.ndarray
    means: np.ndarray

    def candidate(self, i: int, eps, generation: int = 0) -> CandidateResult:
        g = self.gains[i]
        return CandidateResult(self.theta[i].copy(), float(self.T[i]), g.copy(),
                               float(np.max(g)) if g.size else 0.0,
                               float(self.c_robust[i]), float(self.c_task[i]), float(self.penalty[i]),
                               float(self.fitness[i]), bool(self.feasible[i]), self.commands[i].copy(),
                               self.means[i].copy(), np.array(eps, dtype=float), generation, i)


class Problem:
    """Everything fixed during one horizon: start state, belief, priors and costs."""

    def __init__(self, bc: BoundaryConditions, b0: ParticleBelief, scene: Scene, task, config: PlannerConfig,
                 prior: GaussianPrior | None = None):
        if bc.q0.shape[0] != scene.n_dof:
            raise ValueError(f"boundary conditions have {bc.q0.shape[0]} DoF, scene has {scene.n_dof}")
        self.bc, self.b0, self.scene, self.task, self.config = bc, b0, scene, task, config
        self.limits = config.limits or MotionLimits(np.full(scene.n_dof, 0.5), np.full(scene.n_dof, 2.0))
        self.prior = prior if prior is not None else build_prior(bc, b0, scene, config)
        self.L = self.prior.cholesky
        self.particles = np.ascontiguousarray(b0.particles)
        self.mean0 = b0.weights @ b0.particles

    @property
    def dim(self) -> int:
        return self.prior.dim

    def decode(self, eps) -> np.ndarray:
        return self.prior.mean + np.asarray(eps, dtype=float) @ self.L.T

    def evaluate(self, eps) -> BatchResult:
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        cfg, scene = self.config, self.scene
        n_threads = min(cfg.n_threads, eps.shape[0])
        if n_threads > 1:
            chunks = np.array_split(np.arange(eps.shape[0]), n_threads)
            with ThreadPoolExecutor(n_threads) as pool:
                parts = list(pool.map(lambda idx: self._evaluate(eps[idx]), chunks))
            return BatchResult(*[np.concatenate([getattr(p, f) for p in parts])
                                 for f in BatchResult.__dataclass_fields__])
        return self._evaluate(eps)

    def _evaluate(self, eps) -> BatchResult:
        cfg, scene, bc = self.config, self.scene, self.bc
        n_c, K, N = eps.shape[0], cfg.n_steps, cfg.n_via
        theta = self.decode(eps)
        via = theta.reshape(n_c, N, scene.n_dof)
        T = time_scale_batch(via, bc, self.limits)
        q = discretize_batch(via, bc, T, K)
        q_all = np.concatenate([np.broadcast_to(bc.q0, (n_c, 1, scene.n_dof)), q], axis=1)
        poses = scene.poses(q_all)
        traj, eta, ok = rollout_batch(self.particles, poses, scene)
        w = self.b0.weights
        means = np.matmul(w, traj)
        if cfg.robust:
            var = variances_of(traj)
            frac = eta.mean(axis=-1)
            gains = gains_from_rollout(var, frac, cfg.noise.variance_w)
            c_rob = robustness_cost(gains)
        else:
            gains = np.zeros((n_c, K))
            c_rob = np.zeros(n_c)
        c_task = np.asarray(self.task.cost(means[:, 0], means[:, -1]), dtype=float)
        penalty = self._penalties(poses[:, 1:])
        fitness = c_rob + c_task + penalty
        bad = ~ok | ~np.isfinite(fitness)
        fitness = np.where(bad, SENTINEL, fitness)
        c_rob = np.where(bad, 0.0, c_rob)
        c_task = np.where(bad, 0.0, c_task)
        penalty = np.where(bad, SENTINEL, penalty)
        return BatchResult(theta, T, q, gains, c_rob, c_task, penalty, fitness, ~bad, means)

    def _penalties(self, poses) -> np.ndarray:
        cfg, scene = self.config, self.scene
        viol = np.zeros(poses.shape[:2], dtype=bool)
        if cfg.workspace is not None:
            x0, x1, y0, y1 = cfg.workspace
            x, y = poses[..., 0], poses[..., 1]
            viol |= np.any((x < x0) | (x > x1) | (y < y0) | (y > y1), axis=-1)
        if scene.n_effectors == 2:
            r = [_bounding_radius(g) for g in scene.effectors]
            gap = np.linalg.norm(poses[..., 0, :2] - poses[..., 1, :2], axis=-1) - r[0] - r[1]
            viol |= gap < cfg.min_effector_gap
            if cfg.max_effector_gap is not None:
                viol |= gap > cfg.max_effector_gap
            if cfg.no_crossing:
                viol |= poses[..., 0, 0] > poses[..., 1, 0]
        return PENALTY * viol.sum(axis=-1)


def _bounding_radius(g) -> float:
    if hasattr(g, "radius"):
        return float(g.radius)
    return float(np.hypot(*g.half_extents))


def build_prior(bc: BoundaryConditions, b0: ParticleBelief, scene: Scene, config: PlannerConfig) -> GaussianPrior:
    """Product of the smoothness prior and (optionally) the lifted contact prior."""
    n_dof = scene.n_dof
    R_q = config.smoothness_weight * np.eye(n_dof)
    smooth = GaussianPrior.from_smoothness(smoothness_prior(bc, R_q, config.n_via, config.prior_duration))
    if not config.use_contact_prior:
        return smooth
    r_eff = min(g.contact_radius for g in scene.effectors)
    cm = default_contact_model(scene.object_radius, r_eff)
    if config.contact_sigma is not None:
        cm = replace(cm, sigma_ro=config.contact_sigma**2 * np.eye(2))
    mean, cov = gaussian_fit(b0)
    task_prior = contact_prior_task(mean, cov, cm)
    if scene.kinematics is not None:
        final = contact_prior_joint(scene.kinematics, task_prior, bc.q0)
    else:
        final = task_space_prior(task_prior, scene, bc.q0)
    return product_of_gaussians(lift_to_trajectory(final, config.n_via, n_dof), smooth)


def evaluate_candidate(eps, product_prior: GaussianPrior, bc: BoundaryConditions, b0: ParticleBelief,
                       scene: Scene, task, config: PlannerConfig) -> CandidateResult:
    problem = Problem(bc, b0, scene, task, config, prior=product_prior)
    return problem.evaluate(np.asarray(eps, dtype=float)[None]).candidate(0, eps)


def _seed_of(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63 - 1))
    return int(rng)


def bs_vp_sto(bc: BoundaryConditions, b0: ParticleBelief, scene: Scene, task, config: PlannerConfig,
              rng=None, history: list | None = None, problem: Problem | None = None) -> CandidateResult:
    """Run ``config.n_iterations`` generations and return the best candidate seen.

    ``rng`` is an integer seed or a Generator (one integer is drawn from it).
    Generation g samples from the stream seeded by (seed, g), so results do
    not depend on how candidates are split across threads.
    """
    seed = config.seed if rng is None else _seed_of(rng)
    problem = problem or Problem(bc, b0, scene, task, config)
    state = cma_init(problem.dim, config.n_candidates, config.sigma0)
    best = None
    for gen in range(config.n_iterations):
        gen_rng = np.random.default_rng([seed, gen])
        eps = cma_ask(state, gen_rng)
        res = problem.evaluate(eps)
        i = int(np.argmin(res.fitness))
        if res.feasible[i] and (best is None or res.fitness[i] < best.fitness):
            best = res.candidate(i, eps[i], gen)
        if history is not None:
            history.append(np.inf if best is None else best.fitness)
        if gen + 1 < config.n_iterations:
            state = cmaes_step(state, eps, res.fitness)
    if best is None:
        raise NoValidPlan(f"all candidates infeasible over {config.n_iterations} generations")
    return best
