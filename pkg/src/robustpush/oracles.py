"""Independent reference computations: Monte-Carlo variance, the 1D push mixture, cost separation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustpush import _kernels
from robustpush.belief import ParticleBelief
from robustpush.dynamics import NoiseModel, RobotCommand, Scene, push_1d

MIN_MC_SAMPLES = 1000


@dataclass(frozen=True)
class MixtureOfUniforms1D:
    """Weighted sum of uniform densities, each given as (weight, lower, upper)."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), float(lo), float(hi)) for w, lo, hi in self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if any(w < 0 or lo > hi for w, lo, hi in comps):
            raise ValueError("components need non-negative weights and lower <= upper")
        if abs(sum(w for w, _, _ in comps) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "components", comps)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, lo, hi in self.components:
            if hi > lo:
                out += w * np.clip((x - lo) / (hi - lo), 0.0, 1.0)
            else:
                out += w * (x >= lo)
        return out

    def mean(self) -> float:
        return sum(w * 0.5 * (lo + hi) for w, lo, hi in self.components)

    def variance(self) -> float:
        second = sum(w * (lo * lo + lo * hi + hi * hi) / 3.0 for w, lo, hi in self.components)
        return second - self.mean() ** 2


def closed_form_1d_push(q_low: float, q_high: float, u: float, alpha: float) -> MixtureOfUniforms1D:
    """Object belief U[q_low, q_high] after a wall sweeps to ``u`` and adds U[0, alpha] to pushed objects."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not q_low <= u <= q_high:
        raise ValueError(f"push position {u} outside [{q_low}, {q_high}]")
    span = q_high - q_low
    pushed = (u - q_low) / span if span > 0 else 1.0
    comps = [(pushed, u, u + alpha)]
    if pushed < 1.0:
        comps.append((1.0 - pushed, u, q_high))
    return MixtureOfUniforms1D(tuple(comps))


def sample_1d_push(q_low: float, q_high: float, u: float, alpha: float, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Particle version of the same push, run through the planar projection kernel."""
    q = rng.uniform(q_low, q_high, n)
    w = rng.uniform(0.0, alpha, n)
    return push_1d(q, u, w)[0]


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance between ``samples`` and a callable CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    F = cdf(x)
    return float(max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n)))


def mc_variance_oracle(b: ParticleBelief, u: RobotCommand, scene: Scene, noise: NoiseModel, n_samples: int,
                       rng: np.random.Generator, u_prev: RobotCommand | None = None) -> tuple[float, float]:
    """Trace variance after ``u`` from sampled (particle, perturbation) pairs, with its jackknife SE."""
    if n_samples < MIN_MC_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_MC_SAMPLES}")
    idx = rng.choice(b.n_particles, size=n_samples, p=b.weights)
    cur = u.as_array()
    prev = cur if u_prev is None else u_prev.as_array()
    n_sub = scene.n_substeps if u_prev is not None else 1
    kinds, params, ro = scene.kernel_args()
    w = noise.draw(rng, (n_samples, 1))
    traj, _, _ = _kernels.rollout_stochastic(
        np.ascontiguousarray(b.particles[idx]), np.stack([prev, cur]), w, float(np.sqrt(noise.variance_w)),
        kinds, params, ro, n_sub, scene.eps_pen, scene.max_proj_iters)
    return trace_variance_with_se(traj[1])


def trace_variance_with_se(x) -> tuple[float, float]:
    """Biased trace variance and its delete-one jackknife standard error, in closed form."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dev = x - x.mean(axis=0)
    d2 = np.einsum("ij,ij->i", dev, dev)
    S = d2.sum()
    v = S / n
    # leave-one-out sum of squares: S - n/(n-1) |x_i - mean|^2, over n-1 points
    loo = (S - n / (n - 1) * d2) / (n - 1)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(v), float(se)


def cost_separation_check(samples, x_des) -> tuple[float, float]:
    """Expected squared error versus squared mean error plus variance."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("samples must be nonempty")
    x_des = np.asarray(x_des, dtype=float)
    lhs = float(np.mean(np.sum((x - x_des) ** 2, axis=1)))
    mean = x.mean(axis=0)
    rhs = float(np.sum((mean - x_des) ** 2) + np.mean(np.sum((x - mean) ** 2, axis=1)))
    return lhs, rhs
