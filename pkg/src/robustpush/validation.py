"""Quick oracle suite behind ``push validate``; every check is seeded and takes well under a minute."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustpush.belief import ParticleBelief, nominal_rollout, predict_variance
from robustpush.dynamics import NoiseModel, Scene, stochastic_rollout_batch
from robustpush.geometry import CircleGeom, RectGeom
from robustpush.oracles import (closed_form_1d_push, cost_separation_check, ks_statistic, mc_variance_oracle,
                                sample_1d_push)
from robustpush.scenarios import canonical_scenes, random_contact_scene
from robustpush.trajectory import BoundaryConditions, TrajectoryParams, evaluate

KS_MAX = 0.02
FULL_SWEEP_RTOL = 0.05
MC_SIGMAS = 3.0
SEPARATION_TOL = 1e-12
FLAT_TOL = 0.05


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))


def check_1d_push(seed: int, n: int = 10_000, alpha: float = 0.1) -> list[Check]:
    rng = np.random.default_rng([seed, 31])
    out = []
    worst = 0.0
    for frac in (0.25, 0.5, 0.75, 1.0):
        s = sample_1d_push(0.0, 1.0, frac, alpha, n, rng)
        worst = max(worst, ks_statistic(s, closed_form_1d_push(0.0, 1.0, frac, alpha).cdf))
    out.append(Check("push_1d_ks", worst < KS_MAX, f"max KS {worst:.4f}"))
    s = sample_1d_push(0.0, 1.0, 1.0, alpha, n, rng)
    rel = abs(s.var() / (alpha**2 / 12) - 1.0)
    out.append(Check("push_1d_full_sweep_variance", rel <= FULL_SWEEP_RTOL, f"relative error {rel:.4f}"))
    return out


def check_mc_variance(seed: int, n_scenes: int = 5, n_samples: int = 100_000) -> Check:
    rng = np.random.default_rng([seed, 32])
    worst = 0.0
    for _ in range(n_scenes):
        scene, b, u, noise = random_contact_scene(rng)
        v, se = mc_variance_oracle(b, u, scene, noise, n_samples, rng)
        worst = max(worst, abs(predict_variance(b, u, scene, noise) - v) / se)
    return Check("variance_prediction_vs_mc", worst <= MC_SIGMAS, f"worst {worst:.2f} SE over {n_scenes} scenes")


def check_gain_signs(noise: NoiseModel = NoiseModel(1e-5)) -> Check:
    g = {s.name: s.gain(noise) for s in canonical_scenes()}
    ok = g["single-point"] > 1 and abs(g["flat-face"] - 1) <= FLAT_TOL and g["two-point"] < 1
    return Check("gain_signs", ok, " ".join(f"{k}={v:.3f}" for k, v in g.items()))


def check_cost_separation(seed: int) -> Check:
    rng = np.random.default_rng([seed, 33])
    x = rng.normal(size=(1000, 2))
    lhs, rhs = cost_separation_check(x, rng.normal(size=2))
    return Check("cost_separation", abs(lhs - rhs) <= SEPARATION_TOL, f"|lhs-rhs| {abs(lhs - rhs):.2e}")


def check_interpolation(seed: int) -> Check:
    rng = np.random.default_rng([seed, 34])
    N, n = 4, 3
    via = rng.normal(size=(N, n))
    bc = BoundaryConditions(rng.normal(size=n), rng.normal(size=n))
    T = 1.7
    q, qd, _ = evaluate(TrajectoryParams.from_via_points(via), bc, T, T * np.arange(N + 1) / N)
    err = max(np.abs(q[0] - bc.q0).max(), np.abs(q[1:] - via).max(), np.abs(qd[0] - bc.qdot0).max(),
              np.abs(qd[-1]).max())
    return Check("interpolation", err <= 1e-9, f"max error {err:.2e}")


def check_non_penetration(seed: int) -> Check:
    rng = np.random.default_rng([seed, 35])
    scene = Scene(0.05, (CircleGeom(0.02), RectGeom((0.02, 0.06))))
    q = np.cumsum(rng.normal(0, 0.02, (30, 5)), axis=0) + np.array([-0.1, 0, 0.1, 0, 0])
    b = ParticleBelief(rng.normal(0, 0.03, (50, 2)))
    traj, _, jammed = stochastic_rollout_batch(b.particles, scene.poses(q), scene, NoiseModel(1e-4), rng)
    final = scene.command(q[-1])
    worst = min(scene.min_distance(p, final) for p, j in zip(traj[-1], jammed) if not j)
    return Check("non_penetration", worst >= -scene.eps_pen, f"min distance {worst:.2e}")


def check_determinism(seed: int) -> Check:
    rng = np.random.default_rng([seed, 36])
    scene = Scene(0.05, (RectGeom((0.02, 0.08)),))
    b = ParticleBelief(rng.normal(0, 0.01, (20, 2)))
    q = np.c_[np.linspace(-0.15, 0.1, 20), np.zeros(20), np.linspace(0, 0.3, 20)]
    a = nominal_rollout(b, list(q), scene, NoiseModel(1e-5))
    c = nominal_rollout(b, list(q), scene, NoiseModel(1e-5))
    same = all(np.array_equal(x.particles, y.particles) for x, y in zip(a.beliefs, c.beliefs))
    return Check("determinism", same, "bit-identical" if same else "rollouts differ")


def run_checks(seed: int = 0) -> list[Check]:
    return [*check_1d_push(seed), check_mc_variance(seed), check_gain_signs(), check_cost_separation(seed),
            check_interpolation(seed), check_non_penetration(seed), check_determinism(seed)]
