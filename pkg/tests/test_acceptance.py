"""End-to-end acceptance checks; each prints one PASS/FAIL line in the session summary.

Run alone with ``pytest tests/test_acceptance.py -v``; ``-m "not slow"`` skips the
long statistical runs.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from robustpush.belief import ParticleBelief, predict_variance
from robustpush.cli import evaluate_poses, evaluation_goal, plan
from robustpush.config import load
from robustpush.dynamics import NoiseModel, Scene
from robustpush.geometry import CircleGeom
from robustpush.optimizer import GAIN_TOL, PlannerConfig, TargetTask, bs_vp_sto, cma_init, cmaes_step
from robustpush.oracles import mc_variance_oracle
from robustpush.priors import GaussianPrior, product_of_gaussians
from robustpush.receding import back_and_forth, baseline_plan, plan_poses, plan_receding, rollout_outcomes
from robustpush.scenarios import random_contact_scene
from robustpush.trajectory import BoundaryConditions, MotionLimits
from robustpush.validation import (check_1d_push, check_cost_separation, check_determinism, check_gain_signs,
                                   check_interpolation, check_non_penetration)

MC_SIGMAS = 3.0
MC_SCENES = 20
MC_SAMPLES = 100_000
MC_BUDGET = 60.0
PUSH_1D_BUDGET = 10.0
PATH_ROLLOUTS = 1000
PATH_MIN_SUCCESS = 0.9
PATH_BUDGET = 300.0
PRIOR_RUNS = 50
PRIOR_ITERATIONS = (1, 2, 4, 8)
PRIOR_MIN_SUCCESS = 0.9
PRIOR_BUDGET = 900.0
ITERATION_BUDGET = 0.050
CYCLES = 40
CYCLE_SEEDS = 100
CYCLE_MIN_SURVIVAL = 0.8


def report(name: str, passed: bool, detail: str):
    line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def test_variance_prediction_matches_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(MC_SCENES):
        scene, b, u, noise = random_contact_scene(rng)
        v, se = mc_variance_oracle(b, u, scene, noise, MC_SAMPLES, rng)
        worst = max(worst, abs(predict_variance(b, u, scene, noise) - v) / se)
    dt = time.perf_counter() - t0
    report("1 variance prediction vs Monte Carlo", worst <= MC_SIGMAS and dt <= MC_BUDGET,
           f"worst {worst:.2f} SE over {MC_SCENES} scenes (limit {MC_SIGMAS}), {dt:.1f}s (limit {MC_BUDGET:.0f}s)")


def test_one_dimensional_push_distribution():
    t0 = time.perf_counter()
    ks, sweep = check_1d_push(seed=0, n=10_000, alpha=0.1)
    dt = time.perf_counter() - t0
    report("2 one-dimensional push oracle", ks.passed and sweep.passed and dt <= PUSH_1D_BUDGET,
           f"{ks.detail} (limit 0.02); full sweep {sweep.detail} (limit 0.05); {dt:.2f}s")


def test_gain_signs_of_canonical_pushes():
    c = check_gain_signs(NoiseModel(1e-5))
    report("3 variance gain of single-point, flat-face, two-point pushes", c.passed, c.detail)


@pytest.mark.slow
def test_robust_path_beats_baseline(configs_dir):
    t0 = time.perf_counter()
    rates, outcomes = {}, {}
    for name in ("bimanual_path.yaml", "bimanual_path_baseline.yaml"):
        cfg = load(configs_dir / name)
        plog = plan(cfg)
        goal = evaluation_goal(cfg, plog.final_belief())
        rates[name] = evaluate_poses(cfg, plan_poses(plog, cfg.scene), goal, PATH_ROLLOUTS, cfg.seed)
        outcomes[name] = plog.outcome
    dt = time.perf_counter() - t0
    r, b = rates["bimanual_path.yaml"], rates["bimanual_path_baseline.yaml"]
    ok = outcomes["bimanual_path.yaml"] == "success" and r >= PATH_MIN_SUCCESS and b < r and dt <= PATH_BUDGET
    report("4 robust vs baseline path plan", ok,
           f"robust {r:.3f} ({outcomes['bimanual_path.yaml']}), baseline {b:.3f} "
           f"({outcomes['bimanual_path_baseline.yaml']}) over {PATH_ROLLOUTS} rollouts at 1 cm; {dt:.0f}s")


@pytest.mark.slow
def test_contact_prior_helps_at_every_iteration_count(configs_dir):
    cfg = load(configs_dir / "single_hand_target.yaml")
    b0, bc = cfg.initial_belief(), cfg.boundary()
    t0 = time.perf_counter()
    rate = {}
    for M in PRIOR_ITERATIONS:
        for prior in (True, False):
            pc = replace(cfg.planner, n_iterations=M, use_contact_prior=prior)
            wins = sum(plan_receding(bc, b0, cfg.scene, cfg.task, cfg.horizon, pc, seed=s).success
                       for s in range(PRIOR_RUNS))
            rate[M, prior] = wins / PRIOR_RUNS
    dt = time.perf_counter() - t0
    ok = (all(rate[M, True] >= rate[M, False] for M in PRIOR_ITERATIONS)
          and rate[4, True] >= PRIOR_MIN_SUCCESS and dt <= PRIOR_BUDGET)
    detail = ", ".join(f"M={M}: {rate[M, True]:.2f} vs {rate[M, False]:.2f}" for M in PRIOR_ITERATIONS)
    report("5 contact prior vs no prior", ok, f"with/without prior {detail}; {dt:.0f}s")


def test_single_iteration_time():
    scene = Scene(0.05, (CircleGeom(0.02), CircleGeom(0.02)))
    b0 = ParticleBelief.gaussian([0.0, 0.0], np.eye(2) * 1e-4, 20, np.random.default_rng(0))
    bc = BoundaryConditions.at_rest([-0.035, -0.08, 0.035, -0.08])
    cfg = PlannerConfig(n_candidates=30, n_iterations=1, n_steps=20, n_particles=20, noise=NoiseModel(1e-5),
                        limits=MotionLimits(np.full(4, 0.3), np.full(4, 1.5)))
    task = TargetTask([0.0, 0.15])
    bs_vp_sto(bc, b0, scene, task, cfg, rng=0)
    times = []
    for s in range(30):
        t0 = time.perf_counter()
        bs_vp_sto(bc, b0, scene, task, cfg, rng=s)
        times.append(time.perf_counter() - t0)
    med = float(np.median(times))
    report("6 one planner iteration", med <= ITERATION_BUDGET,
           f"median {1e3 * med:.1f} ms over 30 runs (limit {1e3 * ITERATION_BUDGET:.0f} ms)")


@pytest.mark.slow
def test_back_and_forth_survival(configs_dir):
    t0 = time.perf_counter()
    cycles = {}
    for name in ("single_hand_target.yaml", "single_hand_target_baseline.yaml"):
        cfg = load(configs_dir / name)
        start = cfg.belief_mean()
        plog = plan(cfg)
        poses = plan_poses(plog, cfg.scene)
        end = rollout_outcomes(poses, start[None], cfg.scene, NoiseModel(0.0), np.random.default_rng(0))[0]
        cycles[name] = np.array([back_and_forth(poses, start, end, cfg.scene, cfg.noise, CYCLES,
                                                cfg.evaluate["escape_radius"], np.random.default_rng([s, 7]))
                                 for s in range(CYCLE_SEEDS)])
    dt = time.perf_counter() - t0
    robust, base = cycles["single_hand_target.yaml"], cycles["single_hand_target_baseline.yaml"]
    survival = float(np.mean(robust >= CYCLES))
    ok = survival >= CYCLE_MIN_SURVIVAL and np.median(base) < np.median(robust)
    report("7 back-and-forth survival", ok,
           f"robust survives {CYCLES} cycles in {survival:.2f} of {CYCLE_SEEDS} seeds, median {np.median(robust):.0f}; "
           f"baseline median {np.median(base):.0f}; {dt:.0f}s")


def _gains_of_accepted_plan(configs_dir) -> float:
    cfg = load(configs_dir / "single_hand_target.yaml")
    plog = plan(cfg)
    return max(float(np.max(g)) for g in plog.gains)


def _precision_additivity(rng) -> float:
    err = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 6))
        A, B = rng.normal(size=(n, n)), rng.normal(size=(n, n))
        a = GaussianPrior(rng.normal(size=n), A @ A.T + np.eye(n))
        b = GaussianPrior(rng.normal(size=n), B @ B.T + np.eye(n))
        err = max(err, float(np.abs(product_of_gaussians(a, b).precision - a.precision - b.precision).max()))
    return err


def _cma_rank_invariance(rng) -> bool:
    state = cma_init(5, 12)
    eps = rng.normal(size=(12, 5))
    f = rng.normal(size=12)
    a, b = cmaes_step(state, eps, f), cmaes_step(state, eps, np.exp(3 * f) + 7)
    return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("mean", "cov", "pc", "ps")) and a.sigma == b.sigma


def test_invariant_suite(configs_dir):
    rng = np.random.default_rng(8)
    checks = {c.name: (c.passed, c.detail) for c in (check_non_penetration(0), check_determinism(0),
                                                       check_cost_separation(0), check_interpolation(0))}
    g = _gains_of_accepted_plan(configs_dir)
    checks["accepted_gains"] = (g <= 1 + GAIN_TOL, f"max executed gain {g:.6f}")
    p = _precision_additivity(rng)
    checks["precision_additivity"] = (p <= 1e-9, f"max error {p:.1e}")
    checks["cma_rank_invariance"] = (_cma_rank_invariance(rng), "monotone fitness transform")
    ok = all(v[0] for v in checks.values())
    report("8 invariant suite", ok, "; ".join(f"{k} {'ok' if v[0] else 'FAILED'} ({v[1]})" for k, v in checks.items()))
