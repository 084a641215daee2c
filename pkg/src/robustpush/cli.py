"""Command line runner: push plan|evaluate|mpc-sim|validate --config <path> --out <dir>."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from robustpush import artifacts
from robustpush.config import ConfigError, ScenarioConfig, load
from robustpush.optimizer import PathTask
from robustpush.receding import PlanLog, baseline_plan, plan_receding, rollout_outcomes, simulate_mpc
from robustpush.validation import run_checks

log = logging.getLogger("robustpush")

EXIT_OK, EXIT_CONFIG, EXIT_PLANNING, EXIT_VALIDATION = 0, 2, 3, 4
MODES = ("plan", "evaluate", "mpc-sim", "validate")


def plan(cfg: ScenarioConfig) -> PlanLog:
    bc = cfg.boundary()
    if cfg.planner.robust:
        return plan_receding(bc, cfg.initial_belief(), cfg.scene, cfg.task, cfg.horizon, cfg.planner, cfg.seed)
    return baseline_plan(cfg.belief_mean(), bc, cfg.scene, cfg.task, cfg.horizon, cfg.planner, cfg.seed)


def evaluation_goal(cfg: ScenarioConfig, final_belief) -> np.ndarray:
    """Target point, or for a path the final planned mean (where the lap ends)."""
    if isinstance(cfg.task, PathTask):
        return final_belief.particles.mean(axis=0)
    return cfg.task.target


def evaluate_poses(cfg: ScenarioConfig, poses, goal, n: int, seed: int) -> float:
    """Success rate of ``n`` noisy executions of a pose sequence.

    Robust plans start from draws of the initial belief; nominal plans from
    the object position they assumed.
    """
    rng = np.random.default_rng([seed, 21])
    if cfg.planner.robust:
        starts = cfg.sample_starts(n, rng)
    else:
        starts = np.tile(cfg.belief_mean(), (n, 1))
    final = rollout_outcomes(poses, starts, cfg.scene, cfg.noise, rng)
    return float(np.mean(np.linalg.norm(final - goal, axis=1) <= cfg.horizon.tolerance))


def run(config_path, mode: str, out_dir, seed: int | None = None, rollouts: int | None = None) -> tuple[int, dict]:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    try:
        cfg = load(config_path)
    except ConfigError as e:
        return EXIT_CONFIG, {"mode": mode, "error": str(e)}
    if seed is not None:
        cfg.seed = seed
        cfg.planner = replace(cfg.planner, seed=seed)
    if rollouts is not None:
        if rollouts < 1:
            return EXIT_CONFIG, {"mode": mode, "error": "--rollouts must be at least 1"}
        cfg.evaluate["rollouts"] = rollouts
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    code, summary = _MODES[mode](cfg, out)
    summary = {"mode": mode, "seed": cfg.seed, **summary}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return code, summary


def _plan(cfg: ScenarioConfig, out: Path) -> tuple[int, dict]:
    plog = plan(cfg)
    files = artifacts.write_plan(out, plog, cfg.scene, cfg.noise, cfg.horizon.execute_steps)
    (out / "plan.svg").write_text(artifacts.export_plot(plog, cfg.scene, cfg.task))
    (out / "variance.svg").write_text(artifacts.export_variance_plot(artifacts.read_gains(out / "gains.csv")))
    summary = {"outcome": plog.outcome, "n_outer": plog.n_outer, "n_horizons": plog.n_horizons,
               "n_commands": len(plog.commands), "progress": plog.progress,
               "final_mean": plog.final_belief().particles.mean(axis=0).tolist(),
               "files": [f for f in files if not f.startswith("belief_")] + ["plan.svg", "variance.svg"],
               "belief_files": sum(f.startswith("belief_") for f in files)}
    return (EXIT_OK if plog.success else EXIT_PLANNING), summary


def _evaluate(cfg: ScenarioConfig, out: Path) -> tuple[int, dict]:
    """Evaluate the plan saved in ``out``; plan first when there is none."""
    planned = None
    if not (out / "commands.csv").exists():
        code, planned = _plan(cfg, out)
        if code != EXIT_OK:
            return code, {"plan": planned}
    poses = artifacts.read_commands(out / "commands.csv")
    beliefs = sorted(out.glob("belief_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    final = artifacts.read_belief(beliefs[-1])
    goal = evaluation_goal(cfg, final)
    n = cfg.evaluate["rollouts"]
    rate = evaluate_poses(cfg, poses, goal, n, cfg.seed)
    summary = {"success_rate": rate, "rollouts": n, "goal": np.asarray(goal).tolist(),
               "tolerance": cfg.horizon.tolerance, "robust": cfg.planner.robust}
    if planned is not None:
        summary["plan"] = planned
    return EXIT_OK, summary


def _mpc(cfg: ScenarioConfig, out: Path) -> tuple[int, dict]:
    m = cfg.mpc
    sim = simulate_mpc(cfg.initial_belief(), m["true_start"], cfg.boundary(), cfg.scene, cfg.task, cfg.planner,
                       cfg.horizon, np.eye(2) * m["obs_std"] ** 2, m["cycles"], m["perturb_at"],
                       m["perturbation"], cfg.seed, m["process_std"])
    with open(out / "mpc.csv", "w") as f:
        f.write("cycle,true_x,true_y,mean_x,mean_y\n")
        for i, (p, q) in enumerate(zip(sim.true_path, sim.belief_means)):
            f.write(f"{i},{float(p[0])!r},{float(p[1])!r},{float(q[0])!r},{float(q[1])!r}\n")
    q = np.concatenate([cfg.q0[None], sim.commands.reshape(-1, cfg.q0.shape[0])])
    artifacts.write_commands(out / "commands.csv", cfg.scene.poses(q))
    summary = {"success": bool(sim.success), "final_error": float(sim.final_error), "cycles": m["cycles"],
               "files": ["mpc.csv", "commands.csv"]}
    return (EXIT_OK if sim.success else EXIT_PLANNING), summary


def _validate(cfg: ScenarioConfig, out: Path) -> tuple[int, dict]:
    results = run_checks(cfg.seed)
    (out / "validate.csv").write_text("check,passed,detail\n" + "".join(
        f"{r.name},{int(r.passed)},{r.detail}\n" for r in results))
    ok = all(r.passed for r in results)
    return (EXIT_OK if ok else EXIT_VALIDATION), {"passed": ok, "checks": {r.name: r.passed for r in results}}


_MODES = {"plan": _plan, "evaluate": _evaluate, "mpc-sim": _mpc, "validate": _validate}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="push", description="Belief-space planning of robust planar pushes.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--rollouts", type=int, default=None, help="override evaluate.rollouts")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    code, summary = run(args.config, args.mode, args.out, args.seed, args.rollouts)
    if "error" in summary:
        print(f"push: {summary['error']}", file=sys.stderr)
    else:
        print(json.dumps(summary, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
