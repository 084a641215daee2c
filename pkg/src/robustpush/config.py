"""Scenario configuration: a YAML file with flat sections, validated with line-accurate errors."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from robustpush.belief import ParticleBelief
from robustpush.dynamics import NOISE_FAMILIES, NoiseModel, Scene
from robustpush.geometry import CircleGeom, RectGeom
from robustpush.optimizer import PathTask, PlannerConfig, TargetTask
from robustpush.receding import HorizonConfig
from robustpush.trajectory import BoundaryConditions, MotionLimits


class ConfigError(ValueError):
    """Schema violation; the message carries the file line when known."""


SECTIONS = {
    "seed": None,
    "scene": {"object_radius", "effectors", "n_substeps"},
    "belief": {"type", "mean", "std", "cov", "low", "high", "n_particles", "seed"},
    "noise": {"family", "variance_w"},
    "robot": {"q0", "v_max", "a_max"},
    "task": {"type", "target", "center", "radius", "w_progress", "w_error"},
    "planner": {"iterations", "candidates", "n_via", "n_steps", "smoothness_weight", "contact_prior",
                "contact_sigma", "robust", "prior_duration", "sigma0", "threads", "workspace",
                "min_effector_gap", "max_effector_gap", "no_crossing"},
    "horizon": {"execute_steps", "tolerance", "max_outer"},
    "evaluate": {"rollouts", "escape_radius", "cycles"},
    "mpc": {"cycles", "true_start", "obs_std", "process_std", "perturb_at", "perturbation"},
}
REQUIRED = ("scene", "belief", "robot", "task")


class _Doc:
    """Plain data decoded from YAML plus the source line of every key path."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple, int] = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark else source
            raise ConfigError(f"{where}: invalid YAML: {getattr(e, 'problem', e)}") from None
        if node is None:
            raise ConfigError(f"{source}: empty config")
        self.data = self._walk(node, ())

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = k.value
                if key in out:
                    raise ConfigError(f"{self.source}:{k.start_mark.line + 1}: duplicate key {key!r}")
                out[key] = self._walk(v, path + (key,))
                self.lines[path + (key,)] = k.start_mark.line + 1
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._walk(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    def error(self, path, msg) -> ConfigError:
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        line = self.lines.get(p, 1)
        name = ".".join(str(x) for x in path) or "<root>"
        return ConfigError(f"{self.source}:{line}: {name}: {msg}")


@dataclass
class ScenarioConfig:
    seed: int
    scene: Scene
    belief: dict
    noise: NoiseModel
    q0: np.ndarray
    limits: MotionLimits
    task: TargetTask | PathTask
    planner: PlannerConfig
    horizon: HorizonConfig
    evaluate: dict = field(default_factory=dict)
    mpc: dict = field(default_factory=dict)

    def initial_belief(self) -> ParticleBelief:
        bel = self.belief
        rng = np.random.default_rng(bel["seed"])
        if bel["type"] == "gaussian":
            return ParticleBelief.gaussian(bel["mean"], bel["cov"], bel["n_particles"], rng)
        return ParticleBelief.uniform_box(bel["low"], bel["high"], bel["n_particles"], rng)

    def belief_mean(self) -> np.ndarray:
        return np.array(_belief_center(self.belief))

    def sample_starts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Object positions drawn from the initial belief distribution (not its particles)."""
        bel = self.belief
        if bel["type"] == "gaussian":
            return rng.multivariate_normal(bel["mean"], bel["cov"], n)
        return rng.uniform(bel["low"], bel["high"], (n, 2))

    def boundary(self) -> BoundaryConditions:
        return BoundaryConditions.at_rest(self.q0)


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    return parse(text, str(path))


def parse(text: str, source: str = "<config>") -> ScenarioConfig:
    doc = _Doc(text, source)
    d = doc.data
    if not isinstance(d, dict):
        raise doc.error((), "top level must be a mapping")
    for key in d:
        if key not in SECTIONS:
            raise doc.error((key,), "unknown section")
    for key in REQUIRED:
        if key not in d:
            raise doc.error((), f"missing required section {key!r}")
    for sec, allowed in SECTIONS.items():
        if allowed is None or sec not in d:
            continue
        if not isinstance(d[sec], dict):
            raise doc.error((sec,), "section must be a mapping")
        for key in d[sec]:
            if key not in allowed:
                raise doc.error((sec, key), "unknown key")
    r = _Reader(doc)
    seed = r.integer(("seed",), 0, lo=0)
    scene = _scene(r, d["scene"])
    belief = _belief(r, d["belief"])
    family = r.get(("noise", "family"), "gaussian-tangential")
    if family not in NOISE_FAMILIES:
        raise doc.error(("noise", "family"), f"must be one of {', '.join(NOISE_FAMILIES)}")
    noise = NoiseModel(r.number(("noise", "variance_w"), 1e-4, lo=0.0), family)
    q0 = r.vector(("robot", "q0"), scene.n_dof)
    limits = MotionLimits(r.vector(("robot", "v_max"), scene.n_dof, positive=True),
                          r.vector(("robot", "a_max"), scene.n_dof, positive=True))
    task = _task(r, d["task"])
    planner = _planner(r, d.get("planner", {}), noise, limits, belief["n_particles"], seed)
    horizon = HorizonConfig(r.integer(("horizon", "execute_steps"), 4, lo=1),
                            r.number(("horizon", "tolerance"), 0.01, lo=0.0, strict=True),
                            r.integer(("horizon", "max_outer"), 500, lo=1))
    if horizon.execute_steps > planner.n_steps:
        raise doc.error(("horizon", "execute_steps"), f"exceeds planner.n_steps = {planner.n_steps}")
    evaluate = {"rollouts": r.integer(("evaluate", "rollouts"), 1000, lo=1),
                "escape_radius": r.number(("evaluate", "escape_radius"), 0.05, lo=0.0, strict=True),
                "cycles": r.integer(("evaluate", "cycles"), 40, lo=1)}
    mpc = {"cycles": r.integer(("mpc", "cycles"), 40, lo=1),
           "true_start": r.vector(("mpc", "true_start"), 2, default=_belief_center(belief)),
           "obs_std": r.number(("mpc", "obs_std"), 0.005, lo=0.0, strict=True),
           "process_std": r.number(("mpc", "process_std"), 0.0, lo=0.0),
           "perturb_at": r.get(("mpc", "perturb_at"), None),
           "perturbation": r.vector(("mpc", "perturbation"), 2, default=[0.0, 0.0])}
    if mpc["perturb_at"] is not None:
        mpc["perturb_at"] = r.integer(("mpc", "perturb_at"), None, lo=0)
    return ScenarioConfig(seed, scene, belief, noise, q0, limits, task, planner, horizon, evaluate, mpc)


class _Reader:
    def __init__(self, doc: _Doc):
        self.doc = doc

    def get(self, path, default):
        cur = self.doc.data
        for k in path:
            if not isinstance(cur, (dict, list)):
                return default
            if isinstance(cur, dict):
                if k not in cur:
                    return default
                cur = cur[k]
            else:
                if k >= len(cur):
                    return default
                cur = cur[k]
        return cur

    def required(self, path):
        v = self.get(path, _MISSING)
        if v is _MISSING:
            raise self.doc.error(path, "required key missing")
        return v

    def number(self, path, default=None, lo=None, strict=False):
        v = self.get(path, default) if default is not None else self.required(path)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.doc.error(path, f"expected a number, got {v!r}")
        v = float(v)
        if not np.isfinite(v):
            raise self.doc.error(path, "must be finite")
        if lo is not None and (v <= lo if strict else v < lo):
            raise self.doc.error(path, f"must be {'>' if strict else '>='} {lo}")
        return v

    def integer(self, path, default=None, lo=None):
        v = self.get(path, default) if default is not None else self.required(path)
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.doc.error(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise self.doc.error(path, f"must be >= {lo}")
        return v

    def boolean(self, path, default):
        v = self.get(path, default)
        if not isinstance(v, bool):
            raise self.doc.error(path, f"expected true or false, got {v!r}")
        return v

    def vector(self, path, n, default=None, positive=False):
        v = self.get(path, _MISSING)
        if v is _MISSING:
            if default is None:
                raise self.doc.error(path, "required key missing")
            v = default
        if not isinstance(v, (list, tuple)) or any(isinstance(x, bool) or not isinstance(x, (int, float))
                                                   for x in v):
            raise self.doc.error(path, f"expected a list of {n} numbers")
        if len(v) != n:
            raise self.doc.error(path, f"expected {n} numbers, got {len(v)}")
        a = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(a)):
            raise self.doc.error(path, "entries must be finite")
        if positive and np.any(a <= 0):
            raise self.doc.error(path, "entries must be positive")
        return a


_MISSING = object()


def _scene(r: _Reader, sec) -> Scene:
    effs = r.required(("scene", "effectors"))
    if not isinstance(effs, list) or not 1 <= len(effs) <= 2:
        raise r.doc.error(("scene", "effectors"), "expected a list of one or two effectors")
    geoms = []
    for i, e in enumerate(effs):
        p = ("scene", "effectors", i)
        if not isinstance(e, dict):
            raise r.doc.error(p, "effector must be a mapping")
        kind = e.get("type")
        if kind == "circle":
            geoms.append(CircleGeom(r.number(p + ("radius",), lo=0.0, strict=True)))
        elif kind == "rect":
            geoms.append(RectGeom(tuple(r.vector(p + ("half_extents",), 2, positive=True))))
        else:
            raise r.doc.error(p + ("type",), "effector type must be 'circle' or 'rect'")
    return Scene(r.number(("scene", "object_radius"), lo=0.0, strict=True), tuple(geoms),
                 n_substeps=r.integer(("scene", "n_substeps"), 4, lo=1))


def _belief(r: _Reader, sec) -> dict:
    kind = r.get(("belief", "type"), "gaussian")
    n = r.integer(("belief", "n_particles"), 20, lo=1)
    seed = r.integer(("belief", "seed"), 0, lo=0)
    if kind == "gaussian":
        mean = r.vector(("belief", "mean"), 2)
        if "cov" in sec and "std" in sec:
            raise r.doc.error(("belief", "cov"), "give either std or cov, not both")
        if "cov" in sec:
            rows = r.required(("belief", "cov"))
            if not isinstance(rows, list) or len(rows) != 2:
                raise r.doc.error(("belief", "cov"), "expected a 2x2 matrix")
            cov = np.stack([r.vector(("belief", "cov", i), 2) for i in range(2)])
            if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) < 0):
                raise r.doc.error(("belief", "cov"), "must be symmetric positive semi-definite")
        else:
            cov = r.number(("belief", "std"), 0.01, lo=0.0) ** 2 * np.eye(2)
        return {"type": kind, "mean": mean, "cov": cov, "n_particles": n, "seed": seed}
    if kind == "uniform":
        low, high = r.vector(("belief", "low"), 2), r.vector(("belief", "high"), 2)
        if np.any(low > high):
            raise r.doc.error(("belief", "high"), "must be >= low")
        return {"type": kind, "low": low, "high": high, "n_particles": n, "seed": seed}
    raise r.doc.error(("belief", "type"), "belief type must be 'gaussian' or 'uniform'")


def _belief_center(bel: dict) -> list:
    if bel["type"] == "gaussian":
        return [float(v) for v in bel["mean"]]
    return [float(v) for v in 0.5 * (bel["low"] + bel["high"])]


def _task(r: _Reader, sec):
    kind = r.required(("task", "type"))
    w_p = r.number(("task", "w_progress"), 100.0, lo=0.0)
    if kind == "target":
        return TargetTask(r.vector(("task", "target"), 2), w_p)
    if kind == "path":
        return PathTask(r.vector(("task", "center"), 2, default=[0.0, 0.0]),
                        r.number(("task", "radius"), 0.15, lo=0.0, strict=True), w_p,
                        r.number(("task", "w_error"), 2000.0, lo=0.0))
    raise r.doc.error(("task", "type"), "task type must be 'target' or 'path'")


def _planner(r: _Reader, sec, noise, limits, n_particles, seed) -> PlannerConfig:
    p = "planner"
    ws = r.get((p, "workspace"), None)
    if ws is not None:
        ws = tuple(r.vector((p, "workspace"), 4))
    gap = r.get((p, "max_effector_gap"), None)
    if gap is not None:
        gap = r.number((p, "max_effector_gap"), lo=0.0)
    sig = r.get((p, "contact_sigma"), None)
    if sig is not None:
        sig = r.number((p, "contact_sigma"), lo=0.0, strict=True)
    return PlannerConfig(
        n_candidates=r.integer((p, "candidates"), 30, lo=2),
        n_iterations=r.integer((p, "iterations"), 4, lo=1),
        n_via=r.integer((p, "n_via"), 3, lo=1),
        n_steps=r.integer((p, "n_steps"), 20, lo=1),
        n_particles=n_particles,
        noise=noise,
        limits=limits,
        prior_duration=r.number((p, "prior_duration"), 1.0, lo=0.0, strict=True),
        smoothness_weight=r.number((p, "smoothness_weight"), 1.0, lo=0.0, strict=True),
        use_contact_prior=r.boolean((p, "contact_prior"), True),
        contact_sigma=sig,
        robust=r.boolean((p, "robust"), True),
        workspace=ws,
        min_effector_gap=r.number((p, "min_effector_gap"), 0.0, lo=0.0),
        max_effector_gap=gap,
        no_crossing=r.boolean((p, "no_crossing"), False),
        sigma0=r.number((p, "sigma0"), 1.0, lo=0.0, strict=True),
        n_threads=r.integer((p, "threads"), 1, lo=1),
        seed=seed,
    )
