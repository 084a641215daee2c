"""CSV traces and SVG plots of plans."""
from __future__ import annotations

import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from robustpush.belief import ParticleBelief, nominal_rollout, trajectory_gains
from robustpush.dynamics import NoiseModel, Scene
from robustpush.optimizer import PathTask, TargetTask
from robustpush.receding import PlanLog, plan_poses

COMMAND_FIELDS = ("step", "effector", "x", "y", "yaw")
BELIEF_FIELDS = ("particle", "x", "y")
GAIN_FIELDS = ("step", "gamma", "contact_fraction", "variance")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_commands(path, poses: np.ndarray):
    """Pose sequence (n+1, E, 3); step 0 is the robot start."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COMMAND_FIELDS)
        for k, row in enumerate(poses):
            for e, (x, y, yaw) in enumerate(row):
                w.writerow([k, e, _fmt(x), _fmt(y), _fmt(yaw)])


def read_commands(path) -> np.ndarray:
    rows = _read(path, COMMAND_FIELDS)
    if not rows:
        return np.zeros((0, 0, 3))
    steps = np.array([int(r["step"]) for r in rows])
    effs = np.array([int(r["effector"]) for r in rows])
    out = np.zeros((steps.max() + 1, effs.max() + 1, 3))
    for r, k, e in zip(rows, steps, effs):
        out[k, e] = float(r["x"]), float(r["y"]), float(r["yaw"])
    return out


def write_belief(path, b: ParticleBelief):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BELIEF_FIELDS)
        for i, (x, y) in enumerate(b.particles):
            w.writerow([i, _fmt(x), _fmt(y)])


def read_belief(path) -> ParticleBelief:
    rows = _read(path, BELIEF_FIELDS)
    return ParticleBelief(np.array([[float(r["x"]), float(r["y"])] for r in rows]))


def write_gains(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(GAIN_FIELDS)
        for step, g, c, v in rows:
            w.writerow([int(step), _fmt(g), _fmt(c), _fmt(v)])


def read_gains(path) -> np.ndarray:
    rows = _read(path, GAIN_FIELDS)
    return np.array([[float(r[k]) for k in GAIN_FIELDS] for r in rows]).reshape(-1, 4)


def _read(path, fields) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != fields:
            raise ValueError(f"{path}: expected columns {','.join(fields)}")
        return list(reader)


def executed_gains(plog: PlanLog, scene: Scene, noise: NoiseModel, H: int) -> list[tuple]:
    """Predicted gain, contact fraction and variance of every executed step, horizon by horizon."""
    rows, step = [], 0
    cmds = plog.command_array()
    for i in range(plog.n_horizons):
        u = cmds[i * H:(i + 1) * H]
        bt = nominal_rollout(plog.beliefs[i], list(u), scene, noise, q_start=plog.boundary[i].q0)
        for g, c, v in zip(trajectory_gains(bt, noise), bt.contact_fractions, bt.variances[1:]):
            step += 1
            rows.append((step, g, c, v))
    return rows


def write_plan(out_dir, plog: PlanLog, scene: Scene, noise: NoiseModel, H: int) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("belief_*.csv"):
        stale.unlink()
    write_commands(out / "commands.csv", plan_poses(plog, scene))
    names = ["commands.csv"]
    for k, b in enumerate(plog.beliefs):
        write_belief(out / f"belief_{k}.csv", b)
        names.append(f"belief_{k}.csv")
    write_gains(out / "gains.csv", executed_gains(plog, scene, noise, H))
    names.append("gains.csv")
    return names


# ---------------------------------------------------------------- SVG

WIDTH, HEIGHT, MARGIN = 480, 480, 40
COLORS = ("#1f77b4", "#d62728")


class _Frame:
    def __init__(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if pts.shape[0] == 0:
            pts = np.array([[-0.2, -0.2], [0.2, 0.2]])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float(np.max(hi - lo)), 1e-3) * 1.1
        c = 0.5 * (lo + hi)
        self.lo = c - span / 2
        self.span = span
        self.scale = (WIDTH - 2 * MARGIN) / span

    def xy(self, p):
        p = np.asarray(p, dtype=float)
        return MARGIN + (p[..., 0] - self.lo[0]) * self.scale, HEIGHT - MARGIN - (p[..., 1] - self.lo[1]) * self.scale


def export_plot(plog: PlanLog | None, scene: Scene | None = None, task=None, style: dict | None = None) -> str:
    """SVG with effector traces, particle clouds per horizon and the task overlay.

    An empty or missing log yields the axes alone.
    """
    style = {"snapshots": 6, "particle_radius": 2.0, **(style or {})}
    empty = plog is None or scene is None or not plog.commands
    pts = []
    if not empty:
        poses = plan_poses(plog, scene)
        pts += [poses[..., :2].reshape(-1, 2)] + [b.particles for b in plog.beliefs]
        if isinstance(task, PathTask):
            pts.append(task.center + task.radius * np.array([[-1, -1], [1, 1]]))
        elif isinstance(task, TargetTask):
            pts.append(task.target[None])
    fr = _Frame(np.concatenate(pts) if pts else [])
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(WIDTH), height=str(HEIGHT),
                     viewBox=f"0 0 {WIDTH} {HEIGHT}")
    _axes(svg, fr)
    if empty:
        return _tostring(svg)
    if isinstance(task, PathTask):
        cx, cy = fr.xy(task.center)
        ET.SubElement(svg, "circle", {"class": "path", "cx": f"{cx:.2f}", "cy": f"{cy:.2f}",
                                      "r": f"{task.radius * fr.scale:.2f}", "fill": "none",
                                      "stroke": "#2ca02c", "stroke-dasharray": "4 3"})
    elif isinstance(task, TargetTask):
        tx, ty = fr.xy(task.target)
        ET.SubElement(svg, "circle", {"class": "target", "cx": f"{tx:.2f}", "cy": f"{ty:.2f}", "r": "4",
                                      "fill": "none", "stroke": "#2ca02c"})
    for e in range(scene.n_effectors):
        x, y = fr.xy(poses[:, e, :2])
        ET.SubElement(svg, "polyline", {"class": "trajectory", "fill": "none", "stroke": COLORS[e % 2],
                                        "points": " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y))})
    n_b = len(plog.beliefs)
    picks = sorted(set(np.linspace(0, n_b - 1, min(style["snapshots"], n_b)).round().astype(int)))
    for k in picks:
        g = ET.SubElement(svg, "g", {"class": "particles", "data-horizon": str(k)})
        shade = 0.3 + 0.7 * k / max(n_b - 1, 1)
        for px, py in zip(*fr.xy(plog.beliefs[k].particles)):
            ET.SubElement(g, "circle", {"cx": f"{px:.2f}", "cy": f"{py:.2f}", "r": str(style["particle_radius"]),
                                        "fill": "#ff7f0e", "fill-opacity": f"{shade:.2f}"})
    legend = ET.SubElement(svg, "g", {"class": "legend"})
    n_p = plog.beliefs[0].n_particles
    for i, text in enumerate((f"particles: {n_p}", f"horizons: {plog.n_horizons}", f"outcome: {plog.outcome}")):
        t = ET.SubElement(legend, "text", {"x": str(MARGIN + 4), "y": str(MARGIN - 24 + 12 * i),
                                           "font-size": "10"})
        t.text = text
    return _tostring(svg)


def export_variance_plot(rows) -> str:
    """SVG of predicted variance and variance gain per executed step, from gains.csv rows.

    Each curve is scaled to its own range; the gain panel marks gamma = 1.
    """
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(WIDTH), height=str(HEIGHT),
                     viewBox=f"0 0 {WIDTH} {HEIGHT}")
    rows = np.asarray(rows, dtype=float).reshape(-1, 4)
    half = (HEIGHT - 3 * MARGIN) / 2
    panels = (("variance", 3, MARGIN, "#9467bd"), ("gain", 1, 2 * MARGIN + half, "#8c564b"))
    for name, col, top, color in panels:
        g = ET.SubElement(svg, "g", {"class": f"axes {name}", "stroke": "#444"})
        bottom = top + half
        ET.SubElement(g, "line", x1=str(MARGIN), y1=f"{bottom:.2f}", x2=str(WIDTH - MARGIN), y2=f"{bottom:.2f}")
        ET.SubElement(g, "line", x1=str(MARGIN), y1=f"{bottom:.2f}", x2=str(MARGIN), y2=f"{top:.2f}")
        t = ET.SubElement(g, "text", {"x": str(MARGIN + 4), "y": f"{top - 4:.2f}", "font-size": "10",
                                      "stroke": "none"})
        t.text = "variance [m^2]" if name == "variance" else "gamma"
        if rows.shape[0] == 0:
            continue
        x, y = rows[:, 0], rows[:, col]
        lo, hi = float(y.min()), float(y.max())
        if name == "gain":
            lo, hi = min(lo, 1.0), max(hi, 1.0)
        span_y = max(hi - lo, 1e-12)
        span_x = max(float(x.max() - x.min()), 1.0)

        def px(xv, yv):
            return (MARGIN + (xv - x.min()) / span_x * (WIDTH - 2 * MARGIN), bottom - (yv - lo) / span_y * half)

        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(*px(x, y)))
        ET.SubElement(svg, "polyline", {"class": name, "fill": "none", "stroke": color, "points": pts})
        if name == "gain":
            _, y1 = px(x.min(), 1.0)
            ET.SubElement(svg, "line", {"class": "unit-gain", "x1": str(MARGIN), "x2": str(WIDTH - MARGIN),
                                        "y1": f"{y1:.2f}", "y2": f"{y1:.2f}", "stroke": "#999",
                                        "stroke-dasharray": "3 3"})
    return _tostring(svg)


def _axes(svg, fr: _Frame):
    g = ET.SubElement(svg, "g", {"class": "axes", "stroke": "#444"})
    x0, y0, x1 = MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN
    ET.SubElement(g, "line", x1=str(x0), y1=str(y0), x2=str(x1), y2=str(y0))
    ET.SubElement(g, "line", x1=str(x0), y1=str(y0), x2=str(x0), y2=str(MARGIN))
    for i, v in enumerate((fr.lo[0], fr.lo[0] + fr.span)):
        t = ET.SubElement(g, "text", {"x": str((x0, x1)[i]), "y": str(y0 + 14), "font-size": "9", "stroke": "none"})
        t.text = f"{v:.3f}"
    for i, v in enumerate((fr.lo[1], fr.lo[1] + fr.span)):
        t = ET.SubElement(g, "text", {"x": "2", "y": str((y0, MARGIN)[i]), "font-size": "9", "stroke": "none"})
        t.text = f"{v:.3f}"
    t = ET.SubElement(g, "text", {"x": str(WIDTH // 2), "y": str(HEIGHT - 8), "font-size": "10", "stroke": "none"})
    t.text = "x [m]"
    t = ET.SubElement(g, "text", {"x": "2", "y": str(HEIGHT // 2), "font-size": "10", "stroke": "none"})
    t.text = "y [m]"


def _tostring(svg) -> str:
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"
