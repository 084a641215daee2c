"""Compiled inner loops for contact resolution and particle rollouts.

Everything here works on raw floats and arrays so that numba can compile it.
Effector geometry is passed as ``kinds`` (0 = circle, 1 = rectangle) and
``params`` (radius, 0) or (half_x, half_y); poses are rows of (x, y, yaw).
"""
import math

import numpy as np
from numba import njit

CIRCLE = 0
RECT = 1

# Objects are pushed this far past the touching configuration so that a pusher
# resting against an object does not register as a new contact.
CLEARANCE = 1e-9
# Distance below which an effector counts as touching when picking contact normals.
TOUCH_TOL = 1e-7


@njit(cache=True)
def wrap_angle(a):
    a = (a + math.pi) % (2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@njit(cache=True, inline="always")
def sd_circle(cx, cy, r, ox, oy, ro):
    dx = ox - cx
    dy = oy - cy
    dist = math.sqrt(dx * dx + dy * dy)
    if dist > 0.0:
        nx = dx / dist
        ny = dy / dist
    else:
        nx = 1.0
        ny = 0.0
    return dist - r - ro, nx, ny, cx + r * nx, cy + r * ny


@njit(cache=True)
def sd_rect(cx, cy, yaw, hx, hy, ox, oy, ro):
    c = math.cos(yaw)
    s = math.sin(yaw)
    dx = ox - cx
    dy = oy - cy
    px = c * dx + s * dy
    py = -s * dx + c * dy
    qx = abs(px) - hx
    qy = abs(py) - hy
    if qx > 0.0 or qy > 0.0:
        kx = min(max(px, -hx), hx)
        ky = min(max(py, -hy), hy)
        ex = px - kx
        ey = py - ky
        dist = math.sqrt(ex * ex + ey * ey)
        lnx = ex / dist
        lny = ey / dist
        d = dist - ro
    elif qx >= qy:
        # center inside: leave through the nearest face, x faces win ties
        lnx = 1.0 if px >= 0.0 else -1.0
        lny = 0.0
        kx = hx * lnx
        ky = py
        d = qx - ro
    else:
        lnx = 0.0
        lny = 1.0 if py >= 0.0 else -1.0
        kx = px
        ky = hy * lny
        d = qy - ro
    nx = c * lnx - s * lny
    ny = s * lnx + c * lny
    wx = cx + c * kx - s * ky
    wy = cy + s * kx + c * ky
    return d, nx, ny, wx, wy


@njit(cache=True)
def sd_effector(kind, p0, p1, x, y, yaw, ox, oy, ro):
    if kind == CIRCLE:
        return sd_circle(x, y, p0, ox, oy, ro)
    return sd_rect(x, y, yaw, p0, p1, ox, oy, ro)


@njit(cache=True)
def min_distance(ox, oy, ro, kinds, params, pose):
    best = np.inf
    for e in range(kinds.shape[0]):
        d = sd_effector(kinds[e], params[e, 0], params[e, 1],
                        pose[e, 0], pose[e, 1], pose[e, 2], ox, oy, ro)[0]
        if d < best:
            best = d
    return best


@njit(cache=True, inline="always")
def sd_frame(kind, p0, p1, fx, fy, c, s, ox, oy, ro):
    """Signed distance for an effector placed at (fx, fy) with yaw given by (cos, sin)."""
    if kind == CIRCLE:
        return sd_circle(fx, fy, p0, ox, oy, ro)
    dx = ox - fx
    dy = oy - fy
    px = c * dx + s * dy
    py = -s * dx + c * dy
    qx = abs(px) - p0
    qy = abs(py) - p1
    if qx > 0.0 or qy > 0.0:
        kx = min(max(px, -p0), p0)
        ky = min(max(py, -p1), p1)
        ex = px - kx
        ey = py - ky
        dist = math.sqrt(ex * ex + ey * ey)
        lnx = ex / dist
        lny = ey / dist
        d = dist - ro
    elif qx >= qy:
        lnx = 1.0 if px >= 0.0 else -1.0
        lny = 0.0
        kx = p0 * lnx
        ky = py
        d = qx - ro
    else:
        lnx = 0.0
        lny = 1.0 if py >= 0.0 else -1.0
        kx = px
        ky = p1 * lny
        d = qy - ro
    return d, c * lnx - s * lny, s * lnx + c * lny, fx + c * kx - s * ky, fy + s * kx + c * ky


@njit(cache=True)
def set_frames(pose, out):
    for e in range(pose.shape[0]):
        out[e, 0] = pose[e, 0]
        out[e, 1] = pose[e, 1]
        out[e, 2] = math.cos(pose[e, 2])
        out[e, 3] = math.sin(pose[e, 2])


@njit(cache=True, inline="always")
def min_distance_frames(ox, oy, ro, kinds, params, frames, s):
    best = np.inf
    for e in range(kinds.shape[0]):
        d = sd_frame(kinds[e], params[e, 0], params[e, 1],
                     frames[s, e, 0], frames[s, e, 1], frames[s, e, 2], frames[s, e, 3], ox, oy, ro)[0]
        if d < best:
            best = d
    return best


@njit(cache=True, inline="always")
def resolve_frames(ox, oy, ro, kinds, params, frames, s, eps, max_iters):
    """Cyclic projection of the object out of every effector."""
    if kinds.shape[0] == 1:
        # one convex constraint: a single projection is exact
        d, nx, ny, _, _ = sd_frame(kinds[0], params[0, 0], params[0, 1],
                                   frames[s, 0, 0], frames[s, 0, 1], frames[s, 0, 2], frames[s, 0, 3], ox, oy, ro)
        if d < 0.0:
            ox += (CLEARANCE - d) * nx
            oy += (CLEARANCE - d) * ny
        return ox, oy, True
    for _ in range(max_iters):
        worst = 0.0
        for e in range(kinds.shape[0]):
            d, nx, ny, _, _ = sd_frame(kinds[e], params[e, 0], params[e, 1],
                                       frames[s, e, 0], frames[s, e, 1], frames[s, e, 2], frames[s, e, 3], ox, oy, ro)
            if d < 0.0:
                if -d > worst:
                    worst = -d
                ox += (CLEARANCE - d) * nx
                oy += (CLEARANCE - d) * ny
        if worst <= eps:
            return ox, oy, True
    return ox, oy, False


@njit(cache=True)
def resolve(ox, oy, ro, kinds, params, pose, eps, max_iters):
    frames = np.empty((1, kinds.shape[0], 4))
    set_frames(pose, frames[0])
    return resolve_frames(ox, oy, ro, kinds, params, frames, 0, eps, max_iters)


@njit(cache=True)
def prepare_sweep(kinds, params, prev, cur, n_sub, frames, bounds):
    """Frames of every substep pose (n_sub + 1, E, 4; index 0 = prev) and per-effector sweep bounds.

    No point of effector e moves farther than bounds[e] during the step.
    """
    n_eff = kinds.shape[0]
    for s in range(n_sub + 1):
        a = s / n_sub
        for e in range(n_eff):
            x = prev[e, 0] + a * (cur[e, 0] - prev[e, 0])
            y = prev[e, 1] + a * (cur[e, 1] - prev[e, 1])
            yaw = prev[e, 2] + a * wrap_angle(cur[e, 2] - prev[e, 2])
            frames[s, e, 0] = x
            frames[s, e, 1] = y
            frames[s, e, 2] = math.cos(yaw)
            frames[s, e, 3] = math.sin(yaw)
    for e in range(n_eff):
        dx = cur[e, 0] - prev[e, 0]
        dy = cur[e, 1] - prev[e, 1]
        b = math.sqrt(dx * dx + dy * dy)
        if kinds[e] == RECT:
            b += abs(wrap_angle(cur[e, 2] - prev[e, 2])) * math.sqrt(
                params[e, 0] * params[e, 0] + params[e, 1] * params[e, 1])
        bounds[e] = b


@njit(cache=True, inline="always")
def advance(ox, oy, ro, kinds, params, frames, bounds, n_sub, eps, max_iters):
    """Move one object through a prepared sweep."""
    clear = True
    for e in range(kinds.shape[0]):
        d = sd_frame(kinds[e], params[e, 0], params[e, 1],
                     frames[0, e, 0], frames[0, e, 1], frames[0, e, 2], frames[0, e, 3], ox, oy, ro)[0]
        if d <= bounds[e]:
            clear = False
            break
    if clear:
        return ox, oy, True
    for s in range(1, n_sub + 1):
        ox, oy, ok = resolve_frames(ox, oy, ro, kinds, params, frames, s, eps, max_iters)
        if not ok:
            return ox, oy, False
    return ox, oy, True


@njit(cache=True)
def step(ox, oy, ro, kinds, params, prev, cur, n_sub, eps, max_iters):
    """Sweep the effectors from ``prev`` to ``cur`` in ``n_sub`` projections."""
    frames = np.empty((n_sub + 1, kinds.shape[0], 4))
    bounds = np.empty(kinds.shape[0])
    prepare_sweep(kinds, params, prev, cur, n_sub, frames, bounds)
    return advance(ox, oy, ro, kinds, params, frames, bounds, n_sub, eps, max_iters)


@njit(cache=True, inline="always")
def contact_tangent(ox, oy, ro, kinds, params, frames, s):
    """Unit tangent of the averaged normal over effectors touching at frame set ``s``."""
    sx = 0.0
    sy = 0.0
    fx = 0.0
    fy = 0.0
    found = False
    best = np.inf
    for e in range(kinds.shape[0]):
        d, nx, ny, _, _ = sd_frame(kinds[e], params[e, 0], params[e, 1],
                                   frames[s, e, 0], frames[s, e, 1], frames[s, e, 2], frames[s, e, 3], ox, oy, ro)
        if d <= TOUCH_TOL:
            if not found:
                fx = nx
                fy = ny
                found = True
            sx += nx
            sy += ny
        elif not found and d < best:
            best = d
            fx = nx
            fy = ny
    norm = math.sqrt(sx * sx + sy * sy)
    if found and norm > 1e-12:
        fx = sx / norm
        fy = sy / norm
    return -fy, fx


@njit(cache=True, nogil=True)
def rollout_nominal(obj0, poses, kinds, params, ro, n_sub, eps, max_iters):
    """Nominal rollout of one particle set under many command sequences.

    obj0: (P, 2); poses: (C, K+1, E, 3) with poses[:, 0] the starting pose.
    Returns traj (C, K+1, P, 2), eta (C, K, P) and a per-sequence feasibility
    flag. Rollout of a sequence stops at its first infeasible projection.
    """
    n_c = poses.shape[0]
    n_k = poses.shape[1] - 1
    n_p = obj0.shape[0]
    n_eff = kinds.shape[0]
    traj = np.zeros((n_c, n_k + 1, n_p, 2))
    eta = np.zeros((n_c, n_k, n_p), dtype=np.uint8)
    ok = np.ones(n_c, dtype=np.bool_)
    frames = np.empty((n_sub + 1, n_eff, 4))
    bounds = np.empty(n_eff)
    for c in range(n_c):
        traj[c, 0] = obj0
        for k in range(n_k):
            prepare_sweep(kinds, params, poses[c, k], poses[c, k + 1], n_sub, frames, bounds)
            for p in range(n_p):
                ox = traj[c, k, p, 0]
                oy = traj[c, k, p, 1]
                if min_distance_frames(ox, oy, ro, kinds, params, frames, n_sub) <= 0.0:
                    eta[c, k, p] = 1
                ox, oy, good = advance(ox, oy, ro, kinds, params, frames, bounds, n_sub, eps, max_iters)
                if not good:
                    ok[c] = False
                    break
                traj[c, k + 1, p, 0] = ox
                traj[c, k + 1, p, 1] = oy
            if not ok[c]:
                break
    return traj, eta, ok


@njit(cache=True, nogil=True)
def rollout_stochastic(obj0, poses, noise, scale, kinds, params, ro, n_sub, eps, max_iters):
    """Noisy rollout; ``noise`` (P, K) holds unit-variance draws.

    A particle whose projection fails stays where it was for the rest of the
    rollout and is flagged as jammed.
    """
    n_k = poses.shape[0] - 1
    n_p = obj0.shape[0]
    n_eff = kinds.shape[0]
    traj = np.zeros((n_k + 1, n_p, 2))
    eta = np.zeros((n_k, n_p), dtype=np.uint8)
    jammed = np.zeros(n_p, dtype=np.bool_)
    frames = np.empty((n_sub + 1, n_eff, 4))
    bounds = np.empty(n_eff)
    traj[0] = obj0
    for k in range(n_k):
        prepare_sweep(kinds, params, poses[k], poses[k + 1], n_sub, frames, bounds)
        for p in range(n_p):
            ox = traj[k, p, 0]
            oy = traj[k, p, 1]
            if not jammed[p]:
                if min_distance_frames(ox, oy, ro, kinds, params, frames, n_sub) <= 0.0:
                    eta[k, p] = 1
                nx, ny, good = advance(ox, oy, ro, kinds, params, frames, bounds, n_sub, eps, max_iters)
                if not good:
                    jammed[p] = True
                else:
                    if eta[k, p] == 1 and scale > 0.0:
                        tx, ty = contact_tangent(nx, ny, ro, kinds, params, frames, n_sub)
                        w = scale * noise[p, k]
                        px, py, good = resolve_frames(nx + w * tx, ny + w * ty, ro, kinds, params,
                                                      frames, n_sub, eps, max_iters)
                        if good:
                            nx = px
                            ny = py
                        else:
                            jammed[p] = True
                    if not jammed[p]:
                        ox = nx
                        oy = ny
            traj[k + 1, p, 0] = ox
            traj[k + 1, p, 1] = oy
    return traj, eta, jammed


@njit(cache=True)
def push_line(q, u, w, eps, max_iters):
    """One-dimensional push along +x: a wide flat pusher whose face sits at ``u``.

    ``q`` are point-object coordinates, ``w`` the perturbation applied along the
    push direction to contacted objects.
    """
    kinds = np.array([RECT])
    half = 1e3
    params = np.array([[half, half]])
    pose = np.array([[u - half, 0.0, 0.0]])
    out = np.empty(q.shape[0])
    contact = np.zeros(q.shape[0], dtype=np.uint8)
    for i in range(q.shape[0]):
        ox = q[i]
        if min_distance(ox, 0.0, 0.0, kinds, params, pose) <= 0.0:
            contact[i] = 1
        ox, _, _ = resolve(ox, 0.0, 0.0, kinds, params, pose, eps, max_iters)
        if contact[i] == 1:
            ox, _, _ = resolve(ox + w[i], 0.0, 0.0, kinds, params, pose, eps, max_iters)
        out[i] = ox
    return out, contact


@njit(cache=True)
def _limits_ok(a, b, c, e, v_lim, a_lim, T):
    for g in range(a.shape[0]):
        for d in range(a.shape[1]):
            if abs(a[g, d] / T + b[g, d]) > v_lim[d] * (1.0 + 1e-12):
                return False
            if abs(c[g, d] / (T * T) + e[g, d] / T) > a_lim[d] * (1.0 + 1e-12):
                return False
    return True


@njit(cache=True)
def time_scale(a, b, c, e, v_lim, a_lim, t_min, rtol):
    """Shortest duration per candidate meeting the limits on a grid.

    Velocity on the grid is a / T + b and acceleration c / T^2 + e / T, with
    a, c of shape (C, G, D) and b, e of shape (G, D). Doubling from ``t_min``
    brackets the answer, then bisection narrows it to ``rtol``.
    """
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        hi = t_min
        n = 0
        while not _limits_ok(a[i], b, c[i], e, v_lim, a_lim, hi) and n < 60:
            hi *= 2.0
            n += 1
        if hi > t_min:
            lo = hi / 2.0
            while hi - lo > rtol * hi:
                mid = 0.5 * (lo + hi)
                if _limits_ok(a[i], b, c[i], e, v_lim, a_lim, mid):
                    hi = mid
                else:
                    lo = mid
        out[i] = hi
    return out
