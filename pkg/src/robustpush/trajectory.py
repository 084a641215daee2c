"""Via-point trajectories: minimum-acceleration interpolants with zero end velocity.

A trajectory over duration T passes through N via-points at uniformly spaced
knots t_i = i T / N, starts at (q0, qdot0) and ends at rest on the last
via-point. The minimiser of the integrated squared acceleration under these
constraints is the clamped cubic spline, which is linear in

    z = (q0, via_1, ..., via_N, T * qdot0)

when written in normalised time tau = t / T. ``ViaPointBasis`` holds that
linear map; evaluation, discretisation, time scaling and the smoothness prior
are all built on it.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from robustpush import _kernels

T_MIN = 0.1
LIMIT_GRID = 101
SCALE_RTOL = 0.01
RIDGE = 1e-10


@dataclass(frozen=True)
class TrajectoryParams:
    theta: np.ndarray
    n_via: int
    n_dof: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.n_via * self.n_dof:
            raise ValueError(f"theta has {theta.shape[0]} entries, expected {self.n_via * self.n_dof}")
        object.__setattr__(self, "theta", theta)

    @property
    def via_points(self) -> np.ndarray:
        return self.theta.reshape(self.n_via, self.n_dof)

    @property
    def final(self) -> np.ndarray:
        return self.via_points[-1]

    @classmethod
    def from_via_points(cls, via) -> "TrajectoryParams":
        via = np.atleast_2d(np.asarray(via, dtype=float))
        return cls(via.reshape(-1), via.shape[0], via.shape[1])


@dataclass(frozen=True)
class BoundaryConditions:
    q0: np.ndarray
    qdot0: np.ndarray

    def __post_init__(self):
        q0 = np.asarray(self.q0, dtype=float).reshape(-1)
        qd = np.asarray(self.qdot0, dtype=float).reshape(-1)
        if q0.shape != qd.shape:
            raise ValueError("q0 and qdot0 must have the same length")
        if not (np.all(np.isfinite(q0)) and np.all(np.isfinite(qd))):
            raise ValueError("boundary conditions must be finite")
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "qdot0", qd)

    @classmethod
    def at_rest(cls, q0) -> "BoundaryConditions":
        q0 = np.asarray(q0, dtype=float).reshape(-1)
        return cls(q0, np.zeros_like(q0))


@dataclass(frozen=True)
class MotionLimits:
    v_max: np.ndarray
    a_max: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v_max, dtype=float).reshape(-1)
        a = np.asarray(self.a_max, dtype=float).reshape(-1)
        if np.any(v <= 0) or np.any(a <= 0):
            raise ValueError("motion limits must be strictly positive")
        object.__setattr__(self, "v_max", v)
        object.__setattr__(self, "a_max", a)


class ViaPointBasis:
    """Linear map from z = (q0, via_1..via_N, T*qdot0) to the spline in normalised time."""

    def __init__(self, n_via: int):
        if n_via < 1:
            raise ValueError("need at least one via-point")
        self.n_via = n_via
        self.h = 1.0 / n_via
        self.slopes = self._slope_map()

    @property
    def width(self) -> int:
        return self.n_via + 2

    def _slope_map(self) -> np.ndarray:
        """Knot slopes (N+1, N+2) as a linear function of z, from C2 continuity."""
        n, h = self.n_via, self.h
        S = np.zeros((n + 1, n + 2))
        S[0, n + 1] = 1.0
        if n > 1:
            # m_{i-1} + 4 m_i + m_{i+1} = 3 (y_{i+1} - y_{i-1}) / h for interior knots
            A = np.zeros((n - 1, n - 1))
            rhs = np.zeros((n - 1, n + 2))
            for r, i in enumerate(range(1, n)):
                A[r, r] = 4.0
                if r > 0:
                    A[r, r - 1] = 1.0
                if r < n - 2:
                    A[r, r + 1] = 1.0
                rhs[r, i + 1] += 3.0 / h
                rhs[r, i - 1] -= 3.0 / h
                if i == 1:
                    rhs[r, n + 1] -= 1.0
            S[1:n] = np.linalg.solve(A, rhs)
        return S

    def matrix(self, tau, deriv: int = 0) -> np.ndarray:
        """Rows mapping z to the ``deriv``-th tau-derivative at each tau."""
        tau = np.clip(np.atleast_1d(np.asarray(tau, dtype=float)), 0.0, 1.0)
        n, h = self.n_via, self.h
        seg = np.minimum((tau / h).astype(int), n - 1)
        s = tau / h - seg
        if deriv == 0:
            b = [2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2]
            scale = 1.0
        elif deriv == 1:
            b = [6 * s**2 - 6 * s, 3 * s**2 - 4 * s + 1, -6 * s**2 + 6 * s, 3 * s**2 - 2 * s]
            scale = 1.0 / h
        elif deriv == 2:
            b = [12 * s - 6, 6 * s - 4, -12 * s + 6, 6 * s - 2]
            scale = 1.0 / h**2
        else:
            raise ValueError("deriv must be 0, 1 or 2")
        rows = np.arange(tau.shape[0])
        M = np.zeros((tau.shape[0], n + 2))
        M[rows, seg] += b[0]
        M[rows, seg + 1] += b[2]
        M += (b[1] * h)[:, None] * self.slopes[seg] + (b[3] * h)[:, None] * self.slopes[seg + 1]
        return M * scale

    def gram(self) -> np.ndarray:
        """Exact integral over [0, 1] of B''(tau)^T B''(tau)."""
        n, h = self.n_via, self.h
        G = np.zeros((n + 2, n + 2))
        eps = 1e-12
        for i in range(n):
            a = self.matrix([i * h + eps], 2)[0]
            b = self.matrix([(i + 1) * h - eps], 2)[0]
            # B'' is linear on each segment
            G += h / 6.0 * (2 * np.outer(a, a) + np.outer(a, b) + np.outer(b, a) + 2 * np.outer(b, b))
        return 0.5 * (G + G.T)


@lru_cache(maxsize=None)
def basis(n_via: int) -> ViaPointBasis:
    return ViaPointBasis(n_via)


@lru_cache(maxsize=None)
def _grid_matrices(n_via: int, n_grid: int):
    tau = np.linspace(0.0, 1.0, n_grid)
    B = basis(n_via)
    return B.matrix(tau, 1), B.matrix(tau, 2)


@lru_cache(maxsize=None)
def discretization_matrix(n_via: int, n_steps: int) -> np.ndarray:
    return basis(n_via).matrix(np.arange(1, n_steps + 1) / n_steps, 0)


def stack_z(via, q0, qdot0, T) -> np.ndarray:
    """z arrays (..., N+2, n_dof) for via-points (..., N, n_dof) and durations (...)."""
    via = np.asarray(via, dtype=float)
    T = np.asarray(T, dtype=float)
    lead = via.shape[:-2]
    q0b = np.broadcast_to(q0, lead + (1, via.shape[-1]))
    vb = np.asarray(qdot0, dtype=float) * T[..., None, None] * np.ones(lead + (1, 1))
    return np.concatenate([q0b, via, vb], axis=-2)


def _check_bc(params: TrajectoryParams, bc: BoundaryConditions):
    if bc.q0.shape[0] != params.n_dof:
        raise ValueError("boundary conditions do not match the trajectory DoF")


def evaluate(params: TrajectoryParams, bc: BoundaryConditions, T: float, t):
    """Position, velocity and acceleration at time(s) ``t`` in [0, T]."""
    _check_bc(params, bc)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < -1e-12) or np.any(t_arr > T + 1e-12):
        raise ValueError(f"t must lie in [0, {T}]")
    B = basis(params.n_via)
    z = stack_z(params.via_points, bc.q0, bc.qdot0, np.float64(T))
    tau = t_arr / T
    q = B.matrix(tau, 0) @ z
    qd = B.matrix(tau, 1) @ z / T
    qdd = B.matrix(tau, 2) @ z / T**2
    if np.ndim(t) == 0:
        return q[0], qd[0], qdd[0]
    return q, qd, qdd


def time_scale_batch(via, bc: BoundaryConditions, limits: MotionLimits, t_min: float = T_MIN) -> np.ndarray:
    """Shortest durations meeting the limits for via-point arrays (C, N, n_dof)."""
    via = np.asarray(via, dtype=float)
    n_c, n_via = via.shape[0], via.shape[1]
    D1, D2 = _grid_matrices(n_via, LIMIT_GRID)
    z_pos = stack_z(via, bc.q0, np.zeros_like(bc.q0), np.ones(n_c))
    # velocity = a / T + b, acceleration = c / T^2 + e / T
    a = np.matmul(D1, z_pos)
    c = np.matmul(D2, z_pos)
    b = D1[:, -1][:, None] * bc.qdot0[None, :]
    e = D2[:, -1][:, None] * bc.qdot0[None, :]
    v_lim = np.broadcast_to(limits.v_max, bc.q0.shape).astype(float)
    a_lim = np.broadcast_to(limits.a_max, bc.q0.shape).astype(float)
    return _kernels.time_scale(np.ascontiguousarray(a), np.ascontiguousarray(b), np.ascontiguousarray(c),
                               np.ascontiguousarray(e), v_lim, a_lim, float(t_min), SCALE_RTOL)


def time_scale(params: TrajectoryParams, bc: BoundaryConditions, limits: MotionLimits, t_min: float = T_MIN) -> float:
    """Smallest duration (within 1%) respecting velocity and acceleration limits."""
    _check_bc(params, bc)
    return float(time_scale_batch(params.via_points[None], bc, limits, t_min)[0])


def discretize_batch(via, bc: BoundaryConditions, T, n_steps: int) -> np.ndarray:
    """Commands (C, K, n_dof) at t = T (k+1) / K."""
    D = discretization_matrix(np.asarray(via).shape[-2], n_steps)
    return np.matmul(D, stack_z(via, bc.q0, bc.qdot0, T))


def discretize(params: TrajectoryParams, bc: BoundaryConditions, T: float, K: int) -> list[np.ndarray]:
    if K < 1:
        raise ValueError("K must be at least 1")
    _check_bc(params, bc)
    out = discretize_batch(params.via_points[None], bc, np.array([T]), K)[0]
    return list(out)


def state_at_fraction(via, bc: BoundaryConditions, T: float, frac: float):
    """(q, qdot) at t = frac * T for a single via-point array (N, n_dof)."""
    via = np.asarray(via, dtype=float)
    B = basis(via.shape[0])
    z = stack_z(via, bc.q0, bc.qdot0, np.float64(T))
    return (B.matrix([frac], 0) @ z)[0], (B.matrix([frac], 1) @ z)[0] / T


@dataclass(frozen=True)
class SmoothnessPrior:
    """Gaussian over theta with density proportional to exp(-J_s), given (q0, qdot0)."""

    mean: np.ndarray
    precision: np.ndarray
    cross_precision: np.ndarray
    R_q: np.ndarray
    xi0: np.ndarray
    const_precision: np.ndarray

    def cost(self, theta) -> float:
        """J_s(theta) = 0.5 xi^T R_xi xi with xi = (theta, q0, qdot0)."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return float(0.5 * theta @ self.precision @ theta + theta @ self.cross_precision @ self.xi0
                     + 0.5 * self.xi0 @ self.const_precision @ self.xi0)

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        dev = theta - self.mean
        sign, logdet = np.linalg.slogdet(self.precision)
        k = theta.shape[0]
        return float(-0.5 * dev @ self.precision @ dev + 0.5 * logdet - 0.5 * k * np.log(2 * np.pi))


def smoothness_prior(bc: BoundaryConditions, R_q, N: int, T: float) -> SmoothnessPrior:
    """Condition the smoothness Gaussian on the initial position and velocity.

    The full precision over xi = (theta, q0, qdot0) is the integral of
    Phi''^T R_q Phi'' over [0, T]; the theta block is the prior precision and
    the conditional mean is -R_theta^{-1} R_cross (q0, qdot0).
    """
    n_dof = bc.q0.shape[0]
    R_q = np.atleast_2d(np.asarray(R_q, dtype=float))
    if R_q.shape == (1, 1) and n_dof > 1:
        R_q = R_q[0, 0] * np.eye(n_dof)
    if not np.allclose(R_q, R_q.T) or np.any(np.linalg.eigvalsh(R_q) <= 0):
        raise ValueError("R_q must be symmetric positive definite")
    G = basis(N).gram()
    # z = (q0, via, T qdot0) -> xi = (via, q0, qdot0); integral over t adds 1 / T^3
    P = np.zeros((N + 2, N + 2))
    for r in range(N):
        P[1 + r, r] = 1.0
    P[0, N] = 1.0
    P[N + 1, N + 1] = T
    Gxi = P.T @ G @ P / T**3
    R_xi = np.kron(Gxi, R_q)
    m = N * n_dof
    R_theta = R_xi[:m, :m]
    R_cross = R_xi[:m, m:]
    xi0 = np.concatenate([bc.q0, bc.qdot0])
    try:
        mean = -np.linalg.solve(R_theta, R_cross @ xi0)
    except np.linalg.LinAlgError:
        mean = -np.linalg.solve(R_theta + RIDGE * np.eye(m), R_cross @ xi0)
    return SmoothnessPrior(mean, 0.5 * (R_theta + R_theta.T), R_cross, R_q, xi0, R_xi[m:, m:])
