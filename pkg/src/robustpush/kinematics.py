"""Planar serial chains used when planning in joint space."""
from __future__ import annotations

import numpy as np


class IKFailure(RuntimeError):
    pass


class PlanarChain:
    """Revolute chain in the plane; the effector sits at the tip of the last link.

    The effector configuration is its (x, y) position. Joint vectors may carry
    leading batch dimensions.
    """

    def __init__(self, link_lengths, base=(0.0, 0.0)):
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        if self.link_lengths.ndim != 1 or np.any(self.link_lengths <= 0):
            raise ValueError("link lengths must be a 1-D array of positive values")
        self.base = np.asarray(base, dtype=float)

    @property
    def n_dof(self) -> int:
        return self.link_lengths.shape[0]

    @property
    def effector_dim(self) -> int:
        return 2

    def forward(self, q):
        q = np.asarray(q, dtype=float)
        angles = np.cumsum(q, axis=-1)
        x = self.base[0] + np.sum(self.link_lengths * np.cos(angles), axis=-1)
        y = self.base[1] + np.sum(self.link_lengths * np.sin(angles), axis=-1)
        return np.stack([x, y], axis=-1)

    def tip_yaw(self, q):
        return np.sum(np.asarray(q, dtype=float), axis=-1)

    def jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        angles = np.cumsum(q)
        sx = self.link_lengths * np.sin(angles)
        cx = self.link_lengths * np.cos(angles)
        # joint j moves every link from j outward
        jx = -np.cumsum(sx[::-1])[::-1]
        jy = np.cumsum(cx[::-1])[::-1]
        return np.stack([jx, jy])

    def inverse(self, target, seed, max_iters: int = 100, tol: float = 1e-6, damping: float = 1e-3):
        """Damped least-squares IK. Raises IKFailure if the target is not reached."""
        q = np.array(seed, dtype=float)
        target = np.asarray(target, dtype=float)
        for _ in range(max_iters):
            err = target - self.forward(q)
            if np.linalg.norm(err) < tol:
                return q
            J = self.jacobian(q)
            q = q + J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(2), err)
        if np.linalg.norm(target - self.forward(q)) < tol:
            return q
        raise IKFailure(f"IK did not converge to {target} within {max_iters} iterations")
