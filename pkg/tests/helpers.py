"""Shared synthetic fixtures for the calibration tests and the acceptance suite."""
import numpy as np

from dualfluoro.calibration import monomial_exponents
from dualfluoro.geometry import DualFluoroSystem, RigidPose

TOOL_BEADS = np.array([[0.0, 0.0, 0.0], [60.0, 0.0, 0.0], [0.0, 45.0, 0.0], [10.0, 15.0, 70.0]])
TOOL_POSE = RigidPose((15.0, -10.0, 25.0), (5.0, -8.0, 505.0))


def bead_grid(n=20, pitch=10.0):
    xs = (np.arange(n) - (n - 1) / 2) * pitch
    return np.array([(x, y) for y in xs for x in xs])


class PolyWarp:
    """Known observed -> ideal map ``P(x) = x + D(x)`` with ``D`` of total degree 5."""

    def __init__(self, seed=0, amplitude=1.5, scale=100.0):
        rng = np.random.default_rng(seed)
        self.exps = monomial_exponents(5)
        self.coef = rng.normal(0.0, amplitude, (len(self.exps), 2)) / np.arange(1, len(self.exps) + 1)[:, None]
        self.scale = scale

    def offset(self, pts):
        p = np.atleast_2d(pts) / self.scale
        basis = np.column_stack([p[:, 0] ** i * p[:, 1] ** j for i, j in self.exps])
        return basis @ self.coef

    def __call__(self, observed):
        return np.atleast_2d(observed) + self.offset(observed)

    def observe(self, ideal, iters=200):
        """Observed positions whose image under the map is ``ideal`` (fixed-point inverse)."""
        obs = np.array(ideal, dtype=float)
        for _ in range(iters):
            obs = ideal - self.offset(obs)
        return obs


def perturbed_system(system, dtheta=(6.0, 8.0, 0.0), dtau=(30.0, 40.0, 0.0)):
    p = system.f2.pose()
    moved = RigidPose(np.add(p.theta, dtheta), np.add(p.tau, dtau))
    return DualFluoroSystem(system.f1, system.f2.with_pose(moved))
