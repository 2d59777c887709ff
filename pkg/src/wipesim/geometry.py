"""Quaternion manifold operations and the pose error used by every other module.

Conventions:
  * World frame is right-handed with z pointing up, away from the work surface.
  * Unit quaternions are stored (w, x, y, z) and canonicalized to w >= 0 at
    construction, which removes the double-cover sign ambiguity from all
    error computations.
  * ``quat_log`` returns the half-angle rotation vector, so ``2 * quat_log``
    is the full axis-angle rotation vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Below this vector norm, Log/Exp switch to their series branch to avoid 0/0.
_SERIES_EPS = 1e-12


@dataclass(frozen=True, slots=True)
class UnitQuaternion:
    """Unit quaternion, normalized and canonicalized (w >= 0) on construction."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError(f"cannot normalize quaternion with norm {n}")
        s = 1.0 / n
        if abs(self.w) <= 1e-15 * n:
            # pi rotations sit on the double-cover boundary where the sign of w
            # is numerical noise; tie-break on the vector part for determinism.
            for c in (self.x, self.y, self.z):
                if c != 0.0:
                    if c < 0.0:
                        s = -s
                    break
        elif self.w < 0.0:
            s = -s
        object.__setattr__(self, "w", self.w * s)
        object.__setattr__(self, "x", self.x * s)
        object.__setattr__(self, "y", self.y * s)
        object.__setattr__(self, "z", self.z * s)

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)


@dataclass(frozen=True, slots=True)
class Pose:
    """End-effector pose: position [m] plus orientation quaternion."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: UnitQuaternion = field(default_factory=UnitQuaternion)


@dataclass(frozen=True, slots=True)
class PoseError:
    """Cartesian error: translation [m] and half-angle rotation vector [rad]."""

    p: np.ndarray
    q: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])


@dataclass(frozen=True, slots=True)
class Twist:
    """Linear [m/s] and angular [rad/s] velocity, world frame."""

    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.w])


@dataclass(frozen=True, slots=True)
class Wrench:
    """Force [N] and torque [N·m] acting on the tool, world frame."""

    f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.f, self.tau])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.f + other.f, self.tau + other.tau)


ZERO_WRENCH = Wrench()


def quat_log(q: UnitQuaternion) -> np.ndarray:
    """Half-angle rotation vector of ``q``; zero vector at identity."""
    vn = math.sqrt(q.x * q.x + q.y * q.y + q.z * q.z)
    if vn < _SERIES_EPS:
        return np.zeros(3)
    half = math.atan2(vn, q.w)
    s = half / vn
    return np.array([q.x * s, q.y * s, q.z * s])


def quat_exp(r: np.ndarray) -> UnitQuaternion:
    """Quaternion with half-angle ``|r|`` about axis ``r/|r|``; inverse of quat_log."""
    rx, ry, rz = float(r[0]), float(r[1]), float(r[2])
    half = math.sqrt(rx * rx + ry * ry + rz * rz)
    if half < _SERIES_EPS:
        return UnitQuaternion(1.0, rx, ry, rz)
    s = math.sin(half) / half
    return UnitQuaternion(math.cos(half), rx * s, ry * s, rz * s)


def pose_error(desired: Pose, actual: Pose) -> PoseError:
    """Error pulling ``actual`` toward ``desired``: p_des - p, Log(q_des * conj(q))."""
    return PoseError(desired.p - actual.p, quat_log(desired.q * actual.q.conjugate()))


def integrate_pose(x: Pose, twist: Twist, dt: float) -> Pose:
    """Advance a pose by a world-frame twist over ``dt`` seconds."""
    p = x.p + twist.v * dt
    w = twist.w
    if w[0] == 0.0 and w[1] == 0.0 and w[2] == 0.0:
        return Pose(p, x.q)
    q = quat_exp(w * (0.5 * dt)) * x.q
    return Pose(p, q)
