"""Virtual end-effector under impedance control, plus the surface and hand models.

The plant replaces the physical robot, table, and teacher: a rigid body with
virtual inertia driven by the control wrench ``K e + D de`` and by external
wrenches from a penalty-contact surface and a spring-damper "hand" coupling.

Frame conventions: world z points up; the work surface lies below the tool at
``z = height_fn(x, y)``, so its outward normal is +z and pressing on it means
commanding a force in -z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Pose, Twist, UnitQuaternion, Wrench, integrate_pose, pose_error, quat_log


class IntegrationFault(RuntimeError):
    """Raised when the plant is fed non-finite state or inputs."""


@dataclass(frozen=True, slots=True)
class PlantState:
    """Simulated rigid-body state; ``accel`` is the last computed acceleration."""

    pose: Pose = field(default_factory=Pose)
    twist: Twist = field(default_factory=Twist)
    time: float = 0.0
    accel: np.ndarray = field(default_factory=lambda: np.zeros(6))


@dataclass(frozen=True, slots=True)
class ImpedanceParams:
    """Diagonal inertia, damping, and stiffness of the rendered impedance."""

    inertia: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray

    def __post_init__(self):
        for name in ("inertia", "damping", "stiffness"):
            v = getattr(self, name)
            if np.any(np.asarray(v) < 0) or (name == "inertia" and np.any(v <= 0)):
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True, slots=True)
class SurfaceModel:
    """Penalty-contact surface: analytic height map plus contact parameters.

    Normal force pushes the tool out of the surface (+z) with a spring on the
    penetration depth and a damper acting only on approach, so separation never
    produces sticky tensile forces. A viscous term drags against in-plane slip.
    """

    height_fn: Callable[[float, float], float] = staticmethod(lambda x, y: 0.0)
    contact_stiffness: float = 1.0e4
    contact_damping: float = 50.0
    viscous_friction: float = 5.0

    def height(self, x: float, y: float) -> float:
        return self.height_fn(x, y)

    def raised(self, dz: float) -> "SurfaceModel":
        """Same surface shifted up by ``dz`` (used for perturbation events)."""
        base = self.height_fn
        return SurfaceModel(
            height_fn=lambda x, y: base(x, y) + dz,
            contact_stiffness=self.contact_stiffness,
            contact_damping=self.contact_damping,
            viscous_friction=self.viscous_friction,
        )


@dataclass(frozen=True, slots=True)
class HandCoupling:
    """Spring-damper coupling to a scripted (or live) teacher hand.

    ``target_fn(t)`` gives the hand pose and twist; the coupling is active only
    while ``grasped_fn(t)`` is true and produces zero wrench otherwise.
    ``gain_fn(t)`` scales the wrench so grips can engage and let go smoothly
    instead of slamming on and off.
    """

    target_fn: Callable[[float], tuple[Pose, Twist]]
    grasped_fn: Callable[[float], bool]
    stiffness: np.ndarray = field(default_factory=lambda: np.array([400.0] * 3 + [4.0] * 3))
    damping: np.ndarray = field(default_factory=lambda: np.array([40.0] * 3 + [1.8] * 3))
    gain_fn: Callable[[float], float] = staticmethod(lambda t: 1.0)

    @staticmethod
    def inactive() -> "HandCoupling":
        return HandCoupling(
            target_fn=lambda t: (Pose(), Twist()),
            grasped_fn=lambda t: False,
        )

    @staticmethod
    def windows(intervals: Sequence[tuple[float, float]]) -> Callable[[float], bool]:
        spans = [(float(a), float(b)) for a, b in intervals]
        return lambda t: any(a <= t < b for a, b in spans)


def contact_wrench(state: PlantState, surface: SurfaceModel) -> Wrench:
    """Environment reaction on the tool from penalty contact with the surface."""
    px, py, pz = state.pose.p
    d = surface.height(px, py) - pz
    if d <= 0.0:
        return Wrench()
    # d increases as the tool sinks, so the approach rate is -v_z.
    d_dot = -state.twist.v[2]
    fz = surface.contact_stiffness * d + surface.contact_damping * max(0.0, d_dot)
    f = np.array(
        [
            -surface.viscous_friction * state.twist.v[0],
            -surface.viscous_friction * state.twist.v[1],
            fz,
        ]
    )
    return Wrench(f, np.zeros(3))


def hand_wrench(state: PlantState, hand: HandCoupling, t: float) -> Wrench:
    """Teacher coupling wrench; zero outside grasp windows."""
    if not hand.grasped_fn(t):
        return Wrench()
    gain = hand.gain_fn(t)
    if gain <= 0.0:
        return Wrench()
    target, target_twist = hand.target_fn(t)
    err = pose_error(target, state.pose)
    # Full rotation vector for the orientation spring.
    rot_err = 2.0 * err.q
    dv = target_twist.v - state.twist.v
    dw = target_twist.w - state.twist.w
    kp, kr = hand.stiffness[:3], hand.stiffness[3:]
    dp, dr = hand.damping[:3], hand.damping[3:]
    return Wrench(
        gain * (kp * err.p + dp * dv), gain * (kr * rot_err + dr * dw)
    )


def plant_step(
    state: PlantState,
    params: ImpedanceParams,
    desired: Pose,
    desired_twist: Twist,
    h_ext: Wrench,
    dt: float,
    h_clamp: tuple[np.ndarray, np.ndarray] | None = None,
) -> PlantState:
    """Advance the virtual rigid body one substep (semi-implicit Euler).

    The control wrench is ``K e + D de`` on the pose error toward ``desired``;
    it is clamped per axis to ``h_clamp`` (the actuator limit) before being
    applied together with the external wrench.
    """
    if not (0.0 < dt <= 2e-3):
        raise ValueError(f"substep dt must be in (0, 2 ms], got {dt}")
    err = pose_error(desired, state.pose)
    ev = desired_twist.v - state.twist.v
    ew = desired_twist.w - state.twist.w

    k, d, lam = params.stiffness, params.damping, params.inertia
    h_c = np.concatenate(
        [
            k[:3] * err.p + d[:3] * ev,
            k[3:] * err.q + d[3:] * ew,
        ]
    )
    if h_clamp is not None:
        h_c = np.clip(h_c, h_clamp[0], h_clamp[1])

    total = h_c + h_ext.as_array()
    if not np.all(np.isfinite(total)):
        raise IntegrationFault(f"non-finite wrench at t={state.time}: {total}")

    acc = total / lam
    v = state.twist.v + acc[:3] * dt
    w = state.twist.w + acc[3:] * dt
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
        raise IntegrationFault(f"non-finite velocity at t={state.time}")
    new_twist = Twist(v, w)
    new_pose = integrate_pose(state.pose, new_twist, dt)
    return PlantState(new_pose, new_twist, state.time + dt, acc)


def control_wrench(
    params: ImpedanceParams, err_p: np.ndarray, err_q: np.ndarray, ev: np.ndarray, ew: np.ndarray
) -> np.ndarray:
    """Unclamped impedance wrench for tracing."""
    k, d = params.stiffness, params.damping
    return np.concatenate([k[:3] * err_p + d[:3] * ev, k[3:] * err_q + d[3:] * ew])


def run_substeps(
    state: PlantState,
    params: ImpedanceParams,
    desired: Pose,
    desired_twist: Twist,
    surface: SurfaceModel,
    hand: HandCoupling,
    n: int,
    dt: float,
    h_clamp: tuple[np.ndarray, np.ndarray],
) -> PlantState:
    """Advance ``n`` substeps with the impedance held fixed (control-tick body).

    Equivalent to chaining plant_step with per-substep contact and hand
    wrenches, written allocation-free for the inner loop. The hand target is
    evaluated once per tick and extrapolated linearly within it, which is
    exact for the scripted teachers up to their curvature over 10 ms.
    """
    if n < 1 or not (0.0 < dt <= 2e-3):
        raise ValueError("need n >= 1 substeps of dt in (0, 2 ms]")
    px, py, pz = (float(v) for v in state.pose.p)
    q = state.pose.q
    qw, qx, qy, qz = q.w, q.x, q.y, q.z
    vx, vy, vz = (float(v) for v in state.twist.v)
    wx, wy, wz = (float(v) for v in state.twist.w)
    t = state.time

    k1, k2, k3, k4, k5, k6 = (float(v) for v in params.stiffness)
    c1, c2, c3, c4, c5, c6 = (float(v) for v in params.damping)
    m1, m2, m3, m4, m5, m6 = (float(v) for v in params.inertia)
    lo1, lo2, lo3, lo4, lo5, lo6 = (float(v) for v in h_clamp[0])
    hi1, hi2, hi3, hi4, hi5, hi6 = (float(v) for v in h_clamp[1])

    dpx, dpy, dpz = (float(v) for v in desired.p)
    dq = desired.q
    dvx, dvy, dvz = (float(v) for v in desired_twist.v)
    dwx, dwy, dwz = (float(v) for v in desired_twist.w)

    ks, cs, mu = surface.contact_stiffness, surface.contact_damping, surface.viscous_friction
    height_fn = surface.height_fn

    grasped = bool(hand.grasped_fn(t))
    if grasped:
        gain = float(hand.gain_fn(t))
        target, target_twist = hand.target_fn(t)
        tx0, ty0, tz0 = (float(v) for v in target.p)
        tq = target.q
        tvx, tvy, tvz = (float(v) for v in target_twist.v)
        twx, twy, twz = (float(v) for v in target_twist.w)
        khx, khy, khz, khr1, khr2, khr3 = (float(v) for v in hand.stiffness)
        dhx, dhy, dhz, dhr1, dhr2, dhr3 = (float(v) for v in hand.damping)

    a1 = a2 = a3 = a4 = a5 = a6 = 0.0
    for i in range(n):
        # orientation error toward the desired pose: Log(q_des * conj(q))
        ew = dq.w * qw + dq.x * qx + dq.y * qy + dq.z * qz
        ex = -dq.w * qx + dq.x * qw - dq.y * qz + dq.z * qy
        ey = -dq.w * qy + dq.x * qz + dq.y * qw - dq.z * qx
        ez = -dq.w * qz - dq.x * qy + dq.y * qx + dq.z * qw
        if ew < 0.0:
            ew, ex, ey, ez = -ew, -ex, -ey, -ez
        vn = math.sqrt(ex * ex + ey * ey + ez * ez)
        if vn < 1e-12:
            r1 = r2 = r3 = 0.0
        else:
            s = math.atan2(vn, ew) / vn
            r1, r2, r3 = ex * s, ey * s, ez * s

        f1 = k1 * (dpx - px) + c1 * (dvx - vx)
        f2 = k2 * (dpy - py) + c2 * (dvy - vy)
        f3 = k3 * (dpz - pz) + c3 * (dvz - vz)
        f4 = k4 * r1 + c4 * (dwx - wx)
        f5 = k5 * r2 + c5 * (dwy - wy)
        f6 = k6 * r3 + c6 * (dwz - wz)
        # actuator saturation
        f1 = lo1 if f1 < lo1 else (hi1 if f1 > hi1 else f1)
        f2 = lo2 if f2 < lo2 else (hi2 if f2 > hi2 else f2)
        f3 = lo3 if f3 < lo3 else (hi3 if f3 > hi3 else f3)
        f4 = lo4 if f4 < lo4 else (hi4 if f4 > hi4 else f4)
        f5 = lo5 if f5 < lo5 else (hi5 if f5 > hi5 else f5)
        f6 = lo6 if f6 < lo6 else (hi6 if f6 > hi6 else f6)

        # penalty contact with the surface below
        pen = height_fn(px, py) - pz
        if pen > 0.0:
            approach = -vz
            fn_c = ks * pen + (cs * approach if approach > 0.0 else 0.0)
            f1 -= mu * vx
            f2 -= mu * vy
            f3 += fn_c

        if grasped:
            tau = i * dt
            hx = tx0 + tvx * tau
            hy = ty0 + tvy * tau
            hz = tz0 + tvz * tau
            f1 += gain * (khx * (hx - px) + dhx * (tvx - vx))
            f2 += gain * (khy * (hy - py) + dhy * (tvy - vy))
            f3 += gain * (khz * (hz - pz) + dhz * (tvz - vz))
            # orientation spring on the full rotation vector
            gw = tq.w * qw + tq.x * qx + tq.y * qy + tq.z * qz
            gx = -tq.w * qx + tq.x * qw - tq.y * qz + tq.z * qy
            gy = -tq.w * qy + tq.x * qz + tq.y * qw - tq.z * qx
            gz = -tq.w * qz - tq.x * qy + tq.y * qx + tq.z * qw
            if gw < 0.0:
                gw, gx, gy, gz = -gw, -gx, -gy, -gz
            gn = math.sqrt(gx * gx + gy * gy + gz * gz)
            if gn >= 1e-12:
                gs = 2.0 * math.atan2(gn, gw) / gn
                f4 += gain * (khr1 * gx * gs + dhr1 * (twx - wx))
                f5 += gain * (khr2 * gy * gs + dhr2 * (twy - wy))
                f6 += gain * (khr3 * gz * gs + dhr3 * (twz - wz))
            else:
                f4 += gain * dhr1 * (twx - wx)
                f5 += gain * dhr2 * (twy - wy)
                f6 += gain * dhr3 * (twz - wz)

        a1 = f1 / m1
        a2 = f2 / m2
        a3 = f3 / m3
        a4 = f4 / m4
        a5 = f5 / m5
        a6 = f6 / m6
        vx += a1 * dt
        vy += a2 * dt
        vz += a3 * dt
        wx += a4 * dt
        wy += a5 * dt
        wz += a6 * dt
        px += vx * dt
        py += vy * dt
        pz += vz * dt
        # quaternion advance: exp((w dt)/2) * q
        rx = wx * 0.5 * dt
        ry = wy * 0.5 * dt
        rz = wz * 0.5 * dt
        ang = math.sqrt(rx * rx + ry * ry + rz * rz)
        if ang >= 1e-12:
            sc = math.sin(ang) / ang
            bw, bx, by, bz = math.cos(ang), rx * sc, ry * sc, rz * sc
            qw, qx, qy, qz = (
                bw * qw - bx * qx - by * qy - bz * qz,
                bw * qx + bx * qw + by * qz - bz * qy,
                bw * qy - bx * qz + by * qw + bz * qx,
                bw * qz + bx * qy - by * qx + bz * qw,
            )
            norm = 1.0 / math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
            if qw < 0.0:
                norm = -norm
            qw *= norm
            qx *= norm
            qy *= norm
            qz *= norm
        t += dt

    if not (math.isfinite(px) and math.isfinite(py) and math.isfinite(pz)
            and math.isfinite(vx) and math.isfinite(vy) and math.isfinite(vz)
            and math.isfinite(wx) and math.isfinite(wy) and math.isfinite(wz)):
        raise IntegrationFault(f"non-finite state at t={t}")
    return PlantState(
        pose=Pose(np.array([px, py, pz]), UnitQuaternion(qw, qx, qy, qz)),
        twist=Twist(np.array([vx, vy, vz]), np.array([wx, wy, wz])),
        time=t,
        accel=np.array([a1, a2, a3, a4, a5, a6]),
    )
