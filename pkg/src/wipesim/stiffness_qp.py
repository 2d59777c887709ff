"""Per-cycle stiffness-modulation quadratic program.

Decision variable: the six diagonal stiffness entries k. The cost trades a
wrench task ``(k_i e_i + d_i de_i - h_des_i)^2`` against a stiffness task
``(k_i - k_des_i)^2``. Constraints: per-axis stiffness box, per-axis wrench
interval (which is an interval in k because the error enters linearly), one
tank non-depletion row, and two power-rate rows (translation / rotation).

All three coupling rows act on the quantities

    F_P = sum_{i<3} (k_i - k_min_i) e_i de_i     (translational tank inflow)
    F_O = sum_{i>=3} (k_i - k_min_i) e_i de_i    (rotational tank inflow)

so at the optimum each block sees one scalar Lagrange pressure. Each candidate
active set therefore reduces to one or two monotone piecewise-linear root
finds, which this module solves exactly (no iterative solver in the loop).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import PoseError, Twist

_AXIS_EPS = 1e-12  # below this |error| the wrench bound does not constrain k
_KKT_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class QpConfig:
    """Weights, bounds, and rates of the stiffness program."""

    q_weights: np.ndarray = field(
        default_factory=lambda: np.array([3200.0] * 3 + [32.0] * 3)
    )
    r_weights: np.ndarray = field(
        default_factory=lambda: np.array([10.0, 10.0, 1.0, 10.0, 10.0, 10.0])
    )
    k_min: np.ndarray = field(
        default_factory=lambda: np.array([1.0] * 3 + [0.001] * 3)
    )
    k_max: np.ndarray = field(
        default_factory=lambda: np.array([1000.0] * 3 + [100.0] * 3)
    )
    h_min: np.ndarray = field(
        default_factory=lambda: -np.array([40.0] * 3 + [10.0] * 3)
    )
    h_max: np.ndarray = field(
        default_factory=lambda: np.array([40.0] * 3 + [10.0] * 3)
    )
    rho_p: float = -1.1
    rho_q: float = -1.4
    dt: float = 0.01

    def __post_init__(self):
        if np.any(self.q_weights <= 0) or np.any(self.r_weights <= 0):
            raise ValueError("Q and R weights must be positive")
        if np.any(self.k_min > self.k_max) or np.any(self.h_min > self.h_max):
            raise ValueError("bounds must be ordered")
        if self.rho_p > 0 or self.rho_q > 0:
            raise ValueError("power rates must be <= 0")


@dataclass(frozen=True, slots=True)
class QpInstance:
    """One control cycle's snapshot fed to the stiffness program."""

    err: PoseError
    err_rate: Twist
    damping_prev: np.ndarray
    sigma: int
    tank_energy_prev: float
    tank_floor: float
    h_des: np.ndarray
    k_des: np.ndarray
    cfg: QpConfig


@dataclass(frozen=True, slots=True)
class AssembledQp:
    """Canonical per-axis form of the program (6 interval-bounded variables)."""

    a: np.ndarray          # pose error
    v: np.ndarray          # pose error rate
    b: np.ndarray          # d_prev * v - h_des
    q: np.ndarray
    r: np.ndarray
    k_des: np.ndarray
    k_min: np.ndarray
    lo: np.ndarray         # per-axis bounds after wrench-interval intersection
    hi: np.ndarray
    row_w: np.ndarray      # coupling weights a * v
    rhs_tank: float
    rhs_pow_p: float
    rhs_pow_q: float
    dropped_axes: tuple[int, ...]   # axes whose wrench interval was empty


@dataclass(frozen=True, slots=True)
class QpSolution:
    stiffness: np.ndarray
    predicted_wrench: np.ndarray
    active_constraints: tuple[str, ...]
    objective: float
    fallback: bool
    dropped_axes: tuple[int, ...] = ()


def damping_from_stiffness(
    stiffness: np.ndarray, inertia: np.ndarray, zeta: float = 1.0
) -> np.ndarray:
    """Damping ratio rule D = 2 zeta sqrt(Lambda K)."""
    return 2.0 * zeta * np.sqrt(np.asarray(inertia) * np.asarray(stiffness))


def assemble_qp(inst: QpInstance) -> AssembledQp:
    """Reduce the instance to the canonical per-axis interval + 3-row form."""
    cfg = inst.cfg
    a = inst.err.as_array()
    v = inst.err_rate.as_array()
    dv = inst.damping_prev * v
    b = dv - inst.h_des
    w = a * v

    lo = cfg.k_min.copy()
    hi = cfg.k_max.copy()
    dropped = []
    for i in range(6):
        ai = a[i]
        if abs(ai) > _AXIS_EPS:
            c1 = (cfg.h_min[i] - dv[i]) / ai
            c2 = (cfg.h_max[i] - dv[i]) / ai
            wlo, whi = (c1, c2) if c1 <= c2 else (c2, c1)
            nlo = max(lo[i], wlo)
            nhi = min(hi[i], whi)
            if nlo > nhi:
                # The damping term alone violates the wrench bound: no k can
                # satisfy it, so the bound is dropped for this cycle and the
                # plant-side saturation enforces the physical limit.
                dropped.append(i)
            else:
                lo[i], hi[i] = nlo, nhi
        elif not (cfg.h_min[i] - 1e-9 <= dv[i] <= cfg.h_max[i] + 1e-9):
            dropped.append(i)

    diss_p = inst.sigma * float(v[:3] @ (inst.damping_prev[:3] * v[:3]))
    diss_o = inst.sigma * float(v[3:] @ (inst.damping_prev[3:] * v[3:]))
    headroom = max(inst.tank_energy_prev - inst.tank_floor, 0.0) / cfg.dt
    return AssembledQp(
        a=a,
        v=v,
        b=b,
        q=cfg.q_weights,
        r=cfg.r_weights,
        k_des=inst.k_des,
        k_min=cfg.k_min,
        lo=lo,
        hi=hi,
        row_w=w,
        rhs_tank=-(diss_p + diss_o) - headroom,
        rhs_pow_p=cfg.rho_p - diss_p,
        rhs_pow_q=cfg.rho_q - diss_o,
        dropped_axes=tuple(dropped),
    )


def qp_objective(asm: AssembledQp, k: np.ndarray) -> float:
    resid = k * asm.a + asm.b
    return float(asm.q @ resid**2 + asm.r @ (k - asm.k_des) ** 2)


def _axis_k(asm: AssembledQp, m_p: float, m_o: float) -> np.ndarray:
    """Per-axis minimizer of the Lagrangian under block pressures (m_p, m_o)."""
    s = asm.q * asm.a**2 + asm.r
    m = np.array([m_p] * 3 + [m_o] * 3)
    raw = (asm.r * asm.k_des - asm.q * asm.a * asm.b + 0.5 * m * asm.row_w) / s
    return np.clip(raw, asm.lo, asm.hi)


def _block_inflow(asm: AssembledQp, k: np.ndarray, block: slice) -> float:
    return float(asm.row_w[block] @ (k[block] - asm.k_min[block]))


def _solve_block(asm: AssembledQp, block: slice, target: float, tol: float):
    """Smallest multiplier m >= 0 with F_block(m) = target, or None.

    F is non-decreasing and piecewise linear in m, so the exact root is found
    by scanning the clip breakpoints.
    """
    s = asm.q * asm.a**2 + asm.r
    p0 = (asm.r * asm.k_des - asm.q * asm.a * asm.b) / s
    g = asm.row_w / (2.0 * s)
    idx = range(block.start, block.stop)

    def f_at(m: float) -> float:
        total = 0.0
        for i in idx:
            ki = min(max(p0[i] + g[i] * m, asm.lo[i]), asm.hi[i])
            total += asm.row_w[i] * (ki - asm.k_min[i])
        return total

    f0 = f_at(0.0)
    if f0 >= target - tol:
        return (0.0, f0) if f0 <= target + tol else None  # already above: row not active
    points = [0.0]
    for i in idx:
        if g[i] == 0.0:
            continue
        for bound in (asm.lo[i], asm.hi[i]):
            m_cross = (bound - p0[i]) / g[i]
            if m_cross > 0.0 and np.isfinite(m_cross):
                points.append(m_cross)
    points = sorted(set(points))
    prev_m, prev_f = points[0], f0
    for m in points[1:]:
        fm = f_at(m)
        if fm >= target:
            if fm == prev_f:
                return (prev_m, prev_f)
            frac = (target - prev_f) / (fm - prev_f)
            m_star = prev_m + frac * (m - prev_m)
            return (m_star, f_at(m_star))
        prev_m, prev_f = m, fm
    return None  # constant beyond the last breakpoint and still below target


_P = slice(0, 3)
_O = slice(3, 6)


def _solve_joint_tank(asm: AssembledQp, target: float, tol: float):
    """Tank row alone: common pressure m on both blocks with F_P + F_O = target."""
    s = asm.q * asm.a**2 + asm.r
    p0 = (asm.r * asm.k_des - asm.q * asm.a * asm.b) / s
    g = asm.row_w / (2.0 * s)

    def f_at(m: float) -> float:
        k = np.clip(p0 + g * m, asm.lo, asm.hi)
        return float(asm.row_w @ (k - asm.k_min))

    f0 = f_at(0.0)
    if f0 >= target - tol:
        return (0.0, f0) if f0 <= target + tol else None
    points = [0.0]
    for i in range(6):
        if g[i] == 0.0:
            continue
        for bound in (asm.lo[i], asm.hi[i]):
            m_cross = (bound - p0[i]) / g[i]
            if m_cross > 0.0 and np.isfinite(m_cross):
                points.append(m_cross)
    prev_m, prev_f = 0.0, f0
    for m in sorted(set(points))[1:]:
        fm = f_at(m)
        if fm >= target:
            if fm == prev_f:
                return (prev_m, prev_f)
            frac = (target - prev_f) / (fm - prev_f)
            m_star = prev_m + frac * (m - prev_m)
            return (m_star, f_at(m_star))
        prev_m, prev_f = m, fm
    return None


def _row_scale(asm: AssembledQp, rhs: float) -> float:
    span = float(np.abs(asm.row_w) @ np.maximum(np.abs(asm.lo), np.abs(asm.hi)))
    return max(1.0, abs(rhs), span)


def solve_qp(inst: QpInstance) -> QpSolution:
    """Exact minimizer via active-set enumeration over the coupling rows.

    Falls back to minimum stiffness (which always satisfies the tank and power
    rows because it zeroes the extra input) if no candidate passes its KKT
    checks; this is recorded, never fatal.
    """
    asm = assemble_qp(inst)
    tol_t = _KKT_TOL * _row_scale(asm, asm.rhs_tank)
    tol_p = _KKT_TOL * _row_scale(asm, asm.rhs_pow_p)
    tol_q = _KKT_TOL * _row_scale(asm, asm.rhs_pow_q)

    def feasible(k: np.ndarray) -> bool:
        fp = _block_inflow(asm, k, _P)
        fo = _block_inflow(asm, k, _O)
        return (
            fp + fo >= asm.rhs_tank - tol_t
            and fp >= asm.rhs_pow_p - tol_p
            and fo >= asm.rhs_pow_q - tol_q
        )

    def finish(k: np.ndarray, active: tuple[str, ...]) -> QpSolution:
        return QpSolution(
            stiffness=k,
            predicted_wrench=k * asm.a + inst.damping_prev * asm.v,
            active_constraints=active,
            objective=qp_objective(asm, k),
            fallback=False,
            dropped_axes=asm.dropped_axes,
        )

    # 1. All coupling rows inactive.
    k = _axis_k(asm, 0.0, 0.0)
    if feasible(k):
        return finish(k, ())

    # 2. Single active row candidates.
    sol_p = _solve_block(asm, _P, asm.rhs_pow_p, tol_p)
    if sol_p is not None:
        k = _axis_k(asm, sol_p[0], 0.0)
        if feasible(k):
            return finish(k, ("power_p",))
    sol_q = _solve_block(asm, _O, asm.rhs_pow_q, tol_q)
    if sol_q is not None:
        k = _axis_k(asm, 0.0, sol_q[0])
        if feasible(k):
            return finish(k, ("power_q",))
    sol_t = _solve_joint_tank(asm, asm.rhs_tank, tol_t)
    if sol_t is not None:
        k = _axis_k(asm, sol_t[0], sol_t[0])
        if feasible(k):
            return finish(k, ("tank",))

    # 3. Two active rows. Power rows act on disjoint blocks; the tank row is
    # their sum, so every pair reduces to two independent block solves.
    if sol_p is not None and sol_q is not None:
        k = _axis_k(asm, sol_p[0], sol_q[0])
        if feasible(k):
            return finish(k, ("power_p", "power_q"))
    sol_o_rem = _solve_block(asm, _O, asm.rhs_tank - asm.rhs_pow_p, tol_t)
    if sol_p is not None and sol_o_rem is not None:
        # lambda_tank = m_o, lambda_p = m_p - m_o >= 0. On flat segments the
        # smallest root understates m_p, so lift it to m_o and re-verify the
        # power equality on the resulting k.
        m_p = max(sol_p[0], sol_o_rem[0])
        k = _axis_k(asm, m_p, sol_o_rem[0])
        if abs(_block_inflow(asm, k, _P) - asm.rhs_pow_p) <= tol_p and feasible(k):
            return finish(k, ("tank", "power_p"))
    sol_p_rem = _solve_block(asm, _P, asm.rhs_tank - asm.rhs_pow_q, tol_t)
    if sol_q is not None and sol_p_rem is not None:
        m_o = max(sol_q[0], sol_p_rem[0])
        k = _axis_k(asm, sol_p_rem[0], m_o)
        if abs(_block_inflow(asm, k, _O) - asm.rhs_pow_q) <= tol_q and feasible(k):
            return finish(k, ("tank", "power_q"))

    # 4. Documented fallback: minimum stiffness draws nothing from the tank.
    k = asm.k_min.copy()
    return QpSolution(
        stiffness=k,
        predicted_wrench=k * asm.a + inst.damping_prev * asm.v,
        active_constraints=("fallback",),
        objective=qp_objective(asm, k),
        fallback=True,
        dropped_axes=asm.dropped_axes,
    )


def coupling_residuals(asm: AssembledQp, k: np.ndarray) -> tuple[float, float, float]:
    """Signed slack of (tank, power_p, power_q); non-negative means satisfied."""
    fp = _block_inflow(asm, k, _P)
    fo = _block_inflow(asm, k, _O)
    return (fp + fo - asm.rhs_tank, fp - asm.rhs_pow_p, fo - asm.rhs_pow_q)
