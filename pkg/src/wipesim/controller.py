"""Per-tick orchestration of the full teaching/execution loop.

Tick order: sense, autonomy update, period estimation, primitive learning and
rollout, stiffness program, tank accounting, plant substeps. The tank and the
stiffness program share the same error, error rate, and previous-cycle
damping, which makes the discrete non-depletion guarantee exact.

The seven primitive channels share one phase and frequency, so their kernel
activations are computed once per tick and the per-kernel learning runs on a
stacked weight matrix (see periodic_dmp for the single-channel forms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .afo import AfoBankState, bank_step, selection_scores
from .autonomy import AutonomyState, autonomy_step, power_filter_step, stiffness_schedule
from .config import SimConfig
from .energy_tank import TankState, extra_input_active, storage_enabled, tank_step
from .geometry import Pose, Twist, UnitQuaternion, pose_error, quat_exp, quat_log
from .periodic_dmp import (
    KernelBank,
    desired_forcing_pos,
    desired_forcing_quat,
    forcing_batch,
    kernel_activations,
    rls_update_batch,
)
from .plant import (
    HandCoupling,
    ImpedanceParams,
    PlantState,
    SurfaceModel,
    contact_wrench,
    hand_wrench,
    run_substeps,
)
from .stiffness_qp import QpInstance, damping_from_stiffness, solve_qp

TWO_PI = 2.0 * math.pi

TRACE_SCHEMA_VERSION = 1


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One control tick's worth of observable signals."""

    time: float
    pose: np.ndarray            # p(3) + q(4)
    desired: np.ndarray         # p(3) + q(4)
    err: np.ndarray             # 6
    twist: np.ndarray           # 6
    wrench_control: np.ndarray  # 6, clamped command
    wrench_contact: np.ndarray  # 6
    wrench_hand: np.ndarray     # 6
    stiffness: np.ndarray       # 6, applied diagonal
    tank_energy: float
    tank_power: float
    gamma: float
    zeta: float
    xi: float
    afo_omega: np.ndarray       # 7
    period: float
    phase: float
    inflow_p: float
    inflow_q: float
    qp_fallback: bool
    qp_active: str
    qp_dropped: str
    hand_attached: bool
    contact_fz: float


@dataclass
class RunSummary:
    """Aggregates kept while running without trace retention."""

    ticks: int = 0
    min_tank: float = math.inf
    min_inflow_p: float = math.inf
    min_inflow_q: float = math.inf
    fallback_count: int = 0
    max_gamma: float = 0.0

    def update(self, rec: TraceRecord) -> None:
        self.ticks += 1
        self.min_tank = min(self.min_tank, rec.tank_energy)
        self.min_inflow_p = min(self.min_inflow_p, rec.inflow_p)
        self.min_inflow_q = min(self.min_inflow_q, rec.inflow_q)
        self.fallback_count += int(rec.qp_fallback)
        self.max_gamma = max(self.max_gamma, rec.gamma)


@dataclass
class World:
    """Mutable simulation state owned by one control loop."""

    cfg: SimConfig
    plant: PlantState
    tank: TankState
    autonomy: AutonomyState
    afo: AfoBankState
    # primitive state: three scalar channels plus one quaternion channel,
    # their stacked kernel weights/covariances, and the shared phase
    pos_y: np.ndarray
    pos_z: np.ndarray
    pos_goal: np.ndarray
    quat_q: UnitQuaternion
    quat_eta: np.ndarray
    quat_goal: UnitQuaternion
    kernel_centers: np.ndarray
    kernel_widths: np.ndarray
    kernel_weights: np.ndarray   # (6, N): x, y, z, then quaternion channels
    kernel_covs: np.ndarray      # (6, N)
    desired: Pose
    desired_twist: Twist
    damping: np.ndarray
    stiffness: np.ndarray
    surface: SurfaceModel
    hand: HandCoupling
    phase: float
    omega: float
    slave_channel: int = 0
    challenger_dwell: float = 0.0
    tick: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def channel_banks(self) -> list[KernelBank]:
        """Materialize per-channel kernel banks (persistence, inspection)."""
        return [
            KernelBank(
                centers=self.kernel_centers.copy(),
                widths=self.kernel_widths.copy(),
                weights=self.kernel_weights[i].copy(),
                covariances=self.kernel_covs[i].copy(),
            )
            for i in range(6)
        ]


def pose_channels(pose: Pose) -> np.ndarray:
    q = pose.q
    return np.array([pose.p[0], pose.p[1], pose.p[2], q.w, q.x, q.y, q.z])


def create_world(
    cfg: SimConfig,
    start_pose: Pose,
    surface: SurfaceModel,
    hand: HandCoupling,
    seed: int = 0,
) -> World:
    """Initialize all subsystem states; primitive goals sit at the start pose."""
    ctl = cfg.controller
    proto = KernelBank.create(cfg.dmp.n_kernels)
    k_min = cfg.qp.k_min
    damping = damping_from_stiffness(k_min, ctl.inertia, ctl.damping_ratio)
    return World(
        cfg=cfg,
        plant=PlantState(pose=start_pose),
        tank=TankState.from_config(cfg.tank),
        autonomy=AutonomyState(),
        afo=AfoBankState.create(pose_channels(start_pose), cfg.dmp.omega_init),
        pos_y=start_pose.p.astype(float).copy(),
        pos_z=np.zeros(3),
        pos_goal=start_pose.p.astype(float).copy(),
        quat_q=start_pose.q,
        quat_eta=np.zeros(3),
        quat_goal=start_pose.q,
        kernel_centers=proto.centers,
        kernel_widths=proto.widths,
        kernel_weights=np.zeros((6, cfg.dmp.n_kernels)),
        kernel_covs=np.ones((6, cfg.dmp.n_kernels)),
        desired=start_pose,
        desired_twist=Twist(),
        damping=damping,
        stiffness=k_min.copy(),
        surface=surface,
        hand=hand,
        phase=0.0,
        omega=cfg.dmp.omega_init,
        rng=np.random.default_rng(seed),
    )


def control_tick(world: World) -> TraceRecord:
    """Advance one control period and return the trace record."""
    cfg = world.cfg
    ctl = cfg.controller
    dmp = cfg.dmp
    dt = ctl.dt_control
    plant = world.plant
    t = plant.time
    pose, twist = plant.pose, plant.twist

    # 1. sensor view of the external wrenches
    w_contact = contact_wrench(plant, world.surface)
    w_hand = hand_wrench(plant, world.hand, t)
    attached = bool(world.hand.grasped_fn(t))

    # 2. autonomy level from last tick's tracking and the filtered tank power
    xi = power_filter_step(world.autonomy.xi, world.tank.t_dot, cfg.autonomy.tau_power, dt)
    err_prev = pose_error(world.desired, pose)
    auto = autonomy_step(
        replace(world.autonomy, xi=xi), err_prev, twist, cfg.autonomy, dt
    )
    zeta = auto.zeta

    # 3. period estimation on the seven pose channels
    zeta_afo = zeta if zeta >= cfg.afo.zeta_gate else 0.0
    afo = bank_step(
        world.afo,
        pose_channels(pose),
        zeta_afo,
        dt,
        cfg.afo,
        cfg.salience,
        cfg.quat_variance_threshold,
    )
    if zeta > dmp.slave_threshold:
        # Teaching: keep kernels aligned with one oscillator's phase. The raw
        # argmax winner can flip between channels of near-equal score (x and y
        # of a circle differ by a quarter turn), so the slave channel only
        # changes after a decisive margin persists; and instead of copying the
        # jittery oscillator phase outright, the primitive phase is pulled
        # toward it proportionally, which keeps the learned waveform clean.
        scores = selection_scores(afo, cfg.salience, cfg.quat_variance_threshold)
        incumbent = world.slave_channel
        challenger = int(np.argmax(scores))
        if challenger != incumbent and scores[challenger] > 1.1 * scores[incumbent]:
            world.challenger_dwell += dt
            if world.challenger_dwell >= 1.0:
                incumbent = challenger
                world.phase = float(afo.phase[incumbent])  # jump on channel change
                world.challenger_dwell = 0.0
        else:
            world.challenger_dwell = 0.0
        world.slave_channel = incumbent
        omega = float(afo.omega_bar[incumbent])
        gap = (float(afo.phase[incumbent]) - world.phase + math.pi) % TWO_PI - math.pi
        phase = (world.phase + dmp.slave_gain * gap * dt) % TWO_PI
    else:
        world.slave_channel = afo.selected_channel
        phase = world.phase
        omega = TWO_PI / afo.selected_period

    # 4. incremental learning on the stacked kernels, then primitive rollout
    accel = plant.accel
    targets = np.empty(6)
    for i in range(3):
        targets[i] = desired_forcing_pos(
            float(pose.p[i]),
            float(twist.v[i]),
            float(accel[i]),
            float(world.pos_goal[i]),
            omega,
            dmp.alpha,
            dmp.beta,
        )
    targets[3:] = desired_forcing_quat(
        pose.q, twist.w, accel[3:], world.quat_goal, omega, dmp.alpha, dmp.beta
    )
    psi = kernel_activations(world.kernel_centers, world.kernel_widths, phase)
    world.kernel_weights, world.kernel_covs = rls_update_batch(
        world.kernel_weights, world.kernel_covs, psi, targets, zeta, dmp.forgetting
    )
    f_all = forcing_batch(world.kernel_weights, psi)

    z_dot = omega * (
        dmp.alpha * (dmp.beta * (world.pos_goal - world.pos_y) - world.pos_z) + f_all[:3]
    )
    world.pos_z = world.pos_z + z_dot * dt
    world.pos_y = world.pos_y + omega * world.pos_z * dt
    goal_err = 2.0 * quat_log(world.quat_goal * world.quat_q.conjugate())
    eta_dot = omega * (dmp.alpha * (dmp.beta * goal_err - world.quat_eta) + f_all[3:])
    world.quat_eta = world.quat_eta + eta_dot * dt
    rot_rate = omega * world.quat_eta
    world.quat_q = quat_exp(rot_rate * (0.5 * dt)) * world.quat_q
    phase = (phase + omega * dt) % TWO_PI

    desired = Pose(world.pos_y.copy(), world.quat_q)
    desired_twist = Twist(omega * world.pos_z, rot_rate)

    # 5. tracking error for control, tank, and program
    err = pose_error(desired, pose)
    err_rate = Twist(desired_twist.v - twist.v, desired_twist.w - twist.w)

    # 6. autonomy-scheduled targets
    k_des, r_weights = stiffness_schedule(
        auto.gamma, cfg.qp.k_min, ctl.k_autonomous, ctl.r_min, ctl.r_autonomous
    )

    # 7. stiffness program with the previous cycle's damping
    sigma = 1 if storage_enabled(world.tank, cfg.tank) else 0
    qp_cfg = replace(cfg.qp, r_weights=r_weights, dt=dt)
    sol = solve_qp(
        QpInstance(
            err=err,
            err_rate=err_rate,
            damping_prev=world.damping,
            sigma=sigma,
            tank_energy_prev=world.tank.energy,
            tank_floor=cfg.tank.t_min,
            h_des=ctl.h_des,
            k_des=k_des,
            cfg=qp_cfg,
        )
    )

    # 8. tank accounting shares the program's inputs exactly
    extra_on = extra_input_active(world.tank, cfg.tank)
    k_delta = sol.stiffness - cfg.qp.k_min
    tank = tank_step(world.tank, err, err_rate, world.damping, k_delta, dt, cfg.tank)

    e6 = err.as_array()
    de6 = err_rate.as_array()
    applied_delta = k_delta if extra_on else np.zeros(6)
    inflow_p = sigma * float(de6[:3] @ (world.damping[:3] * de6[:3])) + float(
        e6[:3] @ (applied_delta[:3] * de6[:3])
    )
    inflow_q = sigma * float(de6[3:] @ (world.damping[3:] * de6[3:])) + float(
        e6[3:] @ (applied_delta[3:] * de6[3:])
    )

    # 9. plant substeps under the newly applied impedance
    k_eff = sol.stiffness if extra_on else cfg.qp.k_min
    d_eff = damping_from_stiffness(k_eff, ctl.inertia, ctl.damping_ratio)
    params = ImpedanceParams(ctl.inertia, d_eff, k_eff)
    plant = run_substeps(
        plant,
        params,
        desired,
        desired_twist,
        world.surface,
        world.hand,
        ctl.substeps,
        dt / ctl.substeps,
        (cfg.qp.h_min, cfg.qp.h_max),
    )

    # clamped command actually sent to the plant at tick start
    cmd = np.clip(
        np.concatenate(
            [
                k_eff[:3] * e6[:3] + d_eff[:3] * de6[:3],
                k_eff[3:] * e6[3:] + d_eff[3:] * de6[3:],
            ]
        ),
        cfg.qp.h_min,
        cfg.qp.h_max,
    )

    contact_arr = w_contact.as_array()
    hand_arr = w_hand.as_array()
    if ctl.sensor_noise_std > 0:
        contact_arr = contact_arr + world.rng.normal(scale=ctl.sensor_noise_std, size=6)
        hand_arr = hand_arr + world.rng.normal(scale=ctl.sensor_noise_std, size=6)

    record = TraceRecord(
        time=t,
        pose=pose_channels(pose),
        desired=pose_channels(desired),
        err=e6,
        twist=twist.as_array(),
        wrench_control=cmd,
        wrench_contact=contact_arr,
        wrench_hand=hand_arr,
        stiffness=k_eff.copy(),
        tank_energy=tank.energy,
        tank_power=tank.t_dot,
        gamma=auto.gamma,
        zeta=zeta,
        xi=xi,
        afo_omega=afo.omega.copy(),
        period=afo.selected_period,
        phase=phase,
        inflow_p=inflow_p,
        inflow_q=inflow_q,
        qp_fallback=sol.fallback,
        qp_active="+".join(sol.active_constraints),
        qp_dropped="+".join(str(i) for i in sol.dropped_axes),
        hand_attached=attached,
        contact_fz=float(w_contact.f[2]),
    )

    world.plant = plant
    world.tank = tank
    world.autonomy = auto
    world.afo = afo
    world.desired = desired
    world.desired_twist = desired_twist
    world.damping = d_eff
    world.stiffness = k_eff
    world.phase = phase
    world.omega = omega
    world.tick += 1
    return record


def run_world(world: World, duration: float, events=(), collect: bool = True):
    """Run for ``duration`` seconds, applying surface events at their times.

    Returns the list of trace records, or a RunSummary when ``collect`` is
    false (used by long randomized property runs to avoid trace retention).
    """
    pending = sorted(events, key=lambda e: e.time)
    n_ticks = int(round(duration / world.cfg.controller.dt_control))
    records: list[TraceRecord] = []
    summary = RunSummary()
    for _ in range(n_ticks):
        while pending and pending[0].time <= world.plant.time + 1e-12:
            world.surface = pending.pop(0).apply(world.surface)
        rec = control_tick(world)
        if collect:
            records.append(rec)
        else:
            summary.update(rec)
    return records if collect else summary
