"""Periodic movement primitives with incremental per-kernel least-squares learning.

Three scalar primitives encode position, one quaternion primitive encodes
orientation; all share one phase and one frequency. The forcing term of each
channel is a normalized combination of von-Mises-like kernels whose weights
are learned online by a recursive least-squares rule with forgetting factor,
gated by the learning rate so that fully autonomous operation freezes them.

The frequency is ``2 pi / T`` for task period T: the kernels are 2 pi
periodic in the phase, so one task period must advance the phase by one
revolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Twist, UnitQuaternion, integrate_pose, Pose, quat_log

TWO_PI = 2.0 * math.pi


def default_kernel_width(n: int) -> float:
    """Width giving neighbour overlap suitable for smooth interpolation.

    2.5 N keeps the kernel-smoothing bias of the per-kernel update below the
    reproduction budget while adjacent kernels still overlap.
    """
    return 2.5 * n


@dataclass(frozen=True, slots=True)
class KernelBank:
    """Phase kernels with weights and per-kernel RLS covariances.

    Starts with zero weights and unit covariances, so an untrained bank
    produces a zero forcing term.
    """

    centers: np.ndarray
    widths: np.ndarray
    weights: np.ndarray
    covariances: np.ndarray

    @staticmethod
    def create(n: int = 25, width: float | None = None) -> "KernelBank":
        if n < 2:
            raise ValueError("need at least two kernels")
        h = default_kernel_width(n) if width is None else float(width)
        return KernelBank(
            centers=np.arange(n) * TWO_PI / n,
            widths=np.full(n, h),
            weights=np.zeros(n),
            covariances=np.ones(n),
        )

    @property
    def n(self) -> int:
        return len(self.centers)


@dataclass(frozen=True, slots=True)
class RlsUpdateInput:
    target: float          # desired forcing value at this phase
    phase: float
    learning_rate: float   # zeta in [0, 1]; 0 leaves weights untouched
    forgetting: float = 0.999

    def __post_init__(self):
        if not (0.0 < self.forgetting <= 1.0):
            raise ValueError("forgetting factor must be in (0, 1]")
        if not (0.0 <= self.learning_rate <= 1.0):
            raise ValueError("learning rate must be in [0, 1]")


@dataclass(frozen=True, slots=True)
class PosDmpState:
    """One scalar rhythmic primitive: output y, scaled velocity z."""

    y: float
    z: float
    goal: float
    alpha: float = 48.0
    beta: float = 12.0
    phase: float = 0.0
    omega: float = 2.0

    @property
    def velocity(self) -> float:
        return self.omega * self.z


@dataclass(frozen=True, slots=True)
class QuatDmpState:
    """Quaternion rhythmic primitive with three uncoupled forcing channels."""

    q: UnitQuaternion
    eta: np.ndarray
    goal: UnitQuaternion
    banks: tuple[KernelBank, KernelBank, KernelBank]
    alpha: float = 48.0
    beta: float = 12.0
    phase: float = 0.0
    omega: float = 2.0

    @property
    def rotation_rate(self) -> np.ndarray:
        return self.omega * self.eta


def kernel_eval(bank: KernelBank, phase: float) -> np.ndarray:
    """Kernel activations exp(h (cos(phase - c) - 1)), each in (0, 1]."""
    return np.exp(bank.widths * (np.cos(phase - bank.centers) - 1.0))


def forcing_term(bank: KernelBank, phase: float) -> float:
    """Normalized kernel-weighted forcing; bounded by [min w, max w]."""
    psi = kernel_eval(bank, phase)
    return float(psi @ bank.weights / np.sum(psi))


def desired_forcing_pos(
    y_d: float, yd_d: float, ydd_d: float, goal: float, omega: float, alpha: float = 48.0, beta: float = 12.0
) -> float:
    """Forcing value a demonstration sample implies for the scalar primitive."""
    return ydd_d / omega**2 - alpha * (beta * (goal - y_d) - yd_d / omega)


def desired_forcing_quat(
    q_d: UnitQuaternion,
    omega_d: np.ndarray,
    omegad_d: np.ndarray,
    goal: UnitQuaternion,
    omega: float,
    alpha: float = 48.0,
    beta: float = 12.0,
) -> np.ndarray:
    """Forcing vector a demonstrated orientation sample implies.

    The goal attractor uses the full rotation vector 2 Log(g * conj(q)),
    oriented so that rollouts converge onto the goal.
    """
    eta_d = omega_d / omega
    goal_err = 2.0 * quat_log(goal * q_d.conjugate())
    return omegad_d / omega**2 - alpha * (beta * goal_err - eta_d)


def rls_update(bank: KernelBank, inp: RlsUpdateInput) -> KernelBank:
    """Per-kernel recursive least squares with forgetting.

    Covariances shrink on every call; the weight move is scaled by the
    learning rate, so a zero rate leaves weights exactly unchanged while the
    covariances keep evolving.
    """
    psi = kernel_eval(bank, inp.phase)
    lam = inp.forgetting
    p = bank.covariances
    p_new = (p - p * p / (lam / psi + p)) / lam
    err = inp.target - bank.weights
    w_new = bank.weights + inp.learning_rate * psi * p_new * err
    return replace(bank, weights=w_new, covariances=p_new)


def dmp_step_pos(state: PosDmpState, bank: KernelBank, dt: float) -> PosDmpState:
    """Explicit-Euler step of the scalar primitive at the control rate."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f = forcing_term(bank, state.phase)
    z_dot = state.omega * (state.alpha * (state.beta * (state.goal - state.y) - state.z) + f)
    y_dot = state.omega * state.z
    return replace(
        state,
        y=state.y + y_dot * dt,
        z=state.z + z_dot * dt,
        phase=(state.phase + state.omega * dt) % TWO_PI,
    )


def dmp_step_quat(state: QuatDmpState, dt: float) -> QuatDmpState:
    """Explicit-Euler step of the quaternion primitive."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f = np.array([forcing_term(b, state.phase) for b in state.banks])
    goal_err = 2.0 * quat_log(state.goal * state.q.conjugate())
    eta_dot = state.omega * (state.alpha * (state.beta * goal_err - state.eta) + f)
    eta_new = state.eta + eta_dot * dt
    rotated = integrate_pose(
        Pose(np.zeros(3), state.q), Twist(w=state.omega * eta_new), dt
    )
    return replace(
        state,
        q=rotated.q,
        eta=eta_new,
        phase=(state.phase + state.omega * dt) % TWO_PI,
    )


def kernel_activations(centers: np.ndarray, widths: np.ndarray, phase: float) -> np.ndarray:
    """Shared-phase kernel activations for a stack of channels."""
    return np.exp(widths * (np.cos(phase - centers) - 1.0))


def forcing_batch(weights: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Normalized forcing for stacked channels: weights (C, N), psi (N,)."""
    return weights @ psi / float(np.sum(psi))


def rls_update_batch(
    weights: np.ndarray,
    covariances: np.ndarray,
    psi: np.ndarray,
    targets: np.ndarray,
    zeta: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked-channel form of rls_update; same per-kernel recursion."""
    p_new = (covariances - covariances * covariances / (lam / psi + covariances)) / lam
    w_new = weights + zeta * psi * p_new * (targets[:, None] - weights)
    return w_new, p_new
