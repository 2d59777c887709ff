"""Autonomy-level dynamics: teaching/execution blending and its schedules.

The autonomy factor rises while the system tracks well in motion and falls
when tracking degrades or when low-passed tank power shows that someone is
injecting energy (a grab). It drives the learning rate (high when compliant,
zero when autonomous) and the stiffness/weight schedules of the controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import PoseError, Twist


@dataclass(frozen=True, slots=True)
class AutonomyConfig:
    rate_min: float = 0.1          # autonomous-rate floor
    rate_gain: float = 0.25        # extra rate proportional to the current level
    nu_tracking: float = 450.0     # weight of the tracking-error penalty
    nu_power: float = 15.0         # weight of the injected-power penalty
    power_threshold: float = 0.8   # [W] filtered inflow above this demotes
    tau_power: float = 0.5         # [s] tank-power low-pass time constant
    error_metric: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, 0.2, 0.1, 0.1, 0.1])
    )
    velocity_metric: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, 1.0, 0.1, 0.1, 0.1])
    )
    # steep enough that the zero-speed leak stays under 1e-3 of the rate
    gate_steepness: float = 800.0
    gate_threshold: float = 0.01   # [(m/s)^2] weighted squared speed


@dataclass(frozen=True, slots=True)
class AutonomyState:
    gamma: float = 0.0
    xi: float = 0.0                # filtered tank power [W]
    zeta: float = 1.0              # learning rate (1 - gamma)^2


def learning_rate(gamma: float) -> float:
    if not (0.0 <= gamma <= 1.0):
        raise ValueError("gamma must lie in [0, 1]")
    return (1.0 - gamma) ** 2


def power_filter_step(xi: float, t_dot: float, tau: float, dt: float) -> float:
    """First-order low pass of the tank power signal."""
    if tau <= 0 or dt <= 0:
        raise ValueError("tau and dt must be positive")
    return xi + (dt / tau) * (t_dot - xi)


def velocity_gate(twist: Twist, cfg: AutonomyConfig) -> float:
    """Sigmoid on the weighted squared pose rate; ~0 at standstill."""
    v = twist.as_array()
    speed_sq = float(v @ (cfg.velocity_metric * v))
    return 1.0 / (1.0 + math.exp(-cfg.gate_steepness * (speed_sq - cfg.gate_threshold)))


def autonomy_rate(state: AutonomyState, err: PoseError, twist: Twist, cfg: AutonomyConfig) -> float:
    e = err.as_array()
    tracking = float(e @ (cfg.error_metric * e))
    injected = max(0.0, state.xi - cfg.power_threshold)
    bracket = 1.0 - cfg.nu_tracking * tracking - cfg.nu_power * injected
    return velocity_gate(twist, cfg) * (cfg.rate_min + cfg.rate_gain * state.gamma) * bracket


def autonomy_step(
    state: AutonomyState, err: PoseError, twist: Twist, cfg: AutonomyConfig, dt: float
) -> AutonomyState:
    """Integrate the autonomy level with saturation at both boundaries."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = autonomy_rate(state, err, twist, cfg)
    if state.gamma <= 0.0:
        rate = max(rate, 0.0)
    elif state.gamma >= 1.0:
        rate = min(rate, 0.0)
    gamma = min(max(state.gamma + rate * dt, 0.0), 1.0)
    return replace(state, gamma=gamma, zeta=learning_rate(gamma))


def stiffness_schedule(
    gamma: float,
    k_min: np.ndarray,
    k_autonomous: np.ndarray,
    r_min: np.ndarray,
    r_autonomous: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic blend from fully compliant to autonomous gains."""
    g2 = gamma * gamma
    k_des = k_min + g2 * (k_autonomous - k_min)
    r = r_min + g2 * (r_autonomous - r_min)
    return k_des, r
