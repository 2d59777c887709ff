"""Energy-tank bookkeeping that guarantees passivity of the variable stiffness.

The tank stores the energy dissipated by the controller's damping and pays for
the extra stiffness beyond the minimum. Integration is performed on the energy
T directly (dT = s ds) instead of on the state s, which avoids the 1/s
singularity and makes the discrete non-depletion guarantee of the stiffness
program exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PoseError, Twist

# Numeric slack on the tank floor check; discrete integration noise only.
FLOOR_EPS = 1.0e-6


class PassivityFault(RuntimeError):
    """Tank fell below its floor: indicates a constraint bug, not a recoverable state."""


@dataclass(frozen=True, slots=True)
class TankConfig:
    # storage cap well above the floor: a cap near typical operating levels
    # would gate sigma during a grab and blind the injected-power detector
    t_min: float = 0.1
    t_max: float = 20.0
    s_init: float = math.sqrt(2.0)

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if 0.5 * self.s_init**2 <= self.t_min:
            raise ValueError("initial energy must exceed t_min")


@dataclass(frozen=True, slots=True)
class TankState:
    """Tank state s [sqrt(J)], cached energy T [J], last power flow, storage switch."""

    s: float
    energy: float
    t_dot: float = 0.0
    sigma: int = 1

    @staticmethod
    def from_config(cfg: TankConfig) -> "TankState":
        return TankState(cfg.s_init, 0.5 * cfg.s_init**2)


def tank_energy(tank: TankState) -> float:
    return 0.5 * tank.s**2


def storage_enabled(tank: TankState, cfg: TankConfig) -> bool:
    """Storage switch rule: accumulate dissipation only below t_max."""
    return tank.energy < cfg.t_max


def extra_input_active(tank: TankState, cfg: TankConfig) -> bool:
    """The variable-stiffness extra input is enabled only above the floor."""
    return tank.energy > cfg.t_min


def tank_step(
    tank: TankState,
    err: PoseError,
    err_rate: Twist,
    damping: np.ndarray,
    k_delta: np.ndarray,
    dt: float,
    cfg: TankConfig,
) -> TankState:
    """Advance the tank one control period.

    Power flow: sigma * de' D de (dissipation stored) plus e' K_delta de (the
    flow that funds the stiffness above minimum, active only above the floor).
    ``damping`` must be the same diagonal the stiffness program was assembled
    with for the discrete guarantee to be exact.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    de = err_rate.as_array()
    sigma = 1 if storage_enabled(tank, cfg) else 0
    t_dot = sigma * float(de @ (damping * de))
    if extra_input_active(tank, cfg):
        e = err.as_array()
        t_dot += float(e @ (k_delta * de))
    t_new = tank.energy + t_dot * dt
    if t_new < cfg.t_min - FLOOR_EPS:
        raise PassivityFault(
            f"tank energy {t_new:.9f} J fell below floor {cfg.t_min} J"
        )
    return TankState(
        s=math.sqrt(max(2.0 * t_new, 0.0)),
        energy=t_new,
        t_dot=(t_new - tank.energy) / dt,
        sigma=sigma,
    )
