"""Aggregated simulation configuration with override support.

Every numeric default of the framework lives here (or in the module configs
this aggregates) and can be overridden from scenario files or the command
line through dotted paths, e.g. ``tank.t_max=4`` or ``controller.h_des=[0,0,-4,0,0,0]``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .afo import AfoConfig, SalienceConfig
from .autonomy import AutonomyConfig
from .energy_tank import TankConfig
from .stiffness_qp import QpConfig


@dataclass(frozen=True, slots=True)
class ControllerConfig:
    dt_control: float = 0.01
    substeps: int = 10
    # Impedance target wrench, world frame (z up): pressing on the surface
    # below means a negative z component.
    h_des: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -5.0, 0.0, 0.0, 0.0]))
    inertia: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0, 0.2, 0.2, 0.2]))
    damping_ratio: float = 1.0
    k_autonomous: np.ndarray = field(default_factory=lambda: np.array([600.0, 600, 600, 60, 60, 70]))
    r_min: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.1, 0.01, 0.01, 0.01]))
    r_autonomous: np.ndarray = field(default_factory=lambda: np.array([10.0, 10, 1.0, 10, 10, 10]))
    sensor_noise_std: float = 0.0

    def __post_init__(self):
        if self.dt_control <= 0 or self.substeps < 1:
            raise ValueError("dt_control must be positive and substeps >= 1")


@dataclass(frozen=True, slots=True)
class DmpConfig:
    n_kernels: int = 25
    alpha: float = 48.0
    beta: float = 12.0
    forgetting: float = 0.999
    # above this learning rate the primitive phase is slaved to the selected
    # oscillator so kernels stay aligned with the demonstration
    slave_threshold: float = 0.5
    # proportional pull [1/s] of the primitive phase toward the oscillator
    # phase while slaved; filters the oscillator's correction jitter
    slave_gain: float = 1.5
    omega_init: float = 2.0


@dataclass(frozen=True, slots=True)
class SimConfig:
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    qp: QpConfig = field(default_factory=QpConfig)
    tank: TankConfig = field(default_factory=TankConfig)
    autonomy: AutonomyConfig = field(default_factory=AutonomyConfig)
    afo: AfoConfig = field(default_factory=AfoConfig)
    salience: SalienceConfig = field(default_factory=SalienceConfig)
    quat_variance_threshold: float = 2.5e-3
    dmp: DmpConfig = field(default_factory=DmpConfig)


def _coerce(current, raw):
    """Parse an override value against the type of the current field value."""
    if isinstance(current, np.ndarray):
        if isinstance(raw, str):
            raw = [float(x) for x in raw.strip("[]() ").replace(",", " ").split()]
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 0:
            arr = np.full_like(current, float(arr))
        if arr.shape != current.shape:
            raise ValueError(f"expected {current.shape} values, got {arr.shape}")
        return arr
    if isinstance(current, bool):
        if isinstance(raw, str):
            return raw.lower() in ("1", "true", "yes", "on")
        return bool(raw)
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    raise ValueError(f"cannot override field of type {type(current).__name__}")


def apply_overrides(cfg: SimConfig, overrides: dict) -> SimConfig:
    """Return a new config with dotted-path overrides applied."""
    grouped: dict[str, dict] = {}
    updates: dict = {}
    for path, value in overrides.items():
        parts = path.split(".")
        if len(parts) == 1:
            if not hasattr(cfg, parts[0]) or dataclasses.is_dataclass(getattr(cfg, parts[0])):
                raise ValueError(f"unknown scalar config field {path!r}")
            updates[parts[0]] = _coerce(getattr(cfg, parts[0]), value)
        elif len(parts) == 2:
            grouped.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ValueError(f"override path must be 'section.field', got {path!r}")

    for section, fields in grouped.items():
        if not hasattr(cfg, section) or not dataclasses.is_dataclass(getattr(cfg, section)):
            raise ValueError(f"unknown config section {section!r}")
        sub = getattr(cfg, section)
        sub_updates = {}
        for name, value in fields.items():
            if not hasattr(sub, name):
                raise ValueError(f"unknown field {section}.{name}")
            sub_updates[name] = _coerce(getattr(sub, name), value)
        updates[section] = dataclasses.replace(sub, **sub_updates)
    return dataclasses.replace(cfg, **updates)
