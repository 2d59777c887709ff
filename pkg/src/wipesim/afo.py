"""Adaptive frequency oscillators estimating the demonstrated task period.

Seven oscillators track the seven pose channels (three positions, four
quaternion components). Each learns a first-order Fourier reconstruction
``alpha cos(phi) + beta sin(phi)`` of its de-meaned input and locks phase and
frequency onto the dominant periodicity. A variance-weighted selector picks
the shared task period, suppressing channels that only carry noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, slots=True)
class AfoConfig:
    coupling: float = 50.0        # drives phase/frequency convergence
    amp_gain: float = 1.0         # learning rate of the Fourier coefficients
    omega_min: float = 0.7
    omega_max: float = math.pi
    amp_cap: float = 0.3
    tau_mean: float = 2.0         # offset-removal time constant [s]
    # time constant of the averaged frequency reported to the selector; the
    # raw estimate correctly tracks within-cycle phase modulation, but period
    # consumers want the cycle mean
    tau_omega_avg: float = 2.0
    # below this learning rate adaptation is cut entirely, so locked period
    # estimates survive the teaching-to-autonomy handover transient
    zeta_gate: float = 0.3


@dataclass(frozen=True, slots=True)
class SalienceConfig:
    steepness: float = 5000.0
    variance_threshold: float = 1e-3
    tau_variance: float = 5.0


@dataclass(frozen=True, slots=True)
class AfoState:
    phase: float = 0.0
    omega: float = 2.0
    alpha: float = 0.0
    beta: float = 0.0
    mean: float = 0.0
    omega_bar: float = 0.0  # slow average of omega; 0 means "use omega"

    @property
    def omega_avg(self) -> float:
        return self.omega_bar if self.omega_bar > 0.0 else self.omega


@dataclass(frozen=True, slots=True)
class VarianceTracker:
    """Exponential moving variance of one input channel."""

    mean: float = 0.0
    var: float = 0.0

    def step(self, value: float, dt: float, tau: float) -> "VarianceTracker":
        g = dt / tau
        mean = self.mean + g * (value - self.mean)
        var = self.var + g * ((value - mean) ** 2 - self.var)
        return VarianceTracker(mean, var)


def afo_step(state: AfoState, value: float, zeta: float, dt: float, cfg: AfoConfig) -> AfoState:
    """One Euler step of the oscillator on input sample ``value``.

    With zeta = 0 only the phase advances; frequency, amplitude coefficients,
    and the offset tracker are frozen.
    """
    recon = state.alpha * math.cos(state.phase) + state.beta * math.sin(state.phase)
    err = (value - state.mean) - recon
    sin_p = math.sin(state.phase)
    cos_p = math.cos(state.phase)
    drive = zeta * cfg.coupling * err * sin_p
    phase = (state.phase + (state.omega - drive) * dt) % TWO_PI
    omega = state.omega - drive * dt
    alpha = state.alpha + zeta * cfg.amp_gain * err * cos_p * dt
    beta = state.beta + zeta * cfg.amp_gain * err * sin_p * dt
    mean = state.mean + zeta * (value - state.mean) * dt / cfg.tau_mean
    omega = min(max(omega, cfg.omega_min), cfg.omega_max)
    omega_bar = state.omega_avg
    if zeta > 0.0:
        omega_bar = omega_bar + (dt / cfg.tau_omega_avg) * (omega - omega_bar)
    return AfoState(
        phase=phase,
        omega=omega,
        alpha=min(max(alpha, -cfg.amp_cap), cfg.amp_cap),
        beta=min(max(beta, -cfg.amp_cap), cfg.amp_cap),
        mean=mean,
        omega_bar=omega_bar,
    )


def period_of(state: AfoState) -> float:
    if state.omega <= 0:
        raise ValueError("oscillator frequency must be positive")
    return TWO_PI / state.omega


def averaged_period(state: AfoState) -> float:
    """Task period from the cycle-averaged frequency estimate."""
    return TWO_PI / state.omega_avg


def salience(variance: float, cfg: SalienceConfig) -> float:
    """Logistic weight in (0, 1) suppressing low-variance channels."""
    return 1.0 / (1.0 + math.exp(-cfg.steepness * (variance - cfg.variance_threshold)))


# channel layout: p_x, p_y, p_z, q_w, q_x, q_y, q_z
N_CHANNELS = 7


@dataclass(frozen=True, slots=True)
class AfoBankState:
    """Seven oscillators plus per-channel variance and the selected period.

    Stored as arrays over the channels; ``channels`` materializes the
    per-channel states for inspection.
    """

    phase: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    omega_bar: np.ndarray
    var_mean: np.ndarray
    var: np.ndarray
    selected_period: float
    selected_channel: int = 0

    @property
    def channels(self) -> tuple[AfoState, ...]:
        return tuple(
            AfoState(
                phase=float(self.phase[i]),
                omega=float(self.omega[i]),
                alpha=float(self.alpha[i]),
                beta=float(self.beta[i]),
                mean=float(self.mean[i]),
                omega_bar=float(self.omega_bar[i]),
            )
            for i in range(N_CHANNELS)
        )

    @property
    def trackers(self) -> tuple[VarianceTracker, ...]:
        return tuple(
            VarianceTracker(float(self.var_mean[i]), float(self.var[i]))
            for i in range(N_CHANNELS)
        )

    @staticmethod
    def create(initial_values: np.ndarray, omega0: float = 2.0) -> "AfoBankState":
        if len(initial_values) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channel values")
        vals = np.asarray(initial_values, dtype=float)
        zeros = np.zeros(N_CHANNELS)
        return AfoBankState(
            phase=zeros.copy(),
            omega=np.full(N_CHANNELS, float(omega0)),
            alpha=zeros.copy(),
            beta=zeros.copy(),
            mean=vals.copy(),
            omega_bar=np.full(N_CHANNELS, float(omega0)),
            var_mean=vals.copy(),
            var=zeros.copy(),
            selected_period=TWO_PI / omega0,
            selected_channel=0,
        )


def salience_for_channel(idx: int, cfg: SalienceConfig, quat_threshold: float) -> SalienceConfig:
    if idx >= 3:
        return replace(cfg, variance_threshold=quat_threshold)
    return cfg


def _thresholds(cfg: SalienceConfig, quat_threshold: float) -> np.ndarray:
    return np.array([cfg.variance_threshold] * 3 + [quat_threshold] * 4)


def selection_scores(
    bank: AfoBankState, cfg: SalienceConfig, quat_threshold: float = 2.5e-3
) -> np.ndarray:
    """Per-channel selection scores: period scaled by normalized salience."""
    thr = _thresholds(cfg, quat_threshold)
    weights = 1.0 / (1.0 + np.exp(-cfg.steepness * (bank.var - thr)))
    periods = TWO_PI / np.where(bank.omega_bar > 0, bank.omega_bar, bank.omega)
    return periods * weights / weights.max()


def select_period(
    bank: AfoBankState, cfg: SalienceConfig, quat_threshold: float = 2.5e-3
) -> tuple[float, int]:
    """Variance-weighted argmax over channel periods.

    The salience scaling only ranks candidates; the returned period is the
    winning channel's raw estimate. Ties go to the lowest channel index.
    """
    scores = selection_scores(bank, cfg, quat_threshold)
    best_idx = int(np.argmax(scores))
    omega_sel = bank.omega_bar[best_idx] if bank.omega_bar[best_idx] > 0 else bank.omega[best_idx]
    return TWO_PI / float(omega_sel), best_idx


def bank_step(
    bank: AfoBankState,
    values: np.ndarray,
    zeta: float,
    dt: float,
    cfg: AfoConfig,
    sal_cfg: SalienceConfig,
    quat_threshold: float = 2.5e-3,
) -> AfoBankState:
    """Advance all channels on the current pose sample and reselect the period.

    Vectorized over the seven channels; per-channel math matches afo_step.
    """
    recon = bank.alpha * np.cos(bank.phase) + bank.beta * np.sin(bank.phase)
    err = (values - bank.mean) - recon
    sin_p = np.sin(bank.phase)
    cos_p = np.cos(bank.phase)
    drive = zeta * cfg.coupling * err * sin_p
    phase = (bank.phase + (bank.omega - drive) * dt) % TWO_PI
    omega = np.clip(bank.omega - drive * dt, cfg.omega_min, cfg.omega_max)
    alpha = np.clip(bank.alpha + zeta * cfg.amp_gain * err * cos_p * dt, -cfg.amp_cap, cfg.amp_cap)
    beta = np.clip(bank.beta + zeta * cfg.amp_gain * err * sin_p * dt, -cfg.amp_cap, cfg.amp_cap)
    mean = bank.mean + zeta * (values - bank.mean) * dt / cfg.tau_mean
    omega_bar = bank.omega_bar
    if zeta > 0.0:
        omega_bar = omega_bar + (dt / cfg.tau_omega_avg) * (omega - omega_bar)
    g = dt / sal_cfg.tau_variance
    var_mean = bank.var_mean + g * (values - bank.var_mean)
    var = bank.var + g * ((values - var_mean) ** 2 - bank.var)
    new_bank = AfoBankState(
        phase=phase,
        omega=omega,
        alpha=alpha,
        beta=beta,
        mean=mean,
        omega_bar=omega_bar,
        var_mean=var_mean,
        var=var,
        selected_period=bank.selected_period,
        selected_channel=bank.selected_channel,
    )
    period, idx = select_period(new_bank, sal_cfg, quat_threshold)
    return replace(new_bank, selected_period=period, selected_channel=idx)
