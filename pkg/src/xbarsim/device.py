"""Stochastic single-cell memristor model: programming and noisy nonlinear readout.

Conductances are in siemens, voltages in volts, currents in amperes.
Programming draws a truncated-at-zero Gaussian around the target state mean;
readout is I = g * v * (1 + nonlin_alpha * v) * (1 + eps) with multiplicative
read noise eps. All randomness comes from an explicit numpy Generator, so a
fixed seed and call sequence reproduce results bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, asdict

import numpy as np


class TargetState(enum.Enum):
    """Programming target of a cell. HALF sits midway between LOW and HIGH."""

    LOW = "low"
    HIGH = "high"
    HALF = "half"


@dataclass(frozen=True)
class DeviceModelParams:
    """Statistical parameters of a memristor cell population.

    The defaults are the uncalibrated starting point; `xbarsim.harness.calibrate`
    tunes the relative spreads and the nonlinearity against the cell-benchmark
    targets. Means are chosen so the nominal paired conductance difference is
    208.1 uS.
    """

    g_low_mean: float = 42.0e-6
    g_low_rel_std: float = 0.25
    g_high_mean: float = 250.1e-6
    g_high_rel_std: float = 0.06
    g_half_rel_std: float = 0.18
    nonlin_alpha: float = 0.03
    read_noise_rel_std: float = 0.02
    v_read_max: float = 0.6

    def __post_init__(self) -> None:
        if not (self.g_high_mean > self.g_low_mean > 0.0):
            raise ValueError(
                f"need g_high_mean > g_low_mean > 0, got "
                f"{self.g_high_mean} / {self.g_low_mean}"
            )
        for name in ("g_low_rel_std", "g_high_rel_std", "g_half_rel_std",
                     "read_noise_rel_std"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.v_read_max <= 0.0:
            raise ValueError("v_read_max must be > 0")

    @property
    def g_half_mean(self) -> float:
        return 0.5 * (self.g_low_mean + self.g_high_mean)

    @property
    def g_delta(self) -> float:
        """Nominal paired conductance difference."""
        return self.g_high_mean - self.g_low_mean

    def state_stats(self, target: TargetState) -> tuple[float, float]:
        """(mean, std) of the programmed conductance for a target state."""
        if target is TargetState.LOW:
            return self.g_low_mean, self.g_low_mean * self.g_low_rel_std
        if target is TargetState.HIGH:
            return self.g_high_mean, self.g_high_mean * self.g_high_rel_std
        return self.g_half_mean, self.g_half_mean * self.g_half_rel_std

    def replace(self, **kwargs) -> "DeviceModelParams":
        d = asdict(self)
        d.update(kwargs)
        return DeviceModelParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceModelParams":
        return cls(**d)


@dataclass
class ProgrammedCell:
    """One realized cell. `target` is None after a random reset."""

    g_actual: float
    target: TargetState | None

    def __post_init__(self) -> None:
        if self.g_actual <= 0.0:
            raise ValueError("g_actual must be > 0")


def draw_conductances(params: DeviceModelParams, target: TargetState,
                      size, rng: np.random.Generator) -> np.ndarray:
    """Vectorized programming draw: truncated-at-zero Gaussian per cell.

    Negative draws are resampled until positive (unphysical conductance).
    """
    mean, std = params.state_stats(target)
    g = rng.normal(mean, std, size=size)
    bad = g <= 0.0
    while np.any(bad):
        g[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = g <= 0.0
    return g


def program_cell(params: DeviceModelParams, target: TargetState,
                 rng: np.random.Generator) -> ProgrammedCell:
    """Program one cell to a target state with cycle-to-cycle variability."""
    g = draw_conductances(params, target, size=(), rng=rng)
    return ProgrammedCell(g_actual=float(g), target=target)


def _check_voltage(params: DeviceModelParams, v) -> None:
    vmax = params.v_read_max
    if np.any(np.abs(v) > vmax * (1.0 + 1e-12)):
        raise ValueError(
            f"read voltage outside +-{vmax} V safe range (DAC misconfigured?)"
        )


def read_current(cell: ProgrammedCell, params: DeviceModelParams, v: float,
                 rng: np.random.Generator) -> float:
    """Single noisy read: g * v * (1 + alpha*v) * (1 + eps)."""
    _check_voltage(params, v)
    i = cell.g_actual * v * (1.0 + params.nonlin_alpha * v)
    if params.read_noise_rel_std > 0.0:
        i *= 1.0 + params.read_noise_rel_std * rng.standard_normal()
    return float(i)


def read_currents(g: np.ndarray, params: DeviceModelParams, v,
                  rng: np.random.Generator) -> np.ndarray:
    """Vectorized reads of a conductance array, fresh noise per element.

    `v` broadcasts against `g`.
    """
    _check_voltage(params, v)
    i = g * (v * (1.0 + params.nonlin_alpha * np.asarray(v)))
    if params.read_noise_rel_std > 0.0:
        i = i * (1.0 + params.read_noise_rel_std *
                 rng.standard_normal(size=np.shape(i)))
    return i


def reset_cell_random(cell: ProgrammedCell, params: DeviceModelParams,
                      num_pulses: int, rng: np.random.Generator) -> ProgrammedCell:
    """Scramble a cell with random voltage pulses.

    Each pulse redraws the conductance uniformly between the low and high state
    means; the last pulse wins, so the result is independent of prior history.
    """
    if num_pulses < 1:
        raise ValueError("num_pulses must be >= 1")
    g = rng.uniform(params.g_low_mean, params.g_high_mean, size=num_pulses)[-1]
    return ProgrammedCell(g_actual=float(g), target=None)


def reset_conductances(params: DeviceModelParams, num_pulses: int, size,
                       rng: np.random.Generator) -> np.ndarray:
    """Vectorized random reset of a whole cell population."""
    if num_pulses < 1:
        raise ValueError("num_pulses must be >= 1")
    g = None
    for _ in range(num_pulses):
        g = rng.uniform(params.g_low_mean, params.g_high_mean, size=size)
    return g
