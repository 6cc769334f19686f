"""DAC and ADC models: symmetric signed mid-tread quantizers.

Both converters use L = 2**(bits-1) - 1 levels per side so zero is exactly
representable and dac(-x) == -dac(x). The ADC clamps silently but counts
saturated conversions in an optional per-run tally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero (odd-symmetric)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ConverterSpec:
    """Resolution and physical full scale of one converter.

    full_scale is in volts for a DAC and amperes for an ADC. Only the
    symmetric-signed mode exists.
    """

    bits: int = 8
    full_scale: float = 0.6

    def __post_init__(self) -> None:
        if self.bits < 2:
            raise ValueError("bits must be >= 2")
        if self.full_scale <= 0.0:
            raise ValueError("full_scale must be > 0")

    @property
    def max_level(self) -> int:
        return 2 ** (self.bits - 1) - 1


class SaturationCounter:
    """Aggregated per-run tally of clipped ADC conversions (merge by sum)."""

    def __init__(self) -> None:
        self.saturated = 0
        self.conversions = 0

    def merge(self, other: "SaturationCounter") -> None:
        self.saturated += other.saturated
        self.conversions += other.conversions

    @property
    def ratio(self) -> float:
        return self.saturated / self.conversions if self.conversions else 0.0


def dac(x_norm, spec: ConverterSpec):
    """Normalized input in [-1, 1] -> quantized output voltage.

    Out-of-range inputs are clamped; that is part of the contract, not an
    error (the activation scale maps the largest observed value to 1.0).
    """
    levels = spec.max_level
    x = np.clip(x_norm, -1.0, 1.0)
    return round_half_away(x * levels) / levels * spec.full_scale


def adc(i, spec: ConverterSpec, counter: SaturationCounter | None = None):
    """Current -> integer code in [-L, L], silently saturating."""
    levels = spec.max_level
    raw = round_half_away(np.asarray(i) / spec.full_scale * levels)
    code = np.clip(raw, -levels, levels)
    if counter is not None:
        counter.conversions += int(np.size(code))
        counter.saturated += int(np.sum(np.abs(raw) > levels))
    return code


def adc_decode(code, spec: ConverterSpec):
    """Integer code -> reconstructed current on the ADC grid."""
    return code / spec.max_level * spec.full_scale
