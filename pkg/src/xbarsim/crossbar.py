"""Bounded crossbar tile of paired memristor cells performing analog VMM.

One logical weight position holds two physical cells (positive and negative
bitline); the tile output per column is the difference of the two column
current sums. Currents combine as ideal Kirchhoff nodes: no wire resistance,
sneak paths or IR drop.
"""

from __future__ import annotations

import numpy as np

from .device import DeviceModelParams, TargetState, draw_conductances, reset_conductances

DEFAULT_MAX_ROWS = 128
DEFAULT_MAX_COLS = 128


class CrossbarTile:
    """A rows x cols grid of cell pairs plus the device params that drew them.

    Programming noise is frozen at program time in `g_pos`/`g_neg`; read noise
    is drawn fresh per vmm call. The tile owns an RNG stream for programming;
    reads take an explicit stream so concurrent readers can hold independent
    ones.
    """

    def __init__(self, rows: int, cols: int, params: DeviceModelParams,
                 rng: np.random.Generator,
                 max_rows: int = DEFAULT_MAX_ROWS,
                 max_cols: int = DEFAULT_MAX_COLS) -> None:
        if not (1 <= rows <= max_rows) or not (1 <= cols <= max_cols):
            raise ValueError(
                f"tile of {rows}x{cols} exceeds the {max_rows}x{max_cols} bound"
            )
        self.rows = rows
        self.cols = cols
        self.params = params
        self.rng = rng
        self.weights: np.ndarray | None = None
        self.g_pos = np.full((rows, cols), params.g_low_mean)
        self.g_neg = np.full((rows, cols), params.g_low_mean)

    def __repr__(self) -> str:
        return f"CrossbarTile({self.rows}x{self.cols})"


def program_tile(tile: CrossbarTile, ternary_weights: np.ndarray) -> None:
    """Program a ternary weight matrix into the cell pairs.

    +1 -> (HIGH, LOW), 0 -> (LOW, LOW), -1 -> (LOW, HIGH). Every cell draw is
    stochastic; zero weights cancel only in expectation (exactly at zero
    variance).
    """
    w = np.asarray(ternary_weights)
    if w.shape != (tile.rows, tile.cols):
        raise ValueError(
            f"weights of shape {w.shape} do not fit tile {tile.rows}x{tile.cols}"
        )
    if not np.isin(w, (-1, 0, 1)).all():
        raise ValueError("tile weights must be ternary (-1, 0, +1)")

    shape = (tile.rows, tile.cols)
    high_pos = draw_conductances(tile.params, TargetState.HIGH, shape, tile.rng)
    low_pos = draw_conductances(tile.params, TargetState.LOW, shape, tile.rng)
    high_neg = draw_conductances(tile.params, TargetState.HIGH, shape, tile.rng)
    low_neg = draw_conductances(tile.params, TargetState.LOW, shape, tile.rng)
    tile.g_pos = np.where(w == 1, high_pos, low_pos)
    tile.g_neg = np.where(w == -1, high_neg, low_neg)
    tile.weights = w.copy()


def reset_tile(tile: CrossbarTile, num_pulses: int, rng: np.random.Generator) -> None:
    """Scramble all cells with random pulses, erasing programming history."""
    shape = (tile.rows, tile.cols)
    tile.g_pos = reset_conductances(tile.params, num_pulses, shape, rng)
    tile.g_neg = reset_conductances(tile.params, num_pulses, shape, rng)
    tile.weights = None


def vmm(tile: CrossbarTile, voltages: np.ndarray,
        rng: np.random.Generator) -> np.ndarray:
    """Analog vector-matrix multiply: per-column current differences.

    `voltages` is (rows,) or batched (batch, rows); the result has the same
    leading shape with `cols` outputs. Per-cell multiplicative read noise is
    applied as its exact column aggregate: the sum over rows of independent
    Gaussians g_i*u_i*eps_i is itself Gaussian with variance
    rel**2 * sum((g_i*u_i)**2), so one draw per output is distribution-
    identical to one draw per cell and much cheaper.
    """
    v = np.asarray(voltages, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[None, :]
    if v.ndim != 2 or v.shape[1] != tile.rows:
        raise ValueError(f"expected {tile.rows} row voltages, got shape {v.shape}")
    p = tile.params
    if np.any(np.abs(v) > p.v_read_max * (1.0 + 1e-12)):
        raise ValueError(f"read voltage outside +-{p.v_read_max} V safe range")

    u = v * (1.0 + p.nonlin_alpha * v)
    i_pos = u @ tile.g_pos
    i_neg = u @ tile.g_neg
    if p.read_noise_rel_std > 0.0:
        u2 = u * u
        std_pos = p.read_noise_rel_std * np.sqrt(u2 @ (tile.g_pos * tile.g_pos))
        std_neg = p.read_noise_rel_std * np.sqrt(u2 @ (tile.g_neg * tile.g_neg))
        i_pos = i_pos + std_pos * rng.standard_normal(i_pos.shape)
        i_neg = i_neg + std_neg * rng.standard_normal(i_neg.shape)
    out = i_pos - i_neg
    return out[0] if squeeze else out
