"""Compile real-valued weight matrices onto stacked ternary crossbar tiles.

Pipeline: per-tensor symmetric quantization (fixed zero point) -> per-element
binary decomposition into bits-1 ternary levels -> tiling into crossbar-sized
blocks -> stochastic programming. The forward pass runs the full mixed-signal
chain: input normalization, DAC, per-tile analog VMM, per-tile ADC, correction
factor, digital shift-and-add across bit levels, final descaling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .converters import ConverterSpec, SaturationCounter, adc, adc_decode, dac, round_half_away
from .crossbar import CrossbarTile, program_tile, reset_tile, vmm
from .device import DeviceModelParams, TargetState, draw_conductances, read_currents


class CalibrationError(RuntimeError):
    """Raised when the correction-factor fit is degenerate."""


@dataclass(frozen=True)
class QuantScheme:
    """Per-tensor symmetric quantization: levels {-L..L}, zero point pinned at 0."""

    bits: int
    scale: float
    zero_point: int = 0

    def __post_init__(self) -> None:
        if not (2 <= self.bits <= 8):
            raise ValueError("bits must be in 2..8")
        if self.scale <= 0.0:
            raise ValueError("scale must be > 0")
        if self.zero_point != 0:
            raise ValueError("zero_point is fixed at 0")

    @property
    def max_level(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def factor(self) -> float:
        """Multiplier taking raw weights to integer levels (1/scale)."""
        return 1.0 / self.scale

    @classmethod
    def from_max_abs(cls, bits: int, max_abs: float) -> "QuantScheme":
        if max_abs <= 0.0:
            warnings.warn("all-zero tensor: quantization scale undefined, using 1.0")
            return cls(bits=bits, scale=1.0)
        return cls(bits=bits, scale=max_abs / (2 ** (bits - 1) - 1))


@dataclass(frozen=True)
class ConverterConfig:
    """DAC/ADC resolutions; adc_full_scale None means per-tile worst case."""

    dac_bits: int = 8
    adc_bits: int = 8
    adc_full_scale: float | None = None

    def dac_spec(self, params: DeviceModelParams) -> ConverterSpec:
        return ConverterSpec(bits=self.dac_bits, full_scale=params.v_read_max)

    def adc_spec(self, params: DeviceModelParams, rows: int) -> ConverterSpec:
        full = self.adc_full_scale
        if full is None:
            # worst-case column current: every cell high, every input at full scale
            full = rows * params.g_high_mean * params.v_read_max
        return ConverterSpec(bits=self.adc_bits, full_scale=full)

    def to_dict(self) -> dict:
        return {"dac_bits": self.dac_bits, "adc_bits": self.adc_bits,
                "adc_full_scale": self.adc_full_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "ConverterConfig":
        return cls(**d)


def quantize_weights(w: np.ndarray, scheme: QuantScheme) -> np.ndarray:
    """Round weights to integer levels in [-L, L], ties away from zero."""
    levels = scheme.max_level
    q = round_half_away(np.asarray(w) / scheme.scale)
    return np.clip(q, -levels, levels).astype(np.int64)


def significances(bits: int) -> list[int]:
    """Per-level shift weights, most significant first (4-bit -> [4, 2, 1])."""
    if not (2 <= bits <= 8):
        raise ValueError("bits must be in 2..8")
    return [2 ** k for k in range(bits - 2, -1, -1)]


def decompose_bits(q, bits: int) -> np.ndarray:
    """Split integer levels into bits-1 ternary digits, MSB first.

    Every nonzero digit carries sign(q), so sum(digit_k * 2**(bits-2-k)) == q.
    Works elementwise on arrays; the level axis is prepended.
    """
    q = np.asarray(q)
    levels = 2 ** (bits - 1) - 1
    if np.any(np.abs(q) > levels):
        raise ValueError(f"levels out of range [-{levels}, {levels}] for {bits} bits")
    sign = np.sign(q).astype(np.int8)
    mag = np.abs(q).astype(np.int64)
    digits = [((mag >> k) & 1).astype(np.int8) * sign
              for k in range(bits - 2, -1, -1)]
    return np.stack(digits, axis=0)


def compose_bits(digits: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of decompose_bits (shift-and-add of the ternary digits)."""
    sig = np.array(significances(bits), dtype=np.int64)
    return np.tensordot(sig, np.asarray(digits, dtype=np.int64), axes=(0, 0))


def fit_correction_factor(params: DeviceModelParams, sample_count: int,
                          rng: np.random.Generator) -> float:
    """Least-squares correction factor c (1/A) for paired-bitline readout.

    For sampled x in [-1, 1] and freshly programmed pairs, c minimizes the
    squared error of c*(I+ - I-) against the targets x, 0, -x for the
    (high,low), (low,low) and (low,high) pairings; closed form
    c = sum(t*d) / sum(d*d) over all three pairings.
    """
    if sample_count < 1000:
        raise ValueError("sample_count must be >= 1000")
    x = rng.uniform(-1.0, 1.0, size=sample_count)
    v = x * params.v_read_max
    num = 0.0
    den = 0.0
    pairings = (
        (TargetState.HIGH, TargetState.LOW, x),
        (TargetState.LOW, TargetState.LOW, np.zeros_like(x)),
        (TargetState.LOW, TargetState.HIGH, -x),
    )
    for pos_state, neg_state, target in pairings:
        g_pos = draw_conductances(params, pos_state, sample_count, rng)
        g_neg = draw_conductances(params, neg_state, sample_count, rng)
        d = read_currents(g_pos, params, v, rng) - read_currents(g_neg, params, v, rng)
        num += float(np.dot(target, d))
        den += float(np.dot(d, d))
    if not np.isfinite(den) or den <= 0.0:
        raise CalibrationError("degenerate device parameters: no usable current signal")
    return num / den


def _block_slices(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


@dataclass
class MappedLinear:
    """A real linear layer compiled onto stacked bit-level crossbar tiles.

    tiles[k][r][c] holds bit level k (most significant first), input-feature
    block r, output-feature block c. input_scale maps raw activations into
    [-1, 1]; scheme.scale maps integer levels back to raw weights.
    """

    in_features: int
    out_features: int
    scheme: QuantScheme
    input_scale: float
    correction_factor_c: float
    converters: ConverterConfig
    tile_size: int
    params: DeviceModelParams
    tiles: list = field(repr=False)
    q_matrix: np.ndarray = field(repr=False)

    @property
    def bits(self) -> int:
        return self.scheme.bits

    @property
    def weight_factor(self) -> float:
        """Multiplier taking raw weights to integer levels (70 in the docs example)."""
        return self.scheme.factor

    @property
    def row_slices(self) -> list[slice]:
        return _block_slices(self.in_features, self.tile_size)

    @property
    def col_slices(self) -> list[slice]:
        return _block_slices(self.out_features, self.tile_size)


def map_linear(w: np.ndarray, scheme: QuantScheme, params: DeviceModelParams,
               converters: ConverterConfig, tile_size: int,
               rng: np.random.Generator, *, input_scale: float = 1.0,
               correction_factor: float | None = None,
               fit_samples: int = 20000) -> MappedLinear:
    """Quantize, bit-decompose, tile and stochastically program a weight matrix.

    `w` is (out_features, in_features). Crossbar rows carry input features and
    columns carry outputs, so each tile is programmed with a transposed block.
    A fresh correction factor is fitted unless one is supplied.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2D (out_features, in_features)")
    if not np.isfinite(w).all():
        raise ValueError("weight matrix contains non-finite values")
    out_features, in_features = w.shape

    if correction_factor is None:
        correction_factor = fit_correction_factor(params, fit_samples, rng)

    q = quantize_weights(w, scheme)
    digits = decompose_bits(q.T, scheme.bits)  # (levels, in, out)

    row_slices = _block_slices(in_features, tile_size)
    col_slices = _block_slices(out_features, tile_size)
    tiles = []
    for level in range(scheme.bits - 1):
        grid = []
        for rs in row_slices:
            row = []
            for cs in col_slices:
                block = digits[level][rs, cs]
                tile = CrossbarTile(block.shape[0], block.shape[1], params,
                                    rng, max_rows=tile_size, max_cols=tile_size)
                program_tile(tile, block)
                row.append(tile)
            grid.append(row)
        tiles.append(grid)

    return MappedLinear(
        in_features=in_features, out_features=out_features, scheme=scheme,
        input_scale=input_scale, correction_factor_c=correction_factor,
        converters=converters, tile_size=tile_size, params=params,
        tiles=tiles, q_matrix=q,
    )


def remap_instance(layer: MappedLinear, rng: np.random.Generator,
                   reset_pulses: int = 3) -> None:
    """Redraw one programmed instance: random-pulse reset, then reprogram.

    Scrambling before reprogramming mirrors how correlation across programming
    cycles is avoided on hardware; statistically the new conductances are
    independent of the old ones.
    """
    digits = decompose_bits(layer.q_matrix.T, layer.bits)
    for level, grid in enumerate(layer.tiles):
        for r, rs in enumerate(layer.row_slices):
            for c, cs in enumerate(layer.col_slices):
                tile = grid[r][c]
                reset_tile(tile, reset_pulses, rng)
                tile.rng = rng
                program_tile(tile, digits[level][rs, cs])


def forward(layer: MappedLinear, x: np.ndarray, rng: np.random.Generator,
            counter: SaturationCounter | None = None) -> np.ndarray:
    """Run the mixed-signal forward pass for a vector or a batch.

    Chain: scale+clamp input -> DAC -> per-tile vmm -> per-tile ADC -> decode
    to current -> correction factor -> digital row-block sum -> shift-and-add
    over bit levels -> divide out the input and weight factors.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise ValueError(f"expected {layer.in_features} input features, got {x.shape}")

    dac_spec = layer.converters.dac_spec(layer.params)
    v = dac(np.clip(x * layer.input_scale, -1.0, 1.0), dac_spec)

    sigs = significances(layer.bits)
    total = np.zeros((x.shape[0], layer.out_features))
    for level, grid in enumerate(layer.tiles):
        level_sum = np.zeros_like(total)
        for r, rs in enumerate(layer.row_slices):
            v_block = v[:, rs]
            for c, cs in enumerate(layer.col_slices):
                tile = grid[r][c]
                adc_spec = layer.converters.adc_spec(layer.params, tile.rows)
                code = adc(vmm(tile, v_block, rng), adc_spec, counter)
                level_sum[:, cs] += adc_decode(code, adc_spec) * layer.correction_factor_c
        total += sigs[level] * level_sum

    out = total * layer.scheme.scale / layer.input_scale
    return out[0] if squeeze else out
