"""Stable flat function table: the foreign-function boundary of the core.

Everything crosses this surface as primitive scalars, JSON strings and
contiguous row-major float64 buffers addressed by integer handles, so a host
wrapper can stay completely free of numerics. Handles stay valid until
released; using a released handle raises a lookup error.
"""

from __future__ import annotations

import json

import numpy as np

from .converters import SaturationCounter
from .device import DeviceModelParams
from .mapping import ConverterConfig, QuantScheme, forward, map_linear, remap_instance
from .qat import Observer, fake_quant

_handles: dict[int, object] = {}
_next_handle = 1

API_VERSION = 1


def xbar_api_version() -> int:
    return API_VERSION


def _register(obj) -> int:
    global _next_handle
    handle = _next_handle
    _next_handle += 1
    _handles[handle] = obj
    return handle


def _lookup(handle: int):
    try:
        return _handles[handle]
    except KeyError:
        raise KeyError(f"invalid or released layer handle {handle}") from None


def xbar_map_linear_create(weights: np.ndarray, out_features: int, in_features: int,
                           bits: int, config_json: str, seed: int) -> int:
    """Build a mapped layer from a flat row-major weight buffer.

    config_json may carry: device (DeviceModelParams fields), converters
    (dac_bits/adc_bits/adc_full_scale), tile_size, input_scale, weight_max_abs,
    fit_samples. Missing keys use the core defaults.
    """
    buf = np.ascontiguousarray(weights, dtype=np.float64).reshape(-1)
    if buf.size != out_features * in_features:
        raise ValueError(
            f"buffer of {buf.size} values does not match "
            f"{out_features}x{in_features} layer")
    w = buf.reshape(out_features, in_features)
    cfg = json.loads(config_json) if config_json else {}
    params = DeviceModelParams.from_dict(cfg.get("device", {})) if cfg.get("device") \
        else DeviceModelParams()
    converters = ConverterConfig.from_dict(cfg.get("converters", {})) \
        if cfg.get("converters") else ConverterConfig()
    max_abs = cfg.get("weight_max_abs") or float(np.max(np.abs(w)))
    scheme = QuantScheme.from_max_abs(bits, max_abs)
    layer = map_linear(
        w, scheme, params, converters,
        tile_size=int(cfg.get("tile_size", 128)),
        rng=np.random.default_rng(seed),
        input_scale=float(cfg.get("input_scale", 1.0)),
        fit_samples=int(cfg.get("fit_samples", 20000)),
    )
    return _register(layer)


def xbar_layer_in_features(handle: int) -> int:
    return _lookup(handle).in_features


def xbar_layer_out_features(handle: int) -> int:
    return _lookup(handle).out_features


def xbar_layer_forward(handle: int, x: np.ndarray, batch: int, seed: int) -> np.ndarray:
    """Mixed-signal forward for `batch` stacked input rows; returns a flat buffer."""
    layer = _lookup(handle)
    buf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if buf.size != batch * layer.in_features:
        raise ValueError(
            f"buffer of {buf.size} values does not match batch {batch} x "
            f"{layer.in_features} inputs")
    out = forward(layer, buf.reshape(batch, layer.in_features),
                  np.random.default_rng(seed))
    return np.ascontiguousarray(out, dtype=np.float64).reshape(-1)


def xbar_layer_saturation_forward(handle: int, x: np.ndarray, batch: int,
                                  seed: int) -> tuple[np.ndarray, int, int]:
    """Like xbar_layer_forward but also reports (saturated, conversions)."""
    layer = _lookup(handle)
    buf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if buf.size != batch * layer.in_features:
        raise ValueError("buffer size mismatch")
    counter = SaturationCounter()
    out = forward(layer, buf.reshape(batch, layer.in_features),
                  np.random.default_rng(seed), counter)
    return (np.ascontiguousarray(out, dtype=np.float64).reshape(-1),
            counter.saturated, counter.conversions)


def xbar_layer_reprogram(handle: int, reset_pulses: int, seed: int) -> None:
    """Random-pulse reset of every cell followed by reprogramming."""
    remap_instance(_lookup(handle), np.random.default_rng(seed),
                   reset_pulses=reset_pulses)


def xbar_layer_release(handle: int) -> None:
    if handle not in _handles:
        raise KeyError(f"invalid or released layer handle {handle}")
    del _handles[handle]


def xbar_observe(x: np.ndarray, running_max_abs: float) -> float:
    """Fold a buffer into a running max-abs statistic (observer primitive)."""
    obs = Observer(running_max_abs)
    obs.observe(np.ascontiguousarray(x, dtype=np.float64))
    return obs.running_max_abs


def xbar_fake_quant(x: np.ndarray, n: int, running_max_abs: float,
                    bits: int) -> np.ndarray:
    """Symmetric fake quantization of a flat buffer against an observer state."""
    buf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if buf.size != n:
        raise ValueError(f"buffer of {buf.size} values, expected {n}")
    return fake_quant(buf, Observer(running_max_abs), bits)
