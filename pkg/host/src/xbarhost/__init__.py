"""Host-side bindings for the crossbar simulation core.

Everything goes through the core's stable function table: contiguous
row-major float64 buffers, primitive scalars and JSON config strings,
addressed by opaque integer handles. The wrapper adds no numerics, so results
are byte-identical to driving the core directly with the same seeds.
"""

from __future__ import annotations

import json

import numpy as np

from xbarsim import ftable

__version__ = "0.1.0"

__all__ = ["LayerHandle", "HandleReleasedError", "bind_map_linear",
           "bind_forward", "observe", "fake_quant", "api_version"]


class HandleReleasedError(RuntimeError):
    """A LayerHandle was used after release()."""


def api_version() -> int:
    return ftable.xbar_api_version()


class LayerHandle:
    """Opaque reference to a mapped linear layer owned by the core."""

    def __init__(self, handle: int, out_features: int, in_features: int, bits: int):
        self._handle = handle
        self.out_features = out_features
        self.in_features = in_features
        self.bits = bits

    @property
    def released(self) -> bool:
        return self._handle is None

    def _require(self) -> int:
        if self._handle is None:
            raise HandleReleasedError("layer handle already released")
        return self._handle

    def forward(self, x, seed: int) -> np.ndarray:
        """Mixed-signal forward pass; accepts a vector or a stacked batch."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"expected (*, {self.in_features}) inputs, got {x.shape}")
        buf = np.ascontiguousarray(x).reshape(-1)
        out = ftable.xbar_layer_forward(self._require(), buf, x.shape[0], seed)
        out = out.reshape(x.shape[0], self.out_features)
        return out[0] if squeeze else out

    def reprogram(self, seed: int, reset_pulses: int = 3) -> None:
        """Random-pulse reset of every cell followed by reprogramming."""
        ftable.xbar_layer_reprogram(self._require(), reset_pulses, seed)

    def release(self) -> None:
        if self._handle is not None:
            ftable.xbar_layer_release(self._handle)
            self._handle = None

    def __enter__(self) -> "LayerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def __repr__(self) -> str:
        state = "released" if self.released else f"handle={self._handle}"
        return (f"LayerHandle({self.out_features}x{self.in_features}, "
                f"{self.bits}-bit, {state})")


def bind_map_linear(weights, bits: int, config: dict | None = None,
                    seed: int = 0) -> LayerHandle:
    """Compile a 2D weight buffer into a core-side mapped layer.

    `weights` must be a contiguous row-major (out_features, in_features)
    array; `config` is forwarded to the core as JSON (device parameters,
    converter settings, tile size, input_scale, fit_samples).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weights must be a 2D (out_features, in_features) buffer")
    out_features, in_features = w.shape
    buf = np.ascontiguousarray(w).reshape(-1)
    handle = ftable.xbar_map_linear_create(
        buf, out_features, in_features, bits,
        json.dumps(config or {}, sort_keys=True), seed)
    return LayerHandle(handle, out_features, in_features, bits)


def bind_forward(handle: LayerHandle, x, seed: int) -> np.ndarray:
    """Free-function form of LayerHandle.forward."""
    return handle.forward(x, seed)


def observe(x, running_max_abs: float = 0.0) -> float:
    """Fold a buffer into a running max-abs observer statistic."""
    return ftable.xbar_observe(np.asarray(x, dtype=np.float64), running_max_abs)


def fake_quant(x, running_max_abs: float, bits: int) -> np.ndarray:
    """Symmetric fake quantization against an observer statistic."""
    buf = np.ascontiguousarray(np.asarray(x, dtype=np.float64)).reshape(-1)
    out = ftable.xbar_fake_quant(buf, buf.size, running_max_abs, bits)
    return out.reshape(np.shape(x))
