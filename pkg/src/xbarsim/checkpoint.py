"""Binary checkpoint container for mapped layers and trained networks.

Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header,
then raw little-endian float64 arrays in row-major order. Mapped layers store
per-tile conductances (level-major, then row block, then column block,
positive bitline before negative); networks store weights and biases plus
observer state in the header.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .device import DeviceModelParams
from .mapping import ConverterConfig, CrossbarTile, MappedLinear, QuantScheme, program_tile
from .qat import NetObservers, Observer, TinyNet

MAGIC = b"XBCKPT01"


def _write(path, header: dict, arrays) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    payload = np.frombuffer(data[16 + hlen:], dtype="<f8")
    return header, payload


class _Cursor:
    def __init__(self, payload):
        self.payload = payload
        self.pos = 0

    def take(self, shape):
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        a = self.payload[self.pos:self.pos + n].reshape(shape)
        self.pos += n
        return np.array(a)


def save_mapped_linear(path, layer: MappedLinear, meta: dict | None = None) -> None:
    header = {
        "kind": "mapped_linear",
        "in_features": layer.in_features,
        "out_features": layer.out_features,
        "bits": layer.bits,
        "weight_scale": layer.scheme.scale,
        "input_scale": layer.input_scale,
        "correction_factor_c": layer.correction_factor_c,
        "tile_size": layer.tile_size,
        "converters": layer.converters.to_dict(),
        "device": layer.params.to_dict(),
        "q_matrix": layer.q_matrix.tolist(),
        "meta": meta or {},
    }
    arrays = []
    for grid in layer.tiles:
        for row in grid:
            for tile in row:
                arrays.append(tile.g_pos)
                arrays.append(tile.g_neg)
    _write(path, header, arrays)


def load_mapped_linear(path, rng: np.random.Generator) -> MappedLinear:
    """Rebuild a mapped layer; `rng` becomes the tiles' programming stream.

    Conductances are restored exactly; RNG state is not checkpointed, so
    subsequent noisy reads depend on the supplied stream.
    """
    header, payload = _read(path)
    if header["kind"] != "mapped_linear":
        raise ValueError(f"{path}: expected a mapped_linear checkpoint")
    params = DeviceModelParams.from_dict(header["device"])
    converters = ConverterConfig.from_dict(header["converters"])
    scheme = QuantScheme(bits=header["bits"], scale=header["weight_scale"])
    q = np.array(header["q_matrix"], dtype=np.int64)
    layer = MappedLinear(
        in_features=header["in_features"], out_features=header["out_features"],
        scheme=scheme, input_scale=header["input_scale"],
        correction_factor_c=header["correction_factor_c"],
        converters=converters, tile_size=header["tile_size"], params=params,
        tiles=[], q_matrix=q,
    )
    cur = _Cursor(payload)
    tiles = []
    from .mapping import decompose_bits  # local import avoids a cycle at module load

    digits = decompose_bits(q.T, scheme.bits)
    for level in range(scheme.bits - 1):
        grid = []
        for rs in layer.row_slices:
            row = []
            for cs in layer.col_slices:
                block = digits[level][rs, cs]
                tile = CrossbarTile(block.shape[0], block.shape[1], params, rng,
                                    max_rows=layer.tile_size, max_cols=layer.tile_size)
                tile.g_pos = cur.take(block.shape)
                tile.g_neg = cur.take(block.shape)
                tile.weights = block.copy()
                row.append(tile)
            grid.append(row)
        tiles.append(grid)
    layer.tiles = tiles
    return layer


def save_tinynet(path, net: TinyNet, observers: NetObservers | None = None,
                 meta: dict | None = None) -> None:
    header = {
        "kind": "tinynet",
        "dims": net.dims,
        "activation_max": [o.running_max_abs for o in observers.activations]
        if observers else None,
        "weight_max": [o.running_max_abs for o in observers.weights]
        if observers else None,
        "meta": meta or {},
    }
    arrays = []
    for w, b in zip(net.weights, net.biases):
        arrays.append(w)
        arrays.append(b)
    _write(path, header, arrays)


def load_tinynet(path):
    """Returns (net, observers or None, meta)."""
    header, payload = _read(path)
    if header["kind"] != "tinynet":
        raise ValueError(f"{path}: expected a tinynet checkpoint")
    dims = header["dims"]
    cur = _Cursor(payload)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(cur.take((fan_out, fan_in)))
        biases.append(cur.take((fan_out,)))
    net = TinyNet(weights, biases)
    observers = None
    if header["activation_max"] is not None:
        observers = NetObservers(
            [Observer(m) for m in header["activation_max"]],
            [Observer(m) for m in header["weight_max"]],
        )
    return net, observers, header.get("meta", {})
