import numpy as np
import pytest

from xbarsim import ConverterConfig, NetObservers, Observer, QuantScheme, TinyNet, forward, map_linear
from xbarsim.checkpoint import (load_mapped_linear, load_tinynet,
                                save_mapped_linear, save_tinynet)


def test_mapped_linear_round_trip(tmp_path, default_params):
    rng = np.random.default_rng(0)
    w = rng.normal(0, 0.1, (20, 150))  # forces 2 input blocks at tile size 128
    scheme = QuantScheme.from_max_abs(4, float(np.abs(w).max()))
    layer = map_linear(w, scheme, default_params, ConverterConfig(), 128, rng,
                       input_scale=0.5)
    path = tmp_path / "layer.ckpt"
    save_mapped_linear(path, layer, meta={"note": "test"})

    loaded = load_mapped_linear(path, np.random.default_rng(1))
    assert loaded.in_features == 150 and loaded.out_features == 20
    assert loaded.scheme.scale == layer.scheme.scale
    assert loaded.input_scale == 0.5
    assert loaded.correction_factor_c == layer.correction_factor_c
    assert np.array_equal(loaded.q_matrix, layer.q_matrix)
    for g1, g2 in zip(layer.tiles, loaded.tiles):
        for r1, r2 in zip(g1, g2):
            for t1, t2 in zip(r1, r2):
                assert np.array_equal(t1.g_pos, t2.g_pos)
                assert np.array_equal(t1.g_neg, t2.g_neg)
                assert np.array_equal(t1.weights, t2.weights)

    x = rng.normal(0, 1, (4, 150))
    y1 = forward(layer, x, np.random.default_rng(2))
    y2 = forward(loaded, x, np.random.default_rng(2))
    assert np.array_equal(y1, y2)  # bit-identical under the same read stream


def test_tinynet_round_trip(tmp_path):
    net = TinyNet.init([16, 32, 4], np.random.default_rng(3))
    obs = NetObservers([Observer(1.5), Observer(2.5)], [Observer(0.4), Observer(0.3)])
    path = tmp_path / "net.ckpt"
    save_tinynet(path, net, obs, meta={"bits": 3})
    loaded, lobs, meta = load_tinynet(path)
    assert meta == {"bits": 3}
    assert loaded.dims == [16, 32, 4]
    for w1, w2 in zip(net.weights, loaded.weights):
        assert np.array_equal(w1, w2)
    for b1, b2 in zip(net.biases, loaded.biases):
        assert np.array_equal(b1, b2)
    assert [o.running_max_abs for o in lobs.activations] == [1.5, 2.5]
    assert [o.running_max_abs for o in lobs.weights] == [0.4, 0.3]


def test_tinynet_without_observers(tmp_path):
    net = TinyNet.init([4, 3], np.random.default_rng(4))
    path = tmp_path / "float.ckpt"
    save_tinynet(path, net, None)
    _, obs, _ = load_tinynet(path)
    assert obs is None


def test_rejects_wrong_magic_and_kind(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_tinynet(bad)

    net = TinyNet.init([4, 3], np.random.default_rng(5))
    path = tmp_path / "net.ckpt"
    save_tinynet(path, net)
    with pytest.raises(ValueError):
        load_mapped_linear(path, np.random.default_rng(6))
