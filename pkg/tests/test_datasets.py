import numpy as np
import pytest

from xbarsim.datasets import load_dataset, make_mirror_blobs


def test_shapes_and_labels():
    ds = make_mirror_blobs(n_train=500, n_test=200, classes=4, dim=16, seed=1)
    assert ds.x_train.shape == (500, 16)
    assert ds.x_test.shape == (200, 16)
    assert set(np.unique(ds.y_train)) <= set(range(4))
    assert ds.num_classes == 4


def test_deterministic_per_seed():
    a = make_mirror_blobs(n_train=100, n_test=50, seed=7)
    b = make_mirror_blobs(n_train=100, n_test=50, seed=7)
    c = make_mirror_blobs(n_train=100, n_test=50, seed=8)
    assert np.array_equal(a.x_train, b.x_train)
    assert np.array_equal(a.y_test, b.y_test)
    assert not np.array_equal(a.x_train, c.x_train)


def test_classes_are_antipodal_pairs():
    # each class mixes two mirrored clusters, so class means sit near zero
    # while per-class second moments carry the ring radius
    ds = make_mirror_blobs(n_train=20000, n_test=10, radius=1.0, noise=0.1, seed=2)
    for k in range(4):
        xk = ds.x_train[ds.y_train == k]
        assert np.linalg.norm(xk.mean(axis=0)) < 0.05
        assert abs(np.linalg.norm(xk, axis=1).mean() - 1.0) < 0.1


def test_load_dataset_dispatch():
    ds = load_dataset({"name": "mirror_blobs", "n_train": 50, "n_test": 20}, seed=3)
    assert ds.x_train.shape[0] == 50
    with pytest.raises(ValueError):
        load_dataset({"name": "no_such_set"}, seed=3)
