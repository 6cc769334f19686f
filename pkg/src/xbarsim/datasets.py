"""Desk-scale synthetic classification data.

The default task is "mirror blobs": each class owns an antipodal pair of
Gaussian clusters along a random orthonormal direction, so no class is
linearly separable from the rest and the decision boundaries need the hidden
layers. Margin is controlled by the radius / cluster-spread ratio; the
informative directions are dense in the input coordinates, which matters when
the first layer is mapped onto noisy analog hardware.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DeskDataset:
    name: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int


def make_mirror_blobs(n_train: int = 5000, n_test: int = 8000, classes: int = 4,
                      dim: int = 16, radius: float = 1.0, noise: float = 0.35,
                      seed: int = 0) -> DeskDataset:
    """Antipodal Gaussian cluster pairs along random orthonormal directions."""
    rng = np.random.default_rng([seed, 0x0DA7A])
    directions, _ = np.linalg.qr(rng.standard_normal((dim, classes)))
    centers = np.concatenate([radius * directions.T, -radius * directions.T])

    def sample(n):
        slot = rng.integers(0, 2 * classes, size=n)
        x = centers[slot] + noise * rng.standard_normal((n, dim))
        return x, slot % classes

    x_train, y_train = sample(n_train)
    x_test, y_test = sample(n_test)
    return DeskDataset("mirror_blobs", x_train, y_train, x_test, y_test, classes)


def load_dataset(cfg: dict, seed: int) -> DeskDataset:
    """Build the dataset named in a config mapping (see harness config)."""
    cfg = dict(cfg or {})
    name = cfg.pop("name", "mirror_blobs")
    if name == "mirror_blobs":
        return make_mirror_blobs(seed=seed, **cfg)
    raise ValueError(f"unknown dataset {name!r}")
