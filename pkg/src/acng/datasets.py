"""Synthetic point sets for tests and benchmarks."""

from __future__ import annotations

import numpy as np


def uniform(n: int, dim: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    return (np.random.default_rng(seed).random((n, dim)) * scale).astype(np.float32)


def sift_like(n: int, dim: int = 128, latent: int = 12, clusters: int = 32, seed: int = 0) -> np.ndarray:
    """Non-negative clustered vectors with low intrinsic dimension.

    A Gaussian mixture in a ``latent``-dimensional space is lifted to ``dim``
    dimensions by a random linear map, with a little isotropic noise on top.
    Coordinates are then rescaled into [0, 100], like SIFT's.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, (clusters, latent))
    spread = rng.uniform(0.6, 1.6, clusters)
    lab = rng.integers(clusters, size=n)
    z = centers[lab] + rng.normal(size=(n, latent)) * spread[lab, None]
    lift = rng.normal(0.0, 1.0 / np.sqrt(latent), (latent, dim))
    x = z @ lift
    x += rng.normal(0.0, 0.05, x.shape)
    x = (x - x.min()) / (x.max() - x.min()) * 100.0
    return x.astype(np.float32)


def perturb(data: np.ndarray, m: int, radius: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """m queries, each a data point moved by a uniformly random offset of length < radius.

    Returns (queries, source ids).
    """
    rng = np.random.default_rng(seed)
    src = rng.integers(data.shape[0], size=m)
    direction = rng.normal(size=(m, data.shape[1]))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    length = rng.uniform(0.0, radius, size=(m, 1))
    return (data[src].astype(np.float64) + direction * length).astype(np.float32), src
