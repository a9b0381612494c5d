"""Synthetic catalogs and users for simulation and trend checks."""

from __future__ import annotations

import numpy as np

from .catalog import ItemCatalog
from .evaluation import SyntheticEnv


def make_random_catalog(n_items: int, d: int, seed: int = 0) -> ItemCatalog:
    """Unit-norm random features, singleton category per item."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_items, d))
    cats = {i: frozenset({f"c{i}"}) for i in range(n_items)}
    return ItemCatalog.from_features(range(n_items), X, cats)


def make_clustered_catalog(
    n_items: int,
    d: int,
    n_clusters: int,
    spread: float = 0.15,
    seed: int = 0,
) -> ItemCatalog:
    """Items around cluster centers; the category set is the cluster label.

    Items in one cluster have Jaccard similarity 1 to each other and 0
    across clusters, so intra-list distance directly measures how many
    clusters a slate touches.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_clusters, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.arange(n_items) % n_clusters
    X = centers[labels] + spread * rng.normal(size=(n_items, d))
    cats = {i: frozenset({f"cluster{labels[i]}"}) for i in range(n_items)}
    return ItemCatalog.from_features(range(n_items), X, cats)


def make_synthetic_users(
    catalog: ItemCatalog,
    n_users: int,
    theta_norm: float = 1.0,
    positive_rate_bias: float = 0.0,
    seed: int = 0,
) -> dict[int, set[int]]:
    """Per-user positive sets drawn from a logistic preference model.

    Each user gets a random unit-norm preference vector scaled by
    ``theta_norm``; item i is positive with probability
    sigmoid(theta . x_i + positive_rate_bias).
    """
    rng = np.random.default_rng(seed)
    positives: dict[int, set[int]] = {}
    for uid in range(n_users):
        theta = rng.normal(size=catalog.dim)
        theta *= theta_norm / np.linalg.norm(theta)
        scores = catalog.features @ theta + positive_rate_bias
        probs = 1.0 / (1.0 + np.exp(-scores))
        positives[uid] = {
            int(i) for i, p in zip(catalog.ids, probs) if rng.random() < p
        }
    return positives


def make_synthetic_env(
    n_items: int = 12,
    d: int = 5,
    noise_sigma: float = 0.1,
    alpha: float = 1.0,
    seed: int = 0,
) -> SyntheticEnv:
    """Random catalog plus a unit-norm ground-truth parameter."""
    rng = np.random.default_rng(seed)
    catalog = make_random_catalog(n_items, d, seed=seed)
    theta = rng.normal(size=d)
    theta /= np.linalg.norm(theta)
    return SyntheticEnv(
        theta_star=theta,
        catalog=catalog,
        noise_sigma=noise_sigma,
        alpha=alpha,
        seed=seed,
    )
