"""Item catalog: arm ids, L2-normalized feature rows, category sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError

logger = logging.getLogger(__name__)

_NORM_TOL = 1e-9


@dataclass
class ItemCatalog:
    """The ground set of arms.

    ``features`` rows are L2-normalized; ``categories`` maps each id to a
    non-empty set of category labels (used by the Jaccard diversity metric).
    """

    ids: tuple[int, ...]
    features: np.ndarray  # (N, d), unit-norm rows
    categories: dict[int, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.ids = tuple(int(i) for i in self.ids)
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2 or self.features.shape[0] != len(self.ids):
            raise InputError(
                f"features shape {self.features.shape} does not match {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise InputError("duplicate item ids in catalog")
        norms = np.linalg.norm(self.features, axis=1)
        bad = np.where(np.abs(norms - 1.0) > _NORM_TOL)[0]
        if bad.size:
            raise InputError(
                f"feature rows not unit-norm at positions {bad[:5].tolist()} "
                f"(norms {norms[bad[:5]].tolist()})"
            )
        self._index = {i: k for k, i in enumerate(self.ids)}

    @classmethod
    def from_features(cls, ids, features, categories=None) -> "ItemCatalog":
        """Build a catalog, L2-normalizing rows. Zero rows are rejected."""
        features = np.asarray(features, dtype=float)
        norms = np.linalg.norm(features, axis=1)
        zero = np.where(norms < 1e-12)[0]
        if zero.size:
            raise InputError(f"zero-norm feature rows at positions {zero.tolist()}")
        return cls(tuple(ids), features / norms[:, None], dict(categories or {}))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def index_of(self, item_id: int) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise InputError(f"unknown item id {item_id}") from None

    def rows(self, item_ids) -> np.ndarray:
        """Feature rows for the given ids, in the given order."""
        return self.features[[self.index_of(i) for i in item_ids]]

    def subset(self, item_ids) -> "ItemCatalog":
        item_ids = tuple(item_ids)
        cats = {i: self.categories[i] for i in item_ids if i in self.categories}
        return ItemCatalog(item_ids, self.rows(item_ids), cats)


def jaccard_similarity(cat_a, cat_b) -> float:
    """|A ∩ B| / |A ∪ B| of two category sets; degenerate empty input scores 0."""
    a, b = set(cat_a), set(cat_b)
    if not a or not b:
        logger.warning("jaccard_similarity called with an empty category set")
        return 0.0
    return len(a & b) / len(a | b)
