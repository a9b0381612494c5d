"""Dataset ingestion, user splitting, and BPR item embeddings.

Supported raw formats:
  - ml100k: tab-separated ``u.data`` (user item rating timestamp) plus
    pipe-separated ``u.item`` with 19 trailing genre flags.
  - ml1m: ``ratings.dat`` / ``movies.dat`` with ``::`` separators and
    pipe-separated genre names.
  - anime: ``rating.csv`` (user_id,anime_id,rating) and ``anime.csv``
    (anime_id,name,genre,...); rating -1 rows (implicit watches) are
    discarded before thresholding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .catalog import ItemCatalog
from .exceptions import DataFormatError, InputError

logger = logging.getLogger(__name__)

ML100K_GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)

DEFAULT_BPR_EPOCHS = 30
DEFAULT_BPR_LR = 0.05
DEFAULT_BPR_REG = 0.01


@dataclass
class Dataset:
    """Positive interactions after thresholding, plus item categories."""

    interactions: pd.DataFrame  # columns: user, item, rating[, timestamp]
    categories: dict[int, frozenset[str]]

    @property
    def n_users(self) -> int:
        return int(self.interactions["user"].nunique())

    @property
    def n_items(self) -> int:
        return int(self.interactions["item"].nunique())

    @property
    def n_interactions(self) -> int:
        return len(self.interactions)

    @property
    def density(self) -> float:
        if self.n_users == 0 or self.n_items == 0:
            return 0.0
        return self.n_interactions / (self.n_users * self.n_items)

    def positives_by_user(self) -> dict[int, set[int]]:
        return {
            int(u): set(map(int, grp["item"]))
            for u, grp in self.interactions.groupby("user")
        }


@dataclass
class SplitSpec:
    """Disjoint train/test user sets from a seeded 80/20 shuffle."""

    train_users: tuple[int, ...]
    test_users: tuple[int, ...]
    seed: int


def _read_ml100k(data_dir: Path):
    ratings_path = data_dir / "u.data"
    items_path = data_dir / "u.item"
    try:
        ratings = pd.read_csv(
            ratings_path,
            sep="\t",
            header=None,
            names=["user", "item", "rating", "timestamp"],
        )
    except Exception as exc:
        raise DataFormatError(f"cannot parse {ratings_path}: {exc}") from exc
    categories = {}
    with open(items_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("|")
            if len(parts) < 5 + len(ML100K_GENRES):
                raise DataFormatError(f"{items_path}:{lineno}: expected genre flags")
            try:
                item_id = int(parts[0])
                flags = [int(v) for v in parts[-len(ML100K_GENRES):]]
            except ValueError as exc:
                raise DataFormatError(f"{items_path}:{lineno}: {exc}") from exc
            cats = {g for g, f in zip(ML100K_GENRES, flags) if f}
            categories[item_id] = frozenset(cats)
    return ratings, categories


def _read_ml1m(data_dir: Path):
    ratings_path = data_dir / "ratings.dat"
    movies_path = data_dir / "movies.dat"
    try:
        ratings = pd.read_csv(
            ratings_path,
            sep="::",
            engine="python",
            header=None,
            names=["user", "item", "rating", "timestamp"],
        )
    except Exception as exc:
        raise DataFormatError(f"cannot parse {ratings_path}: {exc}") from exc
    categories = {}
    with open(movies_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("::")
            if len(parts) != 3:
                raise DataFormatError(f"{movies_path}:{lineno}: expected 3 fields")
            try:
                item_id = int(parts[0])
            except ValueError as exc:
                raise DataFormatError(f"{movies_path}:{lineno}: {exc}") from exc
            categories[item_id] = frozenset(g for g in parts[2].split("|") if g)
    return ratings, categories


def _read_anime(data_dir: Path):
    ratings_path = data_dir / "rating.csv"
    items_path = data_dir / "anime.csv"
    try:
        ratings = pd.read_csv(ratings_path)
        ratings = ratings.rename(
            columns={"user_id": "user", "anime_id": "item"}
        )[["user", "item", "rating"]]
    except Exception as exc:
        raise DataFormatError(f"cannot parse {ratings_path}: {exc}") from exc
    ratings = ratings[ratings["rating"] != -1]  # implicit watches carry no score
    try:
        items = pd.read_csv(items_path)
    except Exception as exc:
        raise DataFormatError(f"cannot parse {items_path}: {exc}") from exc
    categories = {}
    for _, row in items.iterrows():
        genre = row.get("genre")
        cats = (
            frozenset(g.strip() for g in str(genre).split(",") if g.strip())
            if isinstance(genre, str)
            else frozenset()
        )
        categories[int(row["anime_id"])] = cats
    return ratings, categories


_READERS = {"ml100k": _read_ml100k, "ml1m": _read_ml1m, "anime": _read_anime}


def load_dataset(path, format: str, threshold: int) -> Dataset:
    """Load a raw dataset, keep ratings > threshold, drop empty users/items.

    Items appearing in ratings but missing from the item file are skipped
    (counted in a warning).
    """
    if format not in _READERS:
        raise InputError(f"unknown dataset format {format!r}")
    data_dir = Path(path)
    if not data_dir.is_dir():
        raise InputError(f"dataset directory {data_dir} does not exist")
    ratings, categories = _READERS[format](data_dir)

    unknown = ~ratings["item"].isin(categories.keys())
    if unknown.any():
        logger.warning(
            "skipping %d ratings that reference unknown items", int(unknown.sum())
        )
        ratings = ratings[~unknown]

    positives = ratings[ratings["rating"] > threshold].copy()
    # a single pruning pass: users/items with zero positives vanish with the filter
    positives = positives.reset_index(drop=True)
    retained_items = set(map(int, positives["item"].unique()))
    cats = {i: categories[i] for i in retained_items}
    ds = Dataset(interactions=positives, categories=cats)
    logger.info(
        "loaded %s: %d users, %d items, %d interactions, density %.2f%%",
        format, ds.n_users, ds.n_items, ds.n_interactions, 100 * ds.density,
    )
    return ds


def split_users(users, ratio: float = 0.8, seed: int = 0) -> SplitSpec:
    """Seeded shuffle then prefix split; |train| = floor(ratio * n)."""
    users = sorted(int(u) for u in users)
    if len(users) < 2:
        raise InputError("need at least 2 users to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(users))
    cut = math.floor(ratio * len(users))
    train = tuple(users[k] for k in perm[:cut])
    test = tuple(users[k] for k in perm[cut:])
    return SplitSpec(train_users=train, test_users=test, seed=seed)


@dataclass
class BPRResult:
    item_ids: tuple[int, ...]
    item_factors: np.ndarray  # (N, d), raw (unnormalized)
    user_ids: tuple[int, ...]
    user_factors: np.ndarray
    mean_user: np.ndarray
    holdout_auc: float


def train_bpr_embeddings(
    interactions: pd.DataFrame,
    d: int = 10,
    epochs: int = DEFAULT_BPR_EPOCHS,
    lr: float = DEFAULT_BPR_LR,
    reg: float = DEFAULT_BPR_REG,
    seed: int = 0,
) -> BPRResult:
    """Pairwise-ranking matrix factorization over implicit positives.

    SGD over sampled (user, positive, negative) triples maximizing
    log sigmoid(u . (x_pos - x_neg)) with L2 regularization. AUC is measured
    on a held-out 5% of the training pairs against sampled negatives.
    """
    if d <= 0:
        raise InputError(f"embedding dimension must be positive, got {d}")
    if interactions.empty:
        raise InputError("no training interactions")
    rng = np.random.default_rng(seed)

    user_ids = tuple(sorted(map(int, interactions["user"].unique())))
    item_ids = tuple(sorted(map(int, interactions["item"].unique())))
    u_index = {u: k for k, u in enumerate(user_ids)}
    i_index = {i: k for k, i in enumerate(item_ids)}
    pairs = np.array(
        [(u_index[int(u)], i_index[int(i)]) for u, i in zip(interactions["user"], interactions["item"])],
        dtype=np.int64,
    )
    n_items = len(item_ids)
    pos_sets = [set() for _ in user_ids]
    for u, i in pairs:
        pos_sets[u].add(int(i))

    perm = rng.permutation(len(pairs))
    n_hold = max(1, len(pairs) // 20) if len(pairs) >= 4 else 0
    holdout = pairs[perm[:n_hold]]
    train = pairs[perm[n_hold:]] if n_hold else pairs

    U = rng.normal(0.0, 0.1, size=(len(user_ids), d))
    V = rng.normal(0.0, 0.1, size=(n_items, d))

    for _ in range(epochs):
        order = rng.permutation(len(train))
        negs = rng.integers(0, n_items, size=len(train))
        for row, neg in zip(train[order], negs):
            u, pos = int(row[0]), int(row[1])
            neg = int(neg)
            while neg in pos_sets[u]:
                neg = int(rng.integers(0, n_items))
            uu, vp, vn = U[u], V[pos], V[neg]
            x = float(uu @ (vp - vn))
            g = 1.0 / (1.0 + math.exp(min(x, 35.0)))  # 1 - sigmoid(x)
            U[u] = uu + lr * (g * (vp - vn) - reg * uu)
            V[pos] = vp + lr * (g * uu - reg * vp)
            V[neg] = vn + lr * (-g * uu - reg * vn)

    auc = _holdout_auc(U, V, holdout, pos_sets, rng) if n_hold else float("nan")
    mean_user = U.mean(axis=0)
    return BPRResult(
        item_ids=item_ids,
        item_factors=V,
        user_ids=user_ids,
        user_factors=U,
        mean_user=mean_user,
        holdout_auc=auc,
    )


def _holdout_auc(U, V, holdout, pos_sets, rng, negatives_per_pair: int = 5) -> float:
    wins, total = 0.0, 0
    n_items = V.shape[0]
    for u, pos in holdout:
        u, pos = int(u), int(pos)
        s_pos = float(U[u] @ V[pos])
        for _ in range(negatives_per_pair):
            neg = int(rng.integers(0, n_items))
            while neg in pos_sets[u]:
                neg = int(rng.integers(0, n_items))
            s_neg = float(U[u] @ V[neg])
            wins += 1.0 if s_pos > s_neg else (0.5 if s_pos == s_neg else 0.0)
            total += 1
    return wins / total if total else float("nan")


def catalog_from_bpr(result: BPRResult, categories=None) -> ItemCatalog:
    """Normalized catalog from raw BPR item factors."""
    return ItemCatalog.from_features(result.item_ids, result.item_factors, categories)


def save_embeddings(path, item_ids, features) -> None:
    """TSV rows ``item_id\\tv1\\t...\\tvd`` (raw values, not normalized)."""
    features = np.asarray(features, dtype=float)
    with open(path, "w") as fh:
        for item_id, row in zip(item_ids, features):
            fh.write(str(int(item_id)) + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(path, categories=None) -> ItemCatalog:
    """Parse a TSV embedding file into a validated, L2-normalized catalog."""
    ids, rows = [], []
    d = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2:
                raise DataFormatError(f"{path}:{lineno}: expected id and values")
            try:
                ids.append(int(parts[0]))
                vec = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if d is None:
                d = len(vec)
            elif len(vec) != d:
                raise InputError(
                    f"{path}:{lineno}: dimension {len(vec)} != expected {d}"
                )
            rows.append(vec)
    if not rows:
        raise DataFormatError(f"{path}: empty embedding file")
    return ItemCatalog.from_features(ids, np.array(rows), categories)


def load_embeddings_raw(path) -> tuple[tuple[int, ...], np.ndarray]:
    """Parsed ids and raw (unnormalized) matrix; round-trip counterpart of save."""
    ids, rows = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            ids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return tuple(ids), np.array(rows)
