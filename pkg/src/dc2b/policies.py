"""Slate-selection policies behind one select/feedback interface.

DC2B does Thompson sampling over a variational posterior and picks its
slate with the quality-weighted DPP greedy search. The four baselines
(LogRank, MMR, epsilon-Greedy, DPP-map) score items against the mean user
embedding and keep no state beyond the shrinking candidate pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import dpp, posterior
from .catalog import ItemCatalog
from .dpp import Kernel, Slate, build_kernel, exhaustive_map, greedy_map
from .exceptions import InputError
from .posterior import PosteriorState

POLICY_KINDS = ("dc2b", "log_rank", "mmr", "eps_greedy", "dpp_map")


@dataclass
class PolicyConfig:
    """Hyperparameters for all policies; defaults follow the reported settings."""

    kind: str = "dc2b"
    alpha: float = 3.0  # DC2B quality exponent
    lambda_prior: float = 1.0  # prior Sigma = lambda I
    mmr_alpha: float = 0.9
    epsilon: float = 0.1
    dpp_map_theta: float = 0.6
    slate_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InputError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InputError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 0.0 <= self.mmr_alpha <= 1.0:
            raise InputError(f"mmr_alpha must be in [0, 1], got {self.mmr_alpha}")
        if not 0.0 <= self.dpp_map_theta <= 1.0:
            raise InputError(f"dpp_map_theta must be in [0, 1], got {self.dpp_map_theta}")
        if self.alpha <= 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if self.lambda_prior <= 0:
            raise InputError(f"lambda_prior must be positive, got {self.lambda_prior}")
        if self.slate_size < 1:
            raise InputError(f"slate_size must be >= 1, got {self.slate_size}")


@dataclass
class CandidatePool:
    """Available arms: the ground set minus everything already recommended."""

    remaining: set[int]
    recommended: set[int] = field(default_factory=set)

    @classmethod
    def full(cls, items: ItemCatalog) -> "CandidatePool":
        return cls(remaining=set(items.ids))

    def exclude(self, slate_ids) -> None:
        ids = set(slate_ids)
        overlap = ids - self.remaining
        if overlap:
            raise InputError(f"items {sorted(overlap)} were already recommended")
        self.remaining -= ids
        self.recommended |= ids

    def __len__(self) -> int:
        return len(self.remaining)


# --- stateless selection primitives ---------------------------------------


def _pad_slate(slate: Slate, kernel: Kernel, K: int) -> Slate:
    """Fill a rank-collapsed short slate with quality-ranked leftovers.

    The greedy search stops when every residual collapses (kernel rank
    below K); policies still owe a slate of size min(K, pool).
    """
    want = min(K, kernel.n)
    if len(slate) >= want:
        return slate
    chosen = set(slate.items)
    rest = sorted(
        (i for i in kernel.ids if i not in chosen),
        key=lambda i: (-kernel.log_quality[kernel.index_of(i)], i),
    )
    extra = rest[: want - len(slate)]
    obj = slate.objective + sum(kernel.log_quality[kernel.index_of(i)] for i in extra)
    return Slate(items=slate.items + tuple(extra), objective=obj)


def dc2b_select(
    state: PosteriorState,
    pool: CandidatePool,
    items: ItemCatalog,
    cfg: PolicyConfig,
    rng,
) -> Slate:
    """Sample theta_hat from the posterior, build the kernel, greedy-MAP a slate."""
    if not pool.remaining:
        raise InputError("candidate pool is empty")
    theta_hat = posterior.sample_theta(state, rng)
    kernel = build_kernel(theta_hat, items, cfg.alpha, ids=sorted(pool.remaining))
    return _pad_slate(greedy_map(kernel, cfg.slate_size), kernel, cfg.slate_size)


def dc2b_feedback(
    state: PosteriorState,
    slate: Slate,
    feedback,
    items: ItemCatalog,
    cfg: PolicyConfig,
) -> PosteriorState:
    """Fold the slate's engagements into the posterior (next trial's prior)."""
    new_state, _ = posterior.update(state, slate, feedback, items, cfg.alpha)
    return new_state


def _quality(items: ItemCatalog, ids, mean_user) -> np.ndarray:
    mean_user = np.asarray(mean_user, dtype=float).ravel()
    X = items.rows(ids)
    if mean_user.shape[0] != X.shape[1]:
        raise InputError(
            f"mean_user dimension {mean_user.shape[0]} != feature dimension {X.shape[1]}"
        )
    return expit(X @ mean_user)


def log_rank_select(pool, items: ItemCatalog, mean_user, K: int) -> Slate:
    """Top-K arms by sigmoid(mean_user . x), ties broken by smallest id."""
    ids = sorted(pool.remaining if isinstance(pool, CandidatePool) else pool)
    if not ids:
        raise InputError("candidate pool is empty")
    q = _quality(items, ids, mean_user)
    order = sorted(range(len(ids)), key=lambda k: (-q[k], ids[k]))[: min(K, len(ids))]
    picked = [ids[k] for k in order]
    return Slate(items=tuple(picked), objective=float(np.sum(np.log(q[order]))))


def mmr_select(pool, items: ItemCatalog, mean_user, mmr_alpha: float, K: int) -> Slate:
    """Maximal marginal relevance: quality minus averaged cosine to the partial slate."""
    ids = sorted(pool.remaining if isinstance(pool, CandidatePool) else pool)
    if not ids:
        raise InputError("candidate pool is empty")
    q = _quality(items, ids, mean_user)
    X = items.rows(ids)
    norms = np.linalg.norm(X, axis=1)
    picked_local: list[int] = []
    objective = 0.0
    for _ in range(min(K, len(ids))):
        best_k, best_score = -1, -np.inf
        for k in range(len(ids)):
            if k in picked_local:
                continue
            if picked_local:
                sims = []
                for j in picked_local:
                    denom = norms[k] * norms[j]
                    sims.append(float(X[k] @ X[j]) / denom if denom > 0 else 0.0)
                score = mmr_alpha * q[k] - (1.0 - mmr_alpha) / len(picked_local) * sum(sims)
            else:
                score = mmr_alpha * q[k]
            if score > best_score:  # ids sorted: strict > keeps smallest id on ties
                best_k, best_score = k, score
        picked_local.append(best_k)
        objective += best_score
    return Slate(items=tuple(ids[k] for k in picked_local), objective=objective)


def eps_greedy_select(
    pool, items: ItemCatalog, mean_user, epsilon: float, K: int, rng
) -> Slate:
    """Fill K slots, each uniform-random with prob epsilon, else best quality."""
    ids = sorted(pool.remaining if isinstance(pool, CandidatePool) else pool)
    if not ids:
        raise InputError("candidate pool is empty")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    q = _quality(items, ids, mean_user)
    available = list(range(len(ids)))
    by_quality = sorted(available, key=lambda k: (-q[k], ids[k]))
    picked_local: list[int] = []
    for _ in range(min(K, len(ids))):
        if epsilon > 0.0 and rng.random() < epsilon:
            choice = int(rng.choice([k for k in available if k not in picked_local]))
        else:
            choice = next(k for k in by_quality if k not in picked_local)
        picked_local.append(choice)
    objective = float(np.sum(np.log(q[picked_local])))
    return Slate(items=tuple(ids[k] for k in picked_local), objective=objective)


def dpp_map_select(
    pool, items: ItemCatalog, mean_user, theta_tradeoff: float, K: int
) -> Slate:
    """Greedy MAP on the plain feature Gram matrix with log-linear trade-off.

    Per-step score is theta' log q_i + (1 - theta') log d_i^2, with q_i the
    LogRank quality; theta' = 1 reduces to pure quality ranking.
    """
    if not 0.0 <= theta_tradeoff <= 1.0:
        raise InputError(f"theta_tradeoff must be in [0, 1], got {theta_tradeoff}")
    ids = sorted(pool.remaining if isinstance(pool, CandidatePool) else pool)
    if not ids:
        raise InputError("candidate pool is empty")
    q = _quality(items, ids, mean_user)
    X = items.rows(ids)
    kernel = Kernel(L=X @ X.T, log_quality=np.log(q), ids=tuple(ids))
    slate = greedy_map(
        kernel,
        K,
        quality_weight=theta_tradeoff,
        det_weight=1.0 - theta_tradeoff,
    )
    return _pad_slate(slate, kernel, K)


def dpp_map_exhaustive(
    pool, items: ItemCatalog, mean_user, theta_tradeoff: float, K: int
) -> Slate:
    """Exhaustive counterpart of dpp_map_select (test oracle, small pools only)."""
    ids = sorted(pool.remaining if isinstance(pool, CandidatePool) else pool)
    q = _quality(items, ids, mean_user)
    X = items.rows(ids)
    kernel = Kernel(L=X @ X.T, log_quality=np.log(q), ids=tuple(ids))
    return exhaustive_map(
        kernel,
        K,
        quality_weight=theta_tradeoff,
        det_weight=1.0 - theta_tradeoff,
    )


# --- stateful per-user policy objects --------------------------------------


class Policy:
    """One simulated user's policy: select a slate, then receive feedback.

    Removes recommended items from the pool between trials; only DC2B
    carries belief state across trials.
    """

    def __init__(self, cfg: PolicyConfig, items: ItemCatalog, mean_user=None):
        self.cfg = cfg
        self.items = items
        self.mean_user = (
            np.zeros(items.dim) if mean_user is None else np.asarray(mean_user, float).ravel()
        )
        self.pool = CandidatePool.full(items)
        self.rng = np.random.default_rng(cfg.seed)
        self.state = PosteriorState.prior(items.dim, cfg.lambda_prior)

    def select(self) -> Slate:
        cfg = self.cfg
        if cfg.kind == "dc2b":
            return dc2b_select(self.state, self.pool, self.items, cfg, self.rng)
        if cfg.kind == "log_rank":
            return log_rank_select(self.pool, self.items, self.mean_user, cfg.slate_size)
        if cfg.kind == "mmr":
            return mmr_select(self.pool, self.items, self.mean_user, cfg.mmr_alpha, cfg.slate_size)
        if cfg.kind == "eps_greedy":
            return eps_greedy_select(
                self.pool, self.items, self.mean_user, cfg.epsilon, cfg.slate_size, self.rng
            )
        return dpp_map_select(
            self.pool, self.items, self.mean_user, cfg.dpp_map_theta, cfg.slate_size
        )

    def feedback(self, slate: Slate, engagements, shrink_pool: bool = True) -> None:
        if self.cfg.kind == "dc2b":
            self.state = dc2b_feedback(self.state, slate, engagements, self.items, self.cfg)
        if shrink_pool:
            self.pool.exclude(slate.items)


def make_policy(cfg: PolicyConfig, items: ItemCatalog, mean_user=None, seed=None) -> Policy:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return Policy(cfg, items, mean_user)
