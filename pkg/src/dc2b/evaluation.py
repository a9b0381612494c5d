"""Offline replay evaluation, metrics, and synthetic-environment regret runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import dpp
from .catalog import ItemCatalog, jaccard_similarity
from .dpp import build_kernel, exhaustive_map, greedy_map, subset_log_det
from .exceptions import InputError
from .policies import Policy, PolicyConfig, make_policy

logger = logging.getLogger(__name__)

DEFAULT_PRECISION_LEVELS = (10, 30, 50)
DEFAULT_TRIALS_PER_USER = 5


@dataclass
class TrialLog:
    trial: int
    slate: tuple[int, ...]
    feedback: tuple[int, ...]
    reward: float  # engaged-item count for replay, f value for regret runs


@dataclass
class ReplaySession:
    user_id: int
    positive_set: set[int]
    trials: list[TrialLog] = field(default_factory=list)
    truncated: bool = False

    @property
    def T(self) -> int:
        return len(self.trials)

    def recommended_sequence(self) -> list[int]:
        """All recommended ids in trial order, then within-slate order."""
        return [i for t in self.trials for i in t.slate]


@dataclass
class MetricsReport:
    precision_at: dict[int, float]
    diversity: float
    f_measure: float
    per_user_precision: dict[int, dict[int, float]] = field(default_factory=dict)
    per_user_diversity: dict[int, float] = field(default_factory=dict)


def user_seed(global_seed: int, index: int) -> int:
    """Counter-derived per-user/per-episode seed, independent of run order."""
    ss = np.random.SeedSequence(entropy=int(global_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1)[0])


def replay_user(
    policy: Policy,
    positives: set[int],
    catalog: ItemCatalog,
    K: int,
    T: int,
    user_id: int = 0,
) -> ReplaySession:
    """Run T trials against logged positives as unbiased feedback.

    The pool shrinks by each recommended slate; feedback y_i = 1 iff the
    item is in the user's positive set. DC2B also updates its posterior.
    """
    session = ReplaySession(user_id=user_id, positive_set=set(positives))
    for t in range(T):
        if len(policy.pool) == 0:
            session.truncated = True
            logger.warning("user %s: pool exhausted after %d trials", user_id, t)
            break
        slate = policy.select()
        y = tuple(1 if i in positives else 0 for i in slate.items)
        policy.feedback(slate, y)
        session.trials.append(
            TrialLog(trial=t, slate=slate.items, feedback=y, reward=float(sum(y)))
        )
    return session


def precision_at_n(session: ReplaySession, N: int) -> float:
    """Hit fraction among the first N recommended items (prefix if short)."""
    recs = session.recommended_sequence()
    if N > len(recs):
        logger.warning(
            "precision_at_n: N=%d exceeds %d recommendations; using prefix",
            N, len(recs),
        )
    prefix = recs[:N]
    if not prefix:
        return 0.0
    return sum(1 for i in prefix if i in session.positive_set) / len(prefix)


def _trial_ild(slate, categories, similarity) -> float | None:
    if len(slate) < 2:
        return None
    total, pairs = 0.0, 0
    for a in range(len(slate)):
        for b in range(a + 1, len(slate)):
            sim = similarity(categories.get(slate[a], frozenset()),
                             categories.get(slate[b], frozenset()))
            total += 1.0 - sim
            pairs += 1
    return total / pairs


def ild_diversity(sessions, categories, similarity=jaccard_similarity) -> float:
    """Average intra-list distance: per trial, then per user, then overall."""
    per_user = []
    for session in sessions:
        vals = []
        for t in session.trials:
            ild = _trial_ild(t.slate, categories, similarity)
            if ild is None:
                logger.warning("skipping singleton slate in diversity computation")
                continue
            vals.append(ild)
        if vals:
            per_user.append(float(np.mean(vals)))
    return float(np.mean(per_user)) if per_user else 0.0


def f_measure(accuracy: float, diversity: float) -> float:
    """Harmonic mean of accuracy and diversity; 0 when both are 0."""
    for name, v in (("accuracy", accuracy), ("diversity", diversity)):
        if not 0.0 <= v <= 1.0:
            raise InputError(f"{name} must be in [0, 1], got {v}")
    if accuracy + diversity == 0.0:
        return 0.0
    return 2.0 * accuracy * diversity / (accuracy + diversity)


def evaluate_policy(
    cfg: PolicyConfig,
    catalog: ItemCatalog,
    mean_user,
    positives_by_user: dict[int, set[int]],
    T: int = DEFAULT_TRIALS_PER_USER,
    seed: int = 0,
    precision_levels=DEFAULT_PRECISION_LEVELS,
    max_workers: int = 1,
) -> MetricsReport:
    """Replay one policy over all test users and aggregate equal-weight metrics.

    Per-user seeds are derived from the user's index, so results do not
    depend on execution order (or on ``max_workers``).
    """

    def run_one(idx_uid):
        idx, uid = idx_uid
        policy = make_policy(cfg, catalog, mean_user, seed=user_seed(seed, idx))
        return uid, replay_user(
            policy, positives_by_user[uid], catalog, cfg.slate_size, T, user_id=uid
        )

    jobs = list(enumerate(sorted(positives_by_user)))
    if max_workers > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = dict(pool.map(run_one, jobs))
    else:
        results = dict(map(run_one, jobs))

    per_user_prec: dict[int, dict[int, float]] = {}
    per_user_div: dict[int, float] = {}
    for _, uid in jobs:
        session = results[uid]
        per_user_prec[uid] = {n: precision_at_n(session, n) for n in precision_levels}
        per_user_div[uid] = ild_diversity([session], catalog.categories)
    precision = {
        n: float(np.mean([per_user_prec[u][n] for u in per_user_prec]))
        for n in precision_levels
    }
    diversity = float(np.mean(list(per_user_div.values()))) if per_user_div else 0.0
    top_n = max(precision_levels)
    return MetricsReport(
        precision_at=precision,
        diversity=diversity,
        f_measure=f_measure(precision[top_n], diversity),
        per_user_precision=per_user_prec,
        per_user_diversity=per_user_div,
    )


# --- synthetic regret simulation -------------------------------------------


@dataclass
class SyntheticEnv:
    """Ground-truth environment: theta_star with ||.||2 <= 1 plus reward noise."""

    theta_star: np.ndarray
    catalog: ItemCatalog
    noise_sigma: float = 0.1
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float).ravel()
        norm = np.linalg.norm(self.theta_star)
        if norm > 1.0 + 1e-9:
            raise InputError(f"theta_star norm {norm} exceeds 1")


def slate_value(kernel, slate_ids) -> float:
    """f(S) = prod_{i in S} p_i * det(L_[S]) under the kernel's parameter."""
    logp = sum(kernel.log_quality[kernel.index_of(i)] for i in slate_ids)
    logdet = subset_log_det(kernel, slate_ids)
    return float(np.exp(logp + logdet)) if np.isfinite(logdet) else 0.0


def optimal_slate(kernel, K: int, approx: bool = False):
    if kernel.n > dpp.EXHAUSTIVE_CAP:
        if not approx:
            raise InputError(
                f"{kernel.n} items exceed the exhaustive oracle cap; "
                "pass approx_oracle=True for the greedy oracle"
            )
        return greedy_map(kernel, K)
    return exhaustive_map(kernel, K)


class OraclePolicy:
    """Plays the per-trial optimal slate under theta_star (zero regret)."""

    def __init__(self, env: SyntheticEnv, K: int, approx: bool = False):
        kernel = build_kernel(env.theta_star, env.catalog, env.alpha)
        self.slate = optimal_slate(kernel, K, approx)

    def select(self):
        return self.slate

    def feedback(self, slate, engagements, shrink_pool: bool = False):
        pass


class UniformRandomPolicy:
    """Uniform random K-subset each trial."""

    def __init__(self, catalog: ItemCatalog, K: int, seed: int = 0):
        self.ids = np.array(sorted(catalog.ids))
        self.K = min(K, len(self.ids))
        self.rng = np.random.default_rng(seed)

    def select(self):
        picked = self.rng.choice(self.ids, size=self.K, replace=False)
        return dpp.Slate(items=tuple(int(i) for i in sorted(picked)), objective=0.0)

    def feedback(self, slate, engagements, shrink_pool: bool = False):
        pass


def make_regret_policy(kind: str, env: SyntheticEnv, cfg: PolicyConfig, seed: int):
    if kind == "oracle":
        return OraclePolicy(env, cfg.slate_size, approx=env.catalog.n > dpp.EXHAUSTIVE_CAP)
    if kind == "random":
        return UniformRandomPolicy(env.catalog, cfg.slate_size, seed=seed)
    return make_policy(cfg, env.catalog, mean_user=None, seed=seed)


def simulate_regret(
    env: SyntheticEnv,
    policy_kind: str,
    cfg: PolicyConfig,
    T: int,
    episodes: int = 1,
    approx_oracle: bool = False,
) -> np.ndarray:
    """Cumulative expected regret curve, averaged over seeded episodes.

    The action set does not shrink: every trial selects from the full
    catalog. Engagement feedback is Bernoulli(p*_i); the reward noise only
    perturbs the logged reward, truncated to keep it within [0, C].
    """
    K = cfg.slate_size
    true_kernel = build_kernel(env.theta_star, env.catalog, env.alpha)
    best = optimal_slate(true_kernel, K, approx=approx_oracle)
    f_best = slate_value(true_kernel, best.items)
    p_true = {i: float(np.exp(true_kernel.log_quality[true_kernel.index_of(i)]))
              for i in env.catalog.ids}
    reward_cap = float(np.exp(2.0 * env.alpha * K))  # crude upper bound on f

    curves = np.zeros((episodes, T))
    for ep in range(episodes):
        seed = user_seed(env.seed, ep)
        env_rng = np.random.default_rng(user_seed(seed, 1))
        policy = make_regret_policy(policy_kind, env, cfg, seed=user_seed(seed, 0))
        cumulative = 0.0
        for t in range(T):
            slate = policy.select()
            f_chosen = slate_value(true_kernel, slate.items)
            cumulative += f_best - f_chosen
            curves[ep, t] = cumulative
            y = tuple(
                int(env_rng.random() < p_true[i]) for i in slate.items
            )
            noise = float(env_rng.normal(0.0, env.noise_sigma))
            _ = float(np.clip(f_chosen + noise, 0.0, reward_cap))  # logged reward
            policy.feedback(slate, y, shrink_pool=False)
    return curves.mean(axis=0)


# --- parameter sweeps --------------------------------------------------------


def sweep(
    parameter: str,
    values,
    base_cfg: PolicyConfig,
    catalog: ItemCatalog,
    mean_user,
    positives_by_user: dict[int, set[int]],
    T: int = DEFAULT_TRIALS_PER_USER,
    seed: int = 0,
):
    """Replay the policy per parameter value with shared seeds.

    Returns rows (value, precision@50, diversity, f_measure).
    """
    if parameter not in ("alpha", "slate_size"):
        raise InputError(f"unsupported sweep parameter {parameter!r}")
    if not values:
        raise InputError("sweep needs at least one value")
    rows = []
    for value in values:
        cfg = replace(
            base_cfg,
            **{parameter: (int(value) if parameter == "slate_size" else float(value))},
        )
        report = evaluate_policy(
            cfg, catalog, mean_user, positives_by_user, T=T, seed=seed
        )
        top_n = max(report.precision_at)
        rows.append(
            (value, report.precision_at[top_n], report.diversity, report.f_measure)
        )
    return rows
