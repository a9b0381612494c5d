"""Replay sessions, metrics, regret simulation, and sweeps."""

import numpy as np
import pytest

from dc2b.evaluation import (
    ReplaySession,
    SyntheticEnv,
    TrialLog,
    evaluate_policy,
    f_measure,
    ild_diversity,
    precision_at_n,
    replay_user,
    simulate_regret,
    slate_value,
    sweep,
)
from dc2b.exceptions import InputError
from dc2b.policies import PolicyConfig, make_policy
from dc2b.synthetic import (
    make_clustered_catalog,
    make_random_catalog,
    make_synthetic_env,
    make_synthetic_users,
)


def small_catalog(n=15, d=3, seed=0):
    return make_random_catalog(n, d, seed)


def session_from_slates(slates, positives):
    s = ReplaySession(user_id=0, positive_set=set(positives))
    for t, slate in enumerate(slates):
        y = tuple(1 if i in positives else 0 for i in slate)
        s.trials.append(TrialLog(trial=t, slate=tuple(slate), feedback=y, reward=float(sum(y))))
    return s


class TestReplayUser:
    def test_all_items_positive_gives_precision_one(self):
        cat = small_catalog()
        policy = make_policy(PolicyConfig(kind="log_rank", slate_size=3), cat)
        session = replay_user(policy, set(cat.ids), cat, K=3, T=3)
        assert precision_at_n(session, 9) == 1.0

    def test_no_positives_still_updates_dc2b_posterior(self):
        cat = small_catalog()
        policy = make_policy(PolicyConfig(kind="dc2b", slate_size=3, seed=1), cat)
        session = replay_user(policy, set(), cat, K=3, T=2)
        assert precision_at_n(session, 6) == 0.0
        assert policy.state.trial_count == 2
        assert not np.array_equal(policy.state.Sigma, np.eye(cat.dim))

    def test_scripted_deterministic_trace(self):
        cat = small_catalog(n=9, d=3, seed=2)
        policy = make_policy(PolicyConfig(kind="log_rank", slate_size=3), cat,
                             mean_user=np.zeros(3))
        session = replay_user(policy, {0, 4}, cat, K=3, T=3)
        # zero mean user: constant quality, tie-break by id, shrinking pool
        assert [t.slate for t in session.trials] == [(0, 1, 2), (3, 4, 5), (6, 7, 8)]
        assert [t.feedback for t in session.trials] == [(1, 0, 0), (0, 1, 0), (0, 0, 0)]

    def test_pool_exhaustion_truncates_and_flags(self):
        cat = small_catalog(n=5)
        policy = make_policy(PolicyConfig(kind="log_rank", slate_size=3), cat)
        session = replay_user(policy, set(), cat, K=3, T=4)
        assert session.truncated and session.T == 2

    def test_disjoint_recommendations_across_trials(self):
        cat = small_catalog(n=12, d=3, seed=3)
        policy = make_policy(PolicyConfig(kind="dc2b", slate_size=4, seed=5), cat)
        session = replay_user(policy, {1, 2}, cat, K=4, T=3)
        recs = session.recommended_sequence()
        assert len(recs) == len(set(recs))


class TestPrecisionAtN:
    def test_alternating_hits(self):
        slates = [tuple(range(k, k + 2)) for k in range(0, 10, 2)]
        session = session_from_slates(slates, positives=set(range(0, 10, 2)))
        assert precision_at_n(session, 10) == 0.5

    def test_counted_fixture_17_of_50(self):
        slates = [tuple(range(k, k + 10)) for k in range(0, 50, 10)]
        session = session_from_slates(slates, positives=set(range(17)))
        assert precision_at_n(session, 50) == pytest.approx(0.34)

    def test_n_beyond_available_uses_prefix(self, caplog):
        session = session_from_slates([(0, 1)], positives={0})
        assert precision_at_n(session, 10) == 0.5


class TestIldDiversity:
    def cats(self, mapping):
        return {k: frozenset(v) for k, v in mapping.items()}

    def test_identical_categories_give_zero(self):
        session = session_from_slates([(0, 1, 2)], set())
        cats = self.cats({0: {"a"}, 1: {"a"}, 2: {"a"}})
        assert ild_diversity([session], cats) == 0.0

    def test_disjoint_categories_give_one(self):
        session = session_from_slates([(0, 1, 2)], set())
        cats = self.cats({0: {"a"}, 1: {"b"}, 2: {"c"}})
        assert ild_diversity([session], cats) == 1.0

    def test_direct_arithmetic(self):
        session = session_from_slates([(0, 1, 2)], set())
        # pairwise Jaccard sims {1, 0, 0} -> 1 - 1/3 = 2/3
        cats = self.cats({0: {"a", "b"}, 1: {"a", "b"}, 2: {"c"}})
        assert ild_diversity([session], cats) == pytest.approx(2 / 3)
        # sims {1, 1/3, 1/3} -> 1 - 5/9 = 4/9
        cats = self.cats({0: {"a", "b"}, 1: {"a", "b"}, 2: {"b", "c"}})
        assert ild_diversity([session], cats) == pytest.approx(1 - (1 + 1 / 3 + 1 / 3) / 3)

    def test_singleton_slate_skipped(self, caplog):
        session = session_from_slates([(0,), (1, 2)], set())
        cats = self.cats({0: {"a"}, 1: {"a"}, 2: {"b"}})
        assert ild_diversity([session], cats) == 1.0

    def test_permutation_invariance(self):
        cats = self.cats({0: {"a"}, 1: {"a", "b"}, 2: {"c"}, 3: {"b", "c"}})
        a = session_from_slates([(0, 1, 2, 3)], set())
        b = session_from_slates([(3, 1, 0, 2)], set())
        assert ild_diversity([a], cats) == pytest.approx(ild_diversity([b], cats))


class TestFMeasure:
    def test_fixed_point(self):
        for v in (0.0, 0.3, 1.0):
            if v == 0.0:
                assert f_measure(v, v) == 0.0
            else:
                assert f_measure(v, v) == pytest.approx(v)

    def test_reported_ml100k_row(self):
        assert f_measure(0.2882, 0.8118) == pytest.approx(0.4254, abs=5e-5)

    def test_reported_ml1m_row(self):
        assert f_measure(0.3117, 0.8367) == pytest.approx(0.4542, abs=5e-5)

    def test_bounds_enforced(self):
        with pytest.raises(InputError):
            f_measure(1.2, 0.5)

    def test_never_exceeds_max_component(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, d = rng.random(), rng.random()
            assert f_measure(a, d) <= max(a, d) + 1e-12


class TestEvaluatePolicy:
    def test_metrics_in_unit_interval(self):
        cat = make_clustered_catalog(20, 4, 4, seed=1)
        users = make_synthetic_users(cat, 6, seed=2)
        report = evaluate_policy(
            PolicyConfig(kind="dc2b", slate_size=4), cat, np.zeros(4), users, T=3, seed=0
        )
        for v in list(report.precision_at.values()) + [report.diversity, report.f_measure]:
            assert 0.0 <= v <= 1.0

    def test_deterministic_given_seed(self):
        cat = make_clustered_catalog(20, 4, 4, seed=1)
        users = make_synthetic_users(cat, 5, seed=2)
        cfg = PolicyConfig(kind="dc2b", slate_size=4)
        a = evaluate_policy(cfg, cat, np.zeros(4), users, T=3, seed=9)
        b = evaluate_policy(cfg, cat, np.zeros(4), users, T=3, seed=9)
        assert a == b

    def test_max_workers_does_not_change_results(self):
        cat = make_clustered_catalog(16, 4, 4, seed=3)
        users = make_synthetic_users(cat, 6, seed=4)
        cfg = PolicyConfig(kind="eps_greedy", slate_size=4)
        a = evaluate_policy(cfg, cat, np.zeros(4), users, T=2, seed=1, max_workers=1)
        b = evaluate_policy(cfg, cat, np.zeros(4), users, T=2, seed=1, max_workers=4)
        assert a == b


class TestRegret:
    def test_theta_star_norm_enforced(self):
        cat = small_catalog(n=5)
        with pytest.raises(InputError):
            SyntheticEnv(theta_star=np.ones(3) * 2, catalog=cat)

    def test_oracle_policy_has_zero_regret(self):
        env = make_synthetic_env(n_items=8, d=3, seed=0)
        cfg = PolicyConfig(kind="dc2b", alpha=1.0, slate_size=3)
        curve = simulate_regret(env, "oracle", cfg, T=20, episodes=2)
        assert np.allclose(curve, 0.0)

    def test_random_policy_regret_grows_linearly(self):
        env = make_synthetic_env(n_items=10, d=3, seed=1)
        cfg = PolicyConfig(kind="dc2b", alpha=1.0, slate_size=3)
        curve = simulate_regret(env, "random", cfg, T=400, episodes=5)
        t = np.arange(1, 401)
        r2 = np.corrcoef(t, curve)[0, 1] ** 2
        assert r2 > 0.95
        assert curve[-1] > 0

    def test_per_trial_regret_nonnegative(self):
        env = make_synthetic_env(n_items=8, d=3, seed=2)
        cfg = PolicyConfig(kind="dc2b", alpha=1.0, slate_size=3, lambda_prior=1.0)
        curve = simulate_regret(env, "dc2b", cfg, T=50, episodes=2)
        diffs = np.diff(np.concatenate([[0.0], curve]))
        assert np.all(diffs >= -1e-9)

    def test_exhaustive_cap_requires_flag(self):
        env = make_synthetic_env(n_items=20, d=3, seed=3)
        cfg = PolicyConfig(kind="dc2b", alpha=1.0, slate_size=3)
        with pytest.raises(InputError):
            simulate_regret(env, "oracle", cfg, T=5, episodes=1)
        curve = simulate_regret(env, "oracle", cfg, T=5, episodes=1, approx_oracle=True)
        assert np.all(np.isfinite(curve))

    def test_slate_value_matches_direct_product(self):
        env = make_synthetic_env(n_items=6, d=3, seed=4)
        from dc2b.dpp import build_kernel, subset_log_det

        kernel = build_kernel(env.theta_star, env.catalog, env.alpha)
        subset = [0, 2, 4]
        p = np.exp([kernel.log_quality[kernel.index_of(i)] for i in subset])
        expected = float(np.prod(p) * np.exp(subset_log_det(kernel, subset)))
        assert slate_value(kernel, subset) == pytest.approx(expected, rel=1e-10)


class TestSweep:
    def test_single_value_equals_one_replay(self):
        cat = make_clustered_catalog(20, 4, 4, seed=5)
        users = make_synthetic_users(cat, 4, seed=6)
        cfg = PolicyConfig(kind="dc2b", slate_size=4)
        rows = sweep("alpha", [3.0], cfg, cat, np.zeros(4), users, T=2, seed=2)
        direct = evaluate_policy(cfg, cat, np.zeros(4), users, T=2, seed=2)
        assert rows[0][1] == direct.precision_at[50]
        assert rows[0][2] == direct.diversity
        assert rows[0][3] == direct.f_measure

    def test_empty_values_rejected(self):
        cat = make_clustered_catalog(8, 3, 2, seed=7)
        with pytest.raises(InputError):
            sweep("alpha", [], PolicyConfig(), cat, np.zeros(3), {}, T=1)

    def test_unknown_parameter_rejected(self):
        cat = make_clustered_catalog(8, 3, 2, seed=7)
        with pytest.raises(InputError):
            sweep("epsilon", [0.1], PolicyConfig(), cat, np.zeros(3), {}, T=1)
