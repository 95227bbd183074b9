import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sstats

from synflex.errors import ConfigurationError, ShapeError
from synflex.metrics import (build_report, correlation_report, item_accuracy,
                             memorized_flags, memorized_test, repetition_metrics,
                             spearman, t_greater_than, t_two_sample)


class TestItemAccuracy:
    def test_always_right(self):
        assert item_accuracy(np.full(50, 3), 3) == 1.0

    def test_never_right(self):
        assert item_accuracy(np.zeros(50, dtype=int), 3) == 0.0

    def test_random_predictions_near_chance(self, rng):
        preds = rng.integers(0, 10, size=1000)
        assert 0.07 <= item_accuracy(preds, 4) <= 0.13

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            item_accuracy(np.array([]), 0)


class TestMemorized:
    def test_perfect_item_is_memorized(self, rng):
        preds = [np.full(100, i) for i in range(5)]
        flags, acc = memorized_flags(preds, seed=0)
        assert flags.all()
        assert np.allclose(acc, 1.0)

    def test_strict_exceedance_with_full_criterion(self):
        # all predictions identical: shuffled accuracy always equals the
        # original, so strict exceedance never fires
        preds = [np.zeros(10, dtype=int) for _ in range(2)]
        flags, _ = memorized_flags(preds, n_shuffles=100, criterion=100, seed=1)
        assert not flags[0]

    def test_label_independent_net_rarely_fires(self, rng):
        fired = 0
        runs = 60
        for k in range(runs):
            preds = [rng.integers(0, 6, size=80) for _ in range(6)]
            flags, _ = memorized_flags(preds, n_shuffles=200, criterion=190, seed=k)
            fired += int(flags[0])
        assert fired / runs <= 0.12  # ~5% expected; loose small-sample bound

    def test_single_item_view_matches(self, rng):
        preds = [rng.integers(0, 3, size=60) for _ in range(3)]
        preds[1] = np.full(60, 1)
        flags, _ = memorized_flags(preds, seed=9)
        assert memorized_test(preds, 1, seed=9) == bool(flags[1])
        assert flags[1]

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            memorized_flags([np.array([0])], n_shuffles=0)
        with pytest.raises(ConfigurationError):
            memorized_flags([np.array([0]), np.array([], dtype=int)])

    def test_deterministic_under_seed(self, rng):
        preds = [rng.integers(0, 4, size=50) for _ in range(4)]
        a, _ = memorized_flags(preds, seed=123)
        b, _ = memorized_flags(preds, seed=123)
        assert np.array_equal(a, b)


class TestReport:
    def test_all_perfect(self):
        rep = build_report([1.0] * 10, [True] * 10, n_readouts=10)
        assert rep.gross_memory == 10.0
        assert rep.mean_accuracy == 1.0
        assert rep.n_memorized == 10
        assert rep.chance_level == 0.1

    def test_single_hit(self):
        rep = build_report([1.0, 0, 0, 0], [True, False, False, False], 4)
        assert rep.gross_memory == 1.0
        assert rep.n_memorized == 1

    def test_gross_memory_permutation_invariant(self, rng):
        acc = rng.random(8)
        flags = rng.random(8) > 0.5
        perm = rng.permutation(8)
        a = build_report(acc, flags, 8)
        b = build_report(acc[perm], flags[perm], 8)
        assert a.gross_memory == pytest.approx(b.gross_memory)
        assert a.n_memorized == b.n_memorized

    def test_json_roundtrip(self):
        import json
        rep = build_report([0.5, 0.25], [True, False], 4)
        blob = json.loads(rep.to_json())
        assert blob["gross_memory"] == 0.75
        assert blob["memorized"] == [True, False]


class TestSpearman:
    def test_monotone_up(self):
        rho, p = spearman([1, 2, 3], [10, 20, 30])
        assert rho == pytest.approx(1.0)

    def test_monotone_down(self):
        rho, _ = spearman([1, 2, 3], [30, 20, 10])
        assert rho == pytest.approx(-1.0)

    def test_hand_ranked_example(self):
        rho, _ = spearman([1, 2, 3, 4], [2, 1, 4, 3])
        assert rho == pytest.approx(0.6)

    def test_matches_scipy_with_ties(self, rng):
        x = rng.integers(0, 5, size=20).astype(float)
        y = rng.integers(0, 5, size=20).astype(float)
        rho, p = spearman(x, y)
        ref = sstats.spearmanr(x, y)
        assert rho == pytest.approx(ref.statistic, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-6)

    def test_exact_permutation_p_small_n(self):
        rho, p = spearman([1, 2, 3, 4, 5], [1, 2, 3, 5, 4])
        ref = sstats.spearmanr([1, 2, 3, 4, 5], [1, 2, 3, 5, 4])
        assert rho == pytest.approx(ref.statistic)
        # exact two-sided permutation p over 5! orderings
        count = 0
        import itertools
        ranks = np.array([1, 2, 3, 5, 4], dtype=float)
        base = np.array([1, 2, 3, 4, 5], dtype=float)

        def rank_corr(a, b):
            ca, cb = a - a.mean(), b - b.mean()
            return (ca * cb).sum() / np.sqrt((ca ** 2).sum() * (cb ** 2).sum())

        target = abs(rank_corr(base, ranks))
        total = 0
        for perm in itertools.permutations(range(5)):
            if abs(rank_corr(base, ranks[list(perm)])) >= target - 1e-12:
                count += 1
            total += 1
        assert p == pytest.approx(count / total)

    def test_constant_vector_flagged(self):
        rho, p = spearman([1, 1, 1], [1, 2, 3])
        assert math.isnan(rho) and math.isnan(p)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(ConfigurationError):
            spearman([1, 2], [3, 4])

    @given(st.lists(st.floats(-100, 100), min_size=4, max_size=12, unique=True))
    @settings(max_examples=60)
    def test_self_correlation_and_monotone_invariance(self, xs):
        x = np.array(xs)
        rho, _ = spearman(x, x)
        assert rho == pytest.approx(1.0)
        rho2, _ = spearman(x, np.exp(x / 100.0))  # strictly monotone transform
        assert rho2 == pytest.approx(1.0)

    def test_correlation_report(self):
        rep = correlation_report([0.1, 0.5, 0.9, 0.7], [0, 1, 2, 3], [1, 3, 4, 2])
        assert -1 <= rep.rho_order <= 1
        assert -1 <= rep.rho_frequency <= 1


class TestRepetitionMetrics:
    def test_equal_accuracies_have_zero_delta(self):
        trace, delta = repetition_metrics(np.full((3, 5), 0.4))
        assert np.allclose(trace, 0.4)
        assert delta == 0.0

    def test_single_repetition(self):
        trace, delta = repetition_metrics(np.array([[0.2, 0.9]]))
        assert len(trace) == 1
        assert trace[0] == pytest.approx(0.2)
        assert delta == pytest.approx(0.7)

    def test_min_trace_tracks_worst_item(self):
        chk = np.array([[0.5, 0.1], [0.6, 0.3], [0.7, 0.65]])
        trace, delta = repetition_metrics(chk)
        assert np.allclose(trace, [0.1, 0.3, 0.65])
        assert delta == pytest.approx(0.05)

    def test_bad_shape(self):
        with pytest.raises(ShapeError):
            repetition_metrics(np.zeros(5))


class TestTTests:
    def test_identical_groups_zero_statistic(self):
        t, p = t_two_sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0
        assert p == pytest.approx(1.0)

    def test_separated_groups(self):
        t, p = t_two_sample([1.0] * 10, [0.1] * 9 + [0.100001])
        assert p < 1e-10

    def test_one_sided_vs_reference(self):
        t, p = t_greater_than([0.5, 0.6, 0.55, 0.62], 0.1)
        assert p < 0.01
        _, p_low = t_greater_than([0.05, 0.08, 0.1, 0.09], 0.1)
        assert p_low > 0.1
