import numpy as np
import pytest
from hypothesis import given, strategies as st

from ontolearn.errors import DataError
from ontolearn.evaluate import PRF, edge_prf, f1_score, roc_auc, set_prf


class TestF1:
    def test_harmonic_mean(self):
        assert f1_score(0.5, 1.0) == pytest.approx(2 / 3)

    def test_zero_guard(self):
        assert f1_score(0.0, 0.0) == 0.0

    def test_symmetry(self):
        assert f1_score(0.3, 0.8) == f1_score(0.8, 0.3)


class TestSetPRF:
    def test_hand_counts(self):
        got = set_prf({"a", "b", "x"}, {"a", "b", "c", "d"})
        assert got == PRF(precision=2 / 3, recall=0.5, f1=f1_score(2 / 3, 0.5))

    def test_perfect(self):
        assert set_prf({"a"}, {"a"}) == PRF(1.0, 1.0, 1.0)

    def test_empty_predictions(self):
        got = set_prf(set(), {"a"})
        assert got == PRF(0.0, 0.0, 0.0)

    def test_empty_gold_errors(self):
        with pytest.raises(DataError, match="empty gold"):
            set_prf({"a"}, set())

    def test_normalization_default(self):
        got = set_prf({"  Liquid   Crystal "}, {"liquid crystal"})
        assert got.f1 == 1.0

    def test_normalization_off(self):
        got = set_prf({"Liquid Crystal"}, {"liquid crystal"}, normalize=False)
        assert got.f1 == 0.0


class TestEdgePRF:
    def test_direction_matters(self):
        gold = {("child", "parent")}
        assert edge_prf({("parent", "child")}, gold).f1 == 0.0
        assert edge_prf({("child", "parent")}, gold).f1 == 1.0

    def test_hand_counts(self):
        pred = {("a", "b"), ("c", "d")}
        gold = {("a", "b"), ("e", "f"), ("g", "h")}
        got = edge_prf(pred, gold)
        assert got.precision == 0.5
        assert got.recall == pytest.approx(1 / 3)

    def test_normalized_endpoints(self):
        assert edge_prf({("A ", " b")}, {("a", "b")}).f1 == 1.0


def brute_force_auc(scores, labels):
    """Pairwise comparison form: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])) == 1.0

    def test_perfectly_wrong(self):
        assert roc_auc(np.array([0.1, 0.9]), np.array([1, 0])) == 0.0

    def test_all_tied_is_half(self):
        assert roc_auc(np.array([0.5, 0.5, 0.5]), np.array([1, 0, 0])) == 0.5

    def test_known_tie_value(self):
        scores = np.array([0.8, 0.5, 0.5, 0.2])
        labels = np.array([1, 1, 0, 0])
        assert roc_auc(scores, labels) == pytest.approx(brute_force_auc(scores, labels))

    def test_degenerate_errors(self):
        with pytest.raises(DataError, match="at least one positive"):
            roc_auc(np.array([0.1, 0.2]), np.array([1, 1]))
        with pytest.raises(DataError):
            roc_auc(np.array([0.1, 0.2]), np.array([0, 0]))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.5).astype(int)
        labels[0], labels[1] = 1, 0  # guarantee both classes
        a = roc_auc(scores, labels)
        b = roc_auc(np.exp(scores), labels)
        assert a == pytest.approx(b, abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 25))
        scores = np.round(rng.normal(size=n), 1)  # coarse grid to force ties
        labels = (rng.random(n) < 0.5).astype(int)
        labels[0], labels[-1] = 1, 0
        assert roc_auc(scores, labels) == pytest.approx(
            brute_force_auc(scores, labels), abs=1e-12
        )
