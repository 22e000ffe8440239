"""Cost model, budget ledger, and regret bookkeeping."""

import math

import numpy as np
import pytest

from duelopt.accounting import (
    COMPARISON,
    LABEL,
    CostModel,
    Ledger,
    Trace,
    instantaneous_regret,
)
from duelopt.benchmarks import currin
from duelopt.oracles import Truth, make_oracle


class TestCostModel:
    def test_n_bounds_asymmetric(self):
        model = CostModel(label_cost=1.0, comparison_cost=0.1, budget=100.0)
        assert model.n_bounds() == (100, 1000)

    def test_n_bounds_equal_costs(self):
        model = CostModel(label_cost=1.0, comparison_cost=1.0, budget=100.0)
        assert model.n_bounds() == (100, 100)

    def test_n_bounds_integer_rounding(self):
        model = CostModel(label_cost=4.0, comparison_cost=3.0, budget=10.0)
        assert model.n_bounds() == (2, 4)

    def test_n_bounds_exact_decimal_arithmetic(self):
        # 1/0.1 must round-trip to exactly 10 despite float representation
        model = CostModel(label_cost=0.1, comparison_cost=0.1, budget=1.0)
        assert model.n_bounds() == (10, 10)
        model = CostModel(label_cost=0.3, comparison_cost=0.1, budget=0.3)
        assert model.n_bounds() == (1, 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            CostModel(label_cost=1.0, comparison_cost=2.0, budget=10.0)
        with pytest.raises(ValueError):
            CostModel(label_cost=1.0, comparison_cost=0.0, budget=10.0)
        with pytest.raises(ValueError):
            CostModel(label_cost=1.0, comparison_cost=0.5, budget=0.0)


class TestLedger:
    def test_exact_exhaustion(self):
        model = CostModel(label_cost=1.0, comparison_cost=0.1, budget=1.0)
        ledger = Ledger(model)
        assert ledger.charge(LABEL)
        assert ledger.remaining == 0.0
        assert not ledger.charge(COMPARISON)
        assert ledger.terminal

    def test_rejection_marks_terminal(self):
        model = CostModel(label_cost=1.0, comparison_cost=0.1, budget=0.05)
        ledger = Ledger(model)
        assert not ledger.charge(COMPARISON)
        assert ledger.terminal
        # terminal ledgers reject everything afterwards
        assert not ledger.charge(COMPARISON)
        assert ledger.spent == 0.0

    def test_label_rejected_but_run_ends(self):
        model = CostModel(label_cost=1.0, comparison_cost=0.1, budget=0.5)
        ledger = Ledger(model)
        for _ in range(4):
            assert ledger.charge(COMPARISON)
        assert not ledger.charge(LABEL)
        assert ledger.terminal

    def test_counts(self):
        model = CostModel(label_cost=1.0, comparison_cost=0.25, budget=3.0)
        ledger = Ledger(model)
        ledger.charge(LABEL)
        ledger.charge(COMPARISON)
        ledger.charge(COMPARISON)
        assert ledger.n_labels == 1
        assert ledger.n_comparisons == 2
        assert ledger.total_queries == 3
        assert ledger.spent == pytest.approx(1.5)
        assert ledger.remaining == pytest.approx(1.5)

    def test_unknown_kind_rejected(self):
        ledger = Ledger(CostModel(label_cost=1.0, comparison_cost=0.5, budget=2.0))
        with pytest.raises(ValueError):
            ledger.charge("banana")

    def test_conservation_and_count_window(self):
        # drive random query mixes to exhaustion; spend never exceeds the
        # budget and the accepted count lands in [n_lower - 1, n_upper]
        rng = np.random.default_rng(42)
        for _ in range(200):
            lam_l = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
            lam_c = lam_l * float(rng.choice([0.05, 0.1, 0.5, 1.0]))
            budget = float(rng.choice([1.0, 7.5, 20.0]))
            model = CostModel(label_cost=lam_l, comparison_cost=lam_c, budget=budget)
            ledger = Ledger(model)
            while not ledger.terminal:
                kind = LABEL if rng.random() < 0.5 else COMPARISON
                ledger.charge(kind)
            assert ledger.spent <= budget + 1e-12
            n_lo, n_hi = model.n_bounds()
            assert n_lo - 1 <= ledger.total_queries <= n_hi


class TestInstantaneousRegret:
    def _f(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return -np.sum((X - 0.25) ** 2, axis=1)

    def test_zero_at_optimum(self):
        truth = Truth(x=np.array([0.25, 0.25]), value=0.0)
        r = instantaneous_regret(self._f, truth, LABEL, np.array([0.25, 0.25]))
        assert r == pytest.approx(0.0, abs=1e-12)

    def test_comparison_uses_better_arm(self):
        truth = Truth(x=np.array([0.25, 0.25]), value=0.0)
        bad = np.array([0.9, 0.9])
        r = instantaneous_regret(self._f, truth, COMPARISON, bad, x2=truth.x)
        assert r == pytest.approx(0.0, abs=1e-12)

    def test_comparison_never_worse_than_label(self):
        truth = Truth(x=np.array([0.25, 0.25]), value=0.0)
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.random(2)
            x2 = rng.random(2)
            r_label = instantaneous_regret(self._f, truth, LABEL, x)
            r_comp = instantaneous_regret(self._f, truth, COMPARISON, x, x2=x2)
            assert r_comp <= r_label + 1e-15

    def test_currin_center_regret(self):
        oracle = make_oracle("currin")
        x = np.array([0.5, 0.5])
        r = instantaneous_regret(oracle.f, oracle.truth, LABEL, x)
        assert r == pytest.approx(oracle.truth.value - 7.4052, abs=5e-4)
        assert r > 0.0

    def test_comparison_requires_opponent(self):
        truth = Truth(x=np.array([0.25, 0.25]), value=0.0)
        with pytest.raises(ValueError):
            instantaneous_regret(self._f, truth, COMPARISON, np.array([0.5, 0.5]))


class TestTrace:
    def test_running_minimum(self):
        trace = Trace()
        rng = np.random.default_rng(11)
        regrets = rng.random(100)
        for i, r in enumerate(regrets):
            entry = trace.append(
                kind=LABEL, x=np.array([0.0]), x2=None, cost=1.0, regret=float(r)
            )
            assert entry.t == i + 1
        best = np.array([e.best_regret for e in trace])
        np.testing.assert_allclose(best, np.minimum.accumulate(regrets))
        assert np.all(np.diff(best) <= 0.0)
        assert trace.best_regret == pytest.approx(float(regrets.min()))

    def test_empty_trace(self):
        trace = Trace()
        assert len(trace) == 0
        assert math.isinf(trace.best_regret)

    def test_entry_fields(self):
        trace = Trace()
        x = np.array([0.1, 0.2])
        x2 = np.array([0.3, 0.4])
        e = trace.append(kind=COMPARISON, x=x, x2=x2, cost=0.1, regret=0.5)
        assert e.kind == COMPARISON
        assert e.cost == 0.1
        np.testing.assert_array_equal(e.x2, x2)
        with pytest.raises(ValueError):
            trace.append(kind="nope", x=x, x2=None, cost=1.0, regret=0.0)
