import math

import numpy as np
import pytest

from ota import errors
from ota.allocator import RngStream
from ota.baselines import dmd_step, new_pacer_state, rank_by_ctr, throttle_step
from ota.model import CampaignAccumulator, Item, QueryInstance, accumulate

from conftest import make_query


class TestRankByCtr:
    def test_order(self):
        q = make_query([0.1, 0.5, 0.3], [1, 1, 1], [1.0, 0.5])
        assert rank_by_ctr(q).slots == (1, 2)

    def test_ties_keep_input_order(self):
        q = make_query([0.2, 0.5, 0.5, 0.2], [1, 1, 1, 1], [1.0, 0.5, 0.2])
        assert rank_by_ctr(q).slots == (1, 2, 0)

    def test_all_slots(self):
        q = make_query([0.1, 0.5], [1, 1], [1.0, 0.5])
        assert rank_by_ctr(q).slots == (1, 0)


class TestPacerState:
    def test_default_eta(self):
        assert new_pacer_state(100).eta == pytest.approx(0.1)

    def test_negative_eta(self):
        with pytest.raises(errors.NonPositiveEta):
            new_pacer_state(10, eta=-1.0)

    @pytest.mark.parametrize("kw", [{"horizon": 0}, {"horizon": 10, "b": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(errors.InvalidParams):
            new_pacer_state(**kw)

    def test_enrollment_targets(self):
        q = make_query([0.3, 0.2], [2.0, 4.0], [1.0])
        _, st = dmd_step(new_pacer_state(10, b=1.5), q)
        assert st.item_ids == ("i0", "i1")
        np.testing.assert_allclose(st.target, [0.3, 0.6])

    def test_step_does_not_mutate(self):
        q = make_query([0.3, 0.2], [1.0, 1.0], [1.0])
        st0 = new_pacer_state(10, eta=1.0)
        _, st1 = dmd_step(st0, q)
        _, st2 = dmd_step(st1, q)
        assert st0.item_ids == ()
        assert st1.queries_seen == 1 and st2.queries_seen == 2
        assert st1.dual[0] == pytest.approx(0.9)


class TestDmd:
    def test_first_step_is_ctr(self):
        q = make_query([0.1, 0.5, 0.3, 0.0], [1, 1, 1, 1], [1.0, 0.5, 0.2])
        a, _ = dmd_step(new_pacer_state(100), q)
        assert a.slots == (1, 2, 0)

    def test_zero_ctr_never_shown(self):
        q = make_query([0.0, 0.5], [1, 1], [1.0, 0.5])
        a, _ = dmd_step(new_pacer_state(100), q)
        assert a.slots == (1,)

    def test_dual_update(self):
        q = make_query([0.5, 0.3], [1.0, 1.0], [1.0])
        _, st = dmd_step(new_pacer_state(10, eta=1.0), q)
        np.testing.assert_allclose(st.dual, [0.9, 0.0])
        np.testing.assert_allclose(st.consumed, [1.0, 0.0])

    def test_second_step_switches(self):
        q = make_query([0.5, 0.3], [1.0, 1.0], [1.0])
        st = new_pacer_state(10, eta=1.0)
        a1, st = dmd_step(st, q)
        a2, st = dmd_step(st, q)
        assert a1.slots == (0,)
        assert a2.slots == (1,)

    def test_eta_zero_is_ctr(self, rng):
        st = new_pacer_state(50, eta=0.0)
        for t in range(50):
            q = make_query(rng.uniform(0.01, 1, 6), rng.uniform(0.5, 2, 6), [1.0, 0.5], query_id=f"q{t}")
            a, st = dmd_step(st, q)
            assert a == rank_by_ctr(q)
        assert np.all(st.dual == 0.0)

    def test_long_horizon_respects_goal(self, rng):
        horizon = 5000
        n = 8
        budgets = rng.uniform(700, 1000, n)  # goals cover the supply
        ctrs = rng.uniform(0.05, 0.5, n)
        items = tuple(Item(f"i{j}", float(ctrs[j]), float(budgets[j])) for j in range(n))
        q = QueryInstance("q", items, (1.0,))
        st = new_pacer_state(horizon, b=1.0)
        for _ in range(horizon):
            _, st = dmd_step(st, q)
        assert np.all(st.consumed <= 1.05 * budgets)


class TestThrottle:
    def test_first_query_full_participation(self):
        q = make_query([0.1, 0.5, 0.3], [1, 1, 1], [1.0, 0.5])
        a, st = throttle_step(new_pacer_state(10), q, RngStream(0, 0))
        assert a.slots == (1, 2)
        assert st.queries_seen == 1

    def test_half_probability(self):
        # item 0 is at twice its pace: p = target * t / consumed = 0.1 * 2 / 0.4 = 0.5
        q = make_query([0.9, 0.1], [1.0, 1.0], [0.4])
        st = new_pacer_state(10)
        _, st = throttle_step(st, q, RngStream(0, 0))
        assert st.consumed[0] == pytest.approx(0.4)
        wins = 0
        for k in range(4000):
            a, _ = throttle_step(st, q, RngStream(1, k))
            wins += a.slots == (0,)
        assert wins / 4000 == pytest.approx(0.5, abs=0.03)

    def test_valid_assignments(self, rng):
        st = new_pacer_state(200)
        stream = RngStream(3, 0)
        for t in range(200):
            q = make_query(rng.uniform(0.01, 1, 5), rng.uniform(0.5, 2, 5), [1.0, 0.5, 0.25], query_id=f"q{t}")
            a, st = throttle_step(st, q, stream)
            assert len(set(a.slots)) == len(a.slots) <= 3
            ctr_rank = [j for j in rank_by_ctr(QueryInstance(q.query_id, q.items, (1.0,) * 5)).slots
                        if j in a.slots]
            assert list(a.slots) == ctr_rank

    def test_large_b_is_ctr(self, rng):
        horizon = 300
        st = new_pacer_state(horizon, b=5.0)
        budgets = np.full(4, 100.0)
        stream = RngStream(4, 0)
        same = 0
        for t in range(horizon):
            q = make_query(rng.uniform(0.01, 1, 4), budgets, [1.0], query_id=f"q{t}")
            a, st = throttle_step(st, q, stream)
            same += a == rank_by_ctr(q)
        assert same / horizon > 0.95


def test_dmd_clicks_below_ctr(rng):
    """Pacing can only cost clicks relative to greedy CTR ranking."""
    horizon = 400
    st = new_pacer_state(horizon)
    acc_d, acc_c = CampaignAccumulator(), CampaignAccumulator()
    budgets = rng.uniform(10, 60, 6)
    for t in range(horizon):
        q = make_query(rng.uniform(0.01, 1, 6), budgets, [1.0, 0.5], query_id=f"q{t}")
        a, st = dmd_step(st, q)
        acc_d = accumulate(acc_d, q, a)
        acc_c = accumulate(acc_c, q, rank_by_ctr(q))
    assert sum(acc_d.expected_clicks.values()) <= sum(acc_c.expected_clicks.values()) + 1e-9
    assert math.isclose(sum(acc_c.impressions.values()), 1.5 * horizon)
