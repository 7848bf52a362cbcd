import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ota import errors, metrics
from ota.model import CampaignAccumulator, ImpressionDistribution
from ota.solver import budget_matvec

from conftest import pairwise_abs, pairwise_sq


class TestGmd:
    def test_equal_ratios(self):
        assert metrics.gmd_q([0.3, 0.3], [1, 1]) == 0.0

    def test_two_items(self):
        assert metrics.gmd_q([1, 0], [1, 1]) == pytest.approx(pairwise_abs([1, 0], [1, 1]))
        assert metrics.gmd_q([1, 0], [1, 1]) == pytest.approx(0.5)

    def test_proportional_to_budget(self):
        assert metrics.gmd_q([1, 0.5], [2, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(errors.LengthMismatch):
            metrics.gmd_q([1, 0], [1, 1, 1])

    def test_matches_double_sum(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 30))
            a, b = rng.uniform(0, 1, n), rng.lognormal(0, 1, n)
            assert metrics.gmd_q(a, b) == pytest.approx(pairwise_abs(a, b), rel=1e-12, abs=1e-15)

    def test_accepts_distribution(self):
        d = ImpressionDistribution([1.0, 0.0], 1.0)
        assert metrics.gmd_q(d, [1, 1]) == pytest.approx(0.5)


class TestGini:
    def test_two_items(self):
        assert metrics.gini_q([1, 0], [1, 1]) == pytest.approx(0.5)

    def test_proportional_is_zero(self):
        assert metrics.gini_q([0.2, 0.4, 0.8], [1, 2, 4]) == pytest.approx(0.0, abs=1e-15)

    def test_all_zero(self):
        with pytest.raises(errors.DegenerateZeroMean):
            metrics.gini_q([0, 0], [1, 1])

    @pytest.mark.parametrize("n", [2, 3, 5, 10, 50])
    def test_maximum(self, n):
        a = np.zeros(n)
        a[0] = 1.0
        assert metrics.gini_q(a, np.ones(n)) == pytest.approx((n - 1) / n)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.data())
    def test_invariances(self, alpha, data):
        a = np.array(alpha)
        if not a.sum() > 1e-6:
            return
        b = np.array(data.draw(st.lists(st.floats(0.1, 10), min_size=a.size, max_size=a.size)))
        g = metrics.gini_q(a, b)
        assert 0.0 <= g <= (a.size - 1) / a.size + 1e-12
        perm = np.array(data.draw(st.permutations(range(a.size))))
        assert metrics.gini_q(a[perm], b[perm]) == pytest.approx(g, abs=1e-12)
        c = data.draw(st.floats(0.01, 100))
        assert metrics.gini_q(c * a, b) == pytest.approx(g, abs=1e-12)
        mu = np.mean(a / b)
        assert g == pytest.approx(metrics.gmd_q(a, b) / (2 * mu), rel=1e-12)


class TestGq:
    def test_two_items(self):
        assert metrics.g_q([1, 0], [1, 1]) == pytest.approx(0.5)

    def test_three_items(self):
        assert metrics.g_q([1, 0, 0], [1, 1, 1]) == pytest.approx(4 / 9)

    def test_proportional(self):
        assert metrics.g_q([0.25, 0.5, 1.0], [1, 2, 4]) == pytest.approx(0.0, abs=1e-15)

    def test_matches_literal_double_sum(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 30))
            a, b = rng.uniform(0, 1, n), rng.lognormal(0, 1, n)
            assert metrics.g_q(a, b) == pytest.approx(pairwise_sq(a, b), rel=1e-12, abs=1e-15)

    def test_blocked_path(self, rng):
        n = 1300  # spans three row blocks
        a, b = rng.uniform(0, 1, n), rng.lognormal(0, 1, n)
        r = a / b
        direct = ((r[:, None] - r[None, :]) ** 2).sum() / n**2
        assert metrics.g_q(a, b) == pytest.approx(direct, rel=1e-12)

    def test_half_quadratic_form(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            a, b = rng.uniform(0, 1, n), rng.lognormal(0, 1, n)
            q = 0.5 * np.dot(budget_matvec(a, b), a)
            g = metrics.g_q(a, b)
            assert abs(q - g) <= 1e-9 * max(abs(g), 1e-300) or abs(q - g) < 1e-15


class TestEq:
    def test_dot(self):
        assert metrics.e_q([1.0, 0.5], [0.2, 0.4]) == pytest.approx(0.4)

    def test_zero(self):
        assert metrics.e_q([0, 0], [0.2, 0.4]) == 0.0

    def test_unit_ctr_gives_gamma(self):
        a = [0.5, 0.25, 0.75]
        assert metrics.e_q(a, [1, 1, 1]) == pytest.approx(1.5)

    def test_length(self):
        with pytest.raises(errors.LengthMismatch):
            metrics.e_q([1], [0.1, 0.2])


def _acc(imp, budgets, clicks=None, n=1):
    ids = [f"i{j}" for j in range(len(imp))]
    clicks = clicks if clicks is not None else [0.0] * len(imp)
    return CampaignAccumulator(dict(zip(ids, map(float, imp))), dict(zip(ids, map(float, clicks))),
                               dict(zip(ids, map(float, budgets))), n)


class TestHorizon:
    def test_equal_ratios(self):
        assert metrics.horizon_gini(_acc([2, 4, 6], [1, 2, 3])) == pytest.approx(0.0, abs=1e-15)

    def test_two_items(self):
        assert metrics.horizon_gini(_acc([1, 0], [1, 1])) == pytest.approx(0.5)

    def test_scale_homogeneity(self, rng):
        imp, bud = rng.uniform(0, 5, 12), rng.lognormal(0, 1, 12)
        g = metrics.horizon_gini(_acc(imp, bud))
        assert metrics.horizon_gini(_acc(7.5 * imp, 7.5 * bud)) == pytest.approx(g, rel=1e-12)

    def test_matches_display_formula(self, rng):
        imp, bud = rng.uniform(0, 5, 9), rng.lognormal(0, 1, 9)
        r = imp / bud
        n = r.size
        expected = np.abs(r[:, None] - r[None, :]).sum() / (2 * n * r.sum())
        assert metrics.horizon_gini(_acc(imp, bud)) == pytest.approx(expected, rel=1e-12)

    def test_zero_impressions(self):
        with pytest.raises(errors.DegenerateZeroMean):
            metrics.horizon_gini(_acc([0, 0], [1, 1]))

    def test_efficiency(self):
        assert metrics.horizon_efficiency(_acc([1, 0], [1, 1], [0.4, 0.0], 1)) == pytest.approx(0.4)
        assert metrics.horizon_efficiency(_acc([2, 0], [1, 1], [0.8, 0.0], 2)) == pytest.approx(0.4)

    def test_empty_horizon(self):
        with pytest.raises(errors.EmptyHorizon):
            metrics.horizon_efficiency(CampaignAccumulator())

    def test_horizon_metrics_relative(self):
        m = metrics.horizon_metrics(_acc([1, 0], [1, 1], [0.4, 0.0], 1), 0.8)
        assert m.relative_efficiency == pytest.approx(0.5)
        assert m.gini == pytest.approx(0.5)

    def test_query_metrics(self):
        m = metrics.query_metrics([1.0, 0.0], [1, 1], [0.2, 0.4])
        assert (m.e_q, m.g_q, m.gmd_q, m.gini_q) == pytest.approx((0.2, 0.5, 0.5, 0.5))
        assert metrics.query_metrics([0.0, 0.0], [1, 1], [0.2, 0.4]).gini_q is None
