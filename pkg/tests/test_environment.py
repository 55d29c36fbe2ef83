import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwre.environment import (AtomicDistribution, Environment,
                              ExponentialDistribution, StaircaseMu,
                              ThresholdSpec, dist_mean, distribution_from_json,
                              open_subgraph, sample_environment, truncate_at)
from rwre.graphs import build_lattice_ball


@pytest.fixture(scope="module")
def ball():
    return build_lattice_ball(2, 8)


class TestDistributions:
    def test_constant(self):
        d = AtomicDistribution.constant(3.0)
        assert dist_mean(d) == 3.0
        assert d.mass_at_infinity() == 0.0

    def test_two_point_mean_infinite(self):
        d = AtomicDistribution.two_point(1.0, 0.5)
        assert math.isinf(dist_mean(d))

    def test_atoms_mean(self):
        d = AtomicDistribution([(1.0, 0.5), (3.0, 0.5)])
        assert dist_mean(d) == 2.0

    def test_staircase_residual_mean(self):
        mu = StaircaseMu((1.0, 100.0), (0.5, 0.75))
        assert math.isinf(dist_mean(mu.distribution()))
        assert mu.residual_mass == 0.25

    def test_exponential(self):
        d = ExponentialDistribution(2.5)
        assert dist_mean(d) == 2.5
        assert d.mass_at_or_below(2.5) == pytest.approx(1 - math.exp(-1))

    def test_staircase_masses_sum_to_one(self):
        mu = StaircaseMu((1.0, 9.0, 577.0), (0.5, 0.75, 0.875))
        d = mu.distribution()
        assert float(np.sum(d.masses)) == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            StaircaseMu((2.0, 1.0), (0.5, 0.75))  # atoms not increasing
        with pytest.raises(ValueError):
            StaircaseMu((1.0, 2.0), (0.75, 0.5))  # levels not increasing
        with pytest.raises(ValueError):
            StaircaseMu((1.0,), (1.0,))  # no residual left
        with pytest.raises(ValueError):
            AtomicDistribution([(1.0, 0.6), (2.0, 0.6)])  # mass > 1
        with pytest.raises(ValueError):
            AtomicDistribution([(-1.0, 1.0)])

    def test_quantile_orders_atoms(self):
        d = AtomicDistribution([(5.0, 0.25), (1.0, 0.5), (math.inf, 0.25)])
        assert d.quantile(0.1) == 1.0
        assert d.quantile(0.6) == 5.0
        assert math.isinf(d.quantile(0.9))

    @pytest.mark.parametrize("text", [
        '{"kind": "constant", "value": 2.0}',
        '{"kind": "two_point", "value": 1.0, "mass": 0.5}',
        '{"kind": "staircase", "gammas": [1.0, 9.0], "levels": [0.5, 0.75]}',
        '{"kind": "exponential", "mean": 1.5}',
        '{"kind": "atoms", "atoms": [[1.0, 0.5], ["inf", 0.5]]}',
    ])
    def test_json_round_trip(self, text):
        d = distribution_from_json(text)
        again = distribution_from_json(d.to_json())
        assert json.loads(d.to_json()) == json.loads(again.to_json())


class TestSampling:
    def test_constant_everywhere(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(1.0), 5)
        assert np.all(env.resistances == 1.0)

    def test_reproducible(self, ball):
        d = ExponentialDistribution(1.0)
        a = sample_environment(ball, d, 99)
        b = sample_environment(ball, d, 99)
        assert np.array_equal(a.resistances, b.resistances)
        c = sample_environment(ball, d, 100)
        assert not np.array_equal(a.resistances, c.resistances)

    def test_staircase_frequencies_within_3_sigma(self):
        # 10^4 independent draws: one per edge of a large ball
        big = build_lattice_ball(2, 50)
        assert big.n_edges >= 10_000
        mu = StaircaseMu((1.0, 100.0), (0.5, 0.75))
        env = sample_environment(big, mu.distribution(), 1234)
        m = big.n_edges
        for value, mass in [(1.0, 0.5), (100.0, 0.25)]:
            count = int(np.sum(env.resistances == value))
            sigma = math.sqrt(mass * (1 - mass) * m)
            assert abs(count - mass * m) < 3 * sigma
        inf_count = int(np.sum(np.isinf(env.resistances)))
        sigma = math.sqrt(0.25 * 0.75 * m)
        assert abs(inf_count - 0.25 * m) < 3 * sigma

    def test_independent_across_edges(self, ball):
        env = sample_environment(ball, ExponentialDistribution(1.0), 7)
        r = env.resistances
        half = len(r) // 2
        corr = np.corrcoef(r[:half], r[half:2 * half])[0, 1]
        assert abs(corr) < 3.0 / math.sqrt(half)

    def test_finite_positive_enforced(self, ball):
        with pytest.raises(ValueError):
            Environment(ball, np.zeros(ball.n_edges))


class TestTruncation:
    def test_above_cutoff_becomes_infinite(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(5.0), 1)
        t = truncate_at(env, 3.0)
        assert np.all(np.isinf(t.resistances))

    def test_boundary_value_kept(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(3.0), 1)
        t = truncate_at(env, 3.0)
        assert np.all(t.resistances == 3.0)

    def test_infinite_cutoff_is_identity(self, ball):
        env = sample_environment(ball, ExponentialDistribution(1.0), 2)
        t = truncate_at(env, math.inf)
        assert np.array_equal(t.resistances, env.resistances)

    def test_input_untouched(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(5.0), 1)
        truncate_at(env, 1.0)
        assert np.all(env.resistances == 5.0)

    @given(st.floats(0.1, 50.0), st.floats(0.1, 50.0))
    @settings(max_examples=30, deadline=None)
    def test_truncation_lattice(self, gamma_a, gamma_b):
        g = build_lattice_ball(1, 6)
        env = sample_environment(g, ExponentialDistribution(10.0), 3)
        lo, hi = sorted((gamma_a, gamma_b))
        twice = truncate_at(truncate_at(env, hi), lo)
        once = truncate_at(env, lo)
        assert np.array_equal(twice.resistances, once.resistances)

    def test_pointwise_monotone(self, ball):
        env = sample_environment(ball, ExponentialDistribution(3.0), 4)
        t = truncate_at(env, 1.0)
        assert np.all(t.resistances >= env.resistances)


class TestThreshold:
    def test_open_subgraph_all(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(1.0), 1)
        spec = ThresholdSpec.from_cutoff(AtomicDistribution.constant(1.0), 2.0)
        assert len(open_subgraph(env, spec)) == ball.n_edges

    def test_open_subgraph_empty(self, ball):
        env = sample_environment(ball, AtomicDistribution.constant(1.0), 1)
        assert len(open_subgraph(env, 0.5)) == 0

    def test_threshold_mass(self):
        mu = StaircaseMu((1.0, 9.0), (0.5, 0.75))
        spec = ThresholdSpec.from_cutoff(mu.distribution(), 5.0)
        assert spec.p == 0.5
        spec2 = ThresholdSpec.from_cutoff(mu.distribution(), 9.0)
        assert spec2.p == 0.75

    def test_invalid(self):
        with pytest.raises(ValueError):
            ThresholdSpec(Q=-1.0, p=0.5)
        with pytest.raises(ValueError):
            ThresholdSpec(Q=1.0, p=0.0)

    def test_csv_export(self):
        g = build_lattice_ball(1, 1)
        env = sample_environment(g, AtomicDistribution.two_point(1.0, 0.5), 3)
        csv = env.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == "edge_id,u,v,resistance"
        assert len(lines) == 1 + g.n_edges
        assert any(line.endswith("inf") for line in lines[1:]) or \
            all(line.endswith("1.0") for line in lines[1:])
