import math

import numpy as np
import pytest

from rwre import rng
from rwre.environment import StaircaseMu, sample_environment
from rwre.graphs import FiniteGraph, GraphWithSink, build_lattice_ball
from rwre.construction import (NSearchExhausted, SearchConfig, build_staircase,
                               choose_N, corrupt_level, extend_mu,
                               g_trend_consistent, gamma_for_policy,
                               next_gamma, verify_recurrence_bound)

from oracles import return_probability_by


@pytest.fixture(scope="module")
def config():
    return SearchConfig(trials=1500, max_steps=1 << 13)


@pytest.fixture(scope="module")
def z1_report(config):
    g = build_lattice_ball(1, 1024)
    report = build_staircase(g, g.root, (0.5, 0.75, 0.875), 3, config,
                             seed=2027)
    return g, report


class TestNextGamma:
    def test_examples(self):
        assert next_gamma(10, 4, 1) == 81
        assert next_gamma(1, 1, 1) == 3
        assert next_gamma(25, 4, 81) == 16201

    def test_non_integer_gamma(self):
        assert next_gamma(1, 1, 1.5) == 4  # smallest integer above 3.0

    def test_positive_required(self):
        with pytest.raises(ValueError):
            next_gamma(0, 1, 1)

    def test_policies(self):
        # choosing gamma_2 (k_next = 2): both policies coincide
        assert gamma_for_policy("minimal", 2, 10, 4, 1) == 81
        assert gamma_for_policy("dyadic", 2, 10, 4, 1) == 81
        # deeper levels: dyadic scales by 2**(k_next - 1)
        assert gamma_for_policy("minimal", 3, 10, 4, 1) == 81
        assert gamma_for_policy("dyadic", 3, 10, 4, 1) == 161
        with pytest.raises(ValueError):
            gamma_for_policy("bogus", 2, 1, 1, 1)


class TestExtendMu:
    def test_displayed_update(self):
        mu1 = StaircaseMu((1.0,), (0.5,))
        mu2 = extend_mu(mu1, 81.0, 0.75)
        assert mu2.gammas == (1.0, 81.0)
        assert mu2.masses() == (0.5, 0.25)
        assert mu2.residual_mass == 0.25

    def test_equal_p_rejected(self):
        mu1 = StaircaseMu((1.0,), (0.5,))
        with pytest.raises(ValueError):
            extend_mu(mu1, 81.0, 0.5)

    def test_atom_must_grow(self):
        mu1 = StaircaseMu((5.0,), (0.5,))
        with pytest.raises(ValueError):
            extend_mu(mu1, 5.0, 0.75)

    def test_masses_telescope(self):
        mu = StaircaseMu((1.0,), (0.5,))
        for gamma, p in ((10.0, 0.75), (100.0, 0.875), (1000.0, 0.9375)):
            mu = extend_mu(mu, gamma, p)
        assert mu.masses() == (0.5, 0.25, 0.125, 0.0625)
        assert sum(mu.masses()) + mu.residual_mass == 1.0


class TestChooseN:
    def test_vacuous_target(self, config):
        g = build_lattice_ball(1, 4)
        res = choose_N(g, StaircaseMu((1.0,), (0.5,)).distribution(),
                       g.root, 1.0, config, seed=1)
        assert res.N == 0 and res.vacuous

    def test_single_edge_exhausts(self):
        g = GraphWithSink(FiniteGraph(2, np.array([[0, 1]])), 0, 1, 1)
        cfg = SearchConfig(trials=200, max_steps=64)
        with pytest.raises(NSearchExhausted) as info:
            choose_N(g, StaircaseMu((1.0,), (0.5,)).distribution(),
                     0, 0.25, cfg, seed=3)
        assert info.value.probes  # the non-termination report carries data
        assert info.value.max_steps == 64

    def test_z1_example_bound_and_oracle(self, config):
        g = build_lattice_ball(1, 6)
        mu1 = StaircaseMu((1.0,), (0.5,))
        res = choose_N(g, mu1.distribution(), g.root, 0.5, config, seed=4)
        assert 0 < res.N <= 64
        # exact check of the guarantee at the original target: enumerate all
        # environments of the 8-edge radius-3 ball and integrate the matrix
        # oracle; P(not isolated, no return by N) must be below the target
        g3 = build_lattice_ball(1, 3)
        res3 = choose_N(g3, mu1.distribution(), g3.root, 0.5, config, seed=5)
        m = g3.n_edges
        total_fail = 0.0
        for mask in range(2 ** m):
            r = np.array([1.0 if mask >> k & 1 else math.inf
                          for k in range(m)])
            from rwre.environment import Environment
            env = Environment(g3, r)
            prob = 0.5 ** m
            indptr, eids, _ = g3.incidence()
            inc = eids[indptr[g3.root]:indptr[g3.root + 1]]
            if all(math.isinf(r[e]) for e in inc):
                continue
            total_fail += prob * (1.0 - return_probability_by(
                env, g3.root, res3.N))
        assert total_fail <= 0.5

    def test_search_trace_recorded(self, config):
        g = build_lattice_ball(1, 64)
        res = choose_N(g, StaircaseMu((1.0,), (0.5,)).distribution(),
                       g.root, 0.5, config, seed=6)
        ns = [p["N"] for p in res.probes]
        assert 0 in ns and res.N in ns
        assert res.upper_bound <= res.threshold


class TestBuildStaircase:
    def test_level_one_matches_direct_choose_n(self, config):
        g = build_lattice_ball(1, 256)
        report = build_staircase(g, g.root, (0.5,), 1, config, seed=99)
        direct = choose_N(g, StaircaseMu((1.0,), (0.5,)).distribution(),
                          g.root, 0.5, config, seed=rng.mix64(99, 1))
        state = report.state(1)
        assert state.gamma_k == 1
        assert state.N_k == direct.N
        assert state.D_k == 2

    def test_p_sequence_validation(self, config):
        g = build_lattice_ball(1, 8)
        with pytest.raises(ValueError):
            build_staircase(g, g.root, (0.75, 0.5), 2, config, seed=1)
        with pytest.raises(ValueError):
            build_staircase(g, g.root, (0.5, 1.5), 2, config, seed=1)
        with pytest.raises(ValueError):
            build_staircase(g, g.root, (0.5,), 2, config, seed=1)

    def test_gamma_recursion_invariant(self, z1_report):
        _, report = z1_report
        for prev, cur in zip(report.states, report.states[1:]):
            assert cur.gamma_k > 2 * prev.N_k * prev.D_k * prev.gamma_k
            # dyadic policy additionally enforces the 2**-k crossing bound
            assert prev.N_k * prev.D_k * prev.gamma_k / cur.gamma_k \
                <= 2.0 ** (-prev.k)

    def test_mu_matches_levels(self, z1_report):
        _, report = z1_report
        assert report.mu.levels == (0.5, 0.75, 0.875)
        assert report.mu.gammas[0] == 1.0
        assert report.mu.residual_mass == 0.125

    def test_deterministic(self, config):
        g = build_lattice_ball(1, 256)
        a = build_staircase(g, g.root, (0.5, 0.75), 2, config, seed=7)
        b = build_staircase(g, g.root, (0.5, 0.75), 2, config, seed=7)
        assert a.to_json_dict() == b.to_json_dict()

    def test_exhaustion_carries_level(self):
        g = GraphWithSink(FiniteGraph(2, np.array([[0, 1]])), 0, 1, 1)
        cfg = SearchConfig(trials=100, max_steps=32)
        with pytest.raises(NSearchExhausted) as info:
            build_staircase(g, 0, (0.5,), 1, cfg, seed=2)
        assert info.value.level == 1


class TestVerify:
    def test_levels_pass(self, z1_report):
        g, report = z1_report
        reports = []
        for k in (1, 2, 3):
            vr = verify_recurrence_bound(g, report.mu, k, report, 4000,
                                         rng.mix64(11, k))
            assert vr.passed, vr.to_json_dict()
            assert vr.containment_violations == 0
            reports.append(vr)
        assert g_trend_consistent(reports)

    def test_top_level_b_is_empty(self, z1_report):
        g, report = z1_report
        vr = verify_recurrence_bound(g, report.mu, 3, report, 2000, 55)
        assert vr.check("B").count == 0
        assert vr.check("B").bound == 0.0
        assert vr.check("B").passed

    def test_negative_control_fails(self, z1_report):
        g, report = z1_report
        bad = corrupt_level(report, 1, 1)
        vr = verify_recurrence_bound(g, report.mu, 1, bad, 4000, 77)
        assert not vr.passed
        assert not vr.check("C_minus_A").passed

    def test_component_bounds_recorded(self, z1_report):
        g, report = z1_report
        vr = verify_recurrence_bound(g, report.mu, 2, report, 4000, 88)
        s = report.state(2)
        assert vr.check("A").bound == 1 - s.p_k
        assert vr.check("G").bound == (1 - s.p_k) + 2.0 ** (1 - 2)
        expected_b = s.N_k * s.D_k * s.gamma_k / report.gamma_next(2)
        assert vr.check("B").bound == pytest.approx(expected_b)

    def test_threads_invariant(self, z1_report):
        g, report = z1_report
        a = verify_recurrence_bound(g, report.mu, 1, report, 2000, 5,
                                    threads=1)
        b = verify_recurrence_bound(g, report.mu, 1, report, 2000, 5,
                                    threads=4)
        assert a.to_json_dict() == b.to_json_dict()

    def test_truncated_law_equals_staircase_level(self, z1_report):
        # distribution sanity behind the coupling: truncating the final mu
        # at gamma_k reproduces mu_k exactly, edge for edge
        g, report = z1_report
        from rwre.environment import truncate_at
        for k in (1, 2):
            state = report.state(k)
            env = sample_environment(g, report.mu.distribution(), 123)
            tr = truncate_at(env, float(state.gamma_k))
            env_k = sample_environment(g, state.mu_k.distribution(), 123)
            assert np.array_equal(tr.resistances, env_k.resistances)
