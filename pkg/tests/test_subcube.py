"""Tests for the subcube-access tester and the KL estimator stack."""

import math

import numpy as np
import pytest

from condtest import models
from condtest.at_tester import ATParameters, make_schedule
from condtest.errors import InvalidRange, UnsupportedSymbol
from condtest.models import (
    ExplicitTable,
    Ising,
    Product,
    SubcubeBad,
    Uniform,
    balance_profile,
    kl_divergence,
    model_table,
)
from condtest.oracles import OracleHandle, OracleMode
from condtest.subcube import (
    ExactPrefixProvider,
    FPRASPrefixProvider,
    entropy_sample_budget,
    estimate_entropy,
    estimate_g,
    estimate_kl_global,
    estimate_kl_small,
    g_sample_budget,
    identity_test_subcube,
    miller_madow,
    tolerant_kl_test,
)
from condtest.testers import SampleStream, SmallDistribution, Verdict


def stream_of(masses, rng):
    return SampleStream.from_distribution(np.asarray(masses, float), rng)


def mixture_of_products(p_low=0.2, p_high=0.8, n=6):
    a = model_table(Product.bernoulli(p_low, n))
    b = model_table(Product.bernoulli(p_high, n))
    return ExplicitTable(n=n, k=2, masses=tuple(0.5 * (a + b)))


class TestProviders:
    def test_exact_prefix_values(self):
        mu = Product(((0.3, 0.7), (0.9, 0.1)))
        provider = ExactPrefixProvider(mu)
        q0 = provider.target(0, ())
        np.testing.assert_allclose(q0.masses, (0.3, 0.7), atol=1e-15)
        q1 = provider.target(1, (0,))
        np.testing.assert_allclose(q1.masses, (0.9, 0.1), atol=1e-15)

    def test_order_validation(self):
        with pytest.raises(InvalidRange):
            ExactPrefixProvider(Uniform(3, 2), order=(0, 1, 1))

    def test_custom_order(self):
        mu = Product(((0.3, 0.7), (0.9, 0.1)))
        provider = ExactPrefixProvider(mu, order=(1, 0))
        q0 = provider.target(0, ())
        np.testing.assert_allclose(q0.masses, (0.9, 0.1), atol=1e-15)

    def test_fpras_respects_accuracy(self):
        mu = Product(((0.25, 0.75),))
        rng = np.random.default_rng(5)
        provider = FPRASPrefixProvider(mu, rng)
        target = provider.target(0, ())
        for _ in range(20):
            q_hat = target.request(0.1, 0.9)
            ratios = q_hat.array() / np.array([0.25, 0.75])
            assert np.all(ratios <= math.exp(0.1) + 1e-12)
            assert np.all(ratios >= math.exp(-0.1) - 1e-12)


class TestSubcubeTester:
    def test_schedule_shared_with_coordinate_path(self):
        mu = Uniform(8, 2)
        h = OracleHandle(mu, OracleMode.SUBCUBE, seed=1)
        rep = identity_test_subcube(mu, h, 1.0, b=0.5, budget_scale=0.05)
        expected = make_schedule(ATParameters(C=1.0, eta=0.5, eps=1.0, n=8, budget_scale=0.05))
        assert rep.schedule == expected

    def test_null_ising_path(self):
        mu = Ising(n=6, edges=tuple((i, i + 1, 0.4) for i in range(5)))
        b = balance_profile(mu, prefix_only=True).b
        accepts = 0
        for t in range(10):
            h = OracleHandle(mu, OracleMode.SUBCUBE, seed=100 + t)
            rep = identity_test_subcube(mu, h, 1.0, b=b)
            accepts += rep.accepted
        assert accepts / 10 >= 2 / 3

    def test_far_subcube_bad(self):
        mu = Uniform(8, 2)
        pi = SubcubeBad(n=8, A=(4,), sigma=(1, 0, 0, 1, 1, 0, 1, 0))
        rejects = 0
        for t in range(10):
            h = OracleHandle(pi, OracleMode.SUBCUBE, seed=200 + t)
            rep = identity_test_subcube(mu, h, 1.0, b=0.5)
            rejects += not rep.accepted
        assert rejects / 10 >= 2 / 3

    def test_mixture_component_far(self):
        mu = mixture_of_products()
        pi = Product.bernoulli(0.2, 6)
        kl = kl_divergence(pi, mu)
        b = balance_profile(mu, prefix_only=True).b
        assert kl >= 0.5
        rejects = 0
        for t in range(8):
            h = OracleHandle(pi, OracleMode.SUBCUBE, seed=300 + t)
            rep = identity_test_subcube(mu, h, 0.5, b=b, budget_scale=0.5)
            rejects += not rep.accepted
        assert rejects / 8 >= 2 / 3

    def test_null_mixture(self):
        mu = mixture_of_products()
        b = balance_profile(mu, prefix_only=True).b
        accepts = 0
        for t in range(8):
            h = OracleHandle(mu, OracleMode.SUBCUBE, seed=400 + t)
            rep = identity_test_subcube(mu, h, 0.5, b=b, budget_scale=0.5)
            accepts += rep.accepted
        assert accepts / 8 >= 2 / 3

    def test_fpras_provider_null_and_far(self):
        mu = Product.bernoulli(0.7, 5)
        b = 0.3
        accepts = rejects = 0
        pi = Product(((0.3, 0.7),) * 4 + ((0.95, 0.05),))
        assert kl_divergence(pi, mu) > 0.75
        for t in range(8):
            rng = np.random.default_rng(500 + t)
            h = OracleHandle(mu, OracleMode.SUBCUBE, seed=500 + t)
            rep = identity_test_subcube(
                mu, h, 0.75, b=b, provider=FPRASPrefixProvider(mu, rng)
            )
            assert rep.params["tester"] == "subcube-approx"
            accepts += rep.accepted
            h2 = OracleHandle(pi, OracleMode.SUBCUBE, seed=600 + t)
            rep2 = identity_test_subcube(
                mu, h2, 0.75, b=b, provider=FPRASPrefixProvider(mu, np.random.default_rng(t))
            )
            rejects += not rep2.accepted
        assert accepts / 8 >= 2 / 3
        assert rejects / 8 >= 2 / 3

    def test_only_subcube_queries_used(self):
        mu = Uniform(6, 2)
        h = OracleHandle(mu, OracleMode.SUBCUBE, seed=7)
        rep = identity_test_subcube(mu, h, 1.0, b=0.5, budget_scale=0.1)
        assert rep.queries["general"] == 0
        assert rep.queries["coordinate"] == 0
        assert rep.queries["subcube"] > 0


class TestEstimateG:
    def test_uniform_constant_summand(self):
        rng = np.random.default_rng(1)
        q = SmallDistribution((0.25,) * 4)
        g = estimate_g(q, stream_of(q.masses, rng), 0.2, b=0.25)
        assert g == pytest.approx(math.log(4), abs=1e-12)

    def test_skewed_expectation(self):
        rng = np.random.default_rng(2)
        q = SmallDistribution((0.5, 0.25, 0.25))
        target = 0.5 * math.log(2) + 0.5 * math.log(4)
        assert target == pytest.approx(1.03972, abs=1e-5)
        vals = [
            estimate_g(q, stream_of(q.masses, rng), 0.2, b=0.25) for _ in range(40)
        ]
        hits = sum(abs(v - target) <= 0.2 for v in vals)
        assert hits / 40 >= 0.75

    def test_budget_formula(self):
        assert g_sample_budget(0.25, 0.2) == 385

    def test_summand_variance_envelope(self):
        # summands live in [0, ln(1/b)], so their variance cannot exceed
        # the squared range; check the empirical variance against it
        rng = np.random.default_rng(3)
        q = SmallDistribution((0.5, 0.25, 0.125, 0.125))
        b = 0.125
        samples = stream_of((0.1, 0.2, 0.3, 0.4), rng).take(20000)
        summands = -np.log(q.array()[samples])
        assert summands.var() <= math.log(1 / b) ** 2

    def test_support_escape(self):
        rng = np.random.default_rng(4)
        q = SmallDistribution((1.0, 0.0))
        with pytest.raises(UnsupportedSymbol):
            estimate_g(q, stream_of((0.5, 0.5), rng), 0.2, b=0.5)


class TestEstimateEntropy:
    def test_uniform(self):
        rng = np.random.default_rng(11)
        for k in (2, 8, 64):
            h = estimate_entropy(stream_of(np.full(k, 1 / k), rng), k, 0.1, 0.1)
            assert abs(h - math.log(k)) <= 0.1

    def test_bernoulli_quarter(self):
        target = -0.25 * math.log(0.25) - 0.75 * math.log(0.75)
        assert target == pytest.approx(0.56234, abs=1e-5)
        rng = np.random.default_rng(12)
        vals = [
            estimate_entropy(stream_of((0.75, 0.25), rng), 2, 0.05, 0.1)
            for _ in range(40)
        ]
        hits = sum(abs(v - target) <= 0.05 for v in vals)
        assert hits / 40 >= 0.8

    def test_point_mass(self):
        rng = np.random.default_rng(13)
        h = estimate_entropy(stream_of((1.0, 0.0), rng), 2, 0.05, 0.1)
        assert h == pytest.approx(0.0, abs=0.05)

    def test_clamped_to_range(self):
        rng = np.random.default_rng(14)
        h = estimate_entropy(stream_of((0.5, 0.5), rng), 2, 3.0, 0.3)
        assert 0.0 <= h <= math.log(2)

    def test_uniform_bias_at_calibration_budget(self):
        """Mean estimator error on uniform stays within half the target."""
        k, eps, delta = 8, 0.1, 0.1
        m = entropy_sample_budget(k, eps, delta)
        rng = np.random.default_rng(15)
        cdf = np.cumsum(np.full(k, 1 / k))
        vals = []
        for _ in range(10_000):
            s = np.searchsorted(cdf, rng.random(m), side="right")
            vals.append(min(max(miller_madow(s, k), 0.0), math.log(k)))
        assert abs(np.mean(vals) - math.log(k)) <= eps / 2

    def test_pluggable_estimator(self):
        rng = np.random.default_rng(16)
        calls = []

        def fake(samples, k):
            calls.append(len(samples))
            return 0.123

        h = estimate_entropy(stream_of((0.5, 0.5), rng), 2, 0.1, 0.1, estimator=fake)
        assert h == pytest.approx(0.123)
        assert calls and calls[0] == entropy_sample_budget(2, 0.1, 0.1)


class TestEstimateKLSmall:
    def test_null_is_near_zero(self):
        rng = np.random.default_rng(21)
        q = SmallDistribution((0.5, 0.5))
        vals = [
            estimate_kl_small(q, stream_of(q.masses, rng), 0.1, b=0.5, k=2)
            for _ in range(40)
        ]
        hits = sum(abs(v) <= 0.1 for v in vals)
        assert hits / 40 >= 2 / 3

    def test_bernoulli_pair(self):
        target = 0.9 * math.log(1.8) + 0.1 * math.log(0.2)
        rng = np.random.default_rng(22)
        q = SmallDistribution((0.5, 0.5))
        vals = [
            estimate_kl_small(q, stream_of((0.1, 0.9), rng), 0.1, b=0.5, k=2)
            for _ in range(40)
        ]
        hits = sum(abs(v - target) <= 0.1 for v in vals)
        assert hits / 40 >= 2 / 3

    def test_skewed_four_symbols(self):
        q = SmallDistribution((0.25,) * 4)
        p = np.array([0.7, 0.1, 0.1, 0.1])
        target = models.kl_between_vectors(p, q.array())
        assert target == pytest.approx(0.44585, abs=1e-5)
        rng = np.random.default_rng(23)
        vals = [
            estimate_kl_small(q, stream_of(p, rng), 0.15, b=0.25, k=4)
            for _ in range(40)
        ]
        hits = sum(abs(v - target) <= 0.15 for v in vals)
        assert hits / 40 >= 2 / 3


class TestEstimateKLGlobal:
    def test_null_within_eps(self):
        mu = Uniform(6, 2)
        hits = 0
        for t in range(10):
            h = OracleHandle(mu, OracleMode.SUBCUBE, seed=700 + t)
            rep = estimate_kl_global(mu, h, 0.3, b=0.5, budget_scale=0.1)
            assert not rep.support_violation
            hits += abs(rep.estimate) <= 0.3
        assert hits / 10 >= 2 / 3

    def test_subcube_bad_fixture(self):
        mu = Uniform(6, 2)
        pi = SubcubeBad(n=6, A=(1, 4), sigma=(0, 1, 1, 0, 0, 1))
        true_kl = kl_divergence(pi, mu)
        assert true_kl == pytest.approx(math.log(2) * 4 / 4, abs=1e-12)
        hits = 0
        for t in range(10):
            h = OracleHandle(pi, OracleMode.SUBCUBE, seed=800 + t)
            rep = estimate_kl_global(mu, h, 0.3, b=0.5, budget_scale=0.1)
            hits += abs(rep.estimate - true_kl) <= 0.3
        assert hits / 10 >= 2 / 3

    def test_product_pair(self):
        mu = Product.bernoulli(0.5, 4)
        pi = Product.bernoulli(0.6, 4)
        true_kl = kl_divergence(pi, mu)
        # 4 * (0.6 ln 1.2 + 0.4 ln 0.8) by direct product additivity
        assert true_kl == pytest.approx(
            4 * (0.6 * math.log(1.2) + 0.4 * math.log(0.8)), abs=1e-12
        )
        assert true_kl == pytest.approx(0.080542, abs=1e-5)
        hits = 0
        for t in range(9):
            h = OracleHandle(pi, OracleMode.SUBCUBE, seed=900 + t)
            rep = estimate_kl_global(mu, h, 0.15, b=0.4, budget_scale=0.08)
            hits += abs(rep.estimate - true_kl) <= 0.15
        assert hits / 9 >= 2 / 3

    def test_support_violation_flagged(self):
        masses = np.zeros(16)
        masses[:8] = 1 / 8
        mu = ExplicitTable(n=4, k=2, masses=tuple(masses))
        pi = Uniform(4, 2)
        flagged = 0
        for t in range(6):
            h = OracleHandle(pi, OracleMode.SUBCUBE, seed=1000 + t)
            rep = estimate_kl_global(mu, h, 0.5, b=0.5, budget_scale=0.2)
            if rep.support_violation:
                assert rep.estimate is None
                flagged += 1
        assert flagged >= 4

    def test_round_summary_recorded(self):
        mu = Uniform(4, 2)
        h = OracleHandle(mu, OracleMode.SUBCUBE, seed=1100)
        rep = estimate_kl_global(mu, h, 0.5, b=0.5, budget_scale=0.05)
        assert set(rep.round_summary) == {"mean", "min", "max", "std"}
        assert rep.rounds >= 1
        assert rep.queries["subcube"] > 0


class TestTolerantTest:
    def test_threshold_split(self):
        mu = Uniform(6, 2)
        pi = SubcubeBad(n=6, A=(0,), sigma=(1, 0, 1, 0, 1, 0))
        true_kl = kl_divergence(pi, mu)  # about 1.73
        h = OracleHandle(pi, OracleMode.SUBCUBE, seed=1200)
        verdict, rep = tolerant_kl_test(mu, h, s=0.5, eps=0.4, b=0.5, budget_scale=0.1)
        assert true_kl >= 0.9
        assert verdict is Verdict.FAR_KL
        h2 = OracleHandle(mu, OracleMode.SUBCUBE, seed=1201)
        verdict2, _ = tolerant_kl_test(mu, h2, s=0.5, eps=0.4, b=0.5, budget_scale=0.1)
        assert verdict2 is Verdict.EQUAL
