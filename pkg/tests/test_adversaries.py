"""Closed-form adversary families checked against full enumeration."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from condtest import adversaries as adv
from condtest import models
from condtest.errors import InfeasiblePinning, InvalidRange, ZeroProbabilityPinning
from condtest.models import MatchedIsing, Pinning, SubcubeBad, Uniform

CHI2_ALPHA = 1e-4


def conditional_by_enumeration(spec, pin):
    """Independent route: slice and renormalize the full table."""
    return models._conditional_block_enumerate(spec, pin, tuple(
        j for j in range(spec.n) if j not in set(pin.domain)
    ))


class TestSubcubeDepth:
    def test_formula(self):
        assert adv.subcube_depth(64, 1.0) == 3
        assert adv.subcube_depth(16, 1.0) == 1
        assert adv.subcube_depth(10, 0.5) == math.ceil(math.log2(20)) - 3

    def test_guard(self):
        with pytest.raises(InvalidRange):
            adv.subcube_depth(8, 1.0)  # n/eps < 16


class TestSubcubeBadSampling:
    def test_planted_point_mass(self):
        # Pr(x = sigma) is exactly 2^-t: the planted branch fires iff the
        # A-coordinates hit sigma_A, and no other branch can output sigma.
        spec = SubcubeBad(n=8, A=(1, 5), sigma=(0, 1, 1, 0, 0, 1, 1, 0))
        table = models.model_table(spec)
        sigma_idx = models.config_to_index(spec.sigma, 2)
        assert table[sigma_idx] == pytest.approx(2.0 ** -2, abs=1e-15)

    def test_off_plant_mass_is_uniform(self):
        spec = SubcubeBad(n=8, A=(0, 2), sigma=(1,) * 8)
        for x in [(0,) * 8, (1, 0, 0, 1, 1, 1, 1, 1), (0, 1, 1, 1, 1, 1, 1, 1)]:
            assert models.mass(spec, x) == pytest.approx(2.0 ** -8, abs=1e-15)

    def test_sampler_chi2_goodness_of_fit(self):
        spec = SubcubeBad(n=6, A=(0, 4), sigma=(1, 0, 0, 1, 1, 0))
        rng = np.random.default_rng(404)
        m = 100_000
        counts = np.zeros(64, dtype=int)
        for _ in range(m):
            counts[models.config_to_index(adv.sample_subcube_bad(spec, rng), 2)] += 1
        table = models.model_table(spec)
        support = table > 0
        assert counts[~support].sum() == 0
        _, pvalue = stats.chisquare(counts[support], table[support] * m)
        assert pvalue > CHI2_ALPHA

    def test_empirical_sigma_mass_half_at_t1(self):
        spec = SubcubeBad(n=8, A=(3,), sigma=(0, 1, 0, 1, 1, 0, 0, 1))
        rng = np.random.default_rng(7)
        m = 100_000
        hits = sum(adv.sample_subcube_bad(spec, rng) == spec.sigma for _ in range(m))
        sd = math.sqrt(0.5 * 0.5 / m)
        assert abs(hits / m - 0.5) <= 3.5 * sd


class TestSubcubeBadConditionals:
    def cases_grid(self):
        rng = np.random.default_rng(99)
        grid = []
        for n in (5, 7, 10):
            for t in (1, 2, 3):
                if t > n - 1:
                    continue
                A = tuple(sorted(rng.choice(n, size=t, replace=False).tolist()))
                sigma = tuple(int(b) for b in rng.integers(0, 2, size=n))
                spec = SubcubeBad(n=n, A=A, sigma=sigma)
                for ell in (0, 1, 2, n - 2):
                    dom = tuple(sorted(rng.choice(n, size=ell, replace=False).tolist()))
                    for vals in itertools.product((0, 1), repeat=min(ell, 4)):
                        if ell > 4:
                            vals = vals + tuple(int(b) for b in rng.integers(0, 2, size=ell - 4))
                        grid.append((spec, Pinning(dom, vals)))
        return grid

    def test_closed_form_matches_enumeration(self):
        checked = infeasible = 0
        for spec, pin in self.cases_grid():
            try:
                free, block = adv.conditional_subcube_bad(spec, pin)
            except InfeasiblePinning:
                with pytest.raises(ZeroProbabilityPinning):
                    conditional_by_enumeration(spec, pin)
                infeasible += 1
                continue
            free_ref, ref = conditional_by_enumeration(spec, pin)
            assert free == free_ref
            np.testing.assert_allclose(block, ref, atol=1e-12)
            checked += 1
        assert checked > 50
        assert infeasible > 0  # the grid must exercise the impossible shape

    def test_tv_formulas_match_enumeration(self):
        for spec, pin in self.cases_grid():
            got = adv.conditional_tv_to_uniform(spec, pin)
            try:
                _, block = adv.conditional_subcube_bad(spec, pin)
            except InfeasiblePinning:
                assert got == pytest.approx(1.0, abs=1e-12)
                continue
            ref = 0.5 * np.abs(block - 1.0 / block.size).sum()
            assert got == pytest.approx(ref, abs=1e-12)

    def test_case1_uniform(self):
        spec = SubcubeBad(n=8, A=(0, 1), sigma=(1, 1, 0, 0, 0, 0, 0, 0))
        pin = Pinning((0,), (0,))  # contradicts sigma on A
        assert adv.conditional_tv_to_uniform(spec, pin) == 0.0

    def test_case2_formula(self):
        spec = SubcubeBad(n=8, A=(0, 1), sigma=(1, 1, 0, 0, 0, 0, 0, 0))
        pin = Pinning((0, 2), (1, 1))  # agrees on A-overlap, differs off A
        t, j = 2, 1
        assert adv.conditional_tv_to_uniform(spec, pin) == pytest.approx(
            2.0 ** -(t - j), abs=1e-15
        )

    def test_case3_formula(self):
        spec = SubcubeBad(n=8, A=(0, 1), sigma=(1, 1, 0, 0, 0, 0, 0, 0))
        pin = Pinning((0, 2), (1, 0))  # agrees with sigma everywhere pinned
        t, ell, j = 2, 2, 1
        expected = 2.0 ** ell / (2 ** t + 2 ** ell - 2 ** j) - 2.0 ** -(8 - ell)
        assert adv.conditional_tv_to_uniform(spec, pin) == pytest.approx(expected, abs=1e-15)


class TestExpectedConditionalTV:
    def test_matches_brute_force_n10(self):
        n, eps = 10, 1.0
        t = adv.subcube_depth(n, eps)
        lam = (0, 3, 7)
        tau = Pinning(lam, (1, 0, 1))
        total = 0.0
        count = 0
        for A in itertools.combinations(range(n), t):
            for sigma_bits in itertools.product((0, 1), repeat=n):
                spec = SubcubeBad(n=n, A=A, sigma=sigma_bits)
                try:
                    _, block = adv.conditional_subcube_bad(spec, tau)
                    tv = 0.5 * np.abs(block - 1.0 / block.size).sum()
                except InfeasiblePinning:
                    tv = 1.0
                total += tv
                count += 1
        brute = total / count
        assert adv.expected_conditional_tv(n, eps, lam) == pytest.approx(brute, abs=1e-12)

    def test_bound_grid(self):
        for n in (16, 32, 64):
            for eps in (0.25, 0.5, 1.0):
                if n / eps < 16:
                    continue
                for ell in sorted({0, 1, n // 2, n}):
                    val = adv.expected_conditional_tv(n, eps, ell)
                    assert val <= 16 * eps / n + 1e-12

    def test_empty_pinning(self):
        val = adv.expected_conditional_tv(64, 1.0, 0)
        assert 0 < val <= 16 / 64


class TestMatchedIsing:
    def test_beta_zero_is_uniform(self):
        spec = MatchedIsing(n=4, matching=((0, 1), (2, 3)), beta=0.0)
        assert models.tv_distance(spec, Uniform(4, 2)) == pytest.approx(0.0, abs=1e-15)
        assert adv.tv_matched_ising_to_uniform(spec) == pytest.approx(0.0, abs=1e-15)

    def test_single_coordinate_marginals_exactly_uniform(self):
        spec = MatchedIsing(n=7, matching=((0, 6), (1, 2), (3, 5)), beta=0.9)
        table = models.model_table(spec).reshape((2,) * 7)
        for i in range(7):
            axes = tuple(a for a in range(7) if a != i)
            np.testing.assert_allclose(table.sum(axis=axes), [0.5, 0.5], atol=1e-14)

    def test_pair_covariance_is_tanh_beta(self):
        beta = 0.45
        spec = MatchedIsing(n=4, matching=((0, 2), (1, 3)), beta=beta)
        table = models.model_table(spec)
        cov = 0.0
        for idx, p in enumerate(table):
            x = models.index_to_config(idx, 4, 2)
            cov += p * (1 - 2 * x[0]) * (1 - 2 * x[2])
        assert cov == pytest.approx(math.tanh(beta), abs=1e-13)

    def test_sampler_matches_table(self):
        spec = MatchedIsing(n=6, matching=((0, 1), (2, 3), (4, 5)), beta=0.7)
        rng = np.random.default_rng(2024)
        m = 100_000
        counts = np.zeros(64, dtype=int)
        for _ in range(m):
            counts[models.config_to_index(adv.sample_matched_ising(spec, rng), 2)] += 1
        _, pvalue = stats.chisquare(counts, models.model_table(spec) * m)
        assert pvalue > CHI2_ALPHA

    def test_empirical_pair_covariance(self):
        beta = 0.6
        spec = MatchedIsing(n=2, matching=((0, 1),), beta=beta)
        rng = np.random.default_rng(8)
        m = 100_000
        acc = 0
        for _ in range(m):
            x = adv.sample_matched_ising(spec, rng)
            acc += (1 - 2 * x[0]) * (1 - 2 * x[1])
        sd = math.sqrt((1 - math.tanh(beta) ** 2) / m)
        assert abs(acc / m - math.tanh(beta)) <= 4 * sd

    def test_coordinate_conditional_closed_form(self):
        beta = -0.8
        spec = MatchedIsing(n=4, matching=((0, 3), (1, 2)), beta=beta)
        # enumeration route through the model layer
        pin = Pinning.all_but((0, 1, 0, 0), 0)  # partner 3 pinned to symbol 0
        vec = models.conditional_marginal(spec, 0, pin)
        assert vec[0] == pytest.approx((1 + math.tanh(beta)) / 2, abs=1e-14)
        assert adv.coordinate_conditional_matched(spec, 0) == pytest.approx(
            (1 + math.tanh(beta)) / 2, abs=1e-15
        )

    def test_tv_closed_form_matches_enumeration(self):
        for n, beta in [(2, 0.7), (4, 1.1), (6, 0.3), (7, 0.9), (10, 0.05)]:
            matching = tuple((i, i + 1) for i in range(0, n - 1, 2))
            spec = MatchedIsing(n=n, matching=matching, beta=beta)
            ref = models.tv_distance(spec, Uniform(n, 2))
            assert adv.tv_matched_ising_to_uniform(spec) == pytest.approx(ref, abs=1e-12)

    def test_n2_half_tanh(self):
        spec = MatchedIsing(n=2, matching=((0, 1),), beta=1.3)
        assert adv.tv_matched_ising_to_uniform(spec) == pytest.approx(
            0.5 * math.tanh(1.3), abs=1e-14
        )

    def test_default_rho_sweep(self):
        rho = adv.default_rho(8, 0.3)
        spec = adv.matched_ising_spec(8, 0.3, rho=rho)
        assert adv.tv_matched_ising_to_uniform(spec) >= 0.3
        if rho > 1.0:
            weaker = adv.matched_ising_spec(8, 0.3, rho=rho / 2)
            assert adv.tv_matched_ising_to_uniform(weaker) < 0.3

    def test_random_matching_covers(self):
        rng = np.random.default_rng(3)
        for n in (4, 7, 12):
            pairs = adv.random_matching(n, rng)
            used = [c for p in pairs for c in p]
            assert len(used) == len(set(used)) == (n if n % 2 == 0 else n - 1)
