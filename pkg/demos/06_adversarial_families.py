"""The two adversarial families and their closed-form quantities.

Both families sit at a fixed distance from uniform while being nearly
invisible to the oracle queries they are designed against: the planted
subcube keeps every conditional close to fair, the matched pairs keep
every single-coordinate marginal exactly fair.

Run:  python demos/06_adversarial_families.py
"""

import math

import numpy as np

from condtest.adversaries import (
    conditional_subcube_bad,
    conditional_tv_to_uniform,
    default_rho,
    expected_conditional_tv,
    kl_subcube_bad_to_uniform,
    matched_ising_spec,
    random_subcube_bad,
    sample_matched_ising,
    sample_subcube_bad,
    subcube_depth,
    tv_matched_ising_to_uniform,
    tv_subcube_bad_to_uniform,
)
from condtest.models import Pinning

rng = np.random.default_rng(42)

# --- planted subcube -------------------------------------------------------------

n, eps = 64, 1.0
t = subcube_depth(n, eps)
spec = random_subcube_bad(n, eps, rng)
print(f"planted subcube at n={n}, eps={eps}: t={t}, A={spec.A}")
print(f"  KL to uniform: {kl_subcube_bad_to_uniform(n, t):.4f} (>= eps)")
print(f"  TV to uniform: {tv_subcube_bad_to_uniform(n, t):.4f} (tiny: hard to see)")
print("  sample:", "".join(map(str, sample_subcube_bad(spec, rng)))[:32], "...")

small = random_subcube_bad(12, 0.5, rng)
pin = Pinning((0, 1, 2), (1, 0, 1))
free, block = conditional_subcube_bad(small, pin)
print(f"\nconditional given a 3-coordinate pinning (n=12): "
      f"distance to uniform {conditional_tv_to_uniform(small, pin):.4f}")

print("\naveraged conditional distance (the per-query information cap):")
for ell in (0, 8, 32):
    val = expected_conditional_tv(n, eps, ell)
    print(f"  |pinned| = {ell:2d}: {val:.5f}  <= 16 eps / n = {16 * eps / n:.5f}")

# --- matched pairs ----------------------------------------------------------------

print("\nmatched-pair family:")
n2, eps2 = 8, 0.3
rho = default_rho(n2, eps2)
spec2 = matched_ising_spec(n2, eps2, rng=rng)
print(f"  n={n2}, eps={eps2}: calibrated rho={rho}, coupling beta={spec2.beta:.4f}")
print(f"  TV to uniform: {tv_matched_ising_to_uniform(spec2):.4f} (>= eps)")
agree = (1 + math.tanh(spec2.beta)) / 2
print(f"  coordinate conditional given its partner: Ber({agree:.4f})"
      f"  (so each query leaks only {agree - 0.5:.4f})")

m = 20_000
cov = 0.0
u, v = spec2.matching[0]
for _ in range(m):
    x = sample_matched_ising(spec2, rng)
    cov += (1 - 2 * x[u]) * (1 - 2 * x[v])
print(f"  empirical pair covariance: {cov / m:.4f} = tanh(beta) = {math.tanh(spec2.beta):.4f}")

print("\ncoupling sweep at n=8 (smallest multiplier reaching each distance):")
for eps_target in (0.1, 0.25, 0.5):
    rho = default_rho(8, eps_target)
    spec3 = matched_ising_spec(8, eps_target, rho=rho)
    print(f"  eps={eps_target}: rho={rho:>5}  -> TV={tv_matched_ising_to_uniform(spec3):.4f}")
