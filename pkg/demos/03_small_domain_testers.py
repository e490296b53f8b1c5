"""Finite-alphabet building blocks: flattening, l2 and Bernoulli testers.

Run:  python demos/03_small_domain_testers.py
"""

import math

import numpy as np

from condtest.testers import (
    SampleStream,
    SmallDistribution,
    Verdict,
    amplify,
    bernoulli_kl_test,
    flatten_eta,
    kl_identity_test,
    l2_identity_test,
)

rng = np.random.default_rng(99)

# --- flattening: KL-preserving domain surgery --------------------------------

q = SmallDistribution((0.5, 0.3, 0.2))
p_stream = SampleStream.from_distribution(np.array([0.2, 0.3, 0.5]), rng)
q_flat, p_flat, plan = flatten_eta(q, p_stream, 0.2, rng=rng)
print("flattening (0.5, 0.3, 0.2) at scale 0.2:")
print("  copies per symbol:", tuple(plan.counts))
print("  flattened target:", np.round(q_flat.array(), 4))
print("  all masses now live in [0.1, 0.2]; KL(p'||q') equals KL(p||q) exactly")

# --- the l2 tester distinguishes flat distributions --------------------------

k = 16
uniform = SmallDistribution(np.full(k, 1 / k))
bumped = np.full(k, 1 / k)
bumped[0] += 0.3
bumped[1:] -= 0.3 / (k - 1)


def l2_rate(target_vec, trials=200):
    far = 0
    for _ in range(trials):
        stream = SampleStream.from_distribution(np.asarray(target_vec), rng)
        far += l2_identity_test(uniform, stream, 0.25, rng=rng) is Verdict.FAR_L2
    return far / trials


print("\nl2 tester at threshold 0.25 over uniform(16):")
print("  reject rate when p = q:       ", l2_rate(uniform.array()))
print("  reject rate at distance ~0.31:", l2_rate(bumped))

# --- Bernoulli KL tester: three regimes ---------------------------------------


def bernoulli_rate(q_mean, p_mean, eps, trials=300):
    rejects = 0
    for _ in range(trials):
        stream = SampleStream.from_distribution(np.array([1 - p_mean, p_mean]), rng)
        rejects += bernoulli_kl_test(q_mean, stream, eps) is Verdict.FAR_KL
    return rejects / trials


print("\nBernoulli KL tester:")
print("  q=0.3, p=0.3, eps=0.4 -> reject rate", bernoulli_rate(0.3, 0.3, 0.4))
kl = 0.9 * math.log(3) + 0.1 * math.log(1 / 7)
print(f"  q=0.3, p=0.9 (KL={kl:.3f}), eps=0.5 -> reject rate",
      bernoulli_rate(0.3, 0.9, 0.5))

# --- the general-k KL tester and amplification --------------------------------

target = SmallDistribution((0.4, 0.3, 0.2, 0.1))
point = np.array([0.0, 0.0, 1.0, 0.0])
print("\ngeneral-domain KL tester (eps = 1):")
for name, vec in (("p = q", target.array()), ("point mass", point)):
    stream = SampleStream.from_distribution(vec, rng)
    verdict = kl_identity_test(target, stream, 1.0, rng=rng)
    print(f"  {name:10s} -> {verdict.value}  ({stream.consumed} samples)")

print("\namplified to failure 1e-3 by majority vote:")
stream_factory = lambda: SampleStream.from_distribution(point, rng)
verdict = amplify(lambda: kl_identity_test(target, stream_factory(), 1.0, rng=rng), 1e-3)
print("  point mass ->", verdict.value)
