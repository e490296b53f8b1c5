"""Models, exact divergences, and the entropy identities behind the testers.

Run:  python demos/01_models_and_divergences.py
"""

import math

import numpy as np

from condtest.models import (
    Ising,
    Product,
    SubcubeBad,
    Uniform,
    balance_profile,
    chain_rule_decomposition,
    conditional_marginal,
    dobrushin_constant,
    dobrushin_influence_matrix,
    kl_divergence,
    mass,
    Pinning,
    tv_distance,
    verify_tensorization,
)

# --- point masses ----------------------------------------------------------

uniform = Uniform(3, 2)
print("uniform n=3:  mass(0,1,0) =", mass(uniform, (0, 1, 0)), "(expect 1/8)")

coin = Product.bernoulli(0.3, 3)
print("Ber(0.3)^3:   mass(0,0,1) =", round(mass(coin, (0, 0, 1)), 6), "(expect 0.147)")

edge = Ising(n=2, edges=((0, 1, 0.5),))
print("one edge b=0.5: mass(+,+) =", round(mass(edge, (0, 0)), 6), "(expect ~0.3655)")

# conditional of one endpoint given the other pinned to +1: (1 + tanh b)/2
vec = conditional_marginal(edge, 0, Pinning((1,), (0,)))
print("conditional P(+|+) =", round(vec[0], 6), "= (1+tanh 0.5)/2 =",
      round((1 + math.tanh(0.5)) / 2, 6))

# --- divergences -----------------------------------------------------------

planted = SubcubeBad(n=10, A=(0, 1, 2), sigma=(1,) * 10)
u10 = Uniform(10, 2)
print("\nplanted subcube, n=10, t=3:")
print("  KL to uniform  =", round(kl_divergence(planted, u10), 6),
      "= ln2 * 7/8 =", round(math.log(2) * 7 / 8, 6))
print("  TV to uniform  =", round(tv_distance(planted, u10), 6),
      "(small TV, large KL is the whole point of this family)")

# --- balance and tensorization ---------------------------------------------

prof = balance_profile(coin)
print("\nBer(0.3)^3 balance: eta =", prof.eta, " b =", prof.b)

rng = np.random.default_rng(7)
w = rng.gamma(1.0, 1.0, size=8)
from condtest.models import ExplicitTable  # noqa: E402

pi = ExplicitTable(n=3, k=2, masses=tuple(w / w.sum()))
chk = verify_tensorization(coin, pi, C=1.0)
print("tensorization at C=1 for a product target: lhs =",
      round(chk.lhs, 6), "<= rhs =", round(chk.rhs, 6), "->", chk.holds)

terms = chain_rule_decomposition(coin, pi)
print("prefix decomposition terms:", np.round(terms, 6),
      "sum =", round(terms.sum(), 6), "= KL =", round(kl_divergence(pi, coin), 6))

# --- Dobrushin route to a tensorization constant -----------------------------

chain = Ising(n=4, edges=tuple((i, i + 1, 0.2) for i in range(3)))
A = dobrushin_influence_matrix(chain)
norm = float(np.linalg.norm(A, 2))
b = balance_profile(chain).b
print("\nweakly coupled chain: influence norm =", round(norm, 4))
if norm < 1:
    delta = 1 - norm
    print("  C = 1/(b delta^2) =", round(dobrushin_constant(b, delta), 3),
          "with b =", round(b, 4))
