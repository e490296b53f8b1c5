"""High-dimensional identity testing with coordinate plus general access.

The driver turns one global question (is the hidden distribution equal to
the visible one, or eps-far in KL?) into many single-coordinate questions,
using the visible model's tensorization certificate.

Run:  python demos/04_coordinate_identity_testing.py
"""

import math
import time

from condtest.at_tester import (
    coordinate_query_budget,
    identity_test_coordinate,
    identity_test_tv,
    make_schedule,
    ATParameters,
)
from condtest.models import SubcubeBad, Uniform, kl_divergence
from condtest.oracles import OracleHandle, OracleMode

n, eps = 8, 1.0
mu = Uniform(n, 2)

params = ATParameters(C=1.0, eta=0.5, eps=eps, n=n)
schedule = make_schedule(params)
print(f"schedule for n={n}, eps={eps}: levels 0..{schedule.L}")
print("  per-level distances:", [round(e, 4) for e in schedule.eps_levels])
print("  per-level pair counts:", list(schedule.t_levels))
print("  sub-test failure after amplification: 1/n^3 =", 1 / n**3)

# --- null battery -------------------------------------------------------------

t0 = time.time()
accepts, queries = 0, 0
trials = 30
for t in range(trials):
    handle = OracleHandle(mu, OracleMode.COORDINATE, seed=1000 + t)
    report = identity_test_coordinate(mu, handle, eps, C=1.0, eta=0.5)
    accepts += report.accepted
    queries = max(queries, sum(report.queries.values()))
print(f"\nnull battery:  {accepts}/{trials} accept  ({time.time()-t0:.1f}s)")
print(f"  max queries per trial {queries:,}  "
      f"(envelope {coordinate_query_budget(n, eps, 1.0, 0.5):,.0f})")

# --- far battery: the planted-subcube family ----------------------------------

pi = SubcubeBad(n=n, A=(2,), sigma=(0, 1, 1, 0, 1, 0, 0, 1))
print(f"\nhidden planted subcube: KL to uniform = {kl_divergence(pi, mu):.3f}"
      f" (= 7 ln2 / 2 = {7 * math.log(2) / 2:.3f})")
t0 = time.time()
rejects = 0
for t in range(trials):
    handle = OracleHandle(pi, OracleMode.COORDINATE, seed=2000 + t)
    report = identity_test_coordinate(mu, handle, eps, C=1.0, eta=0.5)
    rejects += not report.accepted
print(f"far battery:   {rejects}/{trials} reject  ({time.time()-t0:.1f}s)")

# --- the TV wrapper handles support escapes ------------------------------------

print("\ndistance in TV instead of KL (two-stage wrapper):")
handle = OracleHandle(pi, OracleMode.COORDINATE, seed=5)
report = identity_test_tv(mu, handle, 0.4, C=1.0, eta=0.5)
print("  planted subcube at eps_tv=0.4 ->", report.verdict.value)
handle = OracleHandle(mu, OracleMode.COORDINATE, seed=6)
report = identity_test_tv(mu, handle, 0.4, C=1.0, eta=0.5)
print("  hidden equals visible        ->", report.verdict.value)
