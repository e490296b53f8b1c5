"""Adversarial distribution families used as worst-case test fixtures.

Two families live here.  ``SubcubeBad`` plants a low-probability subcube
that collapses to a single point, keeping the distribution far from
uniform in KL while staying close in TV.  ``MatchedIsing`` couples
disjoint coordinate pairs with a weak interaction, staying far in TV while
individual coordinate marginals remain exactly uniform.

Closed-form conditionals and distances are implemented directly from the
case analysis; the test suite cross-checks every formula against full
enumeration of the corresponding model.
"""

from __future__ import annotations

import math

import numpy as np

from . import constants
from .errors import InfeasiblePinning, InvalidRange, ScaleGuardExceeded
from .models import (
    MatchedIsing,
    Pinning,
    STATE_LIMIT,
    SubcubeBad,
    config_to_index,
)


# ---------------------------------------------------------------------------
# planted-subcube family


def subcube_depth(n: int, eps: float) -> int:
    """Planted-set size t = ceil(log2(n/eps)) - 3, rejected unless 1 <= t <= n-1."""
    if eps <= 0:
        raise InvalidRange("eps must be positive")
    t = math.ceil(math.log2(n / eps)) - 3
    if t < 1:
        raise InvalidRange(f"n/eps = {n / eps:.3g} gives t = {t}; need n/eps > 8 for t >= 1")
    if t > n - 1:
        raise InvalidRange("t would collapse the distribution to a point mass")
    return t


def random_subcube_bad(n: int, eps: float, rng: np.random.Generator) -> SubcubeBad:
    """Uniformly random family member at the depth implied by (n, eps)."""
    t = subcube_depth(n, eps)
    A = tuple(sorted(rng.choice(n, size=t, replace=False).tolist()))
    sigma = tuple(int(b) for b in rng.integers(0, 2, size=n))
    return SubcubeBad(n=n, A=A, sigma=sigma)


def sample_subcube_bad(spec: SubcubeBad, rng: np.random.Generator) -> tuple:
    """One draw: A-coordinates uniform; hitting sigma_A forces x = sigma."""
    n = spec.n
    x = rng.integers(0, 2, size=n)
    if all(int(x[a]) == spec.sigma[a] for a in spec.A):
        return tuple(spec.sigma)
    return tuple(int(v) for v in x)


def kl_subcube_bad_to_uniform(n: int, t: int) -> float:
    """KL(pi_{A,sigma} || uniform) = ln2 * (n - t) / 2^t, any (A, sigma)."""
    if not 1 <= t <= n - 1:
        raise InvalidRange("need 1 <= t <= n-1")
    return math.log(2.0) * (n - t) / 2 ** t


def tv_subcube_bad_to_uniform(n: int, t: int) -> float:
    """TV to uniform: the planted point gains 2^-t - 2^-n, the block loses it."""
    if not 1 <= t <= n - 1:
        raise InvalidRange("need 1 <= t <= n-1")
    return 2.0 ** -t * (1.0 - 2.0 ** -(n - t))


def _case_of(spec: SubcubeBad, pin: Pinning) -> int:
    """Case 1: pin contradicts sigma on A; 2: matches on A, differs off A;
    3: matches sigma everywhere on its domain."""
    pinned = pin.as_dict()
    a_dom = [j for j in pin.domain if j in set(spec.A)]
    if any(pinned[j] != spec.sigma[j] for j in a_dom):
        return 1
    if any(pinned[j] != spec.sigma[j] for j in pin.domain):
        return 2
    return 3


def conditional_subcube_bad(spec: SubcubeBad, pin: Pinning):
    """Closed-form conditional over the free coordinates given the pinning.

    Returns ``(free, block)`` exactly like ``models.conditional_block``.
    Raises InfeasiblePinning when the pinning has probability zero, which
    happens exactly in the case-2 shape with A fully pinned.
    """
    n, t = spec.n, spec.t
    dom = set(pin.domain)
    free = tuple(j for j in range(n) if j not in dom)
    F = len(free)
    if 2 ** F > STATE_LIMIT:
        raise ScaleGuardExceeded(f"conditional block of 2^{F} states exceeds the guard")
    ell = len(pin)
    j_overlap = sum(1 for a in spec.A if a in dom)
    case = _case_of(spec, pin)
    size = 2 ** F

    if case == 1:
        return free, np.full(size, 1.0 / size)

    free_a = [f for f in free if f in set(spec.A)]
    hits_plant = np.ones(size, dtype=bool)  # x_{A \ pin} == sigma_{A \ pin}
    for a in free_a:
        pos = free.index(a)
        period = 2 ** (F - 1 - pos)
        sym = (np.arange(size) // period) % 2
        hits_plant &= sym == spec.sigma[a]

    if case == 2:
        if j_overlap == t:
            raise InfeasiblePinning("pinning matches sigma on all of A but differs elsewhere")
        denom = 2.0 ** (n - ell) - 2.0 ** (n - ell - (t - j_overlap))
        block = np.where(hits_plant, 0.0, 1.0 / denom)
        return free, block

    # case 3: pinning agrees with sigma everywhere on its domain
    D = 2.0 ** -t + 2.0 ** -ell - 2.0 ** -(t + ell - j_overlap)
    block = np.where(hits_plant, 0.0, 2.0 ** -n / D)
    sigma_free = tuple(spec.sigma[f] for f in free)
    block[config_to_index(sigma_free, 2)] = 2.0 ** -t / D
    return free, block


def conditional_tv_to_uniform(spec: SubcubeBad, pin: Pinning) -> float:
    """Case-wise distance of the conditional to uniform on the free block.

    An infeasible pinning is scored as distance 1 (the oracle answer is
    arbitrary there), which is also what the case-2 expression yields at
    full overlap; this keeps the averaged formula an exact identity.
    """
    n, t = spec.n, spec.t
    ell = len(pin)
    j = sum(1 for a in spec.A if a in set(pin.domain))
    case = _case_of(spec, pin)
    if case == 1:
        return 0.0
    if case == 2:
        return 2.0 ** -(t - j)
    return 2.0 ** ell / (2.0 ** t + 2.0 ** ell - 2.0 ** j) - 2.0 ** -(n - ell)


def expected_conditional_tv(n: int, eps: float, lam) -> float:
    """Average conditional distance to uniform over random (A, sigma).

    ``lam`` is the pinned coordinate set (or its size); by symmetry only
    the size matters, and the result is independent of the pinned values.
    The value is guaranteed to stay at or below 16 * eps / n.
    """
    ell = lam if isinstance(lam, int) else len(tuple(lam))
    if not 0 <= ell <= n:
        raise InvalidRange("pinned set size out of range")
    t = subcube_depth(n, eps)
    total = 0.0
    denom = math.comb(n, t)
    for j in range(max(0, t - (n - ell)), min(t, ell) + 1):
        w_a = math.comb(ell, j) * math.comb(n - ell, t - j) / denom
        case2 = (2.0 ** -j - 2.0 ** -ell) * 2.0 ** -(t - j)
        case3 = 2.0 ** -ell * (
            2.0 ** ell / (2.0 ** t + 2.0 ** ell - 2.0 ** j) - 2.0 ** -(n - ell)
        )
        total += w_a * (case2 + case3)
    bound = 16.0 * eps / n
    assert total <= bound + 1e-12, f"expected conditional TV {total} exceeds {bound}"
    return total


# ---------------------------------------------------------------------------
# matched-pair family


def random_matching(n: int, rng: np.random.Generator) -> tuple:
    """Uniformly random (near-)perfect matching; odd n leaves one loose end."""
    perm = rng.permutation(n)
    pairs = []
    for idx in range(0, n - 1, 2):
        u, v = int(perm[idx]), int(perm[idx + 1])
        pairs.append((min(u, v), max(u, v)))
    return tuple(sorted(pairs))


def default_rho(n: int, eps: float):
    """Smallest calibrated coupling multiplier with TV >= eps, table first."""
    for row in constants.MATCHED_ISING_RHO:
        if int(row[0]) == n and abs(float(row[1]) - eps) < 1e-12:
            return float(row[2])
    for rho in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0):
        spec = MatchedIsing(n=n, matching=_canonical_matching(n), beta=rho * eps / math.sqrt(n))
        if tv_matched_ising_to_uniform(spec) >= eps:
            return rho
    raise InvalidRange(f"no coupling multiplier reaches TV {eps} at n = {n}")


def _canonical_matching(n: int) -> tuple:
    return tuple((i, i + 1) for i in range(0, n - 1, 2))


def matched_ising_spec(n: int, eps: float, rho=None, rng=None) -> MatchedIsing:
    """Family member with coupling beta = rho * eps / sqrt(n)."""
    if eps <= 0:
        raise InvalidRange("eps must be positive")
    if rho is None:
        rho = default_rho(n, eps)
    matching = random_matching(n, rng) if rng is not None else _canonical_matching(n)
    return MatchedIsing(n=n, matching=matching, beta=float(rho) * eps / math.sqrt(n))


def sample_matched_ising(spec: MatchedIsing, rng: np.random.Generator) -> tuple:
    """One draw; pairs are independent, each agreeing w.p. (1 + tanh beta)/2."""
    agree_p = 0.5 * (1.0 + math.tanh(spec.beta))
    x = rng.integers(0, 2, size=spec.n)
    for u, v in spec.matching:
        if rng.random() < agree_p:
            x[v] = x[u]
        else:
            x[v] = 1 - x[u]
    return tuple(int(b) for b in x)


def coordinate_conditional_matched(spec: MatchedIsing, partner_symbol: int) -> float:
    """P(coordinate equals its pinned partner) = (1 + tanh beta)/2."""
    del partner_symbol  # agreement probability is symbol-independent
    return 0.5 * (1.0 + math.tanh(spec.beta))


def tv_matched_ising_to_uniform(spec: MatchedIsing) -> float:
    """Exact distance to uniform, enumerated by number of agreeing pairs.

    Configurations with the same number of agreeing pairs share one mass,
    so the full-enumeration sum collapses to a binomial sum over that
    count; unmatched coordinates cancel exactly.
    """
    P = len(spec.matching)
    if P == 0:
        return 0.0
    beta = spec.beta
    z2 = 2.0 * math.exp(beta) + 2.0 * math.exp(-beta)
    total = 0.0
    for g in range(P + 1):
        count = math.comb(P, g) * 2 ** P
        p_conf = math.exp(beta * (2 * g - P)) / z2 ** P
        total += count * abs(p_conf - 4.0 ** -P)
    return 0.5 * total
