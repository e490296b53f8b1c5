"""Distribution descriptions and exact desk-scale computations.

Every model here describes a distribution over ``Q^n`` with ``Q = {0, ..,
k-1}``.  Exact quantities (masses, conditionals, KL and TV distances,
balance profiles, entropy decompositions) are computed by explicit
enumeration whenever the state space fits under the desk-scale guard of
``2**22`` states; larger requests raise ``ScaleGuardExceeded`` instead of
silently approximating.

Spin models use {+1, -1} arithmetic internally with the fixed mapping
symbol 0 <-> +1, symbol 1 <-> -1.

Outcome order is lexicographic with coordinate 0 most significant, i.e.
``index = sum(x[j] * k**(n-1-j))``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidRange,
    ModelFileError,
    ScaleGuardExceeded,
    SupportViolation,
    ZeroProbabilityPinning,
)

STATE_LIMIT = 2 ** 22
MASS_TOL = 1e-12

Configuration = tuple  # length-n tuple of symbols in {0, .., k-1}


def _check_scale(states: int, what: str = "enumeration") -> None:
    if states > STATE_LIMIT:
        raise ScaleGuardExceeded(
            f"{what} needs {states} states, above the desk-scale limit {STATE_LIMIT}"
        )


@dataclass(frozen=True)
class Pinning:
    """Partial assignment of symbols to a subset of coordinates."""

    domain: tuple
    values: tuple

    def __post_init__(self):
        dom = tuple(int(i) for i in self.domain)
        vals = tuple(int(v) for v in self.values)
        if len(dom) != len(set(dom)):
            raise InvalidRange("pinning domain has repeated coordinates")
        if len(dom) != len(vals):
            raise DimensionMismatch("pinning values must align with its domain")
        order = np.argsort(dom) if dom else []
        object.__setattr__(self, "domain", tuple(dom[j] for j in order))
        object.__setattr__(self, "values", tuple(vals[j] for j in order))

    @classmethod
    def from_mapping(cls, mapping) -> "Pinning":
        items = sorted(mapping.items())
        return cls(tuple(i for i, _ in items), tuple(v for _, v in items))

    @classmethod
    def all_but(cls, x, i: int) -> "Pinning":
        """Pin every coordinate of ``x`` except coordinate ``i``."""
        dom = tuple(j for j in range(len(x)) if j != i)
        return cls(dom, tuple(int(x[j]) for j in dom))

    def as_dict(self) -> dict:
        return dict(zip(self.domain, self.values))

    def __len__(self) -> int:
        return len(self.domain)


def _validate_mass_vector(vec, what: str):
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidRange(f"{what} must be a nonempty 1-d mass vector")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InvalidRange(f"{what} has negative or non-finite entries")
    if abs(float(arr.sum()) - 1.0) > MASS_TOL:
        raise InvalidRange(f"{what} sums to {arr.sum()!r}, not 1 within {MASS_TOL}")
    return arr


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution over Q^n."""

    n: int
    k: int = 2

    def __post_init__(self):
        if self.n < 1 or self.k < 2:
            raise InvalidRange("Uniform requires n >= 1 and k >= 2")


@dataclass(frozen=True)
class Product:
    """Independent coordinates with per-coordinate mass vectors."""

    coords: tuple  # tuple of per-coordinate mass tuples, all of length k

    def __post_init__(self):
        coords = tuple(
            tuple(float(v) for v in _validate_mass_vector(c, f"coords[{j}]"))
            for j, c in enumerate(self.coords)
        )
        if not coords:
            raise InvalidRange("Product requires at least one coordinate")
        k = len(coords[0])
        if any(len(c) != k for c in coords):
            raise DimensionMismatch("all coordinate mass vectors must share one k")
        if k < 2:
            raise InvalidRange("Product requires k >= 2")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def k(self) -> int:
        return len(self.coords[0])

    @classmethod
    def bernoulli(cls, p_one: float, n: int) -> "Product":
        """n independent binary coordinates with P(symbol 1) = p_one."""
        return cls(((1.0 - p_one, p_one),) * n)


@dataclass(frozen=True)
class Ising:
    """Gibbs distribution of a pairwise spin model on a simple graph.

    Weights are exp(sum beta_uv s_u s_v + sum h_v s_v) over spins s in
    {+1, -1}^n, with symbol 0 mapped to spin +1.
    """

    n: int
    edges: tuple  # tuple of (u, v, beta)
    fields: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise InvalidRange("Ising requires n >= 1")
        fields = tuple(float(h) for h in self.fields) or (0.0,) * self.n
        if len(fields) != self.n:
            raise DimensionMismatch("fields must have one entry per vertex")
        if not all(math.isfinite(h) for h in fields):
            raise InvalidRange("fields must be finite")
        seen = set()
        edges = []
        for e in self.edges:
            u, v, beta = int(e[0]), int(e[1]), float(e[2])
            if u == v:
                raise InvalidRange(f"self-loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidRange(f"edge ({u},{v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidRange(f"duplicate edge {key}")
            if not math.isfinite(beta):
                raise InvalidRange(f"coupling on edge {key} must be finite")
            seen.add(key)
            edges.append((key[0], key[1], beta))
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        object.__setattr__(self, "fields", fields)

    @property
    def k(self) -> int:
        return 2

    def neighbors(self, i: int):
        out = []
        for u, v, beta in self.edges:
            if u == i:
                out.append((v, beta))
            elif v == i:
                out.append((u, beta))
        return out


@dataclass(frozen=True)
class ExplicitTable:
    """Fully enumerated distribution given by a flat mass vector."""

    n: int
    k: int
    masses: tuple

    def __post_init__(self):
        _check_scale(self.k ** self.n, "explicit table")
        arr = _validate_mass_vector(self.masses, "masses")
        if arr.size != self.k ** self.n:
            raise DimensionMismatch(
                f"masses has length {arr.size}, expected k^n = {self.k ** self.n}"
            )
        object.__setattr__(self, "masses", tuple(float(v) for v in arr))

    @classmethod
    def from_table(cls, n: int, k: int, table) -> "ExplicitTable":
        return cls(n, k, tuple(np.asarray(table, dtype=float)))


@dataclass(frozen=True)
class SubcubeBad:
    """Uniform distribution with one planted subcube collapsed to a point.

    The coordinates in ``A`` are uniform; when they all hit ``sigma_A`` the
    whole output is forced to ``sigma``, otherwise the rest is uniform.
    """

    n: int
    A: tuple
    sigma: tuple

    def __post_init__(self):
        A = tuple(sorted(int(a) for a in self.A))
        sigma = tuple(int(s) for s in self.sigma)
        if len(sigma) != self.n:
            raise DimensionMismatch("sigma must have length n")
        if any(s not in (0, 1) for s in sigma):
            raise InvalidRange("sigma must be binary")
        if len(set(A)) != len(A) or any(not 0 <= a < self.n for a in A):
            raise InvalidRange("A must be a set of coordinates in range")
        if not 1 <= len(A) <= self.n - 1:
            raise InvalidRange("need 1 <= |A| <= n-1; |A| = n collapses to a point mass")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", sigma)

    @property
    def k(self) -> int:
        return 2

    @property
    def t(self) -> int:
        return len(self.A)


@dataclass(frozen=True)
class MatchedIsing:
    """Independent spin pairs with a common coupling on a perfect matching.

    For odd n, exactly one coordinate is left unmatched and uniform.
    """

    n: int
    matching: tuple  # tuple of (u, v) pairs
    beta: float

    def __post_init__(self):
        pairs = tuple((min(int(u), int(v)), max(int(u), int(v))) for u, v in self.matching)
        used = [c for p in pairs for c in p]
        if len(set(used)) != len(used):
            raise InvalidRange("matching pairs must be disjoint")
        if any(not 0 <= c < self.n for c in used):
            raise InvalidRange("matching touches a coordinate out of range")
        if any(u == v for u, v in pairs):
            raise InvalidRange("matching cannot pair a coordinate with itself")
        expected = self.n if self.n % 2 == 0 else self.n - 1
        if len(used) != expected:
            raise InvalidRange(
                f"matching must cover {expected} of {self.n} coordinates, covers {len(used)}"
            )
        if not math.isfinite(float(self.beta)):
            raise InvalidRange("beta must be finite")
        object.__setattr__(self, "matching", tuple(sorted(pairs)))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def k(self) -> int:
        return 2

    def partner(self, i: int):
        for u, v in self.matching:
            if u == i:
                return v
            if v == i:
                return u
        return None


ModelSpec = (Uniform, Product, Ising, ExplicitTable, SubcubeBad, MatchedIsing)


@dataclass(frozen=True)
class BalanceProfile:
    """Coordinate balance eta and (optional) marginal bound b of a model."""

    eta: float
    b: float | None = None
    prefix_only: bool = False

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise InvalidRange("eta must lie in (0, 1]")
        if self.b is not None and not 0 < self.b <= 1:
            raise InvalidRange("b must lie in (0, 1]")


@dataclass(frozen=True)
class TensorizationCheck:
    holds: bool
    lhs: float
    rhs: float


# ---------------------------------------------------------------------------
# configuration indexing helpers


def config_to_index(x, k: int) -> int:
    idx = 0
    for v in x:
        idx = idx * k + int(v)
    return idx


def index_to_config(idx: int, n: int, k: int) -> tuple:
    out = [0] * n
    for j in range(n - 1, -1, -1):
        out[j] = idx % k
        idx //= k
    return tuple(out)


def _axis_symbols(n: int, k: int, j: int) -> np.ndarray:
    """Symbol of coordinate j for every outcome index, as a flat array."""
    size = k ** n
    period = k ** (n - 1 - j)
    return (np.arange(size) // period) % k


def _validate_config(model, x) -> tuple:
    x = tuple(int(v) for v in x)
    if len(x) != model.n:
        raise DimensionMismatch(f"configuration has length {len(x)}, model n = {model.n}")
    if any(not 0 <= v < model.k for v in x):
        raise InvalidRange("configuration symbol out of range")
    return x


# ---------------------------------------------------------------------------
# full tables


def model_table(model) -> np.ndarray:
    """Full mass vector of length k^n in lexicographic outcome order."""
    n, k = model.n, model.k
    _check_scale(k ** n, "full table")
    size = k ** n
    if isinstance(model, Uniform):
        return np.full(size, 1.0 / size)
    if isinstance(model, Product):
        table = np.array([1.0])
        for c in model.coords:
            table = np.kron(table, np.asarray(c))
        return table
    if isinstance(model, ExplicitTable):
        return np.asarray(model.masses, dtype=float)
    if isinstance(model, Ising):
        logw = np.zeros(size)
        spins = {}
        for j in range(n):
            spins[j] = 1.0 - 2.0 * _axis_symbols(n, 2, j)
        for j, h in enumerate(model.fields):
            if h != 0.0:
                logw += h * spins[j]
        for u, v, beta in model.edges:
            logw += beta * spins[u] * spins[v]
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()
    if isinstance(model, SubcubeBad):
        table = np.full(size, 2.0 ** -n)
        planted = np.ones(size, dtype=bool)
        for a in model.A:
            planted &= _axis_symbols(n, 2, a) == model.sigma[a]
        table[planted] = 0.0
        table[config_to_index(model.sigma, 2)] = 2.0 ** -model.t
        return table
    if isinstance(model, MatchedIsing):
        beta = model.beta
        z2 = 2.0 * math.exp(beta) + 2.0 * math.exp(-beta)
        logw = np.zeros(size)
        for u, v in model.matching:
            s_u = 1.0 - 2.0 * _axis_symbols(n, 2, u)
            s_v = 1.0 - 2.0 * _axis_symbols(n, 2, v)
            logw += beta * s_u * s_v
        w = np.exp(logw) / (z2 ** len(model.matching))
        unmatched = n - 2 * len(model.matching)
        return w * (0.5 ** unmatched)
    raise TypeError(f"unknown model variant {type(model).__name__}")


# ---------------------------------------------------------------------------
# point masses


_ISING_LOGZ_CACHE: dict = {}


def _ising_logz(model: Ising) -> float:
    key = id(model)
    cached = _ISING_LOGZ_CACHE.get(key)
    if cached is not None and cached[0] is model:
        return cached[1]
    _check_scale(2 ** model.n, "partition function")
    logw = np.zeros(2 ** model.n)
    for j, h in enumerate(model.fields):
        if h != 0.0:
            logw += h * (1.0 - 2.0 * _axis_symbols(model.n, 2, j))
    for u, v, beta in model.edges:
        s_u = 1.0 - 2.0 * _axis_symbols(model.n, 2, u)
        s_v = 1.0 - 2.0 * _axis_symbols(model.n, 2, v)
        logw += beta * s_u * s_v
    m = logw.max()
    logz = m + math.log(float(np.exp(logw - m).sum()))
    _ISING_LOGZ_CACHE[key] = (model, logz)
    return logz


def mass(model, x) -> float:
    """Probability of the full configuration x under the model."""
    x = _validate_config(model, x)
    n = model.n
    if isinstance(model, Uniform):
        return model.k ** -float(n)
    if isinstance(model, Product):
        p = 1.0
        for j, v in enumerate(x):
            p *= model.coords[j][v]
        return p
    if isinstance(model, ExplicitTable):
        return model.masses[config_to_index(x, model.k)]
    if isinstance(model, Ising):
        spins = [1.0 - 2.0 * v for v in x]
        e = sum(h * spins[j] for j, h in enumerate(model.fields))
        e += sum(beta * spins[u] * spins[v] for u, v, beta in model.edges)
        return math.exp(e - _ising_logz(model))
    if isinstance(model, SubcubeBad):
        on_plant = all(x[a] == model.sigma[a] for a in model.A)
        if not on_plant:
            return 2.0 ** -n
        return 2.0 ** -model.t if x == model.sigma else 0.0
    if isinstance(model, MatchedIsing):
        beta = model.beta
        z2 = 2.0 * math.exp(beta) + 2.0 * math.exp(-beta)
        p = 1.0
        for u, v in model.matching:
            agree = x[u] == x[v]
            p *= math.exp(beta if agree else -beta) / z2
        unmatched = n - 2 * len(model.matching)
        return p * 0.5 ** unmatched
    raise TypeError(f"unknown model variant {type(model).__name__}")


# ---------------------------------------------------------------------------
# conditionals


def _check_pinning(model, pin: Pinning, exclude: int | None = None):
    for j, v in zip(pin.domain, pin.values):
        if not 0 <= j < model.n:
            raise DimensionMismatch(f"pinned coordinate {j} out of range")
        if not 0 <= v < model.k:
            raise InvalidRange(f"pinned value {v} out of range")
        if exclude is not None and j == exclude:
            raise InvalidRange(f"coordinate {exclude} cannot be pinned and queried")


def conditional_block(model, pin: Pinning):
    """Joint conditional over the free coordinates given the pinning.

    Returns ``(free, block)`` where ``free`` is the ascending tuple of free
    coordinates and ``block`` the conditional mass vector over Q^free in
    lexicographic order.  Raises ZeroProbabilityPinning when the pinning
    has probability zero.
    """
    _check_pinning(model, pin)
    n, k = model.n, model.k
    free = tuple(j for j in range(n) if j not in set(pin.domain))
    if isinstance(model, Uniform):
        return free, np.full(k ** len(free), k ** -float(len(free)))
    if isinstance(model, Product):
        block = np.array([1.0])
        for j in free:
            block = np.kron(block, np.asarray(model.coords[j]))
        pinned_mass = 1.0
        for j, v in zip(pin.domain, pin.values):
            pinned_mass *= model.coords[j][v]
        if pinned_mass == 0.0:
            raise ZeroProbabilityPinning("pinned values have zero product mass")
        return free, block
    if isinstance(model, MatchedIsing):
        pinned = pin.as_dict()
        beta = model.beta
        agree = math.exp(beta) / (math.exp(beta) + math.exp(-beta))
        free_set = set(free)
        if any(u in free_set and v in free_set for u, v in model.matching):
            # a fully free pair is correlated across kron factors
            return _conditional_block_enumerate(model, pin, free)
        block = np.array([1.0])
        for j in free:
            p = model.partner(j)
            if p is None:
                vec = np.array([0.5, 0.5])
            else:
                s = pinned[p]
                vec = np.array([agree, 1 - agree]) if s == 0 else np.array([1 - agree, agree])
            block = np.kron(block, vec)
        return free, block
    if isinstance(model, SubcubeBad) or isinstance(model, Ising) or isinstance(model, ExplicitTable):
        return _conditional_block_enumerate(model, pin, free)
    raise TypeError(f"unknown model variant {type(model).__name__}")


def _conditional_block_enumerate(model, pin: Pinning, free: tuple):
    n, k = model.n, model.k
    _check_scale(k ** n, "conditional enumeration")
    tensor = model_table(model).reshape((k,) * n)
    index = [slice(None)] * n
    for j, v in zip(pin.domain, pin.values):
        index[j] = v
    block = np.asarray(tensor[tuple(index)], dtype=float).reshape(-1)
    total = block.sum()
    if total <= 0.0:
        raise ZeroProbabilityPinning("pinning has probability zero")
    return free, block / total


def conditional_marginal(model, i: int, pin: Pinning) -> np.ndarray:
    """Mass vector of coordinate i conditioned on the pinning.

    The pinning may cover all other coordinates (single-site queries) or
    any subset not containing i (prefix and subcube queries).  Closed
    forms cover the structured variants; everything else enumerates the
    free coordinates under the desk-scale guard.
    """
    if not 0 <= i < model.n:
        raise DimensionMismatch(f"coordinate {i} out of range for n = {model.n}")
    _check_pinning(model, pin, exclude=i)
    n, k = model.n, model.k
    pinned = pin.as_dict()
    full_pin = len(pin) == n - 1

    if isinstance(model, Uniform):
        return np.full(k, 1.0 / k)
    if isinstance(model, Product):
        for j, v in zip(pin.domain, pin.values):
            if model.coords[j][v] == 0.0:
                raise ZeroProbabilityPinning("pinned values have zero product mass")
        return np.asarray(model.coords[i])
    if isinstance(model, MatchedIsing):
        p = model.partner(i)
        beta = model.beta
        agree = math.exp(beta) / (math.exp(beta) + math.exp(-beta))
        if p is None or p not in pinned:
            return np.array([0.5, 0.5])
        s = pinned[p]
        return np.array([agree, 1 - agree]) if s == 0 else np.array([1 - agree, agree])
    if isinstance(model, Ising) and full_pin:
        # local ratio from the Gibbs weights; never touches the normalizer
        field = model.fields[i]
        for j, beta in model.neighbors(i):
            field += beta * (1.0 - 2.0 * pinned[j])
        p_plus = 1.0 / (1.0 + math.exp(-2.0 * field))
        return np.array([p_plus, 1.0 - p_plus])
    if isinstance(model, SubcubeBad) and full_pin:
        masses = np.empty(2)
        x = [0] * n
        for j, v in pinned.items():
            x[j] = v
        for a in (0, 1):
            x[i] = a
            masses[a] = mass(model, x)
        total = masses.sum()
        if total <= 0.0:
            raise ZeroProbabilityPinning("pinning has probability zero")
        return masses / total
    if isinstance(model, ExplicitTable) and full_pin:
        tensor = np.asarray(model.masses).reshape((k,) * n)
        index = [0] * n
        for j, v in pinned.items():
            index[j] = v
        index[i] = slice(None)
        vec = np.asarray(tensor[tuple(index)], dtype=float)
        total = vec.sum()
        if total <= 0.0:
            raise ZeroProbabilityPinning("pinning has probability zero")
        return vec / total

    free, block = conditional_block(model, pin)
    pos = free.index(i)
    tensor = block.reshape((k,) * len(free))
    axes = tuple(a for a in range(len(free)) if a != pos)
    return tensor.sum(axis=axes) if axes else tensor


# ---------------------------------------------------------------------------
# divergences


def _pair_tables(p_model, q_model):
    if (p_model.n, p_model.k) != (q_model.n, q_model.k):
        raise DimensionMismatch("models must share (n, k)")
    return model_table(p_model), model_table(q_model)


def kl_divergence(p_model, q_model) -> float:
    """KL(p || q) in nats by full enumeration; +inf if support escapes q."""
    p, q = _pair_tables(p_model, q_model)
    sup = p > 0
    if np.any(q[sup] == 0):
        return math.inf
    terms = p[sup] * np.log(p[sup] / q[sup])
    return math.fsum(terms.tolist())


def tv_distance(p_model, q_model) -> float:
    """Total variation distance by full enumeration."""
    p, q = _pair_tables(p_model, q_model)
    return 0.5 * math.fsum(np.abs(p - q).tolist())


def kl_between_vectors(p, q) -> float:
    """KL between two explicit mass vectors, +inf on support escape."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    sup = p > 0
    if np.any(q[sup] == 0):
        return math.inf
    return math.fsum((p[sup] * np.log(p[sup] / q[sup])).tolist())


# ---------------------------------------------------------------------------
# balance


def balance_profile(model, prefix_only: bool = False) -> BalanceProfile:
    """Smallest nonzero conditional masses of the model.

    ``eta`` scans every single-coordinate conditional under full pinnings.
    ``b`` scans prefix pinnings when ``prefix_only`` is set, and every
    pinning otherwise (the latter needs (k+1)^n under the guard).  For
    full scans b <= eta by inclusion; prefix scans carry no such relation.
    """
    n, k = model.n, model.k
    _check_scale(k ** n, "balance scan")
    tensor = model_table(model).reshape((k,) * n)
    eta = 1.0
    for i in range(n):
        denom = tensor.sum(axis=i, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(denom > 0, tensor / np.where(denom > 0, denom, 1.0), 0.0)
        pos = tensor > 0
        if np.any(pos):
            eta = min(eta, float(cond[pos].min()))

    if prefix_only:
        b = 1.0
        for i in range(n):
            upto = tensor.sum(axis=tuple(range(i + 1, n))) if i + 1 < n else tensor
            denom = upto.sum(axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = upto / np.where(denom > 0, denom, 1.0)
            pos = upto > 0
            if np.any(pos):
                b = min(b, float(cond[pos].min()))
        return BalanceProfile(eta=eta, b=b, prefix_only=True)

    _check_scale((k + 1) ** n, "marginal-bound scan")
    b = 1.0
    coords = tuple(range(n))
    for size in range(n):
        for lam in itertools.combinations(coords, size):
            for i in coords:
                if i in lam:
                    continue
                keep = tuple(sorted(lam + (i,)))
                drop = tuple(j for j in coords if j not in keep)
                m_i = tensor.sum(axis=drop) if drop else tensor
                m_i = np.moveaxis(m_i, keep.index(i), -1)
                denom = m_i.sum(axis=-1, keepdims=True)
                with np.errstate(invalid="ignore", divide="ignore"):
                    cond = m_i / np.where(denom > 0, denom, 1.0)
                posm = m_i > 0
                if np.any(posm):
                    b = min(b, float(cond[posm].min()))
    return BalanceProfile(eta=eta, b=b, prefix_only=False)


# ---------------------------------------------------------------------------
# entropy identities


def _conditional_ratio_terms(pi_t, mu_t, axis: int):
    """sum over outcomes y of pi(y) * ln of the single-axis conditional ratio."""
    pi_den = pi_t.sum(axis=axis, keepdims=True)
    mu_den = mu_t.sum(axis=axis, keepdims=True)
    pos = pi_t > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cond_pi = np.where(pos, pi_t / np.where(pi_den > 0, pi_den, 1.0), 1.0)
        cond_mu = np.where(pos, mu_t / np.where(mu_den > 0, mu_den, 1.0), 1.0)
    if np.any(cond_mu[pos] == 0):
        raise SupportViolation("pi escapes the support of mu on a conditional")
    terms = np.where(pos, pi_t * np.log(np.where(pos, cond_pi / cond_mu, 1.0)), 0.0)
    return math.fsum(terms.reshape(-1).tolist())


def verify_tensorization(mu, pi, C: float) -> TensorizationCheck:
    """Check KL(pi||mu) <= C * sum of expected single-site conditional KLs."""
    p_t, m_t = _pair_tables(pi, mu)
    if np.any((p_t > 0) & (m_t == 0)):
        raise SupportViolation("pi is not absolutely continuous w.r.t. mu")
    n, k = mu.n, mu.k
    pi_t = p_t.reshape((k,) * n)
    mu_t = m_t.reshape((k,) * n)
    lhs = kl_between_vectors(p_t, m_t)
    rhs = C * math.fsum(_conditional_ratio_terms(pi_t, mu_t, i) for i in range(n))
    return TensorizationCheck(holds=bool(lhs <= rhs + 1e-9), lhs=lhs, rhs=rhs)


def chain_rule_decomposition(mu, pi) -> np.ndarray:
    """Per-coordinate terms of the prefix decomposition of KL(pi||mu).

    term[i] is the expected conditional KL of coordinate i given the first
    i coordinates; the terms sum to KL(pi||mu) exactly.
    """
    p_t, m_t = _pair_tables(pi, mu)
    if np.any((p_t > 0) & (m_t == 0)):
        raise SupportViolation("pi is not absolutely continuous w.r.t. mu")
    n, k = mu.n, mu.k
    pi_t = p_t.reshape((k,) * n)
    mu_t = m_t.reshape((k,) * n)
    terms = np.empty(n)
    for i in range(n):
        tail = tuple(range(i + 1, n))
        pi_pref = pi_t.sum(axis=tail) if tail else pi_t
        mu_pref = mu_t.sum(axis=tail) if tail else mu_t
        terms[i] = _conditional_ratio_terms(pi_pref, mu_pref, i)
    return terms


# ---------------------------------------------------------------------------
# Dobrushin helpers


def dobrushin_constant(b: float, delta: float) -> float:
    """Tensorization constant 1 / (b * delta^2) from a contraction margin."""
    if not 0 < b <= 0.5:
        raise InvalidRange("b must lie in (0, 1/2]")
    if not 0 < delta < 1:
        raise InvalidRange("delta must lie in (0, 1)")
    return 1.0 / (b * delta * delta)


def dobrushin_influence_matrix(model) -> np.ndarray:
    """Influence matrix by enumeration; entry (i, j) bounds i's pull on j.

    Pairs of pinnings where either side is infeasible are skipped.  The
    enumeration is exponential, so this is guarded at n <= 10.
    """
    n, k = model.n, model.k
    if n > 10:
        raise ScaleGuardExceeded("influence matrix enumeration is limited to n <= 10")
    table = model_table(model).reshape((k,) * n)
    A = np.zeros((n, n))
    for j in range(n):
        denom = table.sum(axis=j, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(denom > 0, table / np.where(denom > 0, denom, 1.0), 0.0)
        cond = np.moveaxis(cond, j, -1)      # [..others.., symbol at j]
        feas = np.moveaxis(denom > 0, j, -1)[..., 0]
        others = [c for c in range(n) if c != j]
        for pos_i, i in enumerate(others):
            c1 = np.moveaxis(cond, pos_i, 0)
            f1 = np.moveaxis(feas, pos_i, 0)
            best = 0.0
            for a in range(k):
                for b_sym in range(a + 1, k):
                    both = f1[a] & f1[b_sym]
                    if not np.any(both):
                        continue
                    tv = 0.5 * np.abs(c1[a] - c1[b_sym]).sum(axis=-1)
                    best = max(best, float(tv[both].max()))
            A[i, j] = best
    return A


# ---------------------------------------------------------------------------
# model files

_VARIANT_NAMES = {
    Uniform: "uniform",
    Product: "product",
    Ising: "ising",
    ExplicitTable: "explicit-table",
    SubcubeBad: "subcube-bad",
    MatchedIsing: "matched-ising",
}


def model_to_dict(model) -> dict:
    name = _VARIANT_NAMES.get(type(model))
    if name is None:
        raise TypeError(f"unknown model variant {type(model).__name__}")
    doc = {"variant": name, "n": model.n, "k": model.k}
    if isinstance(model, Product):
        doc["coords"] = [list(c) for c in model.coords]
    elif isinstance(model, Ising):
        doc["edges"] = [[u, v, beta] for u, v, beta in model.edges]
        doc["fields"] = list(model.fields)
    elif isinstance(model, ExplicitTable):
        doc["masses"] = list(model.masses)
    elif isinstance(model, SubcubeBad):
        doc["A"] = list(model.A)
        doc["sigma"] = list(model.sigma)
    elif isinstance(model, MatchedIsing):
        doc["matching"] = [list(p) for p in model.matching]
        doc["beta"] = model.beta
    return doc


def _require(doc: dict, field_name: str):
    if field_name not in doc:
        raise ModelFileError(f"field '{field_name}': missing")
    return doc[field_name]


def model_from_dict(doc: dict):
    variant = _require(doc, "variant")
    n = _require(doc, "n")
    k = _require(doc, "k")
    try:
        n = int(n)
        k = int(k)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"field 'n'/'k': must be integers ({exc})") from exc
    payload_field = {
        "product": "coords",
        "ising": "edges",
        "explicit-table": "masses",
        "subcube-bad": "A",
        "matched-ising": "matching",
    }
    try:
        if variant == "uniform":
            return Uniform(n=n, k=k)
        if variant == "product":
            model = Product(tuple(tuple(c) for c in _require(doc, "coords")))
        elif variant == "ising":
            model = Ising(
                n=n,
                edges=tuple(tuple(e) for e in _require(doc, "edges")),
                fields=tuple(doc.get("fields", ())),
            )
        elif variant == "explicit-table":
            model = ExplicitTable(n=n, k=k, masses=tuple(_require(doc, "masses")))
        elif variant == "subcube-bad":
            model = SubcubeBad(
                n=n, A=tuple(_require(doc, "A")), sigma=tuple(_require(doc, "sigma"))
            )
        elif variant == "matched-ising":
            model = MatchedIsing(
                n=n,
                matching=tuple(tuple(p) for p in _require(doc, "matching")),
                beta=float(_require(doc, "beta")),
            )
        else:
            raise ModelFileError(f"field 'variant': unknown value {variant!r}")
    except ModelFileError:
        raise
    except (InvalidRange, DimensionMismatch, ScaleGuardExceeded, TypeError, ValueError) as exc:
        raise ModelFileError(f"field '{payload_field[variant]}': {exc}") from exc
    if (model.n, model.k) != (n, k):
        raise ModelFileError(
            f"field 'n'/'k': payload implies (n={model.n}, k={model.k}), header says ({n}, {k})"
        )
    return model


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"file '{path}': not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFileError(f"file '{path}': top level must be an object")
    return model_from_dict(doc)
