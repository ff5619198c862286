"""Exact distributional computations for discrete compound Poisson (DCP) laws.

A DCP law with rate ``lam`` and jump weights ``alphas = (a_1, ..., a_R)`` has
probability generating function ``exp(lam * sum_k a_k (z**k - 1))``; it is the
law of ``sum_k k * N_k`` with independent ``N_k ~ Poisson(lam * a_k)``.

Two independent exact algorithms are provided for the p.m.f.:

* :func:`pmf_partition` sums over integer partitions of ``k``.
* :func:`pmf_matrix` evaluates the first entry of ``exp(Q * mass) @ c`` where
  ``Q = -I + sum_i a_i N**i`` and ``N`` is the superdiagonal shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "DcpParams",
    "NbParams",
    "Moments",
    "PartitionBudgetError",
    "DEFAULT_PARTITION_BUDGET",
    "DEFAULT_MAX_ORDER",
    "partition_count",
    "iter_partitions",
    "pmf_partition",
    "pmf_matrix",
    "pmf_vector",
    "transition_matrix",
    "pgf_eval",
    "mgf_eval",
    "moments",
    "jump_mean",
    "nb_to_dcp",
    "nb_pmf",
]

DEFAULT_PARTITION_BUDGET = 10**6
DEFAULT_MAX_ORDER = 100_000
_SUM_TOL = 1e-12
_LOG_SPACE_MASS = 30.0


class PartitionBudgetError(ValueError):
    """Raised when partition enumeration would exceed the configured budget.

    The matrix method (:func:`pmf_matrix`) has no such limit and should be
    used instead.
    """


@dataclass(frozen=True)
class DcpParams:
    """Rate and jump weights of a DCP law.

    Parameters
    ----------
    lam : float
        Poisson base rate, ``lam > 0``.
    alphas : sequence of float
        Jump weights ``a_1..a_R``. Trailing zeros are stripped on construction,
        so ``order`` is the largest index with a nonzero weight.
    truncated : bool
        Whether ``alphas`` is the truncation of an infinite-order law. When
        false the weights must sum to one.
    """

    lam: float
    alphas: tuple[float, ...]
    truncated: bool = False
    tail_mass: float = field(init=False)

    def __post_init__(self):
        lam = float(self.lam)
        if not (math.isfinite(lam) and lam > 0):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")
        a = [float(v) for v in np.atleast_1d(np.asarray(self.alphas, dtype=float))]
        if any(not math.isfinite(v) or v < 0 for v in a):
            raise ValueError("alphas must be finite and nonnegative")
        while a and a[-1] == 0.0:
            a.pop()
        if not a:
            raise ValueError("alphas must contain at least one positive weight")
        total = math.fsum(a)
        if self.truncated:
            if total > 1.0 + _SUM_TOL:
                raise ValueError(f"truncated alphas sum to {total!r} > 1")
            tail = max(0.0, 1.0 - total)
        else:
            if abs(total - 1.0) > _SUM_TOL:
                raise ValueError(
                    f"alphas must sum to 1 within {_SUM_TOL} (got {total!r}); "
                    "pass truncated=True for a truncated infinite-order law"
                )
            tail = 0.0
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alphas", tuple(a))
        object.__setattr__(self, "tail_mass", tail)

    @property
    def order(self) -> int:
        return len(self.alphas)

    def weights(self) -> np.ndarray:
        return np.asarray(self.alphas, dtype=float)

    def levy(self) -> np.ndarray:
        """Levy measure ``nu({k}) = a_k * lam`` for ``k = 1..R``."""
        return self.lam * self.weights()

    def with_rate(self, lam: float) -> "DcpParams":
        return DcpParams(lam, self.alphas, truncated=self.truncated)

    @classmethod
    def poisson(cls, lam: float) -> "DcpParams":
        return cls(lam, (1.0,))


@dataclass(frozen=True)
class NbParams:
    """Negative binomial with p.m.f. ``G(n+r)/(G(r) n!) (1-q)**r q**n``."""

    r: float
    q: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"r must be positive, got {self.r}")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must lie in (0, 1), got {self.q}")

    @classmethod
    def from_mean(cls, mean: float, theta: float) -> "NbParams":
        """NB with dispersion ``theta`` and the given mean (``q = mean/(theta+mean)``)."""
        return cls(theta, mean / (theta + mean))

    @property
    def mean(self) -> float:
        return self.r * self.q / (1.0 - self.q)

    @property
    def variance(self) -> float:
        return self.r * self.q / (1.0 - self.q) ** 2


class Moments(NamedTuple):
    mean: float
    variance: float


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

def partition_count(k: int) -> int:
    """Number of integer partitions of ``k`` (exact, via Euler's recurrence)."""
    if k < 0:
        return 0
    p = [1] + [0] * k
    for n in range(1, k + 1):
        total = 0
        j = 1
        while True:
            g1 = j * (3 * j - 1) // 2
            if g1 > n:
                break
            sign = 1 if j % 2 else -1
            total += sign * p[n - g1]
            g2 = j * (3 * j + 1) // 2
            if g2 <= n:
                total += sign * p[n - g2]
            j += 1
        p[n] = total
    return p[k]


def iter_partitions(k: int) -> Iterator[list[tuple[int, int]]]:
    """Yield the partitions of ``k`` in reverse-lexicographic order.

    Each partition is a list of ``(part, multiplicity)`` pairs with parts in
    decreasing order; the yielded list is reused, copy it to keep it.
    ``k = 0`` yields the empty partition once.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        yield []
        return
    parts = [(k, 1)]
    while True:
        yield parts
        rem = 0
        if parts[-1][0] == 1:
            rem = parts.pop()[1]
        if not parts:
            return
        p, m = parts.pop()
        if m > 1:
            parts.append((p, m - 1))
        rem += p
        q, r = divmod(rem, p - 1)
        parts.append((p - 1, q))
        if r:
            parts.append((r, 1))


def pmf_partition(
    params: DcpParams,
    region_mass: float,
    k: int,
    budget: int = DEFAULT_PARTITION_BUDGET,
) -> float:
    """P(CP(A) = k) by summing over all partitions of ``k``.

    Each partition with multiplicities ``s_t`` contributes
    ``prod_t a_t**s_t / s_t! * mass**(sum s_t) * exp(-mass)``. Partitions using
    a part larger than the order contribute zero and are skipped.

    Raises
    ------
    PartitionBudgetError
        If ``k`` has more than ``budget`` partitions.
    """
    k = _check_k(k)
    mass = _check_mass(region_mass)
    if partition_count(k) > budget:
        raise PartitionBudgetError(
            f"p({k}) = {partition_count(k)} partitions exceeds budget {budget}; "
            "use pmf_matrix"
        )
    R = params.order
    alphas = params.alphas
    log_alpha = [math.log(a) if a > 0 else -math.inf for a in alphas]
    log_mass = math.log(mass)

    if mass > _LOG_SPACE_MASS:
        logs = []
        for parts in iter_partitions(k):
            if parts and parts[0][0] > R:
                continue
            acc = 0.0
            n_jumps = 0
            for t, s in parts:
                acc += s * log_alpha[t - 1] - math.lgamma(s + 1)
                n_jumps += s
            if acc == -math.inf:
                continue
            logs.append(acc + n_jumps * log_mass)
        if not logs:
            return 0.0
        return float(math.exp(logsumexp(logs) - mass))

    total = 0.0
    for parts in iter_partitions(k):
        if parts and parts[0][0] > R:
            continue
        term = 1.0
        n_jumps = 0
        for t, s in parts:
            term *= alphas[t - 1] ** s / math.factorial(s)
            n_jumps += s
        total += term * mass**n_jumps
    return total * math.exp(-mass)


# ---------------------------------------------------------------------------
# matrix method
# ---------------------------------------------------------------------------

def transition_matrix(params: DcpParams, k: int) -> np.ndarray:
    """The ``(k+1) x (k+1)`` generator ``Q = -I + sum_{i<=min(R,k)} a_i N**i``.

    Rows are ordered as the state vector ``(phi_k, ..., phi_1, phi_0)``.
    """
    k = _check_k(k)
    Q = -np.eye(k + 1)
    for i, a in enumerate(params.alphas[:k], start=1):
        Q += a * np.eye(k + 1, k=i)
    return Q


def _poly_mul_trunc(a: np.ndarray, b: np.ndarray, deg: int) -> np.ndarray:
    out = np.convolve(a, b)[: deg + 1]
    if out.size < deg + 1:
        out = np.pad(out, (0, deg + 1 - out.size))
    return out


def pmf_vector(params: DcpParams, region_mass: float, k_max: int) -> np.ndarray:
    """``[P_0, ..., P_{k_max}]`` from the first row of ``exp(Q * mass)``.

    ``Q`` is upper-triangular Toeplitz, so only its first row (the polynomial
    ``-1 + sum_i a_i x**i``) is stored. ``exp(Q t) = exp(-t) * sum_m (t A)**m / m!``
    with ``A = Q + I`` nilpotent of index ``k_max + 1``, so the series has
    ``k_max + 1`` terms. The factor ``exp(-t) t**m / m!`` is formed in log space.
    """
    k_max = _check_k(k_max)
    mass = _check_mass(region_mass)
    a = np.zeros(k_max + 1)
    w = params.weights()[:k_max]
    a[1 : 1 + w.size] = w
    m = np.arange(k_max + 1)
    poisson_w = np.exp(m * math.log(mass) - mass - gammaln(m + 1))

    power = np.zeros(k_max + 1)
    power[0] = 1.0
    row = poisson_w[0] * power
    for j in range(1, k_max + 1):
        power = _poly_mul_trunc(power, a, k_max)
        row = row + poisson_w[j] * power
    return row


def pmf_matrix(params: DcpParams, region_mass: float, k: int) -> float:
    """P(CP(A) = k) as the first entry of ``exp(Q * mass) @ (0, ..., 0, 1)``."""
    return float(pmf_vector(params, region_mass, k)[-1])


# ---------------------------------------------------------------------------
# generating functions and moments
# ---------------------------------------------------------------------------

def pgf_eval(params: DcpParams, z: float) -> float:
    """``E z**Y = exp(lam * sum_k a_k (z**k - 1))`` for ``|z| <= 1``."""
    if abs(z) > 1:
        raise ValueError(f"|z| must be <= 1, got {z}")
    k = np.arange(1, params.order + 1)
    return float(np.exp(params.lam * np.sum(params.weights() * (np.power(float(z), k) - 1.0))))


def mgf_eval(params: DcpParams, theta: float) -> float:
    """Laplace transform ``E exp(-theta Y)``, i.e. ``pgf_eval(params, exp(-theta))``."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    return pgf_eval(params, math.exp(-theta))


def jump_mean(alphas: Sequence[float] | DcpParams) -> float:
    """Mean jump size ``sum_k k a_k`` (equals ``E Y / lam``)."""
    w = alphas.weights() if isinstance(alphas, DcpParams) else np.asarray(alphas, dtype=float)
    return float(np.dot(np.arange(1, w.size + 1), w))


def moments(params: DcpParams) -> Moments:
    """Mean ``lam sum k a_k`` and variance ``lam sum k**2 a_k``."""
    w = params.weights()
    k = np.arange(1, w.size + 1)
    return Moments(params.lam * float(np.dot(k, w)), params.lam * float(np.dot(k * k, w)))


# ---------------------------------------------------------------------------
# negative binomial
# ---------------------------------------------------------------------------

def nb_to_dcp(nb: NbParams, tol: float = 1e-10, max_order: int = DEFAULT_MAX_ORDER) -> DcpParams:
    """Truncated DCP representation of a negative binomial law.

    ``lam = -r log(1-q)`` and ``a_i = q**i / (-i log(1-q))``. The order ``R`` is the
    smallest one leaving tail mass ``1 - sum_{i<=R} a_i <= tol``.
    """
    if not (0.0 < tol < 1.0):
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    L = -math.log1p(-nb.q)
    lam = nb.r * L
    log_q = math.log(nb.q)
    alphas = []
    partial = 0.0
    i = 0
    while True:
        i += 1
        if i > max_order:
            raise ValueError(
                f"tol={tol} needs more than max_order={max_order} weights (q={nb.q})"
            )
        term = math.exp(i * log_q) / i
        alphas.append(term / L)
        partial += term
        # sum_i q**i / i = L, so the remaining mass is (L - partial) / L
        if (L - partial) / L <= tol and _nb_tail(nb.q, i, L) <= tol:
            break
    params = DcpParams(lam, alphas, truncated=True)
    object.__setattr__(params, "tail_mass", _nb_tail(nb.q, i, L))
    return params


def _nb_tail(q: float, R: int, L: float) -> float:
    """``sum_{i>R} q**i / (i L)`` summed directly (no cancellation)."""
    log_q = math.log(q)
    total = 0.0
    i = R + 1
    while True:
        term = math.exp(i * log_q) / i
        if term == 0.0 or term < total * 1e-17:
            break
        total += term
        i += 1
    return total / L


def nb_pmf(nb: NbParams, n) -> np.ndarray | float:
    """Closed-form ``G(n+r)/(G(r) n!) (1-q)**r q**n``."""
    n_arr = np.asarray(n, dtype=float)
    logp = (
        gammaln(n_arr + nb.r)
        - gammaln(nb.r)
        - gammaln(n_arr + 1)
        + nb.r * math.log1p(-nb.q)
        + n_arr * math.log(nb.q)
    )
    out = np.exp(logp)
    return float(out) if np.ndim(out) == 0 else out


def _check_k(k) -> int:
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k}")
    return int(k)


def _check_mass(mass) -> float:
    mass = float(mass)
    if not (mass > 0 and math.isfinite(mass)):
        raise ValueError(f"region mass must be positive and finite, got {mass}")
    return mass
