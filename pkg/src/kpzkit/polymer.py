"""Directed polymer in a random medium on the even sublattice of Z^2.

Z(n+1, M) = exp(beta xi(n+1, M)) (Z(n, M+1) + Z(n, M-1)) / 2,  Z(0, 0) = 1.

Row n of the disorder holds xi(n, M) for M = -n, -n+2, ..., n (only sites
with n + M even are reachable).  Rows are drawn in order from one Philox
stream per (seed, replica), so xi(n, M) depends only on (seed, replica, n, M)
and the vectorised reference code and the compiled fast path see the same
numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

from .rng import stream
from .stats import exponent_fit

__all__ = [
    "DisorderField",
    "PartitionLattice",
    "evolve_partition",
    "log_partition_endpoint",
    "log_partition_samples",
    "FreeEnergyResult",
    "free_energy_estimate",
    "ExponentResult",
    "fluctuation_exponent",
    "IntermediateDisorderResult",
    "intermediate_disorder_partition",
    "walk_log_weights",
]

_DISTS = {"gaussian": 0, "bernoulli": 1, "exponential": 2}
_LOG_HALF = math.log(0.5)


class DisorderField:
    """i.i.d. site energies xi(n, M) with a distribution descriptor and a seed.

    gaussian: N(0, 1); bernoulli: +-1 with probability 1/2; exponential: Exp(1).
    """

    def __init__(self, dist: str = "gaussian", seed: int = 0, replica: int = 0):
        if dist not in _DISTS:
            raise ValueError(f"unknown disorder {dist!r}; choose from {sorted(_DISTS)}")
        self.dist = dist
        self.seed = int(seed)
        self.replica = int(replica)
        self._rng = self.generator()
        self._rows = [np.zeros(1)]  # row 0 is never used; Z(0, 0) = 1

    @property
    def code(self) -> int:
        return _DISTS[self.dist]

    def generator(self) -> np.random.Generator:
        return stream(self.seed, "polymer-disorder", self.replica)

    def log_mgf(self, beta: float) -> float:
        """Lambda(beta) = log E exp(beta xi), analytically per descriptor."""
        self.check_beta(beta)
        if self.dist == "gaussian":
            return 0.5 * beta * beta
        if self.dist == "bernoulli":
            return math.log(math.cosh(beta))
        return -math.log1p(-beta)

    def check_beta(self, beta: float):
        if not math.isfinite(beta):
            raise ValueError("beta must be finite")
        if self.dist == "exponential" and beta >= 1.0:
            raise ValueError("E exp(beta xi) is infinite for exponential disorder with beta >= 1")

    @staticmethod
    def _draw(rng, dist, size):
        if dist == "gaussian":
            return rng.standard_normal(size)
        if dist == "bernoulli":
            return np.where(rng.random(size) < 0.5, 1.0, -1.0)
        return rng.standard_exponential(size)

    def row(self, n: int) -> np.ndarray:
        """xi(n, M) for M = -n, -n+2, ..., n."""
        while len(self._rows) <= n:
            k = len(self._rows)
            self._rows.append(self._draw(self._rng, self.dist, k + 1))
        return self._rows[n]

    def value(self, n: int, M: int) -> float:
        if n < 1 or abs(M) > n or (n + M) % 2:
            raise ValueError("xi(n, M) is defined for n >= 1, |M| <= n, n + M even")
        return float(self.row(n)[(M + n) // 2])


@dataclass
class PartitionLattice:
    """log Z(n, M) on rows n = 0..N; ``logZ[n, M + N]`` (-inf where Z = 0)."""
    logZ: np.ndarray
    beta: float
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.logZ.shape[0] - 1

    @property
    def Z(self) -> np.ndarray:
        return np.exp(self.logZ)

    def value(self, n: int, M: int) -> float:
        return float(np.exp(self.log_value(n, M)))

    def log_value(self, n: int, M: int) -> float:
        if abs(M) > self.N:
            return -math.inf
        return float(self.logZ[n, M + self.N])

    def check(self):
        N = self.N
        n = np.arange(N + 1)[:, None]
        M = np.arange(-N, N + 1)[None, :]
        odd = ((n + M) % 2 == 1) | (np.abs(M) > n)
        if np.any(np.isfinite(self.logZ[odd])):
            raise ValueError("Z(n, M) must vanish off the reachable even sublattice")
        if np.any(~np.isfinite(self.logZ[~odd])):
            raise ValueError("Z(n, M) must be positive and finite on reachable sites")
        if self.logZ[0, N] != 0.0:
            raise ValueError("Z(0, 0) must equal 1")
        return self


def walk_log_weights(N: int) -> np.ndarray:
    """log [2^{-n} C(n, (n+M)/2)] in the PartitionLattice layout (beta = 0)."""
    out = np.full((N + 1, 2 * N + 1), -np.inf)
    for n in range(N + 1):
        k = np.arange(n + 1)
        out[n, 2 * k - n + N] = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) - n * math.log(2)
    return out


def evolve_partition(N: int, beta: float, disorder: DisorderField, space: str = "log") -> PartitionLattice:
    """Reference evolution of the full lattice, row by row.

    ``space="log"`` runs the log-sum-exp recursion for h = log Z; ``"linear"``
    multiplies Z directly (overflows for large N; used to cross-check).
    """
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    disorder.check_beta(beta)
    if space not in ("log", "linear"):
        raise ValueError("space must be 'log' or 'linear'")
    L = np.full((N + 1, 2 * N + 1), -np.inf)
    L[0, N] = 0.0
    prev = np.array([0.0]) if space == "log" else np.array([1.0])
    for n in range(1, N + 1):
        xi = disorder.row(n)
        if space == "log":
            left = np.concatenate(([-np.inf], prev))    # Z(n-1, M-1)
            right = np.concatenate((prev, [-np.inf]))   # Z(n-1, M+1)
            cur = beta * xi + _LOG_HALF + np.logaddexp(left, right)
            if not np.all(np.isfinite(cur)):
                raise OverflowError(f"log-space recursion left the floating range at row {n}")
            L[n, N - n:N + n + 1:2] = cur
        else:
            left = np.concatenate(([0.0], prev))
            right = np.concatenate((prev, [0.0]))
            with np.errstate(over="ignore"):
                cur = np.exp(beta * xi) * 0.5 * (left + right)
            if not np.all(np.isfinite(cur)) or np.any(cur <= 0):
                raise OverflowError(f"linear recursion overflowed or underflowed at row {n}")
            with np.errstate(divide="ignore"):
                L[n, N - n:N + n + 1:2] = np.log(cur)
        prev = cur
    return PartitionLattice(L, float(beta), {"dist": disorder.dist, "seed": disorder.seed,
                                             "replica": disorder.replica, "space": space})


@njit(cache=True)
def _endpoint_kernel(N, Mend, beta, code, rng):
    """log Z(N, Mend) restricted to the diamond of sites that can still reach
    (N, Mend); every row of disorder is still drawn in full so the stream
    stays aligned with DisorderField."""
    prev = np.full(N + 2, -np.inf)
    cur = np.full(N + 2, -np.inf)
    xi = np.empty(N + 1)
    prev[0] = 0.0
    lh = math.log(0.5)
    for n1 in range(1, N + 1):
        for k in range(n1 + 1):
            if code == 0:
                xi[k] = rng.standard_normal()
            elif code == 1:
                xi[k] = 1.0 if rng.random() < 0.5 else -1.0
            else:
                xi[k] = rng.standard_exponential()
        w = N - n1
        klo = max(0, (Mend - w + n1 + 1) // 2)
        khi = min(n1, (Mend + w + n1) // 2)
        for k in range(klo, khi + 1):
            a = prev[k - 1] if k >= 1 else -np.inf
            b = prev[k] if k <= n1 - 1 else -np.inf
            if a < b:
                a, b = b, a
            if a == -np.inf:
                s = -np.inf
            else:
                s = a + math.log1p(math.exp(b - a))
            cur[k] = beta * xi[k] + lh + s
        prev, cur = cur, prev
    return prev[(Mend + N) // 2]


def log_partition_endpoint(N: int, beta: float, disorder: DisorderField, M: int = 0) -> float:
    """log Z(N, M) by the compiled diamond recursion (fresh stream of ``disorder``)."""
    if (N + M) % 2 or abs(M) > N or N < 1:
        raise ValueError("endpoint (N, M) must satisfy N >= 1, |M| <= N, N + M even")
    disorder.check_beta(beta)
    val = _endpoint_kernel(int(N), int(M), float(beta), disorder.code, disorder.generator())
    if not math.isfinite(val):
        raise OverflowError("log partition function is not finite")
    return float(val)


def log_partition_samples(N: int, beta: float, dist: str, replicas: int, seed: int,
                          M: int = 0, start: int = 0) -> np.ndarray:
    """log Z(N, M) for replicas start .. start + replicas - 1."""
    return np.array([log_partition_endpoint(N, beta, DisorderField(dist, seed, r), M)
                     for r in range(start, start + replicas)])


# ------------------------------------------------------------- free energy

@dataclass(frozen=True)
class FreeEnergyResult:
    v_inf: float
    ci: tuple
    N: np.ndarray
    per_site: np.ndarray
    per_site_se: np.ndarray
    monotone: bool
    converged: bool


def free_energy_estimate(beta: float, dist: str, N_ladder, replicas: int, seed: int,
                         n_boot: int = 400, level: float = 0.95) -> FreeEnergyResult:
    """v_inf from N^{-1} E log Z(N, 0), extrapolated linearly in 1/N.

    The CI is a percentile bootstrap over replicas (resampled independently
    at each N).  ``monotone`` records whether the per-site means are ordered
    along the ladder, ``converged`` whether the extrapolated value lies within
    the spread of the ladder plus four standard errors.
    """
    N = np.asarray(N_ladder, dtype=int)
    if N.size < 2 or np.any(np.diff(N) <= 0):
        raise ValueError("N-ladder must be increasing with at least two entries")
    if replicas < 10:
        raise ValueError("need at least 10 replicas")
    if np.any(N % 2):
        raise ValueError("the endpoint (N, 0) needs even N")
    data = [log_partition_samples(int(n), beta, dist, replicas, seed) / n for n in N]
    means = np.array([d.mean() for d in data])
    ses = np.array([d.std(ddof=1) / math.sqrt(replicas) for d in data])
    X = np.vstack([np.ones(N.size), 1.0 / N]).T

    def extrap(m):
        return float(np.linalg.lstsq(X, m, rcond=None)[0][0])

    v = extrap(means)
    rng = stream(seed, "polymer-bootstrap")
    boots = np.empty(n_boot)
    for b in range(n_boot):
        boots[b] = extrap(np.array([d[rng.integers(0, replicas, replicas)].mean() for d in data]))
    a = (1 - level) / 2
    ci = (float(np.quantile(boots, a)), float(np.quantile(boots, 1 - a)))
    d = np.diff(means)
    monotone = bool(np.all(d >= -3 * np.hypot(ses[1:], ses[:-1])) or np.all(d <= 3 * np.hypot(ses[1:], ses[:-1])))
    spread = np.ptp(means) + 4 * ses.max()
    converged = bool(abs(v - means[-1]) <= spread and np.all(np.isfinite(boots)))
    return FreeEnergyResult(v, ci, N, means, ses, monotone, converged)


@dataclass(frozen=True)
class ExponentResult:
    N: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    slope: float
    slope_se: float
    flagged: bool
    replicas: int


def fluctuation_exponent(beta: float, dist: str, N_grid, replicas: int, seed: int,
                         max_se: float = 0.1) -> ExponentResult:
    """Slope of log Var(log Z(N, 0)) against log N; KPZ predicts 2/3.

    ``flagged`` is set when the slope SE exceeds ``max_se``.  For beta = 0 the
    variance is exactly zero and the slope is reported as 0 with SE 0.
    """
    N = np.asarray(N_grid, dtype=int)
    if N.size < 2:
        raise ValueError("need at least two N values")
    var = np.empty(N.size)
    vse = np.empty(N.size)
    for i, n in enumerate(N):
        x = log_partition_samples(int(n), beta, dist, replicas, seed)
        # identical samples (beta = 0) give exactly zero, not rounding residue
        var[i] = 0.0 if np.ptp(x) == 0 else np.var(x, ddof=1)
        m4 = np.mean((x - x.mean()) ** 4)
        vse[i] = math.sqrt(max(m4 - var[i] ** 2, 0.0) / replicas)
    if np.all(var == 0.0):
        return ExponentResult(N, var, vse, 0.0, 0.0, False, replicas)
    if N.size < 4:
        raise ValueError("a power-law fit needs at least four N values")
    slope, se = exponent_fit(N, var)
    return ExponentResult(N, var, vse, slope, se, bool(se > max_se), replicas)


# ---------------------------------------------------- intermediate disorder

@dataclass(frozen=True)
class IntermediateDisorderResult:
    value: float
    n: int
    M: int
    beta: float
    log_normalizer: float
    parity_adjusted: bool


def intermediate_disorder_partition(epsilon: float, t: float, x: float,
                                    disorder: DisorderField) -> IntermediateDisorderResult:
    """exp(-n Lambda(beta)) Z_beta(n, M), beta = (epsilon/2)^{1/2}, n = floor(t/epsilon^2),
    M = floor(x/epsilon), with Lambda = log E e^{beta xi}.

    Each recursion step multiplies the mean by E e^{beta xi}, so normalizing by
    n Lambda makes E[value] the simple-random-walk probability of (n, M).  If
    n + M is odd the endpoint moves one site toward the origin (M = 0 moves to 1).
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    n = int(math.floor(t / epsilon ** 2 + 1e-12))
    if n < 1:
        raise ValueError("floor(t / epsilon^2) must be >= 1")
    M = int(math.floor(x / epsilon + 1e-12))
    adjusted = False
    if (n + M) % 2:
        M = M - 1 if M > 0 else M + 1
        adjusted = True
    if abs(M) > n:
        raise ValueError(f"endpoint M={M} unreachable in n={n} steps")
    beta = math.sqrt(epsilon / 2)
    lam = disorder.log_mgf(beta)
    logz = log_partition_endpoint(n, beta, disorder, M)
    return IntermediateDisorderResult(math.exp(logz - n * lam), n, M, beta, n * lam, adjusted)
