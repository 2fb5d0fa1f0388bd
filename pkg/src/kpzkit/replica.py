"""Bethe-string spectra, norm weights and the finite string sums for
<Z(0,t)^N> of the sharp-wedge stochastic heat equation, N <= 3.

The moment is a finite sum over ordered string sizes (n_1..n_M) with
sum n_a = N, each term an M-fold momentum integral

    <Z^N> = sum_M 1/M! sum_{n} int prod dq_a/(2 pi)  N! det[C] exp(-E t),
    C_ab  = 1 / (0.5 (n_a + n_b) + i (q_a - q_b)),
    E     = 0.5 sum n_a q_a^2 - sum (n_a^3 - n_a)/24.

C is Hermitian, so det C is real pointwise.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .specfun import gauss_legendre

__all__ = [
    "StringConfiguration",
    "string_energy",
    "norm_weight",
    "string_partitions",
    "moment_via_strings",
    "second_moment_exact",
    "normalized_moment",
]

_IMAG_TOL = 1e-10


@dataclass(frozen=True)
class StringConfiguration:
    sizes: tuple
    momenta: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        momenta = tuple(float(q) for q in self.momenta)
        if len(sizes) != len(momenta) or not sizes:
            raise ValueError("need one momentum per string and at least one string")
        if min(sizes) < 1:
            raise ValueError("string sizes must be >= 1")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "momenta", momenta)

    @property
    def M(self) -> int:
        return len(self.sizes)

    @property
    def N(self) -> int:
        return sum(self.sizes)

    def rapidities(self):
        """lambda^{a,r} = q_a + i (n_a + 1 - 2r)/2, r = 1..n_a."""
        return [q + 0.5j * (n + 1 - 2 * r) for n, q in zip(self.sizes, self.momenta)
                for r in range(1, n + 1)]


def string_energy(config: StringConfiguration) -> float:
    n = np.array(config.sizes, dtype=float)
    q = np.array(config.momenta)
    return float(0.5 * np.sum(n * q * q) - np.sum(n ** 3 - n) / 24.0)


def _cauchy_det(n, q):
    """det C for M <= 3 strings; q has shape (M, ...) to allow broadcasting."""
    M = len(n)
    C = [[1.0 / (0.5 * (n[a] + n[b]) + 1j * (q[a] - q[b])) for b in range(M)] for a in range(M)]
    if M == 1:
        return C[0][0] + 0j * q[0]
    if M == 2:
        return C[0][0] * C[1][1] - C[0][1] * C[1][0]
    if M == 3:
        return (C[0][0] * (C[1][1] * C[2][2] - C[1][2] * C[2][1])
                - C[0][1] * (C[1][0] * C[2][2] - C[1][2] * C[2][0])
                + C[0][2] * (C[1][0] * C[2][1] - C[1][1] * C[2][0]))
    raise ValueError("norm weights are implemented for M <= 3 strings")


def norm_weight(config: StringConfiguration) -> float:
    """N! det[1/(0.5(n_a+n_b) + i(q_a-q_b))], real by the Hermitian structure."""
    if config.M > 3:
        raise ValueError("norm weights are implemented for M <= 3 strings")
    q = [np.float64(x) for x in config.momenta]
    d = complex(_cauchy_det(config.sizes, q))
    scale = max(abs(d), 1.0)
    if abs(d.imag) > _IMAG_TOL * scale:
        raise ArithmeticError(f"norm weight has imaginary part {d.imag:.3e}")
    return math.factorial(config.N) * d.real


def string_partitions(N: int):
    """Ordered tuples (n_1..n_M) of positive integers with sum N, grouped by M."""
    out = []
    for M in range(1, N + 1):
        for c in itertools.product(range(1, N + 1), repeat=M):
            if sum(c) == N:
                out.append(c)
    return out


def _string_term(sizes, N, t, nq, chunk=64):
    """M-fold q-integral of N! det C exp(-E t) / (2 pi)^M on [-Q_a, Q_a]."""
    M = len(sizes)
    rules = [gauss_legendre(nq, -8.0 / math.sqrt(n * t), 8.0 / math.sqrt(n * t)) for n in sizes]
    shift = sum(n ** 3 - n for n in sizes) / 24.0
    gauss = [r.weights * np.exp(-0.5 * n * r.nodes ** 2 * t) for r, n in zip(rules, sizes)]
    total = 0.0 + 0.0j
    worst_imag = 0.0
    if M == 1:
        vals = _cauchy_det(sizes, [rules[0].nodes])
        total = np.sum(gauss[0] * vals)
        worst_imag = float(np.max(np.abs(vals.imag)))
    else:
        # chunk the first momentum to bound memory in the M = 3 tensor grid
        rest = np.meshgrid(*[r.nodes for r in rules[1:]], indexing="ij")
        wrest = np.ones_like(rest[0])
        for k, g in enumerate(gauss[1:]):
            shape = [1] * (M - 1)
            shape[k] = -1
            wrest = wrest * g.reshape(shape)
        for lo in range(0, nq, chunk):
            q0 = rules[0].nodes[lo:lo + chunk].reshape((-1,) + (1,) * (M - 1))
            w0 = gauss[0][lo:lo + chunk].reshape((-1,) + (1,) * (M - 1))
            qs = [q0] + [r[None, ...] for r in rest]
            vals = _cauchy_det(sizes, qs)
            worst_imag = max(worst_imag, float(np.max(np.abs(vals.imag))))
            total += np.sum(w0 * wrest[None, ...] * vals)
    if worst_imag > _IMAG_TOL:
        raise ArithmeticError(f"det C has imaginary part {worst_imag:.3e}")
    return math.factorial(N) * total.real * math.exp(shift * t) / (2 * math.pi) ** M


def moment_via_strings(N: int, t: float, nq: int = 200, check: bool = True, rtol: float = 1e-8) -> float:
    """<Z(0,t)^N> for delta initial data from the finite string sum, N in {1, 2, 3}.

    With ``check`` the sum is repeated on a finer rule (5 nq / 4 nodes per
    momentum) and a relative change above ``rtol`` raises.
    """
    if N not in (1, 2, 3):
        raise ValueError("N must be 1, 2 or 3")
    if not 0 < t <= 1.5:
        raise ValueError("t must lie in (0, 1.5]")

    def total(m):
        acc = 0.0
        for sizes in string_partitions(N):
            acc += _string_term(sizes, N, t, m) / math.factorial(len(sizes))
        return acc

    val = total(nq)
    if check:
        fine = total(nq + nq // 4)
        if abs(val - fine) > rtol * abs(val):
            raise ArithmeticError(f"q-quadrature not converged: {val} vs {fine} on the finer rule")
    return val


def second_moment_exact(t):
    """Closed form <Z(0,t)^2> = 1/(2 pi t) + e^{t/4} erfc(-sqrt(t)/2) / (4 sqrt(pi t))."""
    t = np.asarray(t, dtype=float)
    return 1.0 / (2 * np.pi * t) + np.exp(t / 4) * erfc(-np.sqrt(t) / 2) / (4 * np.sqrt(np.pi * t))


def normalized_moment(N: int, t: float, **kw) -> float:
    """<Z^N> / <Z>^N with <Z> = (2 pi t)^{-1/2}."""
    return moment_via_strings(N, t, **kw) * (2 * math.pi * t) ** (N / 2)
