"""Two-point law of the Airy process through the extended Airy kernel.

With H = -d^2/dx^2 + x one has H Ai(. + u) = -u Ai(. + u), so every block of
the extended kernel is an integral over the spectral variable u:

    K_Ai            = int_0^inf          Ai(x+u) Ai(y+u) du
    e^{wH} K_Ai     = int_0^inf  e^{-wu} Ai(x+u) Ai(y+u) du
    e^{-wH}(1-K_Ai) = int_-inf^0 e^{wu}  Ai(x+u) Ai(y+u) du

For small w the last one is evaluated as the Airy heat kernel

    e^{-wH}(x, y) = (4 pi w)^{-1/2} exp(-(x-y)^2/4w - w(x+y)/2 + w^3/12)

minus the u > 0 part, which avoids the slowly converging u < 0 integral.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fredholm import det_i_minus
from .specfun import airy_ai, composite_gauss_legendre, gauss_legendre

__all__ = ["airy_heat_kernel", "TwoPointResult", "two_point_joint_cdf", "two_point_covariance"]

_SPLIT_W = 0.5
_UCUT = 10.0


def airy_heat_kernel(w: float, x, y):
    """Kernel of e^{-wH} for w > 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-(x - y) ** 2 / (4 * w) - w * (x + y) / 2 + w ** 3 / 12) / math.sqrt(4 * math.pi * w)


class _Side:
    """Nodes and Airy samples for one copy of the line, P_s restricted."""

    def __init__(self, s, n, top, w, u_pos, u_neg):
        L = max(top - s, 1.0)
        r = gauss_legendre(n, s, s + L)
        self.x = r.nodes
        self.sw = np.sqrt(r.weights)
        self.Ap = self.sw[:, None] * airy_ai(self.x[:, None] + u_pos.nodes[None, :])
        self.An = None
        if u_neg is not None:
            self.An = self.sw[:, None] * airy_ai(self.x[:, None] + u_neg.nodes[None, :])
        self.K = (self.Ap * u_pos.weights) @ self.Ap.T
        self.K = 0.5 * (self.K + self.K.T)


class _Extended:
    def __init__(self, w, n=100, top=9.0, s_min=-8.0):
        if not (w > 0 and np.isfinite(w)):
            raise ValueError("w must be positive")
        self.w = w
        self.n = n
        self.top = top
        self.u_pos = composite_gauss_legendre(0.0, _UCUT - s_min + 1.0, panel=0.5, n=16)
        self.u_neg = None
        if w >= _SPLIT_W:
            self.u_neg = composite_gauss_legendre(-36.0 / w, 0.0, panel=0.5, n=16)
        self._cache = {}

    def side(self, s):
        key = float(s)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = _Side(s, self.n, max(self.top, s + 8.0), self.w, self.u_pos, self.u_neg)
        return self._cache[key]

    def matrix(self, s1, s2, decoupled=False):
        a, b = self.side(s1), self.side(s2)
        w = self.w
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = a.K
        M[n:, n:] = b.K
        if decoupled:
            return M
        up = self.u_pos
        # lower-left: e^{wH} K from copy 1 into copy 2
        M[n:, :n] = (b.Ap * (up.weights * np.exp(-w * up.nodes))) @ a.Ap.T
        # upper-right: -e^{-wH}(1 - K) from copy 2 into copy 1
        if self.u_neg is not None:
            un = self.u_neg
            E = (a.An * (un.weights * np.exp(w * un.nodes))) @ b.An.T
        else:
            G = airy_heat_kernel(w, a.x[:, None], b.x[None, :]) * a.sw[:, None] * b.sw[None, :]
            E = G - (a.Ap * (up.weights * np.exp(w * up.nodes))) @ b.Ap.T
        M[:n, n:] = -E
        return M

    def joint(self, s1, s2, decoupled=False):
        val, _ = det_i_minus(self.matrix(s1, s2, decoupled))
        return val

    def marginal(self, s):
        val, _ = det_i_minus(self.side(s).K)
        return val


def two_point_joint_cdf(s1: float, s2: float, w: float, n: int = 100, decoupled: bool = False) -> float:
    """P(A(0) <= s1, A(w) <= s2) = det(I - K^(2)) for the Airy process A."""
    return _Extended(w, n, s_min=min(s1, s2)).joint(s1, s2, decoupled)


@dataclass(frozen=True)
class TwoPointResult:
    w: float
    g: float
    covariance: float
    variance: float
    n: int
    quadrature: tuple
    max_condition: float
    symmetry_defect: float


def two_point_covariance(w: float, n: int = 100, m_a: int = 48, m_d: int = 32,
                         a_range=(-7.5, 4.5), decoupled: bool = False) -> TwoPointResult:
    """g(w) = E (A(0) - A(w))^2 and Cov(A(0), A(w)) from the joint law.

    Uses g = 2 int da int_0^inf dd [2F(a) - J(a, a+d) - J(a+d, a)] where J is the
    joint CDF and F the marginal; the integrand is non-negative, so no large
    terms cancel.  J(a, b) = J(b, a) by reversibility, which is checked on a
    few nodes and reported.
    """
    if not (0 < w <= 5.0):
        raise ValueError("w must lie in (0, 5]")
    D = 10.0 if decoupled else min(10.0, 9.0 * math.sqrt(2.0 * w) + 1.5)
    ar = gauss_legendre(m_a, *a_range)
    dr = gauss_legendre(m_d, 0.0, D)
    ext = _Extended(w, n, s_min=a_range[0])
    F = np.array([ext.marginal(a) for a in ar.nodes])
    inner = np.zeros(m_a)
    cond = 1.0
    sym = 0.0
    for i, a in enumerate(ar.nodes):
        vals = np.empty(m_d)
        for j, d in enumerate(dr.nodes):
            M = ext.matrix(a, a + d, decoupled)
            vals[j] = det_i_minus(M)[0]
            if j == m_d // 2 and i % 12 == 0:
                cond = max(cond, float(np.linalg.cond(np.eye(2 * n) - M)))
                rev = det_i_minus(ext.matrix(a + d, a, decoupled))[0]
                sym = max(sym, abs(rev - vals[j]))
        inner[i] = np.dot(dr.weights, F[i] - vals)
    g = 4.0 * float(np.dot(ar.weights, inner))
    # variance of the marginal from the same discretization
    from .distributions import tw_moments
    _, var = tw_moments("gue", 60, 12.0)
    cov = var - 0.5 * g
    return TwoPointResult(w, g, cov, var, n, (m_a, m_d, D), cond, sym)
