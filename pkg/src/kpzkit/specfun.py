"""Special functions and quadrature rules.

Ai(x) is evaluated from a table of local Taylor expansions for |x| < 9 and
from the classical asymptotic expansions beyond.  The table values at the
knots come from the Maclaurin series summed in 60-digit decimal arithmetic,
so the cancellation that ruins the float64 series for x > 2 never occurs.
"""
from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

__all__ = [
    "QuadratureRule",
    "AiryEvaluator",
    "airy_ai",
    "airy_ai_prime",
    "gauss_legendre",
    "composite_gauss_legendre",
    "q_exponential",
    "airy_cubic_identity_residual",
    "airy_product_identity_residual",
]

# Ai(0) and -Ai'(0) to 50 digits
_AI0 = "0.35502805388781723926006318600418317639797917419918"
_AIP0 = "0.25881940379280679840518356018920396347909113835493"

_KNOT_STEP = 0.25
_SERIES_EDGE = 9.0
_TAYLOR_ORDER = 26


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True)
class AiryEvaluator:
    """Describes how airy_ai works; kept for reporting."""
    series_edge: float = _SERIES_EDGE
    knot_step: float = _KNOT_STEP
    taylor_order: int = _TAYLOR_ORDER
    target_rel_error: float = 1e-12


def _maclaurin_decimal(x: float, prec: int = 60):
    """Ai(x), Ai'(x) from the power series in extended precision."""
    with decimal.localcontext() as ctx:
        ctx.prec = prec
        X = decimal.Decimal(repr(x))
        x3 = X * X * X
        c1 = +decimal.Decimal(_AI0)
        c2 = +decimal.Decimal(_AIP0)
        tiny = decimal.Decimal(10) ** (-prec - 5)
        # f = sum a_k x^{3k}, g = sum b_k x^{3k+1}, f'' = x f, g'' = x g
        f = tf = decimal.Decimal(1)
        g = tg = X
        fp = tfp = X * X / 2
        gp = tgp = decimal.Decimal(1)
        k = 1
        while True:
            tf = tf * x3 / ((3 * k - 1) * (3 * k))
            tg = tg * x3 / ((3 * k) * (3 * k + 1))
            if k > 1:
                tfp = tfp * x3 / (3 * (k - 1) * (3 * k - 1))
                fp += tfp
            tgp = tgp * x3 / ((3 * k - 2) * (3 * k))
            f += tf
            g += tg
            gp += tgp
            k += 1
            if k > 8 and max(abs(tf), abs(tg), abs(tfp), abs(tgp)) < tiny:
                break
        ai = c1 * f - c2 * g
        aip = c1 * fp - c2 * gp
        return float(ai), float(aip)


@lru_cache(maxsize=1)
def _taylor_table():
    n_knots = int(round(2 * _SERIES_EDGE / _KNOT_STEP)) + 1
    knots = -_SERIES_EDGE + _KNOT_STEP * np.arange(n_knots)
    K = _TAYLOR_ORDER
    C = np.zeros((n_knots, K + 1))
    for i, x0 in enumerate(knots):
        a0, a1 = _maclaurin_decimal(float(x0))
        c = C[i]
        c[0], c[1] = a0, a1
        c[2] = x0 * a0 / 2.0
        for k in range(1, K - 1):
            c[k + 2] = (x0 * c[k] + c[k - 1]) / ((k + 2) * (k + 1))
    return knots, C


@lru_cache(maxsize=1)
def _asym_coeffs(kmax: int = 80):
    u = np.empty(kmax + 1)
    v = np.empty(kmax + 1)
    u[0] = v[0] = 1.0
    for k in range(1, kmax + 1):
        u[k] = u[k - 1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / (216.0 * k * (2 * k - 1))
        v[k] = -u[k] * (6 * k + 1) / (6 * k - 1)
    return u, v


@njit(cache=True)
def _asym_pos_scalar(x, deriv, u, v):
    zeta = 2.0 / 3.0 * x ** 1.5
    c = v if deriv else u
    s = 0.0
    prev = np.inf
    p = 1.0
    for k in range(c.shape[0]):
        term = c[k] * p
        mag = abs(term)
        if mag >= prev:
            break
        s += -term if k % 2 else term
        if mag < 1e-17 * abs(s):
            break
        prev = mag
        p /= zeta
    pref = math.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    if deriv:
        return -pref * x ** 0.25 * s
    return pref * x ** -0.25 * s


@njit(cache=True)
def _asym_neg_scalar(x, deriv, u, v):
    r = -x
    zeta = 2.0 / 3.0 * r ** 1.5
    c = v if deriv else u
    # P = sum (-1)^k c_{2k} zeta^{-2k}, Q = sum (-1)^k c_{2k+1} zeta^{-2k-1}
    P = 0.0
    Q = 0.0
    prev = np.inf
    p = 1.0
    for k in range(c.shape[0]):
        term = c[k] * p
        mag = abs(term)
        if mag >= prev:
            break
        sgn = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 0:
            P += sgn * term
        else:
            Q += sgn * term
        if mag < 1e-17:
            break
        prev = mag
        p /= zeta
    phase = zeta - math.pi / 4
    cs = math.cos(phase)
    sn = math.sin(phase)
    if deriv:
        return r ** 0.25 / math.sqrt(math.pi) * (sn * P - cs * Q)
    return r ** -0.25 / math.sqrt(math.pi) * (cs * P + sn * Q)


@njit(cache=True)
def _airy_loop(x, out, deriv, x_first, step, edge, C, u, v):
    K = C.shape[1] - 1
    nk = C.shape[0]
    for i in range(x.shape[0]):
        xi = x[i]
        if xi >= edge:
            out[i] = _asym_pos_scalar(xi, deriv, u, v)
        elif xi <= -edge:
            out[i] = _asym_neg_scalar(xi, deriv, u, v)
        else:
            j = int(math.floor((xi - x_first) / step + 0.5))
            if j < 0:
                j = 0
            elif j >= nk:
                j = nk - 1
            h = xi - (x_first + j * step)
            if deriv:
                y = K * C[j, K]
                for k in range(K - 1, 0, -1):
                    y = y * h + k * C[j, k]
            else:
                y = C[j, K]
                for k in range(K - 1, -1, -1):
                    y = y * h + C[j, k]
            out[i] = y


def _airy(x, deriv):
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise ValueError("airy_ai: non-finite argument")
    flat = np.ascontiguousarray(xa).ravel()
    out = np.empty_like(flat)
    knots, C = _taylor_table()
    u, v = _asym_coeffs()
    _airy_loop(flat, out, deriv, knots[0], _KNOT_STEP, _SERIES_EDGE, C, u, v)
    out = out.reshape(xa.shape)
    if out.ndim == 0:
        return float(out)
    return out


def airy_ai(x):
    """Airy function Ai for real scalar or array input."""
    return _airy(x, False)


def airy_ai_prime(x):
    """Derivative Ai'(x)."""
    return _airy(x, True)


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=256)
def _legendre_unit(n: int):
    """Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration."""
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [a, b]."""
    if int(n) != n or n < 1:
        raise ValueError("gauss_legendre: n must be a positive integer")
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ValueError("gauss_legendre: need finite a < b")
    x, w = _legendre_unit(int(n))
    half = 0.5 * (b - a)
    return QuadratureRule(a + half * (x + 1.0), half * w, (float(a), float(b)))


def composite_gauss_legendre(a: float, b: float, panel: float = 1.0, n: int = 20) -> QuadratureRule:
    """Gauss-Legendre on equal panels of width <= panel covering [a, b]."""
    if a >= b:
        raise ValueError("composite_gauss_legendre: need a < b")
    m = max(1, int(math.ceil((b - a) / panel - 1e-12)))
    x, w = _legendre_unit(n)
    edges = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(edges)
    nodes = (edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes, weights, (float(a), float(b)))


# ------------------------------------------------------------ q-exponential

def q_exponential(z, tau: float, cutoff: float = 1e-16):
    """e_tau(z) = 1/(z; tau)_inf by the truncated product."""
    if not (0.0 <= tau < 1.0):
        raise ValueError("q_exponential: tau must lie in [0, 1)")
    z = complex(z) if isinstance(z, complex) else z
    prod = 1.0
    zk = z
    k = 0
    while True:
        fac = 1.0 - zk
        if abs(fac) < 1e-12:
            raise ZeroDivisionError(f"q_exponential: z within 1e-12 of the pole tau^-{k}")
        prod *= fac
        k += 1
        zk = zk * tau
        if abs(zk) < cutoff or k > 100000:
            break
    return 1.0 / prod


# ------------------------------------------------------------ Airy identities

def _poly_d(P, c):
    """Coefficients of e^{-cy} d/dy[e^{cy} P(1/y)] as a polynomial in v = 1/y."""
    out = np.zeros(len(P) + 1)
    out[: len(P)] += c * P
    j = np.arange(len(P))
    out[1:] -= j * P
    return out


def _ai_exp_left_tail(Y: float, c: float, kmax: int = 40) -> float:
    """int_{-inf}^{-Y} Ai(y) e^{cy} dy by repeated integration by parts."""
    y0 = -Y
    v0 = 1.0 / y0
    a, ap = airy_ai(y0), airy_ai_prime(y0)
    e = math.exp(c * y0)
    phi = np.array([1.0])
    total = 0.0
    prev = np.inf
    for _ in range(kmax):
        psi = np.concatenate(([0.0], phi))           # v * phi
        dpsi = _poly_d(psi, c)
        vp = np.polynomial.polynomial.polyval(v0, psi)
        vdp = np.polynomial.polynomial.polyval(v0, dpsi)
        term = e * (ap * vp - a * vdp)
        total += term
        if abs(term) < 1e-18 or abs(term) > prev:
            break
        prev = abs(term)
        phi = _poly_d(dpsi, c)
    return total


def airy_exp_integral(c: float) -> float:
    """int_R Ai(y) e^{cy} dy for 0 <= c <= 3 (equals e^{c^3/3})."""
    if not np.isfinite(c) or c < 0:
        raise ValueError("airy_exp_integral: need finite c >= 0")
    if c > 3.0 + 1e-12:
        raise ValueError("airy_exp_integral: c = lambda*n > 3 is outside the truncation regime")
    Y = 30.0
    # upper cut where Ai(y) e^{cy} < 1e-17 * e^{c^3/3}
    scale = c ** 3 / 3.0
    ytop = max(5.0, 2.0 * c * c)
    while 2.0 / 3.0 * ytop ** 1.5 - c * ytop < 39.0 - scale + 0.25 * math.log(ytop):
        ytop += 0.5
    rule = composite_gauss_legendre(-Y, ytop, panel=0.5, n=20)
    body = float(np.dot(rule.weights, airy_ai(rule.nodes) * np.exp(c * rule.nodes)))
    return body + _ai_exp_left_tail(Y, c)


def airy_cubic_identity_residual(lam: float, n: int) -> float:
    """|int Ai(y) e^{lam n y} dy - exp((lam n)^3 / 3)|."""
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and non-negative")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    c = lam * n
    return abs(airy_exp_integral(c) - math.exp(c ** 3 / 3.0))


def airy_product_integral(x: float, u: float) -> float:
    """2^{2/3} (2 pi)^-1 int e^{2iqu} Ai(2^{2/3}(q^2 + x)) dq (real by symmetry)."""
    if not (np.isfinite(x) and np.isfinite(u)):
        raise ValueError("non-finite input")
    a = 2.0 ** (2.0 / 3.0)
    # integrand below 1e-14 once the Ai argument exceeds ~14
    qmax = math.sqrt(max(14.5 / a - x, 0.0)) + 0.5
    rule = composite_gauss_legendre(0.0, qmax, panel=0.25, n=20)
    q = rule.nodes
    f = np.cos(2.0 * q * u) * airy_ai(a * (q * q + x))
    return a / math.pi * float(np.dot(rule.weights, f))


def airy_product_identity_residual(x: float, u: float) -> float:
    """|Fourier representation of Ai(x+u)Ai(x-u) minus the product itself|."""
    return abs(airy_product_integral(x, u) - airy_ai(x + u) * airy_ai(x - u))
