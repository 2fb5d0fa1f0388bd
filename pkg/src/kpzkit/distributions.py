"""Tracy-Widom laws, the finite-time crossover law and scaling algebra.

Kernels are integrals over an auxiliary variable u of products Ai(x+u)Ai(y+u);
every matrix below is assembled as A diag(weights) A^T with A[i, k] =
Ai(x_i + u_k), which keeps the discretized operators positive semidefinite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import loggamma

from .io import read_csv, write_csv, write_json
from .fredholm import FredholmResult, KernelSpec, det_i_minus, fredholm_det
from .specfun import airy_ai, composite_gauss_legendre, gauss_legendre

__all__ = [
    "EULER_GAMMA",
    "ROUGHNESS_EXPONENT",
    "DYNAMIC_EXPONENT",
    "CrossoverParams",
    "ScalingParams",
    "DistributionTable",
    "airy_kernel",
    "airy_kernel_matrix",
    "airy_kernel_spec",
    "tw_gue_cdf",
    "tw_gue_result",
    "tw_goe_cdf",
    "tw_goe_result",
    "tw_table",
    "tw_moments",
    "smoothed_airy_kernel",
    "smoothed_airy_kernel_matrix",
    "crossover_generating",
    "crossover_generating_table",
    "crossover_moments",
    "crossover_cdf_and_density",
    "effective_lambda",
    "kpz_rescale",
]

EULER_GAMMA = 0.57721566490153286061
ROUGHNESS_EXPONENT = 0.5   # b: stationary heights are Brownian in x
DYNAMIC_EXPONENT = 1.5     # z

# u is integrated up to where Ai(x+u) Ai(y+u) is below ~1e-20 for x, y >= s
_AIRY_UCUT = 10.0
# Fermi factor below e^-38 is dropped
_FERMI_CUT = 38.0


# ------------------------------------------------------------------ params

@dataclass(frozen=True)
class CrossoverParams:
    t: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and self.t > 0):
            raise ValueError("t must be positive")

    @property
    def gamma_t(self) -> float:
        return (self.t / 2.0) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ScalingParams:
    """KPZ coefficients; sigma and Gamma follow from lambda, nu, D."""
    lam: float = 1.0
    nu: float = 0.5
    D: float = 1.0
    v_inf: float = 0.0

    def __post_init__(self):
        if self.nu <= 0 or self.D <= 0:
            raise ValueError("nu and D must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.D / (2.0 * self.nu))

    @property
    def Gamma(self) -> float:
        return 0.5 * abs(self.lam) * self.sigma ** 4

    @classmethod
    def from_gamma(cls, Gamma: float, v_inf: float = 0.0):
        """Parameters with sigma = 1 and the requested Gamma."""
        if Gamma <= 0:
            raise ValueError("Gamma must be positive")
        return cls(lam=2.0 * Gamma, nu=0.5, D=1.0, v_inf=v_inf)


# ------------------------------------------------------------------ tables

@dataclass
class DistributionTable:
    s: np.ndarray
    F: np.ndarray
    density: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.density is not None:
            self.density = np.asarray(self.density, dtype=float)
        if self.s.ndim != 1 or self.s.shape != self.F.shape:
            raise ValueError("s and F must be 1-d arrays of equal length")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s-grid must be strictly increasing")

    def check(self, tail_tol=1e-4, mass_tol=1e-3, mono_tol=1e-10):
        """Raise if the table violates the CDF invariants."""
        if np.any(np.diff(self.F) < -mono_tol):
            raise ValueError("F is not non-decreasing")
        if self.F[0] > tail_tol or 1 - self.F[-1] > tail_tol:
            raise ValueError(f"F does not reach 0/1 at the grid ends ({self.F[0]:.2e}, {self.F[-1]:.6f})")
        if self.density is not None:
            if np.any(self.density < -1e-6):
                raise ValueError("negative density")
            mass = _trapz(self.density, self.s)
            if abs(mass - 1) > mass_tol:
                raise ValueError(f"density integrates to {mass}")
        return self

    # interpolation uses a monotone cubic so that CDF monotonicity survives
    def _interp(self):
        F = np.maximum.accumulate(np.clip(self.F, 0.0, 1.0))
        return PchipInterpolator(self.s, F, extrapolate=False)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = self._interp()(x)
        out = np.where(x < self.s[0], self.F[0] * 0 + 0.0, out)
        out = np.where(x > self.s[-1], 1.0, out)
        return out

    def ppf(self, p):
        """Inverse of ``cdf`` (the same monotone cubic), by bisection inside
        the bracketing grid cell."""
        F = np.maximum.accumulate(np.clip(self.F, 0.0, 1.0))
        p = np.clip(np.asarray(p, dtype=float), F[0], F[-1])
        i = np.clip(np.searchsorted(F, p, side="left") - 1, 0, F.size - 2)
        lo, hi = self.s[i].copy(), self.s[i + 1].copy()
        f = self._interp()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = f(mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, size, rng):
        return self.ppf(rng.random(size))

    def mean(self):
        s = self.s
        F = self.F
        return float(s[-1] - _trapz(F, s))

    def variance(self):
        s = self.s
        m2 = s[-1] ** 2 - _trapz(2 * s * self.F, s)
        return float(m2 - self.mean() ** 2)

    def to_csv(self, path, extra_comments=None):
        """Columns s, F, density (s in rescaled height units, density per unit s);
        metadata goes into '# key=value' comment lines."""
        dens = self.density if self.density is not None else np.full_like(self.F, np.nan)
        comments = {"units": "s dimensionless; density per unit s"}
        comments.update({k: v for k, v in self.meta.items() if np.isscalar(v)})
        comments.update(extra_comments or {})
        write_csv(path, {"s": self.s, "F": self.F, "density": dens}, comments)

    @classmethod
    def from_csv(cls, path):
        cols, comments = read_csv(path)
        dens = cols.get("density")
        if dens is not None and not np.all(np.isfinite(dens)):
            dens = None
        return cls(cols["s"], cols["F"], dens, dict(comments))

    def to_json(self, path):
        payload = {
            "meta": self.meta,
            "s": self.s.tolist(),
            "F": self.F.tolist(),
            "density": None if self.density is None else self.density.tolist(),
        }
        write_json(path, payload)


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# ------------------------------------------------------------- Airy kernel

def _u_rule_airy(xmin):
    U = max(_AIRY_UCUT - xmin, 1.0)
    return composite_gauss_legendre(0.0, U, panel=0.5, n=16)


def airy_kernel_matrix(x, y=None):
    """K_Ai(x_i, y_j) = int_0^inf Ai(x_i+u) Ai(y_j+u) du."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    same = y is None
    y = x if same else np.atleast_1d(np.asarray(y, dtype=float))
    r = _u_rule_airy(min(x.min(), y.min()))
    Ax = airy_ai(x[:, None] + r.nodes[None, :])
    Ay = Ax if same else airy_ai(y[:, None] + r.nodes[None, :])
    K = (Ax * r.weights) @ Ay.T
    if same:
        K = 0.5 * (K + K.T)
    return K


def airy_kernel(x: float, y: float) -> float:
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError("non-finite input")
    return float(airy_kernel_matrix([x], [y])[0, 0])


def airy_kernel_spec(s: float, L: float = 10.0) -> KernelSpec:
    return KernelSpec(airy_kernel_matrix, s=s, L=L, symmetric=True, name="airy")


def tw_gue_result(s: float, n: int = 40, L: float = 10.0) -> FredholmResult:
    return fredholm_det(airy_kernel_spec(s, L), n)


def tw_gue_cdf(s: float, n: int = 40, L: float = 10.0) -> float:
    """F_GUE(s) = det(I - P_s K_Ai P_s)."""
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    return tw_gue_result(s, n, L).value


def _goe_spec(s, L):
    half = 0.5 * s

    def func(x, y):
        return airy_ai(x[:, None] + y[None, :] + half)

    return KernelSpec(func, s=0.0, L=L, symmetric=True, name="airy-hankel")


def tw_goe_result(s: float, n: int = 40, L: float = 10.0) -> FredholmResult:
    return fredholm_det(_goe_spec(s, L), n)


def tw_goe_cdf(s: float, n: int = 40, L: float = 10.0) -> float:
    """P(zeta_GOE <= s) = det(I - P_0 B_{s/2} P_0), B_r(x, y) = Ai(x + y + r)."""
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    return tw_goe_result(s, n, L).value


def tw_table(which: str, s_grid, n: int = 40, L: float = 10.0) -> DistributionTable:
    fn = {"gue": tw_gue_result, "goe": tw_goe_result}[which]
    s_grid = np.asarray(s_grid, dtype=float)
    res = [fn(float(s), n, L) for s in s_grid]
    F = np.array([r.value for r in res])
    dens = np.gradient(F, s_grid)
    meta = {"kernel": f"tw-{which}", "n": n, "L": L,
            "L_used": [r.L for r in res], "max_convergence": max(r.convergence for r in res)}
    return DistributionTable(s_grid, F, np.maximum(dens, 0.0), meta)


def tw_moments(which: str = "gue", n: int = 40, L: float = 10.0, s_lo: float = -12.0,
               s_hi: float = 10.0, m: int = 160) -> tuple[float, float]:
    """Mean and variance from E X = int (1 - F) over s>0 minus int F over s<0."""
    fn = {"gue": tw_gue_cdf, "goe": tw_goe_cdf}[which]
    left = gauss_legendre(m, s_lo, 0.0)
    right = gauss_legendre(m, 0.0, s_hi)
    Fl = np.array([fn(float(s), n, L) for s in left.nodes])
    Fr = np.array([fn(float(s), n, L) for s in right.nodes])
    mean = np.dot(right.weights, 1 - Fr) - np.dot(left.weights, Fl)
    m2 = 2 * np.dot(right.weights, right.nodes * (1 - Fr)) - 2 * np.dot(left.weights, left.nodes * Fl)
    return float(mean), float(m2 - mean ** 2)


# ------------------------------------------------------ smoothed kernel

def _fermi(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _u_rule_crossover(gamma, s_lo, s_hi, xmin=0.0):
    """u-rule for the smoothed kernel covering all s in [s_lo, s_hi]."""
    u_lo = s_lo - _FERMI_CUT / gamma
    u_hi = max(_AIRY_UCUT - xmin, s_hi + _FERMI_CUT / gamma * 0.0 + 1.0)
    if gamma <= 4.0 or s_hi > s_lo:
        return composite_gauss_legendre(u_lo, u_hi, panel=min(0.5, 2.0 / gamma), n=16)
    # sharp Fermi edge: fine panels near s only
    mid_hi = min(s_hi + _FERMI_CUT / gamma, u_hi)
    a = composite_gauss_legendre(u_lo, mid_hi, panel=2.0 / gamma, n=16)
    if mid_hi >= u_hi:
        return a
    b = composite_gauss_legendre(mid_hi, u_hi, panel=0.5, n=16)
    from .specfun import QuadratureRule
    return QuadratureRule(np.concatenate([a.nodes, b.nodes]), np.concatenate([a.weights, b.weights]),
                          (u_lo, u_hi))


def smoothed_airy_kernel_matrix(params: CrossoverParams, s: float, x, y=None):
    g = params.gamma_t
    x = np.atleast_1d(np.asarray(x, dtype=float))
    same = y is None
    y = x if same else np.atleast_1d(np.asarray(y, dtype=float))
    r = _u_rule_crossover(g, s, s, min(x.min(), y.min()))
    w = r.weights * _fermi(g * (r.nodes - s))
    Ax = airy_ai(x[:, None] + r.nodes[None, :])
    Ay = Ax if same else airy_ai(y[:, None] + r.nodes[None, :])
    K = (Ax * w) @ Ay.T
    if same:
        K = 0.5 * (K + K.T)
    return K


def smoothed_airy_kernel(params: CrossoverParams, s: float, x: float, y: float) -> float:
    """K_{t,s}(x, y) = int sigma(gamma_t (u - s)) Ai(x+u) Ai(y+u) du."""
    if not all(np.isfinite(v) for v in (s, x, y)):
        raise ValueError("non-finite input")
    return float(smoothed_airy_kernel_matrix(params, s, [x], [y])[0, 0])


def crossover_window(params: CrossoverParams, s: float) -> float:
    """Smallest L (step 2.5) with K_{t,s}(L, L) < 1e-12."""
    L = 10.0
    while smoothed_airy_kernel(params, s, L, L) >= 1e-12:
        L += 2.5
        if L > 1e4:
            raise RuntimeError("no truncation window found")
    return L


def _default_n(L):
    return int(max(40, math.ceil(3.0 * L)))


def crossover_spec(params: CrossoverParams, s: float, L: float | None = None) -> KernelSpec:
    if L is None:
        L = crossover_window(params, s)

    def func(x, y):
        return smoothed_airy_kernel_matrix(params, s, x, None if x is y else y)

    return KernelSpec(func, s=0.0, L=L, symmetric=True, name=f"smoothed-airy(t={params.t})")


def crossover_generating(params: CrossoverParams, s: float, n: int | None = None,
                         L: float | None = None, full: bool = False):
    """G_t(gamma_t s) = det(I - P_0 K_{t,s} P_0)."""
    if not np.isfinite(s):
        raise ValueError("s must be finite")
    spec = crossover_spec(params, s, L)
    if n is None:
        n = _default_n(spec.L)
    res = fredholm_det(spec, n)
    return res if full else res.value


class _CrossoverDiscretization:
    """Shared x/u quadrature for evaluating G and dG/ds over many s."""

    def __init__(self, params, s_lo, s_hi, n=None, L=None):
        self.params = params
        g = params.gamma_t
        if L is None:
            L = crossover_window(params, s_lo)
        self.L = L
        self.n = _default_n(L) if n is None else n
        xr = gauss_legendre(self.n, 0.0, L)
        self.sw = np.sqrt(xr.weights)
        self.uniform = g <= 4.0
        self.x = xr.nodes
        if self.uniform:
            self.ur = _u_rule_crossover(g, s_lo, s_hi)
            self.A = self.sw[:, None] * airy_ai(self.x[:, None] + self.ur.nodes[None, :])

    def _parts(self, s):
        g = self.params.gamma_t
        if self.uniform:
            ur, A = self.ur, self.A
        else:
            ur = _u_rule_crossover(g, s, s)
            A = self.sw[:, None] * airy_ai(self.x[:, None] + ur.nodes[None, :])
        sig = _fermi(g * (ur.nodes - s))
        M = (A * (ur.weights * sig)) @ A.T
        dM = (A * (ur.weights * (-g) * sig * (1.0 - sig))) @ A.T
        return M, dM

    def evaluate(self, s):
        """Returns (H(s), H'(s))."""
        M, dM = self._parts(s)
        I_M = np.eye(M.shape[0]) - M
        H, _ = det_i_minus(M)
        tr = np.trace(np.linalg.solve(I_M, dM))
        return H, -H * tr


def crossover_generating_table(params: CrossoverParams, s_grid, n=None, L=None, with_derivative=True):
    s_grid = np.asarray(s_grid, dtype=float)
    disc = _CrossoverDiscretization(params, float(s_grid.min()), float(s_grid.max()), n, L)
    out = np.array([disc.evaluate(float(s)) for s in s_grid])
    return out[:, 0], out[:, 1], disc


def _support(params, lo_default=-12.0):
    g = params.gamma_t
    # right tail of eta + G/gamma decays like exp(-gamma s); the left tail is
    # governed by the Gumbel double exponential and the TW left tail
    s_hi = max(8.0, 40.0 / g + 4.0)
    s_lo = min(lo_default, -3.0 * math.log(40.0) / g) if g < 1 else lo_default
    return s_lo, s_hi


def crossover_moments(params: CrossoverParams, m: int = 120, n=None, L=None):
    """Mean and variance of eta(0,t)/gamma_t, by subtracting the Gumbel moments
    from those of eta/gamma_t + G/gamma_t whose CDF is G_t(gamma_t s)."""
    g = params.gamma_t
    s_lo, s_hi = _support(params)
    left = gauss_legendre(m, s_lo, 0.0)
    right = gauss_legendre(m, 0.0, s_hi)
    nodes = np.concatenate([left.nodes, right.nodes])
    H, _, disc = crossover_generating_table(params, nodes, n, L)
    Hl, Hr = H[:m], H[m:]
    mean_y = np.dot(right.weights, 1 - Hr) - np.dot(left.weights, Hl)
    m2_y = 2 * np.dot(right.weights, right.nodes * (1 - Hr)) - 2 * np.dot(left.weights, left.nodes * Hl)
    var_y = m2_y - mean_y ** 2
    mean = mean_y - EULER_GAMMA / g
    var = var_y - math.pi ** 2 / 6.0 / g ** 2
    return float(mean), float(var), {"n": disc.n, "L": disc.L, "mean_Y": float(mean_y), "var_Y": float(var_y),
                                     "Y_support": (s_lo, s_hi), "tail": (float(H[0]), float(1 - H[-1]))}


def _gumbel_ft(k, g):
    """E exp(-i k G/g) for a standard (max) Gumbel G; matches numpy's FFT sign."""
    return np.exp(loggamma(1.0 + 1j * k / g))


def crossover_cdf_and_density(params: CrossoverParams, s_grid=None, ds: float = 0.02,
                              n=None, L=None, residual_tol: float = 1e-4) -> DistributionTable:
    """F_t(s) = P(eta(0,t)/gamma_t <= s) by Gumbel deconvolution of G_t(gamma_t s).

    G_t(gamma_t s) is the CDF of Y = eta/gamma_t + G/gamma_t with G standard
    Gumbel.  The density of Y is computed exactly from the Fredholm
    determinant and divided by the Gumbel characteristic function with a
    Tikhonov filter; the filter strength is the largest one whose round trip
    (re-convolving with the Gumbel law) reproduces G_t within residual_tol.
    """
    g = params.gamma_t
    y_lo, y_hi = _support(params)
    N = int(math.ceil((y_hi - y_lo) / ds)) + 1
    grid = y_lo + ds * np.arange(N)
    H, dH, disc = crossover_generating_table(params, grid, n, L)
    dH = np.maximum(dH, 0.0)
    pad = 2 ** int(math.ceil(math.log2(4 * N)))
    k = 2 * np.pi * np.fft.rfftfreq(pad, d=ds)
    hh = np.fft.rfft(dH, pad) * ds
    phi = _gumbel_ft(k, g)
    chosen = None
    for alpha in 10.0 ** -np.arange(2.0, 15.0):
        ff = hh * np.conj(phi) / (np.abs(phi) ** 2 + alpha)
        f = np.fft.irfft(ff, pad)[:N] / ds
        F = np.cumsum(np.concatenate(([0.0], 0.5 * (f[1:] + f[:-1]) * ds)))
        # round trip: convolve back and integrate
        back = np.fft.irfft(ff * phi, pad)[:N] / ds
        Gb = np.cumsum(np.concatenate(([0.0], 0.5 * (back[1:] + back[:-1]) * ds)))
        resid = float(np.max(np.abs(Gb - H)))
        if resid < residual_tol:
            chosen = (alpha, f, F, resid)
            break
    if chosen is None:
        raise RuntimeError("Gumbel deconvolution: no regularization met the round-trip tolerance")
    alpha, f, F, resid = chosen
    F = np.clip(F, 0.0, None)
    F = np.maximum.accumulate(F)
    dens = np.gradient(F, grid)
    meta = {"kernel": "smoothed-airy", "t": params.t, "gamma_t": g, "n": disc.n, "L": disc.L,
            "ds": ds, "regularization": alpha, "round_trip_residual": resid,
            "mass": float(F[-1])}
    table = DistributionTable(grid, F, dens, meta)
    table.generating = H
    if s_grid is not None:
        s_grid = np.asarray(s_grid, dtype=float)
        Fi = np.interp(s_grid, grid, F)
        di = np.interp(s_grid, grid, dens)
        table = DistributionTable(s_grid, Fi, di, meta)
        table.generating = np.interp(s_grid, grid, H)
    return table


# ------------------------------------------------------ scaling algebra

def _gaussian_moment(k):
    return 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2))) if k else 1.0


def effective_lambda(F_coeffs: Sequence[float], sigma: float) -> float:
    """F''-bar(0) for F-bar(theta) = E F(sigma X + theta), X standard normal.

    ``F_coeffs[k]`` multiplies theta**k.
    """
    c = np.asarray(F_coeffs, dtype=float)
    if c.ndim != 1 or len(c) > 9:
        raise ValueError("polynomial degree must be <= 8")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    # F''(y) = sum_k k(k-1) c_k y^{k-2}; average over y = sigma X
    lam = 0.0
    for k in range(2, len(c)):
        lam += k * (k - 1) * c[k] * sigma ** (k - 2) * _gaussian_moment(k - 2)
    return float(lam)


def kpz_rescale(h_samples, params: ScalingParams, t: float):
    """(h - v_inf t) / (Gamma t)^{1/3}."""
    if params.Gamma <= 0:
        raise ValueError("Gamma must be positive")
    if t <= 0:
        raise ValueError("t must be positive")
    h = np.asarray(h_samples, dtype=float)
    return (h - params.v_inf * t) / (params.Gamma * t) ** (1.0 / 3.0)
