"""Explicit integrator for the stochastic heat equation dZ = 0.5 Z'' dt + Z dW
(units lambda = D = 1, nu = 1/2) and the structural checks built on it.

One step on the grid x_i = i dx:

    Z_i <- Z_i + (dt / 2dx^2) (Z_{i+1} - 2 Z_i + Z_{i-1})
    Z_i <- Z_i exp(sqrt(dt/dx) N_i - dt/(2 dx)),   N_i ~ N(0, 1) i.i.d.

The factor has mean one, so E Z follows the discrete heat semigroup exactly
(forward/Ito convention), and positivity is preserved when dt <= dx^2.
Boundaries are Dirichlet.  Sharp-wedge runs only update the cells that can
matter: those within c sqrt(t) of the origin (where the mass is) and within
c sqrt(T - t) of an observed cell (what can still reach it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import stream
from .stats import ComparisonReport, exponent_fit, gumbel_convolve_compare, mean_and_se

__all__ = [
    "SheGrid",
    "SheField",
    "BoundaryMassError",
    "sharp_wedge",
    "flat_field",
    "brownian_field",
    "integrate_she",
    "height",
    "eta_transform",
    "sample_sharp_wedge",
    "lattice_heat_kernel",
    "lattice_second_moment",
    "heat_kernel",
    "brownian_invariance_check",
    "eta_stationarity_check",
    "moment_growth_check",
    "crossover_s_grid",
    "crossover_cross_validation",
]

WINDOW_C = 7.0
MASS_TOL = 1e-8


class BoundaryMassError(RuntimeError):
    """Mass reached the edge of the computational window."""


@dataclass(frozen=True)
class SheGrid:
    dx: float
    L: float
    dt: float | None = None

    def __post_init__(self):
        if not (self.dx > 0 and self.L > self.dx):
            raise ValueError("need dx > 0 and L > dx")
        dt = 0.5 * self.dx ** 2 if self.dt is None else float(self.dt)
        if not 0 < dt <= 0.5 * self.dx ** 2 * (1 + 1e-12):
            raise ValueError(f"stability needs 0 < dt <= dx^2/2 = {0.5 * self.dx ** 2:g}")
        object.__setattr__(self, "dt", dt)

    @property
    def K(self) -> int:
        return int(math.ceil(self.L / self.dx))

    @property
    def x(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1) * self.dx

    @property
    def size(self) -> int:
        return 2 * self.K + 1

    def index(self, x) -> np.ndarray:
        """Cell indices of positions x, which must lie on the grid."""
        k = np.rint(np.asarray(x, dtype=float) / self.dx).astype(np.int64)
        if np.any(np.abs(k * self.dx - np.asarray(x)) > 1e-9 * max(1.0, self.dx)):
            raise ValueError("positions must be integer multiples of dx")
        if np.any(np.abs(k) >= self.K):
            raise ValueError("positions outside the grid")
        return k + self.K

    def steps(self, T: float) -> int:
        n = T / self.dt
        k = int(round(n))
        if abs(n - k) > 1e-6:
            raise ValueError(f"T={T} is not a multiple of dt={self.dt}")
        return k


@dataclass
class SheField:
    Z: np.ndarray
    grid: SheGrid
    time: float = 0.0
    init: str = "sharp-wedge"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        if self.Z.shape != (self.grid.size,):
            raise ValueError("field size does not match the grid")
        self.check()

    def check(self):
        if not np.all(np.isfinite(self.Z)) or np.any(self.Z < 0):
            raise ValueError("field must be finite and non-negative")
        if not np.any(self.Z > 0):
            raise ValueError("field has no mass")
        return self

    @property
    def mass(self) -> float:
        return float(self.Z.sum() * self.grid.dx)

    def to_csv(self, path, comments=None):
        from .io import write_csv
        with np.errstate(divide="ignore"):
            h = np.log(self.Z)
        c = {"time": repr(self.time), "init": self.init, "dx": repr(self.grid.dx), "dt": repr(self.grid.dt)}
        c.update(comments or {})
        write_csv(path, {"x[length]": self.grid.x, "Z": self.Z, "h[log Z]": h}, c)


def sharp_wedge(grid: SheGrid) -> SheField:
    """delta(x) as 1/dx in the origin cell: total mass exactly one."""
    Z = np.zeros(grid.size)
    Z[grid.K] = 1.0 / grid.dx
    return SheField(Z, grid, 0.0, "sharp-wedge")


def flat_field(grid: SheGrid) -> SheField:
    Z = np.ones(grid.size)
    Z[0] = Z[-1] = 0.0
    return SheField(Z, grid, 0.0, "flat")


def brownian_field(grid: SheGrid, theta: float, rng: np.random.Generator) -> SheField:
    """h(x, 0) = B(x) + theta x with B a two-sided Brownian motion, B(0) = 0."""
    K = grid.K
    inc = rng.standard_normal(2 * K) * math.sqrt(grid.dx)
    right = np.concatenate(([0.0], np.cumsum(inc[:K])))
    left = np.concatenate(([0.0], np.cumsum(inc[K:])))
    h = np.concatenate((left[:0:-1], right)) + theta * grid.x
    Z = np.exp(h)
    Z[0] = Z[-1] = 0.0
    return SheField(Z, grid, 0.0, f"brownian(theta={theta})", {"theta": theta})


# ---------------------------------------------------------------- kernel

@njit(cache=True)
def _she_kernel(Z, K, dx, dt, nsteps, rng, noise, windowed, c, obs_cells,
                snap_steps, snap_idx, out, check_every):
    """Advance Z in place by nsteps.  Returns the largest boundary-to-total
    mass ratio seen by the monitor."""
    n = Z.size
    r = dt / (2.0 * dx * dx)
    s = math.sqrt(dt / dx)
    comp = -dt / (2.0 * dx)
    T = nsteps * dt
    ks = 0
    worst = 0.0
    prev_lo = 1
    prev_hi = n - 2
    if windowed:
        prev_lo = K
        prev_hi = K
    for k in range(nsteps):
        if windowed:
            fwd = int(c * math.sqrt((k + 1) * dt) / dx) + 2
            bwd = obs_cells + int(c * math.sqrt(max(T - k * dt, 0.0)) / dx) + 2
            a = min(fwd, bwd)
            lo = max(1, K - a)
            hi = min(n - 2, K + a)
            # cells leaving the window are dropped (they cannot reach an observed cell)
            for i in range(prev_lo, lo):
                Z[i] = 0.0
            for i in range(hi + 1, prev_hi + 1):
                Z[i] = 0.0
            prev_lo = lo
            prev_hi = hi
        else:
            lo = 1
            hi = n - 2
        left = Z[lo - 1]
        for i in range(lo, hi + 1):
            cur = Z[i]
            v = cur + r * (Z[i + 1] - 2.0 * cur + left)
            if noise:
                v *= math.exp(s * rng.standard_normal() + comp)
            left = cur
            Z[i] = v
        if (k + 1) % check_every == 0 or k == nsteps - 1:
            tot = 0.0
            for i in range(lo, hi + 1):
                tot += Z[i]
            # mass in the two outermost cells of the window / grid, when that edge is binding
            if tot > 0.0 and (not windowed or fwd <= bwd or lo == 1 or hi == n - 2):
                edge = Z[lo] + Z[lo + 1] + Z[hi] + Z[hi - 1]
                ratio = edge / tot
                if ratio > worst:
                    worst = ratio
        while ks < snap_steps.size and snap_steps[ks] == k + 1:
            for m in range(snap_idx.size):
                out[ks, m] = Z[snap_idx[m]]
            ks += 1
    return worst


def integrate_she(fld: SheField, T: float, rng: np.random.Generator | None, noise: bool = True,
                  mass_tol: float | None = MASS_TOL) -> SheField:
    """Evolve a field over duration T on its full grid (no windowing).

    ``mass_tol`` bounds the edge-to-total mass ratio (None disables the
    monitor, which only makes sense for localized data)."""
    g = fld.grid
    nsteps = g.steps(T)
    if noise and rng is None:
        raise ValueError("a generator is needed when noise is on")
    Z = fld.Z.copy()
    out = np.empty((0, 0))
    worst = _she_kernel(Z, g.K, g.dx, g.dt, nsteps, rng if noise else np.random.default_rng(0),
                        noise, False, WINDOW_C, 0, np.empty(0, np.int64), np.empty(0, np.int64), out, 64)
    if mass_tol is not None and worst > mass_tol:
        raise BoundaryMassError(f"edge mass ratio {worst:.3e} exceeds {mass_tol:g}")
    return SheField(Z, g, fld.time + nsteps * g.dt, fld.init, dict(fld.meta))


def height(fld: SheField) -> np.ndarray:
    """h = log Z; raises on non-positive entries."""
    if np.any(fld.Z <= 0):
        raise ValueError("height needs a strictly positive field")
    return np.log(fld.Z)


def eta_transform(h, x, t: float):
    """eta(x, t) = h(x, t) + x^2/(2t) + t/24."""
    if not t > 0:
        raise ValueError("t must be positive")
    return np.asarray(h) + np.asarray(x) ** 2 / (2 * t) + t / 24.0


def heat_kernel(x, t):
    return np.exp(-np.asarray(x) ** 2 / (2 * t)) / math.sqrt(2 * math.pi * t)


# ------------------------------------------------------------- ensembles

def _grid_for(T, dx, x_obs, dt=None):
    L = x_obs + WINDOW_C * math.sqrt(T) + 4 * dx + 0.5
    return SheGrid(dx, L, dt)


def sample_sharp_wedge(T: float, dx: float, replicas: int, seed: int, times=None, xs=(0.0,),
                       dt=None, start: int = 0, purpose: str = "she"):
    """Z(x, t) for delta initial data at the requested times and grid positions.

    Replica r uses the stream (seed, purpose, r).  Returns
    (Z[replica, time, x], info dict with grid, edge-mass ratio).
    """
    times = np.atleast_1d(np.asarray(T if times is None else times, dtype=float))
    if abs(times[-1] - T) > 1e-12 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ValueError("times must be increasing, positive and end at T")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    x_obs = float(np.max(np.abs(xs)))
    g = _grid_for(T, dx, x_obs, dt)
    idx = g.index(xs)
    snap = np.array([g.steps(t) for t in times], dtype=np.int64)
    nsteps = int(snap[-1])
    obs_cells = int(math.ceil(x_obs / dx))
    out = np.empty((replicas, times.size, xs.size))
    worst = 0.0
    for r in range(replicas):
        rng = stream(seed, purpose, start + r)
        Z = np.zeros(g.size)
        Z[g.K] = 1.0 / dx
        buf = np.empty((times.size, xs.size))
        w = _she_kernel(Z, g.K, dx, g.dt, nsteps, rng, True, True, WINDOW_C, obs_cells, snap, idx, buf, 64)
        worst = max(worst, w)
        if w > MASS_TOL:
            raise BoundaryMassError(f"replica {start + r}: edge mass ratio {w:.3e} > {MASS_TOL:g}")
        out[r] = buf
    if np.any(out <= 0) or not np.all(np.isfinite(out)):
        raise FloatingPointError("non-positive or non-finite field value at an observed cell")
    return out, {"grid": g, "times": times, "xs": xs, "edge_mass_ratio": worst,
                 "dt": g.dt, "dx": dx, "seed": seed, "replicas": replicas}


def lattice_heat_kernel(grid: SheGrid, nsteps: int) -> np.ndarray:
    """Exact noise-free evolution P^nsteps applied to the sharp-wedge datum, P
    the Dirichlet tridiagonal step matrix (dense matrix power)."""
    n = grid.size
    r = grid.dt / (2 * grid.dx ** 2)
    P = np.zeros((n, n))
    i = np.arange(1, n - 1)
    P[i, i] = 1 - 2 * r
    P[i, i - 1] = r
    P[i, i + 1] = r
    z = np.zeros(n)
    z[grid.K] = 1.0 / grid.dx
    return np.linalg.matrix_power(P, nsteps) @ z


def lattice_second_moment(T: float, dx: float, dt: float | None = None, x_obs: float = 0.0):
    """Exact E[Z(x_i, T) Z(x_j, T)] of the discrete scheme with delta data.

    C <- P C P^T after the heat part; the noise factors are independent across
    cells with E e^{2(sqrt(dt/dx) N - dt/2dx)} = e^{dt/dx}, so only the diagonal
    picks up e^{dt/dx}.  Returns C at the origin row, i.e. E[Z(0) Z(x)] on the grid.
    """
    g = _grid_for(T, dx, x_obs, dt)
    n = g.size
    r = g.dt / (2 * dx * dx)
    C = np.zeros((n, n))
    C[g.K, g.K] = 1.0 / dx ** 2
    f = math.exp(g.dt / dx)
    d = np.arange(1, n - 1)
    for _ in range(g.steps(T)):
        # C <- P C P^T with P tridiagonal, applied to rows then columns
        A = np.zeros_like(C)
        A[d] = (1 - 2 * r) * C[d] + r * (C[d - 1] + C[d + 1])
        B = np.zeros_like(C)
        B[:, d] = (1 - 2 * r) * A[:, d] + r * (A[:, d - 1] + A[:, d + 1])
        B[np.diag_indices(n)] *= f
        C = B
    return C[g.K], g


# ---------------------------------------------------------- checks

def _bootstrap_se(fn, data, rng, n_boot=200):
    n = data.shape[0]
    vals = [fn(data[rng.integers(0, n, n)]) for _ in range(n_boot)]
    return np.std(vals, axis=0, ddof=1)


@dataclass
class CheckReport:
    name: str
    passed: bool
    values: dict
    tolerance: str

    def summary(self):
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.tolerance})"


def brownian_invariance_check(theta: float, t: float, replicas: int, seed: int, dx: float = 0.02,
                              xs=(0.25, 0.5, 0.75, 1.0), tol: float = 0.05, min_replicas: int = 100):
    """Var(h(x, t) - h(0, t)) on a ladder of x for two-sided Brownian data with drift theta.

    The contract is Var = |x|: the least-squares slope of the variance against
    |x| (line through the origin) must be within ``tol`` of 1; the fit with an
    intercept is reported alongside.  At t = 0 the increments are the sampled
    initial ones.  Positions are snapped to the nearest cell and the fit uses
    the snapped values.
    """
    if replicas < min_replicas:
        raise ValueError(f"need at least {min_replicas} replicas")
    xs = dx * np.rint(np.asarray(xs, dtype=float) / dx)
    if np.any(xs == 0):
        raise ValueError("ladder positions must be at least dx/2 away from 0")
    allx = np.concatenate(([0.0], xs))
    g = SheGrid(dx, float(np.max(np.abs(xs))) + WINDOW_C * math.sqrt(max(t, dx * dx)) + 1.0)
    idx = g.index(allx)
    H = np.empty((replicas, allx.size))
    nsteps = g.steps(t) if t > 0 else 0
    for r in range(replicas):
        rng = stream(seed, "she-brownian", r)
        f = brownian_field(g, theta, rng)
        Z = f.Z
        if nsteps:
            buf = np.empty((1, allx.size))
            _she_kernel(Z, g.K, dx, g.dt, nsteps, rng, True, False, WINDOW_C, 0,
                        np.array([nsteps], np.int64), idx, buf, 1 << 30)
            H[r] = np.log(buf[0])
        else:
            H[r] = np.log(Z[idx])
    inc = H[:, 1:] - H[:, :1]
    var = inc.var(axis=0, ddof=1)
    se = _bootstrap_se(lambda d: d.var(axis=0, ddof=1), inc, stream(seed, "she-brownian-boot"))
    ax = np.abs(xs)
    slope = float(ax @ var / (ax @ ax))
    A = np.vstack([ax, np.ones_like(xs)]).T
    (slope2, icpt), *_ = np.linalg.lstsq(A, var, rcond=None)
    return CheckReport("brownian-invariance", bool(abs(slope - 1) <= tol),
                       {"theta": theta, "t": t, "x": xs, "variance": var, "variance_se": se,
                        "slope": slope, "slope_with_intercept": float(slope2), "intercept": float(icpt),
                        "replicas": replicas, "dx": dx},
                       f"|slope - 1| <= {tol}")


def eta_stationarity_check(Z, xs, t, seed: int = 0, n_se: float = 3.0):
    """One-point variances of eta(x, t) are equal across x within n_se SE of
    the paired difference (bootstrap over replicas).  Z is [replica, x]."""
    xs = np.asarray(xs, dtype=float)
    eta = eta_transform(np.log(Z), xs[None, :], t)
    var = eta.var(axis=0, ddof=1)
    k0 = int(np.argmin(np.abs(xs)))
    diff = lambda d: d.var(axis=0, ddof=1) - d[:, k0].var(ddof=1)
    se = _bootstrap_se(diff, eta, stream(seed, "she-eta-boot"))
    dv = var - var[k0]
    ok = np.abs(dv) <= n_se * np.where(se > 0, se, np.inf)
    return CheckReport("eta-stationarity", bool(np.all(ok)),
                       {"t": t, "x": xs, "variance": var, "diff": dv, "diff_se": se,
                        "mean": eta.mean(axis=0)}, f"|Var(x) - Var(0)| <= {n_se} SE")


def moment_growth_check(N: int, t_ladder, Z_samples=None, replicas: int = 0, seed: int = 0,
                        dx: float = 0.02, tol: float = 0.25):
    """Exponential rate of <Z(0,t)^N>/<Z(0,t)>^N along the t-ladder (least
    squares on the log) against the target N(N^2 - 1)/24.

    ``Z_samples[replica, k]`` may be supplied for the ladder; otherwise a
    sharp-wedge ensemble is run.  The fit is flagged when its SE exceeds
    ``tol`` times the target.  N = 1 has target 0 and ratio identically one.
    """
    t = np.asarray(t_ladder, dtype=float)
    if Z_samples is None:
        Z_samples, _ = sample_sharp_wedge(float(t[-1]), dx, replicas, seed, times=t)
        Z_samples = Z_samples[:, :, 0]
    Z = np.asarray(Z_samples, dtype=float)
    target = N * (N * N - 1) / 24.0
    m1 = Z.mean(axis=0)
    mN = (Z ** N).mean(axis=0)
    ratio = mN / m1 ** N
    # delta-method SE of log ratio from per-replica contributions
    n = Z.shape[0]
    g = Z ** N / mN - N * Z / m1
    se_log = g.std(axis=0, ddof=1) / math.sqrt(n)
    A = np.vstack([t, np.ones_like(t)]).T
    w = 1.0 / np.maximum(se_log, 1e-300)
    if N == 1:
        rate, rate_se = 0.0, 0.0
    else:
        coef, *_ = np.linalg.lstsq(A * w[:, None], np.log(ratio) * w, rcond=None)
        cov = np.linalg.inv((A * w[:, None]).T @ (A * w[:, None]))
        rate, rate_se = float(coef[0]), float(math.sqrt(cov[0, 0]))
    flagged = bool(target > 0 and rate_se > tol * target)
    return {"N": N, "t": t, "ratio": ratio, "log_ratio_se": se_log, "rate": rate,
            "rate_se": rate_se, "target": target, "flagged": flagged}


def crossover_s_grid(t: float, points: int = 15):
    """s-grid covering the bulk of eta(0,t)/gamma_t + Gumbel/gamma_t: mean
    +- 2.5 standard deviations of the combined law."""
    from .distributions import CrossoverParams, EULER_GAMMA, crossover_moments
    p = CrossoverParams(t)
    m, v, _ = crossover_moments(p)
    g = p.gamma_t
    mY = m + EULER_GAMMA / g
    sY = math.sqrt(v + math.pi ** 2 / 6 / g ** 2)
    return np.linspace(mY - 2.5 * sY, mY + 2.5 * sY, points)


def crossover_cross_validation(t: float, s_grid=None, replicas: int = 10000, seed: int = 0,
                               dx: float = 0.02, Z0=None, exact=None) -> ComparisonReport:
    """Monte Carlo <exp(-exp(eta(0,t) - gamma_t s))> against the determinant.

    ``Z0`` may hold precomputed samples of Z(0, t); otherwise a sharp-wedge
    ensemble is run.
    """
    from .distributions import CrossoverParams
    if not 0.25 - 1e-12 <= t <= 1.0 + 1e-12:
        raise ValueError("cross-validation is calibrated for t in [0.25, 1]")
    params = CrossoverParams(t)
    s_grid = crossover_s_grid(t) if s_grid is None else np.asarray(s_grid, dtype=float)
    if Z0 is None:
        Zs, _ = sample_sharp_wedge(t, dx, replicas, seed)
        Z0 = Zs[:, 0, 0]
    eta = eta_transform(np.log(np.asarray(Z0)), 0.0, t)
    rep = gumbel_convolve_compare(eta, params, s_grid, exact=exact)
    rep.seed = seed
    rep.details["dx"] = dx
    rep.details["gamma_t"] = params.gamma_t
    return rep


def second_moment_estimate(Z, t: float):
    """<Z(0,t)^2> from samples, plain and with Z itself as control variate.

    The control uses the known first moment (2 pi t)^{-1/2}:
    est = mean(Z^2) - c (mean(Z) - m1), c = cov(Z^2, Z)/var(Z).  Returns a
    dict with both estimates, their SEs and the correlation used.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.size
    m1 = (2 * math.pi * t) ** -0.5
    Z2 = Z * Z
    C = np.cov(Z2, Z)
    c = C[0, 1] / C[1, 1]
    rho = C[0, 1] / math.sqrt(C[0, 0] * C[1, 1])
    plain, plain_se = float(Z2.mean()), float(math.sqrt(C[0, 0] / n))
    cv = float(plain - c * (Z.mean() - m1))
    cv_se = float(math.sqrt(C[0, 0] * (1 - rho * rho) / n))
    return {"plain": plain, "plain_se": plain_se, "cv": cv, "cv_se": cv_se, "rho": float(rho)}
