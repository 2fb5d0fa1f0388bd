"""Kinetic Monte Carlo for the ASEP height function, the discrete Cole-Hopf
(Gartner) transform, tau-moments and their contour-integral counterparts.

Frames.  Heights live on sites j = -W..W with slopes +-1.  Dynamics act on
the *growth frame* g: a local minimum (valley) of g flips up by 2 at rate q
and a local maximum (peak) flips down by 2 at rate p.  With slope +1 read as
an occupied site this is the exclusion process with particles jumping left
at rate q and right at rate p, and step data g(j) = |j| means sites
1, 2, 3, ... occupied.  The *canonical frame* reported by AsepState.h is
h = -g, so step data read h(j, 0) = -|j| and heights decrease on average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .rng import stream

__all__ = [
    "AsepRates",
    "AsepState",
    "WeakAsymmetryConfig",
    "ConeViolation",
    "init_step",
    "init_flat",
    "init_stationary",
    "required_window",
    "kmc_evolve",
    "simulate_ensemble",
    "gartner_transform",
    "gartner_drift_check",
    "weak_asymmetry_config",
    "tau_moment_observable",
    "tau_moment_mc",
    "tau_moment_contour",
    "contour_radius_bound",
]

CONE_FACTOR = 4.0


class ConeViolation(RuntimeError):
    """The window is too small for the requested duration."""


@dataclass(frozen=True)
class AsepRates:
    p: float
    q: float | None = None

    def __post_init__(self):
        p = float(self.p)
        q = 1.0 - p if self.q is None else float(self.q)
        if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0) or abs(p + q - 1.0) > 1e-12:
            raise ValueError("rates need p, q in [0, 1] with p + q = 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def tau(self) -> float:
        if self.q == 0.0:
            raise ValueError("tau = p/q is undefined for q = 0")
        return self.p / self.q


@dataclass(frozen=True)
class WeakAsymmetryConfig:
    epsilon: float
    rates: AsepRates
    time_factor: float   # ASEP time per unit KPZ time, epsilon^{-2}
    space_factor: float  # lattice sites per unit KPZ length, epsilon^{-1}

    @property
    def half_log_tau(self) -> float:
        return 0.5 * math.log(self.rates.tau)


@dataclass
class AsepState:
    """Canonical heights ``h`` on j = -W..W at time ``time``.

    ``support`` is the half-width of the region where the initial profile is
    not a single straight line (0 for step data, W for flat and random data).
    """
    h: np.ndarray
    time: float = 0.0
    boundary: str = "hard walls, endpoint heights frozen"
    support: int = 0
    events: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.int64)
        if self.h.ndim != 1 or self.h.size < 3 or self.h.size % 2 == 0:
            raise ValueError("heights need an odd number (2W+1 >= 3) of sites")
        self.check()

    def check(self):
        if np.any(np.abs(np.diff(self.h)) != 1):
            raise ValueError("slope constraint |h(j+1) - h(j)| = 1 violated")
        if self.time < 0:
            raise ValueError("time must be non-negative")
        return self

    @property
    def W(self) -> int:
        return (self.h.size - 1) // 2

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.W, self.W + 1)

    @property
    def growth_heights(self) -> np.ndarray:
        return -self.h

    def at(self, j):
        """Canonical height at site(s) j."""
        return self.h[np.asarray(j) + self.W]

    def occupations(self) -> np.ndarray:
        """eta_j for j = -W+1..W, with slope +1 of the growth frame read as occupied."""
        return (np.diff(self.growth_heights) + 1) // 2

    def copy(self):
        return replace(self, h=self.h.copy(), meta=dict(self.meta))

    def to_csv(self, path, comments=None):
        from .io import write_csv
        c = {"time": repr(self.time), "frame": "canonical"}
        c.update(comments or {})
        write_csv(path, {"j[site]": self.sites, "h[lattice]": self.h}, c)


# ------------------------------------------------------------ initial data

def _check_W(W):
    if int(W) != W or W < 1:
        raise ValueError("window half-width W must be an integer >= 1")
    return int(W)


def init_step(W: int) -> AsepState:
    W = _check_W(W)
    j = np.arange(-W, W + 1)
    return AsepState(-np.abs(j), support=0, meta={"init": "step"})


def init_flat(W: int) -> AsepState:
    W = _check_W(W)
    j = np.arange(-W, W + 1)
    return AsepState(np.mod(j, 2), support=W, meta={"init": "flat"})


def init_stationary(W: int, rho: float, rng: np.random.Generator) -> AsepState:
    """Bernoulli(rho) product measure pinned at h(0) = 0.

    rho is the particle density: a site is occupied (growth slope +1,
    canonical slope -1) with probability rho.
    """
    W = _check_W(W)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    occupied = rng.random(2 * W) < rho
    slopes = np.where(occupied, -1, 1)
    h = np.concatenate(([0], np.cumsum(slopes)))
    h = h - h[W]
    return AsepState(h, support=W, meta={"init": "stationary", "rho": rho})


# ------------------------------------------------------------- KMC kernel

@njit(cache=True)
def _kmc(g, t0, T, p, q, rng, snap_times, snap_idx, out):
    """Evolve growth heights g in place from t0 to t0 + T.

    Records g[snap_idx] at each absolute time in snap_times (sorted, within
    [t0, t0 + T]) into out[k, :].  Returns (events, lowest, highest flipped index).

    Valleys and peaks are kept in two index lists with back-pointers, so an
    event costs O(1): remove and re-insert the flipped site and its neighbours.
    The list code is written out inline; helper calls taking the five arrays
    cost an order of magnitude more than the update itself.
    """
    n = g.size
    lst = np.empty((2, n), np.int64)     # lst[0] valleys, lst[1] peaks
    pos = -np.ones(n, np.int64)          # slot of site i in its list, -1 if absent
    kind = -np.ones(n, np.int64)         # 0 valley, 1 peak, -1 neither
    cnt = np.zeros(2, np.int64)
    for i in range(1, n - 1):
        k = -1
        if g[i - 1] > g[i] and g[i + 1] > g[i]:
            k = 0
        elif g[i - 1] < g[i] and g[i + 1] < g[i]:
            k = 1
        if k >= 0:
            lst[k, cnt[k]] = i
            pos[i] = cnt[k]
            kind[i] = k
            cnt[k] += 1
    t = t0
    tend = t0 + T
    ks = 0
    ns = snap_times.size
    events = 0
    lo = n
    hi = -1
    while True:
        R = q * cnt[0] + p * cnt[1]
        if R <= 0.0:
            tnext = np.inf
        else:
            tnext = t + rng.exponential() / R
        while ks < ns and snap_times[ks] < tnext:
            for m in range(snap_idx.size):
                out[ks, m] = g[snap_idx[m]]
            ks += 1
        if tnext > tend:
            break
        t = tnext
        u = rng.random() * R
        if u < q * cnt[0]:
            m = min(int(u / q), cnt[0] - 1)
            i = lst[0, m]
            g[i] += 2
        else:
            m = min(int((u - q * cnt[0]) / p), cnt[1] - 1)
            i = lst[1, m]
            g[i] -= 2
        events += 1
        lo = min(lo, i)
        hi = max(hi, i)
        for j in range(max(i - 1, 1), min(i + 2, n - 1)):
            k = -1
            if g[j - 1] > g[j] and g[j + 1] > g[j]:
                k = 0
            elif g[j - 1] < g[j] and g[j + 1] < g[j]:
                k = 1
            old = kind[j]
            if old == k:
                continue
            if old >= 0:
                last = lst[old, cnt[old] - 1]
                lst[old, pos[j]] = last
                pos[last] = pos[j]
                cnt[old] -= 1
                pos[j] = -1
            if k >= 0:
                lst[k, cnt[k]] = j
                pos[j] = cnt[k]
                cnt[k] += 1
            kind[j] = k
    return events, lo, hi


def required_window(rates: AsepRates, T: float, observe: int = 0, support: int = 0) -> int:
    """Smallest W with W >= 4 (p + q) T + max(observe, support) + 1.

    For step data ``support`` is 0; for data that is rough everywhere only the
    observed region matters, because the walls influence it only through a
    chain of flips, which at rate <= p + q per step is exponentially unlikely to
    cover 4 (p + q) T sites by time T.
    """
    return int(math.ceil(CONE_FACTOR * (rates.p + rates.q) * T)) + int(max(observe, support)) + 1


def _guard(state, rates, T, observe):
    support = state.support if state.support < state.W else 0
    need = required_window(rates, T, observe, support)
    if state.W < need:
        raise ConeViolation(f"window W={state.W} too small for T={T}: the disturbance cone "
                            f"needs W >= {need} (4 (p+q) T + support/observation + 1)")


def kmc_evolve(state: AsepState, rates: AsepRates, T: float, rng: np.random.Generator,
               observe: int = 0) -> AsepState:
    """Exact-in-law continuous-time evolution over duration T (new state returned).

    Sites |j| <= ``observe`` are the region whose law must match the infinite
    lattice; the window is checked against the cone before anything runs.
    """
    if not T >= 0:
        raise ValueError("duration T must be >= 0")
    _guard(state, rates, T, observe)
    g = state.growth_heights.copy()
    empty_t = np.empty(0)
    empty_i = np.empty(0, np.int64)
    out = np.empty((0, 0), np.int64)
    ev, lo, hi = _kmc(g, state.time, float(T), rates.p, rates.q, rng, empty_t, empty_i, out)
    if state.support == 0 and ev and (lo <= 1 or hi >= g.size - 2):
        raise ConeViolation("a flip reached the wall; the trajectory is not infinite-lattice exact")
    new = replace(state, h=-g, time=state.time + float(T), events=state.events + int(ev),
                  meta=dict(state.meta))
    return new.check()


def _make_init(init, W, rng, rho=0.5):
    if callable(init):
        return init(W, rng)
    if init == "step":
        return init_step(W)
    if init == "flat":
        return init_flat(W)
    if init == "stationary":
        return init_stationary(W, rho, rng)
    raise ValueError(f"unknown initial condition {init!r}")


def simulate_ensemble(init, rates: AsepRates, times, sites, replicas: int, seed: int,
                      W: int | None = None, frame: str = "canonical", rho: float = 0.5,
                      start: int = 0):
    """Heights at ``sites`` and ``times`` for independent trajectories.

    Replica r uses the stream (seed, "asep", r), so any subset of replicas can
    be recomputed alone.  Returns (heights[replica, time, site], events[replica]).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be sorted and non-negative")
    sites = np.atleast_1d(np.asarray(sites, dtype=np.int64))
    T = float(times[-1])
    obs = int(np.max(np.abs(sites))) + 1
    if W is None:
        # the margin makes a chain of flips from the origin to the wall (rate <= 1 per
        # step) a < 1e-15 event even for short runs, where 4 (p+q) T alone is a few sites
        W = required_window(rates, T, obs) + 16 + int(math.ceil(4 * math.sqrt(T)))
    if frame not in ("canonical", "growth"):
        raise ValueError("frame must be 'canonical' or 'growth'")
    out = np.empty((replicas, times.size, sites.size), np.int64)
    events = np.empty(replicas, np.int64)
    idx = sites + W
    if np.any(idx < 0) or np.any(idx > 2 * W):
        raise ValueError("sites outside the window")
    for r in range(replicas):
        rng = stream(seed, "asep", start + r)
        st = _make_init(init, W, rng, rho)
        _guard(st, rates, T, obs)
        g = st.growth_heights.copy()
        buf = np.empty((times.size, sites.size), np.int64)
        ev, lo, hi = _kmc(g, 0.0, T, rates.p, rates.q, rng, times, idx, buf)
        if st.support == 0 and ev and (lo <= 1 or hi >= g.size - 2):
            raise ConeViolation("a flip reached the wall; enlarge W")
        out[r] = buf if frame == "growth" else -buf
        events[r] = ev
    return out, events


# ------------------------------------------------------ Gartner transform

def _check_tau(rates):
    tau = rates.tau
    if not 0.0 < tau < 1.0:
        raise ValueError("the transform needs 0 < tau = p/q < 1")
    return tau


def gartner_transform(state: AsepState, rates: AsepRates) -> np.ndarray:
    """Z(j, t) = exp((p + q - 2 sqrt(pq)) t) tau^{g(j, t)/2}, g the growth-frame height.

    With this sign of the time factor dZ = sqrt(pq) Delta Z dt + martingale
    holds exactly: at a site with slopes (+1, -1) the height cannot move, so
    d E Z = 0 there, while sqrt(pq) Delta Z = (p + q - 2 sqrt(pq)) tau^{g/2} e^{...}
    must be cancelled by d/dt of the time factor.
    """
    tau = _check_tau(rates)
    c = rates.p + rates.q - 2.0 * math.sqrt(rates.p * rates.q)
    return np.exp(c * state.time + 0.5 * math.log(tau) * state.growth_heights)


def gartner_drift_check(rates: AsepRates, t: float, dt: float, sites, replicas: int, seed: int,
                        init="step"):
    """Paired Monte Carlo test of d/dt E Z(j) = sqrt(pq) (Delta E Z)(j).

    Each trajectory contributes D = [Z(j, t+dt) - Z(j, t-dt)]/(2 dt) - sqrt(pq) Delta Z(j, t),
    whose mean is O(dt^2).  Returns (mean D, SE) per site.
    """
    tau = _check_tau(rates)
    if not 0 < dt < t:
        raise ValueError("need 0 < dt < t")
    sites = np.asarray(sites, dtype=np.int64)
    need = np.unique(np.concatenate([sites - 1, sites, sites + 1]))
    H, _ = simulate_ensemble(init, rates, [t - dt, t, t + dt], need, replicas, seed, frame="growth")
    c = rates.p + rates.q - 2.0 * math.sqrt(rates.p * rates.q)
    tt = np.array([t - dt, t, t + dt])
    Z = np.exp(c * tt[None, :, None] + 0.5 * math.log(tau) * H)
    pos = {int(s): k for k, s in enumerate(need)}
    D = np.empty((replicas, sites.size))
    for m, j in enumerate(sites):
        a, b, cc = pos[int(j) - 1], pos[int(j)], pos[int(j) + 1]
        lap = Z[:, 1, a] - 2 * Z[:, 1, b] + Z[:, 1, cc]
        D[:, m] = (Z[:, 2, b] - Z[:, 0, b]) / (2 * dt) - math.sqrt(rates.p * rates.q) * lap
    return D.mean(axis=0), D.std(axis=0, ddof=1) / math.sqrt(replicas)


def weak_asymmetry_config(epsilon: float) -> WeakAsymmetryConfig:
    """q - p = epsilon^{1/2}, KPZ time x epsilon^{-2}, KPZ length x epsilon^{-1}."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    r = math.sqrt(epsilon)
    return WeakAsymmetryConfig(float(epsilon), AsepRates((1 - r) / 2, (1 + r) / 2),
                               epsilon ** -2, 1.0 / epsilon)


# ---------------------------------------------------------------- tau-moments

def _check_sites(sites, N):
    sites = np.asarray(sites, dtype=np.int64).ravel()
    if sites.size != N:
        raise ValueError(f"need exactly N={N} sites")
    if not 1 <= N <= 3:
        raise ValueError("N must be 1, 2 or 3")
    if np.any(np.diff(sites) <= 0):
        raise ValueError("sites must be strictly increasing")
    return sites


def tau_moment_observable(g_prev, g_site, sites, tau):
    """(tau - 1)^{-N} prod_l [Zbar(j_l) - Zbar(j_l - 1)] with Zbar(j) = tau^{(g(j) + j)/2}.

    ``g_prev[..., l]`` and ``g_site[..., l]`` are growth heights at j_l - 1 and j_l.
    """
    half = 0.5 * math.log(tau)
    zb = np.exp(half * (g_site + sites))
    zp = np.exp(half * (g_prev + sites - 1))
    return np.prod((zb - zp) / (tau - 1.0), axis=-1)


def tau_moment_mc(N: int, sites, t: float, rates: AsepRates, samples: int, seed: int):
    """Monte Carlo estimate and SE of the tau-moment for step data at time t."""
    sites = _check_sites(sites, N)
    tau = _check_tau(rates)
    need = np.concatenate([sites - 1, sites])
    H, _ = simulate_ensemble("step", rates, [t], need, samples, seed, frame="growth")
    vals = tau_moment_observable(H[:, 0, :N], H[:, 0, N:], sites, tau)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.nan


def contour_radius_bound(tau: float) -> float:
    """Largest admissible radius: -1 outside the circle and tau*C disjoint from C."""
    return min(1.0 - tau, tau * (1.0 - tau) / (1.0 + tau))


def _contour_sum(N, sites, t, p, q, tau, r, M):
    theta = 2 * np.pi * np.arange(M) / M
    e = np.exp(1j * theta)
    z = -tau + r * e
    lam = -z * (p - q) ** 2 / ((z + 1) * (p + q * z)) * t
    base = np.log((1 + z) / (1 + z / tau))
    dz = r * e / M  # (2 pi i)^{-1} dz  ->  r e^{i theta} / M per node
    g = [np.exp(lam + (j - 1) * base) / (z + tau) * dz for j in sites]
    if N == 1:
        return complex(np.sum(g[0]))
    K = (z[:, None] - z[None, :]) / (z[:, None] - tau * z[None, :])
    if N == 2:
        return complex(g[0] @ K @ g[1]) * tau
    # N = 3:  sum_abc g1_a g2_b g3_c K_ab K_ac K_bc = sum_ab g1_a g2_b K_ab (K diag(g3) K^T)_ab
    S = (K * g[2][None, :]) @ K.T
    return complex(np.sum(g[0][:, None] * g[1][None, :] * K * S)) * tau ** 3


def tau_moment_contour(N: int, sites, t: float, rates: AsepRates, radius: float | None = None,
                       nodes: int = 1024, tol: float = 1e-8, max_nodes: int = 8192):
    """N-fold contour integral for the step-data tau-moment.

    Trapezoid rule on circles about -tau with node doubling until two
    successive values differ by less than ``tol``.  The factor
    ((1 + z)/(1 + z/tau)) carries the power j - 1, which reproduces the t = 0
    value tau^{sum (j_l - 1)} of the occupation observable.
    Returns (value, info).
    """
    sites = _check_sites(sites, N)
    tau = _check_tau(rates)
    if t < 0:
        raise ValueError("t must be >= 0")
    bound = contour_radius_bound(tau)
    r = 0.5 * bound if radius is None else float(radius)
    if not 0 < r < bound:
        raise ValueError(f"radius {r} violates the contour constraint r < {bound:.6g}")
    if N == 3:
        max_nodes = min(max_nodes, 2048)
    M = nodes
    prev = _contour_sum(N, sites, t, rates.p, rates.q, tau, r, M)
    while True:
        M *= 2
        if M > max_nodes:
            raise ArithmeticError(f"contour quadrature not converged at {M // 2} nodes")
        cur = _contour_sum(N, sites, t, rates.p, rates.q, tau, r, M)
        if abs(cur - prev) < tol:
            break
        prev = cur
    if abs(cur.imag) > 1e-8 * max(1.0, abs(cur.real)):
        raise ArithmeticError(f"contour value has imaginary part {cur.imag:.3e}")
    return float(cur.real), {"nodes": M, "radius": r, "change": abs(cur - prev)}
