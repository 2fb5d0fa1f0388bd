"""Empirical distributions and exact-versus-simulated comparison reports."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .io import write_json

__all__ = [
    "EmpiricalDistribution",
    "ComparisonReport",
    "ecdf",
    "ks_distance",
    "ks_critical",
    "mean_and_se",
    "gumbel_convolve_compare",
    "exponent_fit",
    "compare_to_table",
]


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray
    seed: int | None = None
    config_hash: str | None = None

    def __post_init__(self):
        x = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if x.size < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def __call__(self, x):
        """Right-continuous ECDF."""
        return np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right") / self.count

    def mean(self):
        return mean_and_se(self.samples)

    def variance(self):
        """Sample variance with a delta-method standard error."""
        x = self.samples
        n = x.size
        v = float(np.var(x, ddof=1))
        m4 = float(np.mean((x - x.mean()) ** 4))
        se = math.sqrt(max(m4 - v * v, 0.0) / n)
        return v, se


def ecdf(samples, seed=None, config_hash=None) -> EmpiricalDistribution:
    return EmpiricalDistribution(samples, seed, config_hash)


def mean_and_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Exact one-sample Kolmogorov critical value at level alpha."""
    return float(sps.kstwo.ppf(1.0 - alpha, n))


def ks_distance(emp: EmpiricalDistribution, other) -> float:
    """sup |F_emp - F_other|; ``other`` is a DistributionTable or another
    EmpiricalDistribution.  For a table the supremum is taken over both one-sided
    limits at every jump of the ECDF."""
    if isinstance(other, EmpiricalDistribution):
        pts = np.concatenate([emp.samples, other.samples])
        return float(np.max(np.abs(emp(pts) - other(pts))))
    x = emp.samples
    s = np.asarray(other.s)
    if x[0] < s[0] or x[-1] > s[-1]:
        raise ValueError(f"samples [{x[0]:.3g}, {x[-1]:.3g}] fall outside the table range "
                         f"[{s[0]:.3g}, {s[-1]:.3g}]")
    F = other.cdf(x)
    n = x.size
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


@dataclass
class ComparisonReport:
    """Outcome of one exact-versus-sampled comparison.  ``tolerance`` states
    the declared pass rule in words; ``passed`` is its verdict."""
    name: str
    tolerance: str
    passed: bool
    ks: float | None = None
    mean_diff: float | None = None
    mean_diff_se: float | None = None
    var_diff: float | None = None
    var_diff_se: float | None = None
    n_samples: int | None = None
    seed: int | None = None
    config_hash: str | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ks is not None and not 0.0 <= self.ks <= 1.0:
            raise ValueError("KS distance must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        write_json(path, self.to_dict())

    def summary(self) -> str:
        parts = [f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.tolerance})"]
        if self.ks is not None:
            parts.append(f"KS={self.ks:.4f}")
        if self.mean_diff is not None:
            parts.append(f"dmean={self.mean_diff:+.4g}+-{self.mean_diff_se or 0:.2g}")
        if self.var_diff is not None:
            parts.append(f"dvar={self.var_diff:+.4g}+-{self.var_diff_se or 0:.2g}")
        if self.n_samples is not None:
            parts.append(f"n={self.n_samples}")
        return " ".join(parts)


def compare_to_table(emp: EmpiricalDistribution, table, ks_tol: float, name="ks") -> ComparisonReport:
    """KS distance plus mean and variance differences against a table."""
    ks = ks_distance(emp, table)
    m, mse = emp.mean()
    v, vse = emp.variance()
    return ComparisonReport(
        name, f"KS < {ks_tol}", bool(ks < ks_tol), ks=ks,
        mean_diff=m - table.mean(), mean_diff_se=mse,
        var_diff=v - table.variance(), var_diff_se=vse,
        n_samples=emp.count, seed=emp.seed, config_hash=emp.config_hash)


def gumbel_convolve_compare(eta_samples, params, s_grid: Sequence[float], exact=None,
                            n_se: float = 3.0, abs_floor: float = 1e-9, **det_kw) -> ComparisonReport:
    """Monte Carlo <exp(-exp(eta - gamma_t s))> per s against det(1 - P_0 K_{t,s} P_0).

    ``exact`` may carry precomputed determinant values; otherwise they are
    evaluated here.  A point passes when |MC - exact| <= n_se * SE + abs_floor;
    the floor only matters where every sample saturates at 0 or 1.
    """
    from .distributions import crossover_generating

    eta = np.asarray(eta_samples, dtype=float).ravel()
    if eta.size < 2 or not np.all(np.isfinite(eta)):
        raise ValueError("need at least two finite samples")
    s_grid = np.asarray(s_grid, dtype=float)
    g = params.gamma_t
    # exp(-exp(a)) evaluated stably; the argument is clipped where it is 0 or 1 to double precision
    arg = np.clip(eta[None, :] - g * s_grid[:, None], -745.0, 7.0)
    vals = np.exp(-np.exp(arg))
    est = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(eta.size)
    if exact is None:
        exact = np.array([crossover_generating(params, s, **det_kw) for s in s_grid])
    exact = np.asarray(exact, dtype=float)
    z = np.abs(est - exact)
    ok = z <= n_se * se + abs_floor
    return ComparisonReport(
        "gumbel-convolve", f"|MC - det| <= {n_se} SE (+{abs_floor:g}) at every s", bool(np.all(ok)),
        n_samples=int(eta.size),
        details={"t": params.t, "s": s_grid, "estimate": est, "se": se, "determinant": exact,
                 "z": np.where(se > 0, z / np.maximum(se, 1e-300), 0.0), "pass": ok})


def exponent_fit(x, y) -> tuple[float, float]:
    """Least-squares slope of log y against log x and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4 or x.shape != y.shape:
        raise ValueError("need at least four (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = lx.size - 2
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    return float(coef[0]), se
