"""Nystrom discretization of Fredholm determinants on truncated half-lines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .specfun import QuadratureRule, gauss_legendre

__all__ = [
    "KernelSpec",
    "DiscretizedOperator",
    "FredholmResult",
    "TruncationError",
    "discretize",
    "det_i_minus",
    "fredholm_det",
    "block_fredholm_det",
]

TAIL_TOL = 1e-12


class TruncationError(RuntimeError):
    """Kernel has not decayed at the end of the truncated domain."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel K restricted to [s, s + L].

    ``func(x, y)`` receives two 1-d node arrays and returns the matrix
    K(x_i, y_j).  Use :meth:`pointwise` to wrap a broadcasting function.
    """
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    s: float = 0.0
    L: float = 10.0
    symmetric: bool = False
    name: str = ""

    @classmethod
    def pointwise(cls, f, **kw):
        def func(x, y):
            return np.broadcast_to(f(x[:, None], y[None, :]), (len(x), len(y))).astype(float)
        return cls(func, **kw)

    def matrix(self, x, y=None):
        x = np.asarray(x, dtype=float)
        y = x if y is None else np.asarray(y, dtype=float)
        return np.asarray(self.func(x, y), dtype=float)

    def __call__(self, x: float, y: float) -> float:
        return float(self.matrix(np.array([x]), np.array([y]))[0, 0])

    def with_domain(self, s=None, L=None):
        return KernelSpec(self.func, self.s if s is None else s, self.L if L is None else L,
                          self.symmetric, self.name)


@dataclass(frozen=True)
class DiscretizedOperator:
    matrix: np.ndarray
    rule: QuadratureRule | tuple

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class FredholmResult:
    value: float
    n: int
    L: float
    convergence: float
    tail: float = 0.0
    condition: float = 1.0
    extra: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _weighted(K, sw_row, sw_col):
    return sw_row[:, None] * K * sw_col[None, :]


def discretize(kernel: KernelSpec, n: int) -> DiscretizedOperator:
    """Matrix sqrt(w_i) K(x_i, x_j) sqrt(w_j) on Gauss-Legendre nodes of [s, s+L]."""
    rule = gauss_legendre(n, kernel.s, kernel.s + kernel.L)
    K = kernel.matrix(rule.nodes)
    if not np.all(np.isfinite(K)):
        raise ValueError(f"kernel {kernel.name!r} is not finite at some node pair")
    sw = np.sqrt(rule.weights)
    M = _weighted(K, sw, sw)
    if kernel.symmetric:
        M = 0.5 * (M + M.T)
    return DiscretizedOperator(M, rule)


def det_i_minus(M: np.ndarray) -> tuple[float, float]:
    """det(I - M) by LU with partial pivoting; returns (value, log|value|)."""
    A = np.eye(M.shape[0]) - M
    sign, logabs = np.linalg.slogdet(A)
    if logabs > 700:
        raise OverflowError("determinant overflows double precision")
    if sign == 0:
        return 0.0, -math.inf
    return float(sign * math.exp(logabs)), float(logabs)


def _tail(kernel: KernelSpec) -> float:
    e = kernel.s + kernel.L
    return abs(kernel(e, e))


def _resolve_domain(kernel, auto_extend, max_doublings):
    k = kernel
    for _ in range(max_doublings + 1):
        tail = _tail(k)
        if tail < TAIL_TOL:
            return k, tail
        if not auto_extend:
            break
        k = k.with_domain(L=2.0 * k.L)
    raise TruncationError(
        f"|K(s+L, s+L)| = {tail:.3e} >= {TAIL_TOL} for kernel {kernel.name!r} at s={kernel.s}, L={k.L}")


def fredholm_det(kernel: KernelSpec, n: int = 40, *, auto_extend: bool = True,
                 max_doublings: int = 3) -> FredholmResult:
    """det(I - P_s K P_s) with truncation and refinement diagnostics.

    If the kernel has not decayed at s + L the window is doubled (at fixed n)
    up to ``max_doublings`` times; the L actually used is reported.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    k, tail = _resolve_domain(kernel, auto_extend, max_doublings)
    op = discretize(k, n)
    val, _ = det_i_minus(op.matrix)
    m = math.ceil(n / 2)
    half, _ = det_i_minus(discretize(k, m).matrix)
    return FredholmResult(val, int(n), k.L, abs(val - half), tail, _cond(op.matrix))


def _cond(M):
    try:
        return float(np.linalg.cond(np.eye(M.shape[0]) - M))
    except np.linalg.LinAlgError:
        return math.inf


def _assemble_block(blocks, domains, L, n):
    rules = [gauss_legendre(n, s, s + L) for s in domains]
    sw = [np.sqrt(r.weights) for r in rules]
    rows = []
    for i in range(2):
        row = []
        for j in range(2):
            b = blocks[i][j]
            if b is None:
                row.append(np.zeros((n, n)))
                continue
            K = b.matrix(rules[i].nodes, rules[j].nodes)
            if not np.all(np.isfinite(K)):
                raise ValueError(f"block ({i},{j}) is not finite at some node pair")
            row.append(_weighted(K, sw[i], sw[j]))
        rows.append(row)
    return np.block(rows), rules


def block_fredholm_det(blocks: Sequence[Sequence[KernelSpec | None]], domains: tuple[float, float],
                       n: int = 40, L: float | None = None) -> FredholmResult:
    """det(I - K) for a 2x2 block kernel; block (i, j) maps the j-th copy
    of [s_j, s_j + L] into the i-th.  ``None`` blocks are zero."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if L is None:
        Ls = [b.L for row in blocks for b in row if b is not None]
        L = max(Ls) if Ls else 10.0
    tail = 0.0
    for i in range(2):
        b = blocks[i][i]
        if b is None:
            continue
        e = domains[i] + L
        tail = max(tail, abs(b(e, e)))
        if tail >= TAIL_TOL:
            raise TruncationError(f"diagonal block {i} has |K(s+L,s+L)| = {tail:.3e}")
    M, rules = _assemble_block(blocks, domains, L, n)
    val, _ = det_i_minus(M)
    m = math.ceil(n / 2)
    M2, _ = _assemble_block(blocks, domains, L, m)
    half, _ = det_i_minus(M2)
    return FredholmResult(val, int(n), float(L), abs(val - half), tail, _cond(M))
