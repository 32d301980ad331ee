"""Core formulas for permutations with restricted positions.

A PRP instance is an n x n 0-1 matrix given as row-wise allowed-column
sets.  This module owns the recursive per-row weight f, the closed-form
estimator g, density classification, and the two-sided bracket on the
number of solutions.  Everything here is pure and float-only; exact
counting lives in the oracle module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

__all__ = [
    "PrpInstance",
    "DensityReport",
    "PermanentBracket",
    "DensityViolation",
    "Infeasible",
    "f_bound",
    "log_f",
    "g_estimate",
    "log_g",
    "density_report",
    "bregman_upper",
    "log_bregman_upper",
    "bregman_classic",
    "permanent_bracket",
    "ratio_bound",
]

# Absolute tolerance for log-space accumulation, documented contract.
LOG_TOL = 1e-9


class DensityViolation(ValueError):
    """Instance is not very dense where the caller requires it."""


class Infeasible(RuntimeError):
    """No completion exists from the current sampler state."""


@dataclass(frozen=True)
class PrpInstance:
    """Rows of allowed columns, 0-indexed.

    allowed[i] is the set of columns j where row i has a 1.
    """

    n: int
    allowed: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("n must be positive")
        if len(self.allowed) != self.n:
            raise ValueError("need exactly n allowed sets")
        for i, row in enumerate(self.allowed):
            if not row:
                raise ValueError(f"row {i} has an empty allowed set")
            if not all(0 <= c < self.n for c in row):
                raise ValueError(f"row {i} contains a column outside 0..{self.n - 1}")

    @staticmethod
    def from_lists(allowed: list[list[int]] | list[set[int]]) -> "PrpInstance":
        n = len(allowed)
        return PrpInstance(n, tuple(frozenset(row) for row in allowed))

    @staticmethod
    def full(n: int) -> "PrpInstance":
        row = frozenset(range(n))
        return PrpInstance(n, tuple(row for _ in range(n)))

    @cached_property
    def row_sizes(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.allowed)

    @cached_property
    def allowed_lists(self) -> tuple[tuple[int, ...], ...]:
        # sorted row lists; the deterministic iteration order for samplers
        return tuple(tuple(sorted(r)) for r in self.allowed)

    @cached_property
    def col_sizes(self) -> tuple[int, ...]:
        sizes = [0] * self.n
        for row in self.allowed:
            for c in row:
                sizes[c] += 1
        return tuple(sizes)

    @cached_property
    def zeros_in_col(self) -> tuple[tuple[int, ...], ...]:
        """For each column c, the rows i with c not allowed."""
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, row in enumerate(self.allowed):
            if len(row) == self.n:
                continue
            for c in range(self.n):
                if c not in row:
                    out[c].append(i)
        return tuple(tuple(rows) for rows in out)

    @cached_property
    def rho(self) -> int:
        return self.n * self.n - sum(self.row_sizes)


@dataclass(frozen=True)
class DensityReport:
    rho: int
    min_row_size: int
    min_col_size: int
    threshold: float
    very_dense: bool


@dataclass(frozen=True)
class PermanentBracket:
    lower: float
    upper: float


# f(1) = e and f(a+1) = f(a) + 1 + 1/(2 f(a)) + 0.6/(2 f(a)^2).
# f(0) = 0 is a sentinel: a branch that empties a row carries no weight.
_F_TABLE: list[float] = [0.0, math.e]
_LOGF_TABLE: list[float] = [float("-inf"), 1.0]


def _extend_f(a: int) -> None:
    while len(_F_TABLE) <= a:
        fa = _F_TABLE[-1]
        nxt = fa + 1.0 + 1.0 / (2.0 * fa) + 0.6 / (2.0 * fa * fa)
        _F_TABLE.append(nxt)
        _LOGF_TABLE.append(math.log(nxt))


def f_bound(a: int) -> float:
    """Recursive row weight; memoized, strictly increasing for a >= 1."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    _extend_f(a)
    return _F_TABLE[a]


def log_f(a: int) -> float:
    if a < 0:
        raise ValueError("a must be nonnegative")
    _extend_f(a)
    return _LOGF_TABLE[a]


def log_f_table(upto: int) -> list[float]:
    """Prefix [log f(0), ..., log f(upto)] as a plain list for hot loops."""
    _extend_f(upto)
    return _LOGF_TABLE[: upto + 1]


def log_g(x: float, y: float) -> float:
    """log of g(x, y) = 2*pi*y * exp(1/(3y)) * (y/e)^y * (1 - x/y^2)^y."""
    if y <= 0:
        raise ValueError("y must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x >= y * y:
        raise ValueError(f"g domain requires x < y^2, got x={x}, y={y}")
    return (
        math.log(2.0 * math.pi * y)
        + 1.0 / (3.0 * y)
        + y * (math.log(y) - 1.0)
        + y * math.log1p(-x / (y * y))
    )


def g_estimate(x: float, y: float) -> float:
    return math.exp(log_g(x, y))


def density_threshold(n: int) -> float:
    # max(n-2, 0) keeps n=1 meaningful: a 1x1 instance must be full.
    return n - math.sqrt(max(n - 2, 0) / 20.0)


def density_report(inst: PrpInstance) -> DensityReport:
    thr = density_threshold(inst.n)
    min_row = min(inst.row_sizes)
    min_col = min(inst.col_sizes)
    return DensityReport(
        rho=inst.rho,
        min_row_size=min_row,
        min_col_size=min_col,
        threshold=thr,
        very_dense=(min_row >= thr and min_col >= thr),
    )


def log_bregman_upper(inst: PrpInstance) -> float:
    # prod_i f(|R_i|)/e, accumulated in logs
    return sum(log_f(r) for r in inst.row_sizes) - inst.n


def bregman_upper(inst: PrpInstance) -> float:
    return math.exp(log_bregman_upper(inst))


def bregman_classic(inst: PrpInstance) -> float:
    """Classical product bound prod_i (r_i!)^(1/r_i), for cross-checks."""
    return math.exp(sum(math.lgamma(r + 1) / r for r in inst.row_sizes))


def permanent_bracket(inst: PrpInstance) -> PermanentBracket:
    if inst.n < 2:
        raise DensityViolation("bracket requires n >= 2")
    rep = density_report(inst)
    if not rep.very_dense:
        raise DensityViolation(
            f"instance not very dense: min row {rep.min_row_size}, "
            f"min col {rep.min_col_size}, threshold {rep.threshold:.4f}"
        )
    n = inst.n
    lower = math.exp(log_g(rep.rho, n) - 0.5 * math.log(2.0 * math.pi * n) - 2.0)
    upper = bregman_upper(inst)
    return PermanentBracket(lower=lower, upper=upper)


def ratio_bound(n: int) -> float:
    """Upper bound on (product bound)/(solution count) for very dense n."""
    if n < 2:
        return 1.0
    thr = density_threshold(n)
    return math.e**3 * (5.3 * math.sqrt(n)) ** (n / thr) / math.sqrt(2.0 * math.pi * n)
