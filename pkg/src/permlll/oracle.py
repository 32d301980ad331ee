"""Ground-truth engines: exact permanents, exhaustive enumeration,
exact marginals, and total variation distance.

Everything here is exact (big integers and rationals) and deliberately
slow; the fast samplers are tested against these, never the reverse.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .pdc_model import PdcFormula
from .prp_core import PrpInstance

__all__ = [
    "SolutionSet",
    "EmpiricalDist",
    "exact_permanent",
    "enumerate_prp",
    "enumerate_solutions",
    "exact_marginal",
    "marginal_table",
    "tv_distance",
    "tv_dicts",
]


@dataclass(frozen=True)
class SolutionSet:
    """All solutions as canonical value tuples, deterministic order."""

    items: tuple[tuple[int, ...], ...]
    count: int

    def __post_init__(self) -> None:
        if self.count != len(self.items):
            raise ValueError("count disagrees with items")
        if len(set(self.items)) != len(self.items):
            raise ValueError("duplicate solutions")


@dataclass(frozen=True)
class EmpiricalDist:
    counts: dict[tuple[int, ...], int]
    total: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.total:
            raise ValueError("frequencies do not sum to total")

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[tuple[int, ...]]) -> "EmpiricalDist":
        counts: dict[tuple[int, ...], int] = {}
        total = 0
        for o in outcomes:
            counts[o] = counts.get(o, 0) + 1
            total += 1
        return cls(counts, total)


_PERMANENT_CACHE: dict[tuple[frozenset[int], ...], int] = {}


def exact_permanent(inst: PrpInstance) -> int:
    """Exact 0-1 permanent by Gray-coded inclusion-exclusion, big ints.

    Runs in O(2^n * n); refuses n > 30.
    """
    if inst.n > 30:
        raise ValueError(f"exact permanent capped at n=30, got {inst.n}")
    key = inst.allowed
    hit = _PERMANENT_CACHE.get(key)
    if hit is not None:
        return hit
    n = inst.n
    col_rows = [tuple(i for i in range(n) if j in inst.allowed[i]) for j in range(n)]
    row_sums = [0] * n
    total = 0
    sign = -1 if n % 2 else 1
    prev = 0
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        changed = gray ^ prev
        j = changed.bit_length() - 1
        delta = 1 if gray & changed else -1
        for i in col_rows[j]:
            row_sums[i] += delta
        # each Gray step flips one column, so (-1)^{|S|} alternates with k
        parity = -1 if k & 1 else 1
        prod = 1
        for s in row_sums:
            if s == 0:
                prod = 0
                break
            prod *= s
        total += parity * prod
        prev = gray
    result = sign * total
    assert result >= 0, "permanent of a 0-1 matrix cannot be negative"
    _PERMANENT_CACHE[key] = result
    return result


def enumerate_prp(inst: PrpInstance) -> tuple[tuple[int, ...], ...]:
    """All σ with σ(i) in allowed[i], lexicographic, backtracking."""
    if inst.n > 12:
        raise ValueError(f"enumeration capped at n=12, got {inst.n}")
    n = inst.n
    rows = inst.allowed_lists
    out: list[tuple[int, ...]] = []
    used = [False] * n
    image = [0] * n

    def rec(i: int) -> None:
        if i == n:
            out.append(tuple(image))
            return
        for c in rows[i]:
            if not used[c]:
                used[c] = True
                image[i] = c
                rec(i + 1)
                used[c] = False

    rec(0)
    return tuple(out)


def enumerate_solutions(f: PdcFormula, cap: int = 10**6) -> SolutionSet:
    """Every satisfying assignment as a value tuple in variable order.

    Backtracks set by set; constraints are checked as soon as their last
    variable's set is assigned.  The raw valid-assignment space
    prod |Q_i|! must not exceed cap.
    """
    space = 1
    for s in f.perm_sets:
        space *= math.factorial(s.size)
        if space > cap:
            raise ValueError(f"valid-assignment space exceeds cap {cap}")
    if f.contradictions:
        return SolutionSet(items=(), count=0)
    comp = f.compiled
    nsets = len(comp.sets)
    # constraint -> last set index among its variables
    set_of_varidx: dict[int, int] = {}
    for si, (vidx, _) in enumerate(comp.sets):
        for i in vidx:
            set_of_varidx[i] = si
    due: list[list[tuple[tuple[int, ...], tuple[int, ...]]]] = [[] for _ in range(nsets)]
    for cvars, cvals in comp.constraints:
        due[max(set_of_varidx[i] for i in cvars)].append((cvars, cvals))
    sigma = [0] * f.n
    out: list[tuple[int, ...]] = []

    def rec(si: int) -> None:
        if si == nsets:
            out.append(tuple(sigma))
            return
        vidx, domain = comp.sets[si]
        for perm in itertools.permutations(domain):
            for i, val in zip(vidx, perm):
                sigma[i] = val
            ok = True
            for cvars, cvals in due[si]:
                if all(sigma[i] == val for i, val in zip(cvars, cvals)):
                    ok = False
                    break
            if ok:
                rec(si + 1)

    rec(0)
    return SolutionSet(items=tuple(out), count=len(out))


def marginal_table(f: PdcFormula, cap: int = 10**6) -> dict[tuple[str, int], Fraction]:
    """Exact Pr[σ(v) = c] for every variable and domain value, one pass."""
    sols = enumerate_solutions(f, cap)
    if sols.count == 0:
        raise ValueError("formula has no satisfying assignments")
    hits: dict[tuple[str, int], int] = {}
    for item in sols.items:
        for v, val in zip(f.variables, item):
            key = (v, val)
            hits[key] = hits.get(key, 0) + 1
    table: dict[tuple[str, int], Fraction] = {}
    for s in f.perm_sets:
        for v in s.variables:
            for val in s.domain:
                table[(v, val)] = Fraction(hits.get((v, val), 0), sols.count)
    return table


def exact_marginal(f: PdcFormula, v: str, c: int, cap: int = 10**6) -> Fraction:
    sols = enumerate_solutions(f, cap)
    if sols.count == 0:
        raise ValueError("formula has no satisfying assignments")
    i = f.var_index[v]
    hit = sum(1 for item in sols.items if item[i] == c)
    return Fraction(hit, sols.count)


def tv_dicts(a: Mapping, b: Mapping) -> float:
    """Plain total variation: half the L1 distance over the key union."""
    keys = set(a) | set(b)
    return 0.5 * sum(abs(float(a.get(k, 0)) - float(b.get(k, 0))) for k in keys)


def tv_distance(emp: EmpiricalDist, exact: SolutionSet) -> float:
    """TV between an empirical histogram and uniform on a solution set.

    Outcomes outside the solution set count with their full mass, not
    half: they are discrepancy no matter how the uniform side is split.
    """
    if exact.count == 0:
        raise ValueError("empty solution set")
    if emp.total == 0:
        raise ValueError("empty empirical distribution")
    support = set(exact.items)
    uni = 1.0 / exact.count
    tv = 0.0
    out_mass = 0.0
    for key, cnt in emp.counts.items():
        p = cnt / emp.total
        if key in support:
            tv += abs(p - uni)
        else:
            out_mass += p
    tv += uni * sum(1 for k in support if k not in emp.counts)
    return 0.5 * tv + out_mass
