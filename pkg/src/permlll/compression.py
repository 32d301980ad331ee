"""State compression for permutation formulas.

A decomposition cuts each permutation set's variables into consecutive
blocks; assigning every block a value domain of matching size turns it
into a compressed state.  Projecting a concrete assignment yields the
compressed state whose block domains are the images of the blocks, and
the induced formula re-reads the original constraints inside those
narrowed domains: a constraint survives only if every literal's value
is still assignable to its variable's block.

The point of the construction is the exact factorization of the target
measure: the weight of an assignment equals the weight of its
compressed state times the assignment's conditional weight in the
induced formula.  Tests verify that identity by enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

from .pdc_model import Assignment, PdcFormula, PermSet, _falling, is_valid

__all__ = [
    "Decomposition",
    "CompressedState",
    "build_decomposition",
    "identity_decomposition",
    "induced_formula",
    "project",
    "violation_bound_decomposed",
]

# above this constraint count the p-bound is recorded as asserted only
_P_CHECK_LIMIT = 20_000


@dataclass(frozen=True)
class Decomposition:
    """Ordered variable blocks per permutation set, optionally with domains.

    set_domains keeps each set's full value domain so that a domain
    assignment can be validated without the originating formula.
    p_bound is the certified worst-case violation probability over all
    induced formulas (None when the check was skipped for size, with
    p_bound_checked False recording the claim as asserted).
    """

    set_names: tuple[str, ...]
    set_domains: tuple[tuple[int, ...], ...]
    blocks: tuple[tuple[tuple[str, ...], ...], ...]
    domains: tuple[tuple[tuple[int, ...], ...], ...] | None = None
    p_bound: float | None = None
    p_bound_checked: bool = False

    def __post_init__(self) -> None:
        if not (len(self.set_names) == len(self.set_domains) == len(self.blocks)):
            raise ValueError("per-set fields disagree in length")
        for name, dom, blks in zip(self.set_names, self.set_domains, self.blocks):
            if not blks or any(not b for b in blks):
                raise ValueError(f"set {name!r} has an empty block")
            if sum(len(b) for b in blks) != len(dom):
                raise ValueError(f"blocks of set {name!r} do not cover its domain size")
        if self.domains is not None:
            _check_domains(self)

    @property
    def block_sizes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(len(b) for b in blks) for blks in self.blocks)

    def with_domains(
        self, domains: Sequence[Sequence[Sequence[int]]]
    ) -> "Decomposition":
        packed = tuple(tuple(tuple(d) for d in per_set) for per_set in domains)
        return replace(self, domains=packed)


def _check_domains(d: Decomposition) -> None:
    for name, dom, blks, doms in zip(d.set_names, d.set_domains, d.blocks, d.domains):
        if len(doms) != len(blks):
            raise ValueError(f"set {name!r}: domain count != block count")
        flat: list[int] = []
        for b, bd in zip(blks, doms):
            if len(bd) != len(b):
                raise ValueError(
                    f"set {name!r}: block of size {len(b)} got domain of size {len(bd)}"
                )
            flat.extend(bd)
        if sorted(flat) != sorted(dom):
            raise ValueError(f"set {name!r}: block domains do not partition its domain")


@dataclass(frozen=True)
class CompressedState:
    """A decomposition with every block domain assigned."""

    decomposition: Decomposition

    def __post_init__(self) -> None:
        if self.decomposition.domains is None:
            raise ValueError("compressed state requires assigned block domains")

    @property
    def domains(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        return self.decomposition.domains


def _block_of_var(d: Decomposition) -> dict[str, tuple[int, int, int]]:
    """variable -> (set index, block index, block size)."""
    out: dict[str, tuple[int, int, int]] = {}
    for i, blks in enumerate(d.blocks):
        for j, b in enumerate(blks):
            for v in b:
                out[v] = (i, j, len(b))
    return out


def _decomposed_constraint_prob(
    c, block_of: Mapping[str, tuple[int, int, int]]
) -> Fraction:
    # worst case over domain assignments: whenever the constraint survives,
    # its violation probability is the same falling-factorial product over
    # blocks; it can survive iff no block holds more literals than its size
    groups: dict[tuple[int, int], int] = {}
    size_of: dict[tuple[int, int], int] = {}
    for v, _val in c:
        i, j, b = block_of[v]
        groups[(i, j)] = groups.get((i, j), 0) + 1
        size_of[(i, j)] = b
    prob = Fraction(1)
    for key, k in groups.items():
        b = size_of[key]
        if k > b:
            return Fraction(0)
        prob *= Fraction(1, _falling(b, k))
    return prob


def violation_bound_decomposed(f: PdcFormula, d: Decomposition) -> float:
    """Largest violation probability any induced formula can exhibit.

    Exact and closed-form: the probability a surviving constraint is
    violated does not depend on which block domains were assigned, only
    on how its literals spread over blocks.
    """
    block_of = _block_of_var(d)
    best = Fraction(0)
    for c in f.constraints:
        p = _decomposed_constraint_prob(c, block_of)
        if p > best:
            best = p
    return float(best)


def build_decomposition(f: PdcFormula, eta: float, L: int) -> Decomposition:
    """Cut each set, in variable order, into blocks of size min(round(|P|^eta), L).

    The final block absorbs the remainder and ends up in [t, 2t).  The
    worst-case induced violation probability is certified in closed form
    on formulas of moderate constraint count and recorded as asserted
    beyond that.
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    names = []
    set_doms = []
    blocks = []
    for s in f.perm_sets:
        t = min(round(s.size ** eta), L)
        t = max(t, 1)
        cut: list[tuple[str, ...]] = []
        start = 0
        while s.size - start >= 2 * t:
            cut.append(tuple(s.variables[start : start + t]))
            start += t
        cut.append(tuple(s.variables[start:]))
        names.append(s.name)
        set_doms.append(tuple(s.domain))
        blocks.append(tuple(cut))
    d = Decomposition(
        set_names=tuple(names), set_domains=tuple(set_doms), blocks=tuple(blocks)
    )
    if len(f.constraints) <= _P_CHECK_LIMIT:
        bound = violation_bound_decomposed(f, d)
        return replace(d, p_bound=bound, p_bound_checked=True)
    return replace(d, p_bound=None, p_bound_checked=False)


def identity_decomposition(f: PdcFormula) -> Decomposition:
    """Whole sets as single blocks with their original domains assigned."""
    d = Decomposition(
        set_names=tuple(s.name for s in f.perm_sets),
        set_domains=tuple(tuple(s.domain) for s in f.perm_sets),
        blocks=tuple((tuple(s.variables),) for s in f.perm_sets),
    )
    return d.with_domains(tuple((tuple(s.domain),) for s in f.perm_sets))


def induced_formula(f: PdcFormula, d: Decomposition) -> PdcFormula:
    """Formula over the blocks under d's domain assignment.

    Permutation sets become the blocks (named "set#j") with their
    assigned domains; constraints survive exactly when every literal's
    value lies in its variable's block domain.
    """
    if d.domains is None:
        raise ValueError("decomposition carries no domain assignment")
    _check_domains(d)
    sets: list[PermSet] = []
    dom_of_var: dict[str, frozenset[int]] = {}
    for name, blks, doms in zip(d.set_names, d.blocks, d.domains):
        for j, (b, bd) in enumerate(zip(blks, doms)):
            sets.append(PermSet(f"{name}#{j}", tuple(b), tuple(bd)))
            fs = frozenset(bd)
            for v in b:
                dom_of_var[v] = fs
    kept = tuple(
        c for c in f.constraints if all(val in dom_of_var[v] for v, val in c)
    )
    # block order follows set order and blocks slice variables in order, so
    # the original canonical literal ordering is still canonical here
    return PdcFormula._unchecked(tuple(sets), kept, f.contradictions)


def project(f: PdcFormula, d: Decomposition, sigma) -> CompressedState:
    """Compressed state whose block domains are sigma's images of the blocks."""
    values = sigma.values if isinstance(sigma, Assignment) else sigma
    if not is_valid(f, values):
        raise ValueError("sigma is not a valid assignment of the formula")
    domains = tuple(
        tuple(tuple(sorted(values[v] for v in b)) for b in blks) for blks in d.blocks
    )
    return CompressedState(decomposition=d.with_domains(domains))
