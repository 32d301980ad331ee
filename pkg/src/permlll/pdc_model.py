"""Data model for permutations with disjunctive constraints.

A formula is a family of disjoint permutation sets, each a list of
variables paired with an equal-size value domain, plus constraints.
Every constraint is a disjunction of (variable != value) literals, so
it is violated only by assignments pinning every listed variable to its
forbidden value.  Assignments are valid when each set carries a
permutation of its domain, satisfying when additionally no constraint
is violated.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Literal",
    "Constraint",
    "PermSet",
    "PdcFormula",
    "FormulaParams",
    "Assignment",
    "related",
    "params",
    "violation_prob",
    "lll_check",
    "simplify",
    "factorize",
    "is_valid",
    "satisfies",
    "uniform_valid",
    "encode_3partite_matching",
    "encode_teacher_assignment",
    "encode_transversal_factors",
]

Literal = tuple[str, int]
Constraint = tuple[Literal, ...]


@dataclass(frozen=True)
class PermSet:
    name: str
    variables: tuple[str, ...]
    domain: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise ValueError(f"permutation set {self.name!r} has no variables")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError(f"permutation set {self.name!r} repeats a variable")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"permutation set {self.name!r} repeats a domain value")
        if len(self.domain) != len(self.variables):
            raise ValueError(
                f"permutation set {self.name!r}: domain size {len(self.domain)} "
                f"!= variable count {len(self.variables)}"
            )

    @property
    def size(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class PdcFormula:
    """Immutable formula; constraints canonicalized on construction.

    contradictions counts width-0 residuals produced by simplification:
    any positive value means no satisfying assignment exists.
    """

    perm_sets: tuple[PermSet, ...]
    constraints: tuple[Constraint, ...]
    contradictions: int = 0

    def __post_init__(self) -> None:
        names = [s.name for s in self.perm_sets]
        if len(set(names)) != len(names):
            raise ValueError("duplicate permutation set names")
        seen: set[str] = set()
        for s in self.perm_sets:
            overlap = seen.intersection(s.variables)
            if overlap:
                raise ValueError(f"variable(s) {sorted(overlap)} appear in two sets")
            seen.update(s.variables)
        var_set = {v: s for s in self.perm_sets for v in s.variables}
        canon = []
        for c in self.constraints:
            if not c:
                raise ValueError("empty constraint")
            if len(set(c)) != len(c):
                raise ValueError(f"constraint {c} repeats a literal")
            for v, val in c:
                if v not in var_set:
                    raise ValueError(f"literal references unknown variable {v!r}")
                if val not in var_set[v].domain:
                    raise ValueError(
                        f"literal ({v!r}, {val}) uses a value outside the domain "
                        f"of set {var_set[v].name!r}"
                    )
            canon.append(tuple(sorted(c, key=lambda lit: (self._var_rank(lit[0]), lit[1]))))
        object.__setattr__(self, "constraints", tuple(canon))

    def _var_rank(self, v: str) -> int:
        # only used during canonicalization, before caches exist
        rank = 0
        for s in self.perm_sets:
            for u in s.variables:
                if u == v:
                    return rank
                rank += 1
        raise KeyError(v)

    @classmethod
    def _unchecked(
        cls,
        perm_sets: tuple[PermSet, ...],
        constraints: tuple[Constraint, ...],
        contradictions: int = 0,
    ) -> "PdcFormula":
        """Construction fast path for already-canonical internal data."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "perm_sets", perm_sets)
        object.__setattr__(obj, "constraints", constraints)
        object.__setattr__(obj, "contradictions", contradictions)
        return obj

    @classmethod
    def from_parts(
        cls,
        perm_sets: Iterable[PermSet | tuple],
        constraints: Iterable[Iterable[Literal]],
        warn: bool = True,
    ) -> "PdcFormula":
        """Build a formula, dropping constraints that can never be violated.

        A constraint whose literal multiset is internally impossible
        (two forbidden values for one variable, or one value forbidden
        for two variables of the same set) has violation probability 0
        and is removed here; with warn=True each drop emits a warning.
        """
        sets = tuple(
            s if isinstance(s, PermSet) else PermSet(s[0], tuple(s[1]), tuple(s[2]))
            for s in perm_sets
        )
        var_set_name = {v: s.name for s in sets for v in s.variables}
        kept: list[Constraint] = []
        for raw in constraints:
            c = tuple(raw)
            if _impossible_literals(c, var_set_name):
                if warn:
                    warnings.warn(
                        f"dropping always-satisfied constraint {c}: "
                        "its violation event is impossible",
                        stacklevel=2,
                    )
                continue
            kept.append(c)
        return cls(sets, tuple(kept))

    @cached_property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for s in self.perm_sets for v in s.variables)

    @cached_property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def var_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}

    @cached_property
    def set_of_var(self) -> dict[str, int]:
        return {v: i for i, s in enumerate(self.perm_sets) for v in s.variables}

    @cached_property
    def set_index(self) -> dict[str, int]:
        return {s.name: i for i, s in enumerate(self.perm_sets)}

    @cached_property
    def compiled(self) -> "CompiledFormula":
        vi = self.var_index
        sets = tuple(
            (tuple(vi[v] for v in s.variables), tuple(s.domain)) for s in self.perm_sets
        )
        cons = tuple(
            (tuple(vi[v] for v, _ in c), tuple(val for _, val in c))
            for c in self.constraints
        )
        return CompiledFormula(sets=sets, constraints=cons)

    def key_of(self, values: Mapping[str, int]) -> tuple[int, ...]:
        """Canonical histogram key: values in formula variable order."""
        return tuple(values[v] for v in self.variables)


@dataclass(frozen=True)
class CompiledFormula:
    """Index-based view used by the samplers' inner loops."""

    sets: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    constraints: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]


@dataclass(frozen=True)
class FormulaParams:
    k: int
    d: int
    Delta: int
    q: int
    p: Fraction
    p_float: float


@dataclass(frozen=True)
class Assignment:
    """Variable-to-value map; fallback marks budget-exhausted outputs."""

    values: dict[str, int]
    fallback: bool = False

    def __getitem__(self, v: str) -> int:
        return self.values[v]


def _impossible_literals(c: Sequence[Literal], var_set_name: Mapping[str, str]) -> bool:
    # two forbidden values for one variable, or one value forbidden for two
    # variables of the same set: the violation event is empty either way
    by_var: dict[str, int] = {}
    by_set_val: dict[tuple[str, int], str] = {}
    for v, val in c:
        if by_var.setdefault(v, val) != val:
            return True
        key = (var_set_name[v], val)
        if by_set_val.setdefault(key, v) != v:
            return True
    return False


def related(c1: Constraint, c2: Constraint, f: PdcFormula) -> bool:
    """Two constraints interact: shared variable, or same value in one set."""
    vars1 = {v for v, _ in c1}
    if any(v in vars1 for v, _ in c2):
        return True
    sv1 = {(f.set_of_var[v], val) for v, val in c1}
    return any((f.set_of_var[v], val) in sv1 for v, val in c2)


def _falling(q: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= q - i
    return out


def violation_prob(c: Constraint, f: PdcFormula) -> Fraction:
    """Exact probability that a uniform valid assignment violates c.

    Literals group by permutation set; k_i distinct variables inside a
    set of size q_i contribute 1/(q_i (q_i-1) ... (q_i-k_i+1)).  An
    internally impossible literal pair makes the event empty: returns 0.
    """
    groups: dict[int, list[Literal]] = {}
    for v, val in c:
        if v not in f.set_of_var:
            raise ValueError(f"literal variable {v!r} not in formula")
        groups.setdefault(f.set_of_var[v], []).append((v, val))
    prob = Fraction(1)
    for si, lits in groups.items():
        by_var: dict[str, int] = {}
        vals_seen: dict[int, str] = {}
        for v, val in lits:
            if by_var.setdefault(v, val) != val:
                return Fraction(0)
            if vals_seen.setdefault(val, v) != v:
                return Fraction(0)
        k_i = len(by_var)
        q_i = f.perm_sets[si].size
        if k_i > q_i:
            return Fraction(0)
        prob *= Fraction(1, _falling(q_i, k_i))
    return prob


def params(f: PdcFormula) -> FormulaParams:
    if not f.constraints:
        q = min((s.size for s in f.perm_sets), default=0)
        return FormulaParams(k=0, d=0, Delta=0, q=q, p=Fraction(0), p_float=0.0)
    k = max(len(c) for c in f.constraints)
    deg: dict[str, int] = {}
    for c in f.constraints:
        for v in {v for v, _ in c}:
            deg[v] = deg.get(v, 0) + 1
    d = max(deg.values())
    m = len(f.constraints)
    delta = 0
    for i in range(m):
        cnt = sum(1 for j in range(m) if related(f.constraints[i], f.constraints[j], f))
        delta = max(delta, cnt)
    p = max((violation_prob(c, f) for c in f.constraints), default=Fraction(0))
    q = min(s.size for s in f.perm_sets)
    return FormulaParams(k=k, d=d, Delta=delta, q=q, p=p, p_float=float(p))


def lll_check(f: PdcFormula) -> bool:
    pr = params(f)
    if pr.Delta == 0:
        return True
    return math.e * pr.p_float * pr.Delta <= 1.0


def is_valid(f: PdcFormula, values: Mapping[str, int]) -> bool:
    for s in f.perm_sets:
        try:
            seen = {values[v] for v in s.variables}
        except KeyError:
            return False
        if seen != set(s.domain):
            return False
    return True


def satisfies(f: PdcFormula, values: Mapping[str, int]) -> bool:
    """Valid and no constraint violated."""
    if f.contradictions:
        return False
    if not is_valid(f, values):
        return False
    for c in f.constraints:
        if all(values[v] == val for v, val in c):
            return False
    return True


def uniform_valid(f: PdcFormula, rng) -> dict[str, int]:
    """Independent uniform permutation of each domain onto its variables."""
    out: dict[str, int] = {}
    for s in f.perm_sets:
        perm = rng.permutation(len(s.domain))
        for v, j in zip(s.variables, perm):
            out[v] = s.domain[j]
    return out


def simplify(f: PdcFormula, fixed: Mapping[str, int]) -> PdcFormula:
    """Residual formula after fixing complete permutation sets.

    fixed must cover each of its sets entirely and assign a permutation
    of that set's domain.  Constraints satisfied by fixed disappear;
    literals on fixed variables that match the fixed value are deleted;
    a constraint losing all its literals is recorded as a contradiction.
    """
    fixed_sets: list[int] = []
    touched = {v for v in fixed}
    for i, s in enumerate(f.perm_sets):
        inside = touched.intersection(s.variables)
        if not inside:
            continue
        if len(inside) != len(s.variables):
            raise ValueError(f"set {s.name!r} only partially fixed")
        if {fixed[v] for v in s.variables} != set(s.domain):
            raise ValueError(f"fixed values on set {s.name!r} are not a permutation")
        fixed_sets.append(i)
    fixed_set_ids = set(fixed_sets)
    keep_sets = tuple(s for i, s in enumerate(f.perm_sets) if i not in fixed_set_ids)
    residual: list[Constraint] = []
    contradictions = f.contradictions
    for c in f.constraints:
        satisfied = False
        rest: list[Literal] = []
        for v, val in c:
            if v in fixed:
                if fixed[v] != val:
                    satisfied = True
                    break
                # literal pinned false, drop it
            else:
                rest.append((v, val))
        if satisfied:
            continue
        if not rest:
            contradictions += 1
            continue
        residual.append(tuple(rest))
    return PdcFormula(keep_sets, tuple(residual), contradictions)


def factorize(f: PdcFormula) -> list[PdcFormula]:
    """Connected components over sets linked by constraints."""
    if f.contradictions:
        raise ValueError("cannot factorize a contradictory formula")
    m = len(f.perm_sets)
    parent = list(range(m))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for c in f.constraints:
        sets = [f.set_of_var[v] for v, _ in c]
        for other in sets[1:]:
            union(sets[0], other)
    comp_sets: dict[int, list[int]] = {}
    for i in range(m):
        comp_sets.setdefault(find(i), []).append(i)
    # deterministic order: by smallest member set index
    ordered = sorted(comp_sets.values(), key=lambda ids: ids[0])
    out: list[PdcFormula] = []
    for ids in ordered:
        id_set = set(ids)
        sets = tuple(f.perm_sets[i] for i in ids)
        cons = tuple(
            c for c in f.constraints if f.set_of_var[c[0][0]] in id_set
        )
        out.append(PdcFormula._unchecked(sets, cons))
    return out


# --- application encoders -------------------------------------------------


def encode_3partite_matching(
    edges: Iterable[tuple[int, int, int]], q: int, warn: bool = True
) -> PdcFormula:
    """Perfect matchings of a 3-partite 3-uniform hypergraph, parts of size q.

    Parts one and two become permutation sets valued in part-three ids;
    every absent triple (i, j, k) contributes (v1_i != k) or (v2_j != k).
    """
    edge_set = set()
    for i, j, k in edges:
        for x in (i, j, k):
            if not 0 <= x < q:
                raise ValueError(f"vertex {x} outside part of size {q}")
        edge_set.add((i, j, k))
    sets = [
        PermSet("part1", tuple(f"v1_{i}" for i in range(q)), tuple(range(q))),
        PermSet("part2", tuple(f"v2_{j}" for j in range(q)), tuple(range(q))),
    ]
    cons: list[Constraint] = []
    for i in range(q):
        for j in range(q):
            for k in range(q):
                if (i, j, k) not in edge_set:
                    cons.append(((f"v1_{i}", k), (f"v2_{j}", k)))
    return PdcFormula.from_parts(sets, cons, warn=warn)


def encode_teacher_assignment(
    q: int,
    subjects: Mapping[str, Iterable[int]],
    classes: Sequence[Sequence[str]],
    warn: bool = True,
) -> PdcFormula:
    """Subject slots pick teachers; each class needs a senior somewhere.

    q teachers total.  subjects maps subject name to its senior teacher
    ids.  Each class lists the subjects it requires (one slot per
    entry).  Per class, one constraint rules out every tuple of
    all-non-senior picks across its slots.
    """
    senior = {name: frozenset(ids) for name, ids in subjects.items()}
    for name, ids in senior.items():
        if not all(0 <= t < q for t in ids):
            raise ValueError(f"subject {name!r} has a senior id outside 0..{q - 1}")
    demand: dict[str, int] = {name: 0 for name in senior}
    slot_vars: list[list[tuple[str, str]]] = []
    for cls in classes:
        row = []
        for subj in cls:
            if subj not in senior:
                raise ValueError(f"class requires unknown subject {subj!r}")
            var = f"{subj}_slot{demand[subj]}"
            demand[subj] += 1
            row.append((subj, var))
        slot_vars.append(row)
    for name, dem in demand.items():
        if dem > q:
            raise ValueError(f"subject {name!r} demand {dem} exceeds supply {q}")
    sets = []
    for name in senior:
        vars_ = [f"{name}_slot{t}" for t in range(demand[name])]
        vars_ += [f"{name}_idle{t}" for t in range(q - demand[name])]
        sets.append(PermSet(name, tuple(vars_), tuple(range(q))))
    cons: list[Constraint] = []
    for row in slot_vars:
        non_senior = [sorted(set(range(q)) - senior[subj]) for subj, _ in row]
        for combo in itertools.product(*non_senior):
            cons.append(tuple((var, t) for (_, var), t in zip(row, combo)))
    return PdcFormula.from_parts(sets, cons, warn=warn)


def encode_transversal_factors(
    m: int,
    q: int,
    edges: Iterable[Sequence[tuple[int, int]]],
    warn: bool = True,
) -> PdcFormula:
    """Partitions of an m-partite q-balanced hypergraph into q independent
    transversals: every vertex gets a factor label, each label appears once
    per part, and no hyperedge is monochromatic.
    """
    sets = [
        PermSet(f"part{p}", tuple(f"x_{p}_{v}" for v in range(q)), tuple(range(q)))
        for p in range(m)
    ]
    cons: list[Constraint] = []
    for e in edges:
        parts = [p for p, _ in e]
        if len(set(parts)) != len(parts):
            raise ValueError(f"hyperedge {tuple(e)} repeats a part")
        for p, v in e:
            if not (0 <= p < m and 0 <= v < q):
                raise ValueError(f"vertex ({p},{v}) out of range")
        for lbl in range(q):
            cons.append(tuple((f"x_{p}_{v}", lbl) for p, v in e))
    return PdcFormula.from_parts(sets, cons, warn=warn)
