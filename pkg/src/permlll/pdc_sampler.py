"""Markov chain sampler for permutations with disjunctive constraints.

The chain walks on compressed states: each step picks one permutation
set, factorizes the formula induced by the current block domains (with
the chosen set's domain opened back up to the full value set), redraws
the component containing that set, and keeps only the new block domains
of the chosen set.  After the mixing budget, every component of the
final induced formula is sampled outright by rejection.

The per-component subroutine has two branches.  When the component is
loosely constrained, plain rejection over uniform valid assignments is
cheap enough.  Otherwise the component splits around the chosen set:
the other sets are drawn first, the constraints then residuate onto the
chosen set as forbidden positions (a PRP instance) plus a rare wide
remainder, and a g-based acceptance correction makes the composition
exactly uniform in the limit of exact counting.

All loop counts and rejection budgets take logs base 2; the mixing
argument consumes budgets through 2^(-log2(n/eps)) = eps/n, and base 2
is conservative anywhere the analysis wanted a natural log.

A vectorized multi-chain driver (mcmc_sample_many) runs the same chain
law across many independent replicas with numpy batch draws; it only
engages for formulas whose every step plan lands in the rejection
branch with constraint-free side components, and silently falls back to
the per-chain path otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .compression import CompressedState, Decomposition, build_decomposition, induced_formula, project
from .oracle import enumerate_prp, enumerate_solutions
from .pdc_model import (
    Assignment,
    PdcFormula,
    PermSet,
    is_valid,
    params,
    satisfies,
    uniform_valid,
    violation_prob,
)
from .prp_core import Infeasible, PrpInstance, density_report, g_estimate
from .prp_sampler import count_approx, sample_approx

__all__ = [
    "SamplerConfig",
    "RegimeReport",
    "RegimeViolation",
    "PrpDensityViolation",
    "ResidualPrp",
    "rejection_sampling",
    "residual_prp",
    "sample_subroutine",
    "mcmc_sample",
    "mcmc_sample_many",
    "glauber_step_ideal",
    "regime_check",
    "step_count",
    "final_rejection_budget",
    "branch_a_loop_count",
    "branch_a_rejection_budget",
    "branch_b_first_budget",
    "branch_b_loop_count",
    "branch_b_redraw_budget",
    "DEFAULT_CONSTANTS",
]

DEFAULT_CONSTANTS: Mapping[str, object] = {
    "c": 1.0,
    "zeta": 1.0,
    "q_min": 2,
    "variant": None,
}


class RegimeViolation(RuntimeError):
    """A run-time regime condition failed and force_regime is off."""


class PrpDensityViolation(RuntimeError):
    """A residual PRP instance is neither very dense nor recoverable."""


@dataclass(frozen=True)
class SamplerConfig:
    eps: float
    eta: float = 0.5
    L: int = 64
    seed: object = None
    force_regime: bool = False
    log_base: int = 2
    constants: Mapping[str, object] | None = None
    use_engine: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0,1)")
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if self.log_base != 2:
            raise ValueError("all budget formulas are fixed to log base 2")


@dataclass(frozen=True)
class RegimeReport:
    uniform_ok: bool
    general_ok: bool
    details: dict


@dataclass(frozen=True)
class ResidualPrp:
    """Width-1 residuals on one set, recast as restricted positions.

    variables/values give the row/column decoding: row i is variables[i]
    and column j means values[j].  allowed[i] lists the remaining values
    (not columns).  rho_sigma counts the distinct forbidden (variable,
    value) pairs.
    """

    set_name: str
    variables: tuple[str, ...]
    values: tuple[int, ...]
    allowed: tuple[tuple[int, ...], ...]
    rho_sigma: int

    def instance(self) -> PrpInstance:
        col = {val: j for j, val in enumerate(self.values)}
        rows = []
        for v, row in zip(self.variables, self.allowed):
            if not row:
                raise Infeasible(f"variable {v!r} has every value forbidden")
            rows.append([col[val] for val in row])
        return PrpInstance.from_lists(rows)


# params() is quadratic in the constraint count; formulas are immutable
# and the samplers ask for the same ones repeatedly
_cached_params = lru_cache(maxsize=1024)(params)

_enumerate_prp_cached = lru_cache(maxsize=256)(enumerate_prp)


# --- budget formulas (all logs base 2) -------------------------------------


def step_count(n: int, eps: float) -> int:
    return math.ceil(2.0 * n * math.log2(3.0 * n / eps))


def final_rejection_budget(n: int, eps: float, steps: int) -> int:
    return math.ceil((n / eps) * math.log2(3.0 * n * (steps + 1) / eps))


def branch_a_loop_count(n: int, eps: float) -> int:
    return math.ceil(math.e**4 * n / eps * math.log2(2.0 / eps))


def branch_a_rejection_budget(n: int, eps: float, loops: int) -> int:
    return math.ceil((n / eps) * math.log2(2.0 * n * loops / eps))


def branch_b_first_budget(n: int, eps: float) -> int:
    return math.ceil((n / eps) * math.log2(12.0 * n / eps))


def branch_b_loop_count(set_size: int, eps: float, delta: int) -> int:
    damp = 1.0 - math.exp(-6.0 * math.e * math.log(2.0) * max(delta, 1))
    return math.ceil(
        2.0 * math.sqrt(2.0 * math.pi * set_size) * math.e**3 / damp * math.log2(6.0 / eps)
    )


def branch_b_redraw_budget(n: int, eps: float, loops: int) -> int:
    return math.ceil((n / eps) * math.log2(6.0 * n * loops / eps))


# --- Algorithm 2 ------------------------------------------------------------


def rejection_sampling(f: PdcFormula, budget: int, rng) -> Assignment:
    """First satisfying draw among `budget` uniform valid assignments.

    Conditioned on returning early the output is exactly uniform over
    the solutions.  When the budget runs out, one more uniform valid
    assignment is returned with the fallback flag set.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    for _ in range(budget):
        values = uniform_valid(f, rng)
        if satisfies(f, values):
            return Assignment(values=values, fallback=False)
    return Assignment(values=uniform_valid(f, rng), fallback=True)


# --- residual structure -----------------------------------------------------


def residual_prp(
    f_component: PdcFormula, P: str | PermSet, sigmas
) -> tuple[ResidualPrp, list]:
    """Residuate constraints under fixed values on every other set.

    Width-1 residuals turn into forbidden values; the returned instance
    allows each variable of P everything else.  Residuals of width >= 2
    come back as the extra check list.  Raises ValueError when the fixed
    values already violate a constraint among themselves.
    """
    pname = P.name if isinstance(P, PermSet) else P
    pi = f_component.set_index[pname]
    pset = f_component.perm_sets[pi]
    if isinstance(sigmas, Mapping):
        fixed = dict(sigmas)
    else:
        fixed = {}
        for m in sigmas:
            fixed.update(m.values if isinstance(m, Assignment) else m)
    forbidden: dict[str, set[int]] = {v: set() for v in pset.variables}
    wide: list = []
    seen_wide: set = set()
    for c in f_component.constraints:
        residual = []
        sat = False
        for v, val in c:
            if v in fixed:
                if fixed[v] != val:
                    sat = True
                    break
            else:
                residual.append((v, val))
        if sat:
            continue
        if not residual:
            raise ValueError(f"fixed values violate constraint {c}")
        if len(residual) == 1:
            v, val = residual[0]
            forbidden[v].add(val)
        else:
            key = tuple(residual)
            if key not in seen_wide:
                seen_wide.add(key)
                wide.append(key)
    rho = sum(len(s) for s in forbidden.values())
    delta = _cached_params(f_component).Delta
    assert rho <= pset.size * max(delta, 1), (
        f"rho {rho} exceeds |P|*Delta = {pset.size}*{delta}"
    )
    allowed = tuple(
        tuple(val for val in pset.domain if val not in forbidden[v])
        for v in pset.variables
    )
    res = ResidualPrp(
        set_name=pname,
        variables=tuple(pset.variables),
        values=tuple(pset.domain),
        allowed=allowed,
        rho_sigma=rho,
    )
    return res, wide


# --- Algorithm 3 ------------------------------------------------------------


def _drop_set(f: PdcFormula, pi: int) -> PdcFormula:
    pvars = set(f.perm_sets[pi].variables)
    keep_sets = tuple(s for i, s in enumerate(f.perm_sets) if i != pi)
    keep_cons = tuple(
        c for c in f.constraints if not any(v in pvars for v, _ in c)
    )
    # removing one set keeps the remaining global variable order, so the
    # canonical literal order inside each constraint is untouched
    return PdcFormula._unchecked(keep_sets, keep_cons, f.contradictions)


def _branch_guard(comp: PdcFormula, pset: PermSet, eps: float):
    pr = _cached_params(comp)
    pvars = set(pset.variables)
    p_max = Fraction(0)
    for c in comp.constraints:
        if any(v in pvars for v, _ in c):
            p = violation_prob(c, comp)
            if p > p_max:
                p_max = p
    easy = 2.0 * math.e * pr.Delta <= math.log2(math.e**4 * comp.n / eps)
    easy = easy or float(p_max) * pset.size * pr.Delta <= 0.25
    return easy, p_max, pr


def _factor_components(f: PdcFormula) -> list[PdcFormula]:
    from .pdc_model import factorize

    return factorize(f)


def sample_subroutine(
    f_component: PdcFormula,
    P: str | PermSet,
    eps: float,
    rng,
    force_regime: bool = False,
) -> Assignment:
    """Redraw one connected component around its chosen set P.

    Returns a valid assignment of the whole component; the fallback flag
    marks any output that leaned on an exhausted budget.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0,1)")
    pname = P.name if isinstance(P, PermSet) else P
    pi = f_component.set_index[pname]
    pset = f_component.perm_sets[pi]
    if len(f_component.perm_sets) > 1 and len(_factor_components(f_component)) != 1:
        raise ValueError("sample_subroutine requires a connected component")
    n = f_component.n
    easy, _p_max, _pr = _branch_guard(f_component, pset, eps)
    rest = _drop_set(f_component, pi)
    comps = _factor_components(rest) if rest.perm_sets else []

    if easy:
        loops = branch_a_loop_count(n, eps)
        inner = branch_a_rejection_budget(n, eps, loops)
        for _ in range(loops):
            values: dict[str, int] = {}
            for comp in comps:
                a = rejection_sampling(comp, inner, rng)
                values.update(a.values)
            perm = rng.permutation(pset.size)
            for v, j in zip(pset.variables, perm):
                values[v] = pset.domain[int(j)]
            if satisfies(f_component, values):
                return Assignment(values=values, fallback=False)
        out = Assignment(values=uniform_valid(f_component, rng), fallback=True)
        assert is_valid(f_component, out.values)
        return out

    # correlated-factorization branch
    first_budget = branch_b_first_budget(n, eps)
    sig: dict[str, int] = {}
    flagged = False
    for comp in comps:
        a = rejection_sampling(comp, first_budget, rng)
        flagged = flagged or a.fallback
        sig.update(a.values)
    if flagged:
        # the pilot draw could not satisfy its components; the residual
        # geometry below would be meaningless
        return Assignment(values=uniform_valid(f_component, rng), fallback=True)
    res0, _wide0 = residual_prp(f_component, pname, sig)
    x = max(res0.rho_sigma - pset.size / 6.0, 0.0)
    if x >= pset.size**2:
        # residual denser than the estimator's domain; off regime entirely
        return Assignment(values=uniform_valid(f_component, rng), fallback=True)
    n_ref = g_estimate(x, pset.size)
    loops = branch_b_loop_count(pset.size, eps, _pr.Delta)
    redraw_budget = branch_b_redraw_budget(n, eps, loops)
    for _ in range(loops):
        sig = {}
        bad = False
        for comp in comps:
            a = rejection_sampling(comp, redraw_budget, rng)
            if a.fallback:
                bad = True
                break
            sig.update(a.values)
        if bad:
            continue
        res, wide = residual_prp(f_component, pname, sig)
        if not (x <= res.rho_sigma <= x + pset.size / 2.0):
            continue
        tau_vals, n_hat, tau_flag = _draw_residual(
            res, pset, eps, loops, rng, force_regime, redraw_budget
        )
        if tau_vals is None:
            continue
        if any(all(tau_vals[v] == val for v, val in c) for c in wide):
            continue
        if rng.random() <= n_hat / n_ref:
            values = dict(sig)
            values.update(tau_vals)
            assert satisfies(f_component, values)
            return Assignment(values=values, fallback=tau_flag)
    out = Assignment(values=uniform_valid(f_component, rng), fallback=True)
    assert is_valid(f_component, out.values)
    return out


def _draw_residual(
    res: ResidualPrp,
    pset: PermSet,
    eps: float,
    loops: int,
    rng,
    force_regime: bool,
    budget: int,
):
    """One (tau, count estimate) pair for the width-1 residual instance.

    Returns (values, n_hat, flag) or (None, 0, False) when this
    iteration cannot produce a draw.
    """
    try:
        inst = res.instance()
    except Infeasible:
        return None, 0.0, False
    rep = density_report(inst)
    if rep.very_dense:
        tau = sample_approx(inst, eps / (6.0 * loops), rng)
        est = count_approx(inst, eps / (12.0 * loops), eps / (6.0 * loops), rng)
        vals = {v: res.values[c] for v, c in zip(res.variables, tau.image)}
        return vals, est.value, tau.fallback
    if pset.size <= 10:
        sols = _enumerate_prp_cached(inst)
        if not sols:
            return None, 0.0, False
        pick = sols[int(rng.integers(len(sols)))]
        vals = {v: res.values[c] for v, c in zip(res.variables, pick)}
        return vals, float(len(sols)), False
    if force_regime:
        # budgeted rejection: the first hit is uniform over the residual
        # solutions, and the hit frequency crudely estimates their count
        allowed_sets = [frozenset(row) for row in res.allowed]
        hits = 0
        first = None
        for _ in range(budget):
            perm = rng.permutation(pset.size)
            vals_list = [res.values[int(j)] for j in perm]
            if all(val in allowed_sets[i] for i, val in enumerate(vals_list)):
                hits += 1
                if first is None:
                    first = vals_list
        if first is None:
            return None, 0.0, False
        n_hat = math.exp(math.lgamma(pset.size + 1)) * hits / budget
        vals = {v: val for v, val in zip(res.variables, first)}
        return vals, n_hat, True
    raise PrpDensityViolation(
        f"residual instance on set {res.set_name!r} is not very dense "
        f"(|P| = {pset.size}); rerun with force_regime to sample it anyway"
    )


# --- Algorithm 1 ------------------------------------------------------------


def _step_decomposition(
    f: PdcFormula, d: Decomposition, domains: list, p_idx: int
) -> Decomposition:
    """Current decomposition with set p_idx merged back to one open block."""
    blocks = []
    doms = []
    for i, s in enumerate(f.perm_sets):
        if i == p_idx:
            blocks.append((tuple(s.variables),))
            doms.append((tuple(s.domain),))
        else:
            blocks.append(d.blocks[i])
            doms.append(tuple(domains[i]))
    merged = Decomposition(
        set_names=d.set_names,
        set_domains=d.set_domains,
        blocks=tuple(blocks),
    )
    return merged.with_domains(doms)


def _regime_gate(f: PdcFormula, cfg: SamplerConfig) -> RegimeReport:
    consts = dict(DEFAULT_CONSTANTS)
    if cfg.constants:
        consts.update(cfg.constants)
    report = regime_check(f, consts)
    variant = consts.get("variant")
    if variant == "uniform":
        ok = report.uniform_ok
    elif variant == "general":
        ok = report.general_ok
    else:
        ok = report.uniform_ok or report.general_ok
    if not ok and not cfg.force_regime:
        raise RegimeViolation(
            "formula fails the regime inequalities "
            f"(uniform_ok={report.uniform_ok}, general_ok={report.general_ok}); "
            "pass force_regime to run anyway"
        )
    return report


def _mcmc_run(f: PdcFormula, cfg: SamplerConfig, d: Decomposition, rng) -> Assignment:
    n = f.n
    steps = step_count(n, cfg.eps)
    eps_step = cfg.eps / (3.0 * (steps + 1))
    delta = max(_cached_params(f).Delta, 1)
    cond_cap = delta * math.log2(n / cfg.eps)
    nsets = len(f.perm_sets)

    sigma0 = uniform_valid(f, rng)
    state = project(f, d, sigma0)
    domains: list = [list(per_set) for per_set in state.domains]
    flagged = False

    for _ in range(steps):
        p_idx = int(rng.integers(nsets))
        merged = _step_decomposition(f, d, domains, p_idx)
        phi = induced_formula(f, merged)
        comps = _factor_components(phi)
        pblock = f"{f.perm_sets[p_idx].name}#0"
        comp_p = next(c for c in comps if pblock in c.set_index)
        if not cfg.force_regime:
            for comp in comps:
                if comp is comp_p:
                    continue
                if len(comp.constraints) > cond_cap:
                    raise RegimeViolation(
                        f"a side component holds {len(comp.constraints)} "
                        f"constraints, above the per-step cap {cond_cap:.2f}"
                    )
        a = sample_subroutine(
            comp_p, pblock, eps_step, rng, force_regime=cfg.force_regime
        )
        assert is_valid(comp_p, a.values)
        flagged = flagged or a.fallback
        domains[p_idx] = [
            tuple(sorted(a.values[v] for v in blk)) for blk in d.blocks[p_idx]
        ]

    final = d.with_domains([tuple(per_set) for per_set in domains])
    phi = induced_formula(f, final)
    budget = final_rejection_budget(n, cfg.eps, steps)
    values: dict[str, int] = {}
    for comp in _factor_components(phi):
        a = rejection_sampling(comp, budget, rng)
        flagged = flagged or a.fallback
        values.update(a.values)
    assert is_valid(f, values)
    return Assignment(values=values, fallback=flagged)


def mcmc_sample(f: PdcFormula, cfg: SamplerConfig) -> Assignment:
    """One full chain run: mixing steps plus the final rejection pass."""
    if f.contradictions:
        raise ValueError("formula is contradictory")
    _regime_gate(f, cfg)
    d = build_decomposition(f, cfg.eta, cfg.L)
    rng = np.random.default_rng(cfg.seed)
    return _mcmc_run(f, cfg, d, rng)


def mcmc_sample_many(f: PdcFormula, cfg: SamplerConfig, runs: int) -> list[Assignment]:
    """Independent chain replicas, vectorized when the formula allows it.

    The batch driver implements the same per-chain law as mcmc_sample
    with draws shared across replicas; when any step needs machinery the
    vector path does not cover, everything reruns on the scalar path.
    """
    if runs <= 0:
        raise ValueError("runs must be positive")
    if f.contradictions:
        raise ValueError("formula is contradictory")
    _regime_gate(f, cfg)
    d = build_decomposition(f, cfg.eta, cfg.L)
    rng = np.random.default_rng(cfg.seed)
    if cfg.use_engine:
        try:
            return _VectorEngine(f, cfg, d, rng, runs).run()
        except _EngineIneligible:
            rng = np.random.default_rng(cfg.seed)
    return [_mcmc_run(f, cfg, d, rng) for _ in range(runs)]


# --- idealized kernel -------------------------------------------------------


def glauber_step_ideal(
    f: PdcFormula, d: Decomposition, state: CompressedState, P: str | int, rng
) -> CompressedState:
    """Exact redraw of one set's block domains from the projected measure.

    Reference kernel for validating the chain: enumerates the solution
    set, conditions on every other set's block domains, and draws the
    chosen set's block domains with their exact conditional weights.
    """
    p_idx = P if isinstance(P, int) else list(d.set_names).index(P)
    sols = enumerate_solutions(f)
    if sols.count == 0:
        raise ValueError("formula has no satisfying assignments")
    vi = f.var_index
    block_vars = [
        [tuple(vi[v] for v in blk) for blk in d.blocks[i]]
        for i in range(len(d.set_names))
    ]
    others = {
        i: tuple(state.domains[i]) for i in range(len(d.set_names)) if i != p_idx
    }
    weights: dict[tuple, int] = {}
    for item in sols.items:
        match = True
        for i, doms in others.items():
            got = tuple(
                tuple(sorted(item[j] for j in blk)) for blk in block_vars[i]
            )
            if got != doms:
                match = False
                break
        if not match:
            continue
        key = tuple(tuple(sorted(item[j] for j in blk)) for blk in block_vars[p_idx])
        weights[key] = weights.get(key, 0) + 1
    if not weights:
        raise ValueError("state has zero probability under the projected measure")
    keys = sorted(weights)
    total = sum(weights[k] for k in keys)
    u = rng.random() * total
    acc = 0
    chosen = keys[-1]
    for k in keys:
        acc += weights[k]
        if u < acc:
            chosen = k
            break
    new_domains = [
        chosen if i == p_idx else tuple(state.domains[i])
        for i in range(len(d.set_names))
    ]
    return CompressedState(
        decomposition=d.with_domains([tuple(per) for per in new_domains])
    )


# --- regime inequalities ----------------------------------------------------


def regime_check(f: PdcFormula, constants: Mapping[str, object] | None = None) -> RegimeReport:
    """Evaluate the two admission inequalities with caller-set constants.

    Advisory only: the inequalities involve constants the analysis never
    pins down, so callers choose them (defaults c=1, zeta=1, q_min=2)
    and may force execution regardless.
    """
    consts = dict(DEFAULT_CONSTANTS)
    if constants:
        consts.update(constants)
    c = float(consts["c"])
    zeta = float(consts["zeta"])
    q_min = int(consts["q_min"])
    pr = _cached_params(f)
    details: dict = {
        "k": pr.k,
        "d": pr.d,
        "Delta": pr.Delta,
        "q": pr.q,
        "p": pr.p_float,
        "c": c,
        "zeta": zeta,
        "q_min": q_min,
    }
    if pr.k == 0:
        details["note"] = "no constraints; both regimes hold vacuously"
        return RegimeReport(uniform_ok=True, general_ok=True, details=details)
    delta = max(pr.Delta, 1)
    k, q = pr.k, pr.q
    log_lhs_u = k * math.log(q)
    log_rhs_u = math.log(c * zeta) + 24.0 * math.log(k) + 32.0 * math.log(delta)
    uniform_ok = k >= 24 and q >= q_min and log_lhs_u >= log_rhs_u
    details["uniform"] = {
        "k_ge_24": k >= 24,
        "q_ge_q_min": q >= q_min,
        "log_q_pow_k": log_lhs_u,
        "log_c_zeta_k24_Delta32": log_rhs_u,
    }
    if pr.p == 0:
        general_ok = True
        details["general"] = {"log_lhs": float("-inf"), "ok": True}
    else:
        # p is an exact rational with potentially huge terms; math.log
        # handles big ints directly
        log_p = math.log(pr.p.numerator) - math.log(pr.p.denominator)
        log_lhs_g = math.log(c) + log_p + 518.0 * math.log(k) + 786.0 * math.log(delta)
        general_ok = q >= q_min and log_lhs_g <= 0.0
        details["general"] = {"log_c_p_k518_Delta786": log_lhs_g}
    log_lhs_c = (k - 32.0) * math.log(q)
    log_rhs_c = math.log(c) + 56.0 * math.log(k) + 32.0 * math.log(max(pr.d, 1))
    details["large_domain_corollary"] = {
        "log_q_pow_k_minus_32": log_lhs_c,
        "log_c_k56_d32": log_rhs_c,
        "ok": log_lhs_c >= log_rhs_c,
    }
    if not (uniform_ok or general_ok):
        warnings.warn(
            "formula sits outside both admission regimes at the chosen "
            "constants; the correctness guarantees are not in force",
            stacklevel=2,
        )
    return RegimeReport(uniform_ok=uniform_ok, general_ok=general_ok, details=details)


# --- vectorized multi-chain driver ------------------------------------------


class _EngineIneligible(Exception):
    pass


@dataclass
class _BlockRef:
    set_idx: int
    block_idx: int
    var_pos: np.ndarray  # global variable positions, block order
    merged: bool  # True: draw from the full set domain


@dataclass
class _StepPlan:
    blocks: list
    cons: list  # [(var_pos array, values array)] to reject on
    loops: int


class _VectorEngine:
    """Batch chain driver; see mcmc_sample_many.

    State per replica is the per-block sorted domain rows.  Step plans
    are keyed by (chosen set, live-constraint mask) and built once via
    the same public induction/factorization/budget helpers the scalar
    path uses, from a representative replica's concrete domains.
    """

    def __init__(self, f: PdcFormula, cfg: SamplerConfig, d: Decomposition, rng, runs: int):
        self.f = f
        self.cfg = cfg
        self.d = d
        self.rng = rng
        self.runs = runs
        self.nsets = len(f.perm_sets)
        self.n = f.n
        self.m = len(f.constraints)
        if self.m > 30:
            raise _EngineIneligible("too many constraints for mask keys")
        if any(s.size > 120 for s in f.perm_sets):
            raise _EngineIneligible("set too large for int8 values")
        vi = f.var_index
        self.block_vars = [
            [np.array([vi[v] for v in blk], dtype=np.int64) for blk in d.blocks[i]]
            for i in range(self.nsets)
        ]
        self.set_domain = [
            np.array(s.domain, dtype=np.int8) for s in f.perm_sets
        ]
        # literals as (set_idx, var_pos, block_idx, value) per constraint
        self.lits: list[list[tuple[int, int, int, int]]] = []
        block_of = {}
        for i in range(self.nsets):
            for j, blk in enumerate(d.blocks[i]):
                for v in blk:
                    block_of[v] = (i, j)
        for c in f.constraints:
            row = []
            for v, val in c:
                si, bj = block_of[v]
                row.append((si, vi[v], bj, val))
            self.lits.append(row)
        self.steps = step_count(self.n, cfg.eps)
        self.eps_step = cfg.eps / (3.0 * (self.steps + 1))
        delta = max(_cached_params(f).Delta, 1)
        self.cond_cap = delta * math.log2(self.n / cfg.eps)
        self.step_plans: dict[tuple[int, int], _StepPlan] = {}
        self.final_plans: dict[int, list[_StepPlan]] = {}
        # dom[i][j]: (runs, block size) sorted domain rows
        self.dom: list[list[np.ndarray]] = []
        self.values = np.zeros((runs, self.n), dtype=np.int8)
        self.flags = np.zeros(runs, dtype=bool)

    # -- plumbing

    def _init_state(self) -> None:
        for i, s in enumerate(self.f.perm_sets):
            perm = np.argsort(self.rng.random((self.runs, s.size)), axis=1)
            vals = self.set_domain[i][perm]
            rows = []
            start = 0
            for blk in self.d.blocks[i]:
                b = len(blk)
                rows.append(np.sort(vals[:, start : start + b], axis=1))
                start += b
            self.dom.append(rows)

    def _domains_of(self, ch: int) -> list:
        return [
            tuple(tuple(int(x) for x in rows[ch]) for rows in self.dom[i])
            for i in range(self.nsets)
        ]

    def _live_mask(self, idx: np.ndarray, p_idx: int | None) -> np.ndarray:
        masks = np.zeros(len(idx), dtype=np.int64)
        for ci, row in enumerate(self.lits):
            live = np.ones(len(idx), dtype=bool)
            for si, _vp, bj, val in row:
                if p_idx is not None and si == p_idx:
                    continue
                live &= (self.dom[si][bj][idx] == val).any(axis=1)
            masks |= live.astype(np.int64) << ci
        return masks

    def _plan_key_formula(self, ch: int, p_idx: int | None) -> PdcFormula:
        domains = self._domains_of(ch)
        if p_idx is None:
            dd = self.d.with_domains(domains)
        else:
            dd = _step_decomposition(self.f, self.d, domains, p_idx)
        return induced_formula(self.f, dd)

    def _constraint_ids(self, phi: PdcFormula) -> dict:
        pos = {c: i for i, c in enumerate(self.f.constraints)}
        return {c: pos[c] for c in phi.constraints}

    def _pseudo_blocks(self, comp: PdcFormula, p_idx: int | None) -> list:
        out = []
        for s in comp.perm_sets:
            name, _, bj = s.name.rpartition("#")
            si = self.f.set_index[name]
            merged = p_idx is not None and si == p_idx
            vp = (
                np.array([self.f.var_index[v] for v in s.variables], dtype=np.int64)
                if merged
                else self.block_vars[si][int(bj)]
            )
            out.append(_BlockRef(set_idx=si, block_idx=int(bj), var_pos=vp, merged=merged))
        return out

    def _cons_arrays(self, comp: PdcFormula) -> list:
        out = []
        vi = self.f.var_index
        for c in comp.constraints:
            vp = np.array([vi[v] for v, _ in c], dtype=np.int64)
            vals = np.array([val for _, val in c], dtype=np.int8)
            out.append((vp, vals))
        return out

    def _step_plan(self, p_idx: int, mask: int, ch: int) -> _StepPlan:
        key = (p_idx, mask)
        plan = self.step_plans.get(key)
        if plan is not None:
            return plan
        phi = self._plan_key_formula(ch, p_idx)
        ids = self._constraint_ids(phi)
        got = 0
        for c, i in ids.items():
            got |= 1 << i
        assert got == mask, f"mask mismatch: plan {got:b} vs state {mask:b}"
        comps = _factor_components(phi)
        pblock = f"{self.f.perm_sets[p_idx].name}#0"
        comp_p = next(c for c in comps if pblock in c.set_index)
        for comp in comps:
            if comp is not comp_p and comp.constraints:
                if len(comp.constraints) > self.cond_cap and not self.cfg.force_regime:
                    raise RegimeViolation(
                        f"a side component holds {len(comp.constraints)} "
                        f"constraints, above the per-step cap {self.cond_cap:.2f}"
                    )
                raise _EngineIneligible("side component carries constraints")
        pset = phi.perm_sets[phi.set_index[pblock]]
        easy, _pm, _pr = _branch_guard(comp_p, pset, self.eps_step)
        if not easy:
            raise _EngineIneligible("step needs the correlated branch")
        rest = _drop_set(comp_p, comp_p.set_index[pblock])
        if any(c.constraints for c in (_factor_components(rest) if rest.perm_sets else [])):
            raise _EngineIneligible("inner rejection would carry constraints")
        plan = _StepPlan(
            blocks=self._pseudo_blocks(comp_p, p_idx),
            cons=self._cons_arrays(comp_p),
            loops=branch_a_loop_count(comp_p.n, self.eps_step),
        )
        self.step_plans[key] = plan
        return plan

    def _final_plan(self, mask: int, ch: int) -> list:
        plans = self.final_plans.get(mask)
        if plans is not None:
            return plans
        phi = self._plan_key_formula(ch, None)
        budget = final_rejection_budget(self.n, self.cfg.eps, self.steps)
        plans = [
            _StepPlan(
                blocks=self._pseudo_blocks(comp, None),
                cons=self._cons_arrays(comp),
                loops=budget,
            )
            for comp in _factor_components(phi)
        ]
        self.final_plans[mask] = plans
        return plans

    # -- execution

    def _draw_blocks(self, plan_blocks: list, idx: np.ndarray) -> None:
        for ref in plan_blocks:
            if ref.merged:
                dom = self.set_domain[ref.set_idx]
                perm = np.argsort(self.rng.random((len(idx), len(dom))), axis=1)
                vals = dom[perm]
            else:
                rows = self.dom[ref.set_idx][ref.block_idx][idx]
                perm = np.argsort(self.rng.random(rows.shape), axis=1)
                vals = np.take_along_axis(rows, perm, axis=1)
            self.values[idx[:, None], ref.var_pos[None, :]] = vals

    def _violated(self, cons: list, idx: np.ndarray) -> np.ndarray:
        out = np.zeros(len(idx), dtype=bool)
        for vp, vals in cons:
            out |= (self.values[idx[:, None], vp[None, :]] == vals[None, :]).all(axis=1)
        return out

    def _reject_loop(self, plan: _StepPlan, idx: np.ndarray) -> None:
        active = idx
        tries = 0
        while len(active):
            if tries >= plan.loops:
                # budget exhausted: one fresh unconditional draw, flagged
                self._draw_blocks(plan.blocks, active)
                self.flags[active] = True
                return
            self._draw_blocks(plan.blocks, active)
            tries += 1
            if not plan.cons:
                return
            active = active[self._violated(plan.cons, active)]

    def run(self) -> list[Assignment]:
        self._init_state()
        for _ in range(self.steps):
            picks = self.rng.integers(self.nsets, size=self.runs)
            for p_idx in range(self.nsets):
                idx = np.flatnonzero(picks == p_idx)
                if not len(idx):
                    continue
                masks = self._live_mask(idx, p_idx)
                for mask in np.unique(masks):
                    sub = idx[masks == mask]
                    plan = self._step_plan(p_idx, int(mask), int(sub[0]))
                    self._reject_loop(plan, sub)
                    # retain only the chosen set's new block domains
                    for bj, bv in enumerate(self.block_vars[p_idx]):
                        self.dom[p_idx][bj][sub] = np.sort(
                            self.values[sub[:, None], bv[None, :]], axis=1
                        )
        all_idx = np.arange(self.runs)
        masks = self._live_mask(all_idx, None)
        for mask in np.unique(masks):
            sub = all_idx[masks == mask]
            for plan in self._final_plan(int(mask), int(sub[0])):
                self._reject_loop(plan, sub)
        self._assert_valid()
        names = self.f.variables
        out = []
        for ch in range(self.runs):
            vals = {v: int(x) for v, x in zip(names, self.values[ch])}
            out.append(Assignment(values=vals, fallback=bool(self.flags[ch])))
        return out

    def _assert_valid(self) -> None:
        for i, s in enumerate(self.f.perm_sets):
            vp = np.array([self.f.var_index[v] for v in s.variables], dtype=np.int64)
            got = np.sort(self.values[:, vp], axis=1)
            want = np.sort(self.set_domain[i])
            assert (got == want[None, :]).all(), f"invalid permutation on {s.name!r}"
