"""Command-line surface: sampling, counting, generation, verification,
and benchmarking with delimited + figure output.

Formats are normative and bit-exact:

  matrix text   first line n, then n lines of n characters from {0,1};
                row i column j is '1' iff column j is allowed for row i
  PRP JSON      {"n": int, "allowed": [[int, ...], ...]}, 0-indexed
  PDC JSON      {"permutations": [{"name": str, "variables": [str],
                "domain": [int]}, ...], "constraints":
                [[{"var": str, "val": int}, ...], ...]}

Inputs whose first non-space character is '{' parse as JSON, everything
else as matrix text.  All emission is JSON Lines with sorted keys; the
timing field stays null unless --timing is passed, so repeated runs
with one seed are byte-identical.

Exit codes: 0 ok, 1 verify-suite failure, 2 parse or usage error,
3 density/regime violation, 4 internal assertion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .compression import build_decomposition
from .oracle import (
    EmpiricalDist,
    enumerate_prp,
    enumerate_solutions,
    exact_permanent,
    marginal_table,
    tv_distance,
)
from .pdc_model import (
    Assignment,
    PdcFormula,
    PermSet,
    encode_3partite_matching,
    encode_teacher_assignment,
    params,
    violation_prob,
)
from .pdc_sampler import (
    PrpDensityViolation,
    RegimeViolation,
    SamplerConfig,
    mcmc_sample_many,
    regime_check,
)
from .prp_core import (
    DensityViolation,
    Infeasible,
    PrpInstance,
    density_report,
    density_threshold,
    permanent_bracket,
)
from .prp_sampler import count_approx, sample_approx, sample_exact

__all__ = [
    "main",
    "run",
    "parse_matrix",
    "serialize_matrix",
    "parse_prp_json",
    "serialize_prp_json",
    "parse_pdc_json",
    "serialize_pdc_json",
    "parse_prp_text",
    "gen_prp",
    "gen_pdc_uniform",
]

SEED_ENV = "PERMLLL_SEED"


# --- formats ----------------------------------------------------------------


def parse_matrix(text: str) -> PrpInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix input")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValueError(f"first line must be n, got {lines[0]!r}") from exc
    if len(lines) != n + 1:
        raise ValueError(f"expected {n} matrix rows, got {len(lines) - 1}")
    allowed = []
    for i, ln in enumerate(lines[1:]):
        if len(ln) != n or any(ch not in "01" for ch in ln):
            raise ValueError(f"row {i} must be {n} characters of 0/1, got {ln!r}")
        allowed.append([j for j, ch in enumerate(ln) if ch == "1"])
    return PrpInstance.from_lists(allowed)


def serialize_matrix(inst: PrpInstance) -> str:
    rows = [
        "".join("1" if j in inst.allowed[i] else "0" for j in range(inst.n))
        for i in range(inst.n)
    ]
    return "\n".join([str(inst.n)] + rows) + "\n"


def parse_prp_json(text: str) -> PrpInstance:
    obj = json.loads(text)
    if not isinstance(obj, dict) or "n" not in obj or "allowed" not in obj:
        raise ValueError('PRP JSON needs keys "n" and "allowed"')
    n = obj["n"]
    allowed = obj["allowed"]
    if len(allowed) != n:
        raise ValueError(f'"allowed" must list {n} rows')
    return PrpInstance.from_lists([list(map(int, row)) for row in allowed])


def serialize_prp_json(inst: PrpInstance) -> str:
    return json.dumps(
        {"allowed": [sorted(r) for r in inst.allowed], "n": inst.n},
        sort_keys=True,
        separators=(",", ":"),
    )


def parse_prp_text(text: str) -> PrpInstance:
    """Sniff matrix text vs PRP JSON by the first non-space character."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return parse_prp_json(text)
    return parse_matrix(text)


def parse_pdc_json(text: str) -> PdcFormula:
    obj = json.loads(text)
    if not isinstance(obj, dict) or "permutations" not in obj:
        raise ValueError('PDC JSON needs keys "permutations" and "constraints"')
    sets = [
        PermSet(p["name"], tuple(p["variables"]), tuple(int(v) for v in p["domain"]))
        for p in obj["permutations"]
    ]
    cons = [
        tuple((lit["var"], int(lit["val"])) for lit in c)
        for c in obj.get("constraints", [])
    ]
    return PdcFormula.from_parts(sets, cons, warn=False)


def serialize_pdc_json(f: PdcFormula) -> str:
    return json.dumps(
        {
            "constraints": [
                [{"val": val, "var": v} for v, val in c] for c in f.constraints
            ],
            "permutations": [
                {"domain": list(s.domain), "name": s.name, "variables": list(s.variables)}
                for s in f.perm_sets
            ],
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _digest(canonical: str) -> str:
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


class _Emitter:
    def __init__(self, out_path: str | None):
        self._fh = open(out_path, "w", encoding="utf-8") if out_path else sys.stdout
        self._own = out_path is not None

    def line(self, obj) -> None:
        self._fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")

    def close(self) -> None:
        if self._own:
            self._fh.close()


def _seed_of(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    return int(env) if env else None


def _report(args, command: str, digest: str, telemetry: dict, elapsed: float | None) -> dict:
    config = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in {"func", "input", "out"} and not k.startswith("_")
    }
    return {
        "report": {
            "command": command,
            "config": config,
            "instance_digest": digest,
            "seed": _seed_of(args),
            "telemetry": telemetry,
            "timing_seconds": elapsed,
            "version": __version__,
        }
    }


# --- generators --------------------------------------------------------------


def gen_prp(n: int, zeros: int, rng) -> PrpInstance:
    """Very dense instance with `zeros` forbidden cells.

    Zeros scatter along random permutation diagonals, one per round, so
    no row or column collects more than ceil(zeros/n) of them; the
    request is infeasible when that exceeds the per-line budget
    floor(sqrt(max(n-2,0)/20)).
    """
    if zeros < 0:
        raise ValueError("zeros must be nonnegative")
    cap = int(density_threshold(n))
    rounds = -(-zeros // n) if zeros else 0
    if rounds > cap:
        raise Infeasible(
            f"{zeros} zeros on n={n} needs {rounds} per line, budget is {cap}"
        )
    forbidden: set[tuple[int, int]] = set()
    for r in range(rounds):
        take = n if (r + 1) * n <= zeros else zeros - r * n
        while True:
            perm = rng.permutation(n)
            cells = [(i, int(perm[i])) for i in range(n)]
            if all(c not in forbidden for c in cells):
                break
        rows = rng.permutation(n)[:take]
        for i in rows:
            forbidden.add(cells[int(i)])
    allowed = [
        [j for j in range(n) if (i, j) not in forbidden] for i in range(n)
    ]
    inst = PrpInstance.from_lists(allowed)
    assert density_report(inst).very_dense
    return inst


def gen_pdc_uniform(k: int, q: int, m: int, n_constraints: int, rng) -> PdcFormula:
    """(k,q)-uniform formula: m sets of size q, constraints of width k
    touching k distinct sets."""
    if k > m:
        raise ValueError(f"width k={k} needs at least k sets, got m={m}")
    sets = [
        PermSet(f"s{i}", tuple(f"s{i}v{j}" for j in range(q)), tuple(range(q)))
        for i in range(m)
    ]
    seen = set()
    cons = []
    guard = 0
    while len(cons) < n_constraints:
        guard += 1
        if guard > 1000 * (n_constraints + 1):
            raise ValueError("cannot place that many distinct constraints")
        picks = rng.choice(m, size=k, replace=False)
        lits = tuple(
            sorted(
                (f"s{int(si)}v{int(rng.integers(q))}", int(rng.integers(q)))
                for si in picks
            )
        )
        if lits in seen:
            continue
        seen.add(lits)
        cons.append(lits)
    return PdcFormula.from_parts(sets, cons, warn=False)


def gen_hypergraph(q: int, drop: int, rng) -> PdcFormula:
    """3-partite matching encoding; drop > 0 removes random triples."""
    edges = [(i, j, k) for i in range(q) for j in range(q) for k in range(q)]
    if drop:
        keep = rng.permutation(len(edges))[: len(edges) - drop]
        edges = [edges[int(i)] for i in sorted(keep)]
    return encode_3partite_matching(edges, q, warn=False)


def gen_teachers(q: int, subjects: int, classes: int, per_class: int, seniors: int, rng) -> PdcFormula:
    names = [f"sub{i}" for i in range(subjects)]
    table = {
        name: sorted(int(x) for x in rng.choice(q, size=seniors, replace=False))
        for name in names
    }
    rows = []
    for _ in range(classes):
        picks = rng.choice(subjects, size=per_class, replace=False)
        rows.append([names[int(i)] for i in picks])
    return encode_teacher_assignment(q, table, rows, warn=False)


# --- commands ----------------------------------------------------------------


def cmd_sample_prp(args) -> int:
    text = _read_input(args.input)
    inst = parse_prp_text(text)
    digest = _digest(serialize_prp_json(inst))
    rng = np.random.default_rng(_seed_of(args))
    emit = _Emitter(args.out)
    t0 = time.perf_counter()
    telemetry: dict = {"mode": "exact" if args.exact else "approx"}
    restarts = []
    fallbacks = 0
    try:
        rep = density_report(inst)
        if not rep.very_dense and args.allow_sparse:
            if inst.n > 10:
                raise DensityViolation(
                    f"--allow-sparse oracle fallback is capped at n=10, got {inst.n}"
                )
            sols = enumerate_prp(inst)
            if not sols:
                raise Infeasible("instance has no solutions")
            for _ in range(args.samples):
                img = sols[int(rng.integers(len(sols)))]
                emit.line({"fallback": False, "image": list(img)})
            telemetry["mode"] = "oracle"
        elif args.exact:
            for _ in range(args.samples):
                perm, stats = sample_exact(inst, rng, order=args.order)
                restarts.append(stats.restarts)
                emit.line({"fallback": False, "image": list(perm.image)})
            telemetry["mean_restarts"] = sum(restarts) / max(len(restarts), 1)
        else:
            for _ in range(args.samples):
                perm = sample_approx(inst, args.eps, rng, order=args.order)
                fallbacks += int(perm.fallback)
                emit.line({"fallback": perm.fallback, "image": list(perm.image)})
            telemetry["fallbacks"] = fallbacks
        elapsed = time.perf_counter() - t0 if args.timing else None
        emit.line(_report(args, "sample-prp", digest, telemetry, elapsed))
    finally:
        emit.close()
    return 0


def cmd_count_prp(args) -> int:
    text = _read_input(args.input)
    inst = parse_prp_text(text)
    digest = _digest(serialize_prp_json(inst))
    rng = np.random.default_rng(_seed_of(args))
    emit = _Emitter(args.out)
    t0 = time.perf_counter()
    try:
        est = count_approx(inst, args.eps, args.delta, rng)
        emit.line(
            {
                "count_estimate": {
                    "delta": est.delta,
                    "eps": est.eps,
                    "trials": est.trials,
                    "value": est.value,
                }
            }
        )
        elapsed = time.perf_counter() - t0 if args.timing else None
        emit.line(_report(args, "count-prp", digest, {"trials": est.trials}, elapsed))
    finally:
        emit.close()
    return 0


def _parse_constants(spec: str | None) -> dict:
    out: dict = {}
    if not spec:
        return out
    for part in spec.split(","):
        if not part:
            continue
        key, _, val = part.partition("=")
        key = key.strip()
        val = val.strip()
        if key == "variant":
            out[key] = val or None
        elif key in {"q_min", "qmin"}:
            out["q_min"] = int(val)
        elif key in {"c", "zeta"}:
            out[key] = float(val)
        else:
            raise ValueError(f"unknown regime constant {key!r}")
    return out


def cmd_sample_pdc(args) -> int:
    text = _read_input(args.input)
    f = parse_pdc_json(text)
    digest = _digest(serialize_pdc_json(f))
    constants = _parse_constants(args.constants)
    cfg = SamplerConfig(
        eps=args.eps,
        eta=args.eta,
        L=args.L,
        seed=_seed_of(args),
        force_regime=args.force_regime,
        constants=constants or None,
        use_engine=not args.no_engine,
    )
    emit = _Emitter(args.out)
    t0 = time.perf_counter()
    try:
        report = regime_check(f, constants or None)
        emit.line(
            {
                "regime": {
                    "general_ok": report.general_ok,
                    "uniform_ok": report.uniform_ok,
                }
            }
        )
        outs = mcmc_sample_many(f, cfg, args.samples)
        flagged = 0
        for a in outs:
            flagged += int(a.fallback)
            emit.line(
                {
                    "assignment": {k: a.values[k] for k in sorted(a.values)},
                    "fallback": a.fallback,
                }
            )
        elapsed = time.perf_counter() - t0 if args.timing else None
        emit.line(
            _report(args, "sample-pdc", digest, {"fallbacks": flagged}, elapsed)
        )
    finally:
        emit.close()
    return 0


def cmd_gen(args) -> int:
    rng = np.random.default_rng(_seed_of(args))
    emit_text: str
    if args.what == "prp":
        inst = gen_prp(args.n, args.zeros, rng)
        emit_text = (
            serialize_prp_json(inst) + "\n"
            if args.format == "json"
            else serialize_matrix(inst)
        )
    elif args.what == "pdc-uniform":
        f = gen_pdc_uniform(args.k, args.q, args.m, args.constraints, rng)
        emit_text = serialize_pdc_json(f) + "\n"
    elif args.what == "hypergraph":
        f = gen_hypergraph(args.q, 0 if args.complete else args.drop, rng)
        emit_text = serialize_pdc_json(f) + "\n"
    else:
        f = gen_teachers(
            args.q, args.subjects, args.classes, args.per_class, args.seniors, rng
        )
        emit_text = serialize_pdc_json(f) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(emit_text)
    else:
        sys.stdout.write(emit_text)
    return 0


# --- verify suites -----------------------------------------------------------


def _verify_bracket(args, rng, emit) -> bool:
    violations = 0
    for _ in range(args.instances):
        n = int(rng.integers(args.nmin, args.nmax + 1))
        inst = PrpInstance.full(n)
        br = permanent_bracket(inst)
        exact = exact_permanent(inst)
        if not (br.lower <= exact <= br.upper) or br.upper > 19.0 * br.lower:
            violations += 1
    emit.line(
        {
            "suite": "bracket",
            "instances": args.instances,
            "violations": violations,
            "pass": violations == 0,
        }
    )
    return violations == 0


def _verify_prp_tv(args, rng, emit) -> bool:
    inst = PrpInstance.full(args.n)
    sols = enumerate_prp(inst)
    counts: dict[tuple[int, ...], int] = {}
    for _ in range(args.draws):
        perm, _ = sample_exact(inst, rng)
        counts[perm.image] = counts.get(perm.image, 0) + 1
    from .oracle import SolutionSet

    tv = tv_distance(
        EmpiricalDist(counts=counts, total=args.draws),
        SolutionSet(items=sols, count=len(sols)),
    )
    ok = tv <= args.tol
    emit.line({"suite": "prp-tv", "draws": args.draws, "tv": tv, "tol": args.tol, "pass": ok})
    return ok


def _toy_pdc() -> PdcFormula:
    sets = [
        PermSet("A", ("a0", "a1", "a2", "a3"), (0, 1, 2, 3)),
        PermSet("B", ("b0", "b1", "b2", "b3"), (0, 1, 2, 3)),
    ]
    cons = [(("a0", 0), ("b0", 0)), (("a1", 1), ("b1", 1))]
    return PdcFormula.from_parts(sets, cons, warn=False)


def _verify_pdc_tv(args, rng, emit) -> bool:
    f = _toy_pdc()
    sols = enumerate_solutions(f)
    cfg = SamplerConfig(
        eps=args.eps, eta=0.5, L=4, seed=_seed_of(args), force_regime=True
    )
    outs = mcmc_sample_many(f, cfg, args.runs)
    counts: dict[tuple[int, ...], int] = {}
    for a in outs:
        key = f.key_of(a.values)
        counts[key] = counts.get(key, 0) + 1
    tv = tv_distance(EmpiricalDist(counts=counts, total=args.runs), sols)
    tol = args.eps + 3.0 * math.sqrt(sols.count / args.runs)
    ok = tv <= tol
    emit.line({"suite": "pdc-tv", "runs": args.runs, "tv": tv, "tol": tol, "pass": ok})
    return ok


def _verify_marginals(args, rng, emit) -> bool:
    checked = 0
    violations = 0
    tried = 0
    while checked < args.instances and tried < args.instances * 50:
        tried += 1
        k = 2
        q = int(rng.integers(4, 7))
        m = 2
        f = gen_pdc_uniform(k, q, m, int(rng.integers(1, 4)), rng)
        pr = params(f)
        if pr.Delta == 0 or 8.0 * math.e * pr.p_float * pr.Delta > 1.0:
            continue
        table = marginal_table(f)
        p_prime = {}
        for i, s in enumerate(f.perm_sets):
            touching = [
                violation_prob(c, f)
                for c in f.constraints
                if any(v in s.variables for v, _ in c)
            ]
            p_prime[i] = float(max(touching)) if touching else 0.0
        for (v, _c), prob in table.items():
            si = f.set_of_var[v]
            size = f.perm_sets[si].size
            slack = 4.0 * math.e * p_prime[si] * pr.Delta
            lo = 1.0 / size - slack
            hi = (1.0 / size) * (1.0 + slack)
            if not (lo - 1e-12 <= float(prob) <= hi + 1e-12):
                violations += 1
        checked += 1
    ok = violations == 0 and checked >= args.instances
    emit.line(
        {
            "suite": "marginals",
            "instances": checked,
            "violations": violations,
            "pass": ok,
        }
    )
    return ok


def cmd_verify(args) -> int:
    rng = np.random.default_rng(_seed_of(args))
    emit = _Emitter(args.out)
    try:
        if args.suite == "bracket":
            ok = _verify_bracket(args, rng, emit)
        elif args.suite == "prp-tv":
            ok = _verify_prp_tv(args, rng, emit)
        elif args.suite == "pdc-tv":
            ok = _verify_pdc_tv(args, rng, emit)
        else:
            ok = _verify_marginals(args, rng, emit)
    finally:
        emit.close()
    return 0 if ok else 1


# --- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rng = np.random.default_rng(_seed_of(args))
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    if args.suite == "prp":
        for n in sizes:
            inst = PrpInstance.full(n)
            t0 = time.perf_counter()
            restarts = 0
            for _ in range(args.samples):
                _, stats = sample_exact(inst, rng)
                restarts += stats.restarts
            dt = (time.perf_counter() - t0) / args.samples
            rows.append((n, dt, restarts / args.samples))
        header = "n,seconds_per_sample,mean_restarts"
        xlabel, ylabel = "n", "seconds per sample"
    else:
        for q in sizes:
            f = gen_pdc_uniform(2, q, 2, 2, rng)
            cfg = SamplerConfig(eps=args.eps, eta=0.5, L=max(2, q), seed=int(rng.integers(2**31)), force_regime=True)
            t0 = time.perf_counter()
            outs = mcmc_sample_many(f, cfg, args.samples)
            dt = (time.perf_counter() - t0) / args.samples
            rows.append((q, dt, sum(a.fallback for a in outs) / args.samples))
        header = "q,seconds_per_run,fallback_rate"
        xlabel, ylabel = "q", "seconds per run"
    with open(args.csv, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
    xs = [r[0] for r in rows]
    ys = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(xs, ys, "o-")
    if len(xs) >= 2 and all(y > 0 for y in ys):
        slope = np.polyfit(np.log(xs), np.log(ys), 1)[0]
        ax.set_title(f"{args.suite} scaling, log-log slope {slope:.2f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(args.fig, dpi=120)
    plt.close(fig)
    sys.stdout.write(
        json.dumps({"csv": args.csv, "fig": args.fig, "rows": len(rows)}, sort_keys=True)
        + "\n"
    )
    return 0


# --- wiring ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="permlll",
        description="samplers and counters for restricted permutations",
    )
    top.add_argument("--version", action="version", version=f"permlll {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV})")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--timing", action="store_true", help="fill the timing field")

    p = sub.add_parser("sample-prp", help="draw restricted permutations")
    p.add_argument("--input", required=True, help="matrix or PRP JSON file, '-' for stdin")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.01, help="TV budget for approx mode")
    p.add_argument("--exact", action="store_true", help="restart until success")
    p.add_argument("--allow-sparse", action="store_true", help="oracle fallback, n <= 10")
    p.add_argument("--order", choices=["input", "ascending"], default="input")
    common(p)
    p.set_defaults(func=cmd_sample_prp)

    p = sub.add_parser("count-prp", help="estimate the solution count")
    p.add_argument("--input", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    common(p)
    p.set_defaults(func=cmd_count_prp)

    p = sub.add_parser("sample-pdc", help="sample satisfying assignments")
    p.add_argument("--input", required=True, help="PDC JSON file, '-' for stdin")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--L", type=int, default=64)
    p.add_argument("--force-regime", action="store_true")
    p.add_argument("--constants", default=None, help="c=..,zeta=..,q_min=..,variant=..")
    p.add_argument("--no-engine", action="store_true", help="disable the batch driver")
    common(p)
    p.set_defaults(func=cmd_sample_pdc)

    p = sub.add_parser("gen", help="generate instances")
    gsub = p.add_subparsers(dest="what", required=True)
    g = gsub.add_parser("prp")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--zeros", type=int, default=0)
    g.add_argument("--format", choices=["matrix", "json"], default="matrix")
    common(g)
    g.set_defaults(func=cmd_gen)
    g = gsub.add_parser("pdc-uniform")
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--q", type=int, default=4)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--constraints", type=int, default=3)
    common(g)
    g.set_defaults(func=cmd_gen)
    g = gsub.add_parser("hypergraph")
    g.add_argument("--q", type=int, default=2)
    g.add_argument("--complete", action="store_true")
    g.add_argument("--drop", type=int, default=1)
    common(g)
    g.set_defaults(func=cmd_gen)
    g = gsub.add_parser("teachers")
    g.add_argument("--q", type=int, default=6)
    g.add_argument("--subjects", type=int, default=3)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--per-class", type=int, default=2)
    g.add_argument("--seniors", type=int, default=4)
    common(g)
    g.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="oracle-backed cross-check suites")
    p.add_argument("suite", choices=["bracket", "prp-tv", "pdc-tv", "marginals"])
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--nmin", type=int, default=2)
    p.add_argument("--nmax", type=int, default=12)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--draws", type=int, default=200000)
    p.add_argument("--runs", type=int, default=20000)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=0.02)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="timing suites with CSV + figure output")
    p.add_argument("--suite", choices=["prp", "pdc"], default="prp")
    p.add_argument("--sizes", default="100,200,400,800,1600")
    p.add_argument("--samples", type=int, default=3)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--csv", default="bench.csv")
    p.add_argument("--fig", default="bench.png")
    common(p)
    p.set_defaults(func=cmd_bench)
    return top


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DensityViolation, RegimeViolation, PrpDensityViolation, Infeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (json.JSONDecodeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return 4


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
