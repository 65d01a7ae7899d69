"""Grammar prior over sampler programs.

Programs are grown top-down by type-directed production rules:

    1 var     look up an in-scope variable of the requested type
    2 const   a constant (finite set or a continuous draw)
    3 prim    apply a primitive, or a let-bound compound procedure
    4 letfn   bind a fresh compound procedure, then continue
    5 let     bind a fresh variable, then continue
    6 if      conditional on a generated bool
    7 recur   self-call of the innermost enclosing procedure

Every stochastic choice goes through ``_logp`` so that ``generate`` and the
replay in ``log_prior`` add up the same terms.  Operands, bound values,
procedure bodies and conditionals sit one level deeper than their parent; the
body of a ``let``/``letfn`` continues at its parent's depth.  At depth ``D``
only rules 1 and 2 remain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .expr import (
    BOOL,
    INT,
    PRIMITIVES,
    REAL,
    Call,
    Const,
    If,
    Lambda,
    Let,
    LetFn,
    Param,
    Prim,
    Recur,
    Scope,
    TypeTag,
    Var,
    compatible,
    numeric,
)

RULES = ("var", "const", "prim", "letfn", "let", "if", "recur")
VAR, CONST, PRIM, LETFN, LET, IF, RECUR = range(7)
RULE_TYPES = (REAL, BOOL)

PROCS = {
    REAL: tuple(op for op, (_, r) in PRIMITIVES.items() if r is REAL) + ("call",),
    BOOL: tuple(op for op, (_, r) in PRIMITIVES.items() if r is BOOL) + ("call",),
}
CONST_OPTIONS = (0.0, 1.0, -1.0, 2.0, math.pi, "normal", "uniform")
N_FINITE = 5
UNIFORM_LO, UNIFORM_HI = -10.0, 10.0
BOOL_OPTIONS = (True, False)
ARITIES = (1, 2, 3)
ANY_TYPES = (REAL, BOOL)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class RuleWeights:
    """Categorical distributions that parametrize the grammar prior."""

    rules: dict  # TypeTag -> array over RULES
    procs: dict  # TypeTag -> array over PROCS[t]
    real_consts: np.ndarray  # over CONST_OPTIONS
    bool_consts: np.ndarray  # over BOOL_OPTIONS
    arity: np.ndarray  # over ARITIES
    any_type: np.ndarray  # over ANY_TYPES
    max_depth: int = 10

    def __post_init__(self):
        self.rules = {t: np.asarray(self.rules[t], float) for t in RULE_TYPES}
        self.procs = {t: np.asarray(self.procs[t], float) for t in RULE_TYPES}
        for name in ("real_consts", "bool_consts", "arity", "any_type"):
            setattr(self, name, np.asarray(getattr(self, name), float))
        self.validate()

    def categoricals(self) -> dict[str, np.ndarray]:
        out = {f"rules.{t.value}": self.rules[t] for t in RULE_TYPES}
        out.update({f"procs.{t.value}": self.procs[t] for t in RULE_TYPES})
        out.update(real_consts=self.real_consts, bool_consts=self.bool_consts, arity=self.arity, any_type=self.any_type)
        return out

    def validate(self) -> None:
        sizes = {"real_consts": len(CONST_OPTIONS), "bool_consts": 2, "arity": len(ARITIES), "any_type": len(ANY_TYPES)}
        sizes.update({f"rules.{t.value}": len(RULES) for t in RULE_TYPES})
        sizes.update({f"procs.{t.value}": len(PROCS[t]) for t in RULE_TYPES})
        for name, v in self.categoricals().items():
            if v.shape != (sizes[name],):
                raise ValueError(f"{name}: expected {sizes[name]} weights, got shape {v.shape}")
            if (v < 0).any() or not np.isfinite(v).all():
                raise ValueError(f"{name}: weights must be finite and nonnegative")
            if abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name}: weights sum to {v.sum()!r}, not 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be nonnegative")
        for t in RULE_TYPES:
            r = self.rules[t]
            if r[CONST] + r[PRIM] + r[IF] <= 0:
                raise ValueError(f"rules.{t.value}: const, prim and if cannot all be zero (generation would not halt)")

    def table(self, key) -> np.ndarray:
        kind = key[0]
        if kind == "rule":
            return self.rules[key[1]]
        if kind == "proc":
            return self.procs[key[1]]
        return getattr(self, kind)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "rules": {t.value: dict(zip(RULES, self.rules[t].tolist())) for t in RULE_TYPES},
            "procs": {t.value: dict(zip(PROCS[t], self.procs[t].tolist())) for t in RULE_TYPES},
            "constants": {
                "finite": [[v, float(p)] for v, p in zip(CONST_OPTIONS[:N_FINITE], self.real_consts[:N_FINITE])],
                "normal": float(self.real_consts[5]),
                "uniform": float(self.real_consts[6]),
                "bool": {"true": float(self.bool_consts[0]), "false": float(self.bool_consts[1])},
            },
            "arity": {str(k): float(p) for k, p in zip(ARITIES, self.arity)},
            "any_type": {t.value: float(p) for t, p in zip(ANY_TYPES, self.any_type)},
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RuleWeights":
        c = d["constants"]
        finite = {float(v): p for v, p in c["finite"]}
        return cls(
            rules={TypeTag(t): [d["rules"][t.value][r] for r in RULES] for t in RULE_TYPES},
            procs={TypeTag(t): [d["procs"][t.value][p] for p in PROCS[t]] for t in RULE_TYPES},
            real_consts=[finite[v] for v in CONST_OPTIONS[:N_FINITE]] + [c["normal"], c["uniform"]],
            bool_consts=[c["bool"]["true"], c["bool"]["false"]],
            arity=[d["arity"][str(k)] for k in ARITIES],
            any_type=[d["any_type"][t.value] for t in ANY_TYPES],
            max_depth=int(d["max_depth"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RuleWeights":
        return cls.from_dict(json.loads(text))


def uniform_weights(max_depth: int = 10) -> RuleWeights:
    def u(k):
        return np.full(k, 1.0 / k)

    return RuleWeights(
        rules={t: u(len(RULES)) for t in RULE_TYPES},
        procs={t: u(len(PROCS[t])) for t in RULE_TYPES},
        real_consts=u(len(CONST_OPTIONS)),
        bool_consts=u(2),
        arity=u(len(ARITIES)),
        any_type=u(len(ANY_TYPES)),
        max_depth=max_depth,
    )


def constant_only_weights(probs: dict, max_depth: int = 0) -> RuleWeights:
    """A tiny grammar whose programs are single constants drawn from ``probs``.

    ``probs`` maps values of the finite constant set to probabilities.
    """
    real = np.zeros(len(CONST_OPTIONS))
    for v, p in probs.items():
        i = _finite_index(float(v))
        if i is None:
            raise ValueError(f"{v!r} is not in the finite constant set")
        real[i] = p
    only_const = np.eye(len(RULES))[CONST]
    return RuleWeights(
        rules={t: only_const for t in RULE_TYPES},
        procs={t: np.full(len(PROCS[t]), 1.0 / len(PROCS[t])) for t in RULE_TYPES},
        real_consts=real,
        bool_consts=np.full(2, 0.5),
        arity=np.full(len(ARITIES), 1.0 / len(ARITIES)),
        any_type=np.full(len(ANY_TYPES), 0.5),
        max_depth=max_depth,
    )


def default_weights(alpha: float = 1.0, max_depth: int = 10) -> RuleWeights:
    """Weights estimated from the bundled corpus."""
    from .corpus import load_corpus

    return estimate_weights([e.program for e in load_corpus()], alpha, max_depth)


# ---------------------------------------------------------------------------
# contexts


@dataclass(frozen=True)
class GenContext:
    scope: Scope
    depth: int
    max_depth: int

    @property
    def inside_procedure(self) -> bool:
        return self.scope.proc is not None

    def deeper(self, scope: Scope | None = None) -> "GenContext":
        return GenContext(self.scope if scope is None else scope, self.depth + 1, self.max_depth)

    def same(self, scope: Scope) -> "GenContext":
        return GenContext(scope, self.depth, self.max_depth)


def program_context(params: tuple[Param, ...], ret: TypeTag, max_depth: int) -> GenContext:
    return GenContext(Scope().enter_proc(params, ret), 0, max_depth)


def _fresh(prefix: str, scope: Scope, offset: int = 0) -> str:
    taken = {n for n, _ in scope.vars} | {f[0] for f in scope.fns}
    n = len(taken) + offset
    while f"{prefix}{n}" in taken:
        n += 1
    return f"{prefix}{n}"


# ---------------------------------------------------------------------------
# choice bookkeeping shared by generation and replay


def _logp(w: RuleWeights, key, option: int, avail: tuple[int, ...]) -> float:
    tab = w.table(key)
    p = tab[option]
    if p <= 0:
        return -math.inf
    return math.log(p) - math.log(math.fsum(tab[i] for i in avail))


def _pick(w: RuleWeights, key, avail: tuple[int, ...], rng) -> int:
    tab = w.table(key)
    total = math.fsum(tab[i] for i in avail)
    if total <= 0:
        raise ValueError(f"no production with positive weight for {key}")
    u = rng.random() * total
    acc = 0.0
    last = None
    for i in avail:
        if tab[i] <= 0:
            continue
        acc += tab[i]
        last = i
        if u < acc:
            return i
    return last


def continuous_const_logpdf(w: RuleWeights, x: float) -> float:
    cn, cu = w.real_consts[5], w.real_consts[6]
    dens = 0.0
    if cn > 0:
        dens += cn * math.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    if cu > 0 and UNIFORM_LO <= x <= UNIFORM_HI:
        dens += cu / (UNIFORM_HI - UNIFORM_LO)
    return math.log(dens) if dens > 0 else -math.inf


def _finite_index(x: float) -> int | None:
    for i in range(N_FINITE):
        if x == CONST_OPTIONS[i]:
            return i
    return None


def _rule_avail(t: TypeTag, ctx: GenContext) -> tuple[int, ...]:
    t = numeric(t)
    scope = ctx.scope
    has_var = any(compatible(t, vt) for _, vt in scope.vars)
    if ctx.depth >= ctx.max_depth:
        return (VAR, CONST) if has_var else (CONST,)
    out = [VAR] if has_var else []
    out += [CONST, PRIM, LETFN, LET, IF]
    if scope.proc is not None and compatible(t, scope.proc[1]):
        out.append(RECUR)
    return tuple(out)


def _proc_avail(t: TypeTag, scope: Scope) -> tuple[int, ...]:
    ops = PROCS[t]
    avail = tuple(range(len(ops) - 1))
    if any(compatible(t, f[2]) for f in scope.fns):
        avail += (len(ops) - 1,)
    return avail


# ---------------------------------------------------------------------------
# generation


def generate(target: TypeTag, ctx: GenContext, w: RuleWeights, rng: np.random.Generator):
    """Grow an expression of type ``target``; returns (expr, log-probability)."""
    terms: list[float] = []
    e = _gen(target, ctx, w, rng, terms)
    return e, math.fsum(terms)


def generate_program(params: tuple[Param, ...], ret: TypeTag, w: RuleWeights, rng: np.random.Generator):
    body, lp = generate(ret, program_context(params, ret, w.max_depth), w, rng)
    return Lambda(tuple(params), ret, body), lp


def _gen(target: TypeTag, ctx: GenContext, w: RuleWeights, rng, terms: list):
    t = numeric(target)
    avail = _rule_avail(t, ctx)
    key = ("rule", t)
    rule = _pick(w, key, avail, rng)
    terms.append(_logp(w, key, rule, avail))
    scope = ctx.scope

    if rule == VAR:
        cands = [(n, vt) for n, vt in scope.vars if compatible(t, vt)]
        name, vt = cands[int(rng.integers(len(cands)))]
        terms.append(-math.log(len(cands)))
        return Var(name, vt)

    if rule == CONST:
        if t is BOOL:
            k = _pick(w, ("bool_consts",), (0, 1), rng)
            terms.append(_logp(w, ("bool_consts",), k, (0, 1)))
            return Const(BOOL_OPTIONS[k], BOOL)
        allk = tuple(range(len(CONST_OPTIONS)))
        k = _pick(w, ("real_consts",), allk, rng)
        if k < N_FINITE:
            terms.append(_logp(w, ("real_consts",), k, allk))
            return Const(CONST_OPTIONS[k], REAL)
        if CONST_OPTIONS[k] == "normal":
            x = float(rng.standard_normal())
        else:
            x = float(rng.uniform(UNIFORM_LO, UNIFORM_HI))
        terms.append(continuous_const_logpdf(w, x))
        return Const(x, REAL)

    if rule == PRIM:
        pav = _proc_avail(t, scope)
        key = ("proc", t)
        k = _pick(w, key, pav, rng)
        terms.append(_logp(w, key, k, pav))
        op = PROCS[t][k]
        if op == "call":
            fns = [f for f in scope.fns if compatible(t, f[2])]
            name, ptypes, ret = fns[int(rng.integers(len(fns)))]
            terms.append(-math.log(len(fns)))
            args = tuple(_gen(pt, ctx.deeper(), w, rng, terms) for pt in ptypes)
            return Call(name, args, ret)
        want, ret = PRIMITIVES[op]
        args = tuple(_gen(pt, ctx.deeper(), w, rng, terms) for pt in want)
        return Prim(op, args, ret)

    if rule == LETFN:
        ka = _pick(w, ("arity",), (0, 1, 2), rng)
        terms.append(_logp(w, ("arity",), ka, (0, 1, 2)))
        ptypes = []
        for _ in range(ARITIES[ka]):
            k = _pick(w, ("any_type",), (0, 1), rng)
            terms.append(_logp(w, ("any_type",), k, (0, 1)))
            ptypes.append(ANY_TYPES[k])
        k = _pick(w, ("any_type",), (0, 1), rng)
        terms.append(_logp(w, ("any_type",), k, (0, 1)))
        ret = ANY_TYPES[k]
        fname = _fresh("f", scope)
        params = tuple((_fresh("a", scope, offset=i), pt) for i, pt in enumerate(ptypes))
        fn_body = _gen(ret, ctx.deeper(scope.enter_proc(params, ret)), w, rng, terms)
        body = _gen(t, ctx.same(scope.add_fn(fname, tuple(ptypes), ret)), w, rng, terms)
        return LetFn(fname, params, ret, fn_body, body)

    if rule == LET:
        k = _pick(w, ("any_type",), (0, 1), rng)
        terms.append(_logp(w, ("any_type",), k, (0, 1)))
        bt = ANY_TYPES[k]
        name = _fresh("x", scope)
        bound = _gen(bt, ctx.deeper(), w, rng, terms)
        body = _gen(t, ctx.same(scope.add_var(name, bt)), w, rng, terms)
        return Let(name, bt, bound, body)

    if rule == IF:
        c = _gen(BOOL, ctx.deeper(), w, rng, terms)
        a = _gen(t, ctx.deeper(), w, rng, terms)
        b = _gen(t, ctx.deeper(), w, rng, terms)
        return If(c, a, b, a.type if a.type is b.type else numeric(a.type))

    ptypes, ret = scope.proc
    args = tuple(_gen(pt, ctx.deeper(), w, rng, terms) for pt in ptypes)
    return Recur(args, ret)


# ---------------------------------------------------------------------------
# replay


class _Outside(Exception):
    pass


def _events(e, target: TypeTag, ctx: GenContext, out: list) -> None:
    """Append the choice sequence that ``generate`` would make to emit ``e``.

    Events are (key, option, available options) or ("cont", value).
    Raises _Outside when ``e`` cannot be generated.
    """
    t = numeric(target)
    avail = _rule_avail(t, ctx)
    scope = ctx.scope

    def rule(r):
        if r not in avail:
            raise _Outside
        out.append((("rule", t), r, avail))

    if isinstance(e, Var):
        rule(VAR)
        cands = [n for n, vt in scope.vars if compatible(t, vt)]
        if e.name not in cands:
            raise _Outside
        out.append(("uniform", len(cands)))
        return
    if isinstance(e, Const):
        rule(CONST)
        if t is BOOL:
            if not isinstance(e.value, bool):
                raise _Outside
            out.append((("bool_consts",), BOOL_OPTIONS.index(e.value), (0, 1)))
            return
        if isinstance(e.value, bool):
            raise _Outside
        k = _finite_index(e.value)
        if k is not None:
            out.append((("real_consts",), k, tuple(range(len(CONST_OPTIONS)))))
        else:
            out.append(("cont", float(e.value)))
        return
    if isinstance(e, (Prim, Call)):
        rule(PRIM)
        if not compatible(t, e.type):
            raise _Outside
        pav = _proc_avail(t, scope)
        if isinstance(e, Prim):
            if e.op not in PROCS[t]:
                raise _Outside
            out.append((("proc", t), PROCS[t].index(e.op), pav))
            want = PRIMITIVES[e.op][0]
        else:
            k = len(PROCS[t]) - 1
            if k not in pav:
                raise _Outside
            out.append((("proc", t), k, pav))
            fns = [f for f in scope.fns if compatible(t, f[2])]
            f = next((f for f in fns if f[0] == e.fn), None)
            if f is None:
                raise _Outside
            out.append(("uniform", len(fns)))
            want = f[1]
        if len(want) != len(e.args):
            raise _Outside
        for pt, a in zip(want, e.args):
            _events(a, pt, ctx.deeper(), out)
        return
    if isinstance(e, LetFn):
        rule(LETFN)
        if len(e.params) not in ARITIES or e.ret not in ANY_TYPES:
            raise _Outside
        out.append((("arity",), ARITIES.index(len(e.params)), (0, 1, 2)))
        for _, pt in e.params:
            if pt not in ANY_TYPES:
                raise _Outside
            out.append((("any_type",), ANY_TYPES.index(pt), (0, 1)))
        out.append((("any_type",), ANY_TYPES.index(e.ret), (0, 1)))
        _events(e.fn_body, e.ret, ctx.deeper(scope.enter_proc(e.params, e.ret)), out)
        _events(e.body, t, ctx.same(scope.add_fn(e.name, tuple(pt for _, pt in e.params), e.ret)), out)
        return
    if isinstance(e, Let):
        rule(LET)
        if e.bound_type not in ANY_TYPES:
            raise _Outside
        out.append((("any_type",), ANY_TYPES.index(e.bound_type), (0, 1)))
        _events(e.bound, e.bound_type, ctx.deeper(), out)
        _events(e.body, t, ctx.same(scope.add_var(e.name, e.bound_type)), out)
        return
    if isinstance(e, If):
        rule(IF)
        _events(e.cond, BOOL, ctx.deeper(), out)
        _events(e.then, t, ctx.deeper(), out)
        _events(e.else_, t, ctx.deeper(), out)
        return
    if isinstance(e, Recur):
        rule(RECUR)
        ptypes = scope.proc[0]
        if len(ptypes) != len(e.args):
            raise _Outside
        for pt, a in zip(ptypes, e.args):
            _events(a, pt, ctx.deeper(), out)
        return
    raise _Outside


def _event_logp(w: RuleWeights, ev) -> float:
    if ev[0] == "uniform":
        return -math.log(ev[1])
    if ev[0] == "cont":
        return continuous_const_logpdf(w, ev[1])
    return _logp(w, ev[0], ev[1], ev[2])


def choice_events(e, target: TypeTag, ctx: GenContext) -> list | None:
    out: list = []
    try:
        _events(e, target, ctx, out)
    except _Outside:
        return None
    return out


def log_prior_expr(e, target: TypeTag, ctx: GenContext, w: RuleWeights) -> float:
    """Log-probability that ``generate(target, ctx, w)`` emits ``e``."""
    ev = choice_events(e, target, ctx)
    if ev is None:
        return -math.inf
    return math.fsum(_event_logp(w, x) for x in ev)


def log_prior(program: Lambda, w: RuleWeights) -> float:
    """Log prior of a whole program; -inf when the grammar cannot produce it."""
    ctx = program_context(program.params, program.ret, w.max_depth)
    return log_prior_expr(program.body, program.ret, ctx, w)


def gen_depth(program: Lambda) -> int:
    """Deepest generation depth reached in ``program`` (let bodies add nothing)."""

    def go(e, d):
        if isinstance(e, (Let, LetFn)):
            first = e.bound if isinstance(e, Let) else e.fn_body
            return max(go(first, d + 1), go(e.body, d))
        kids = ()
        if isinstance(e, (Prim, Call, Recur)):
            kids = e.args
        elif isinstance(e, If):
            kids = (e.cond, e.then, e.else_)
        return max([d] + [go(k, d + 1) for k in kids])

    return go(program.body, 0)


# ---------------------------------------------------------------------------
# regeneration sites


@dataclass(frozen=True)
class Site:
    path: tuple[int, ...]
    type: TypeTag
    ctx: GenContext


def typed_sites(program: Lambda, max_depth: int = 10) -> list[Site]:
    """Every node of the program body in pre-order, with the context to regrow it.

    Paths index into the ``Lambda`` (the body is ``(0,)``), so they can be fed
    straight to ``expr.replace_at``.
    """
    out: list[Site] = []

    def go(e, path, t, ctx):
        out.append(Site(path, t, ctx))
        scope = ctx.scope
        if isinstance(e, Prim):
            for i, (pt, a) in enumerate(zip(PRIMITIVES[e.op][0], e.args)):
                go(a, path + (i,), pt, ctx.deeper())
        elif isinstance(e, Call):
            f = scope.lookup_fn(e.fn)
            for i, (pt, a) in enumerate(zip(f[1], e.args)):
                go(a, path + (i,), pt, ctx.deeper())
        elif isinstance(e, Recur):
            for i, (pt, a) in enumerate(zip(scope.proc[0], e.args)):
                go(a, path + (i,), pt, ctx.deeper())
        elif isinstance(e, Let):
            go(e.bound, path + (0,), e.bound_type, ctx.deeper())
            go(e.body, path + (1,), t, ctx.same(scope.add_var(e.name, e.bound_type)))
        elif isinstance(e, LetFn):
            go(e.fn_body, path + (0,), e.ret, ctx.deeper(scope.enter_proc(e.params, e.ret)))
            go(e.body, path + (1,), t, ctx.same(scope.add_fn(e.name, tuple(pt for _, pt in e.params), e.ret)))
        elif isinstance(e, If):
            go(e.cond, path + (0,), BOOL, ctx.deeper())
            go(e.then, path + (1,), t, ctx.deeper())
            go(e.else_, path + (2,), t, ctx.deeper())

    go(program.body, (0,), program.ret, program_context(program.params, program.ret, max_depth))
    return out


# ---------------------------------------------------------------------------
# weight estimation


def estimate_weights(corpus: Iterable[Lambda], alpha: float = 1.0, max_depth: int = 10) -> RuleWeights:
    """Posterior-mean rule weights from corpus choice counts under a symmetric Dirichlet(alpha).

    Constants outside the finite set are credited half to each continuous
    component.  The corpus is replayed with an unbounded depth so that deep
    programs still contribute their counts.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    counts = {
        **{("rule", t): np.zeros(len(RULES)) for t in RULE_TYPES},
        **{("proc", t): np.zeros(len(PROCS[t])) for t in RULE_TYPES},
        ("real_consts",): np.zeros(len(CONST_OPTIONS)),
        ("bool_consts",): np.zeros(2),
        ("arity",): np.zeros(len(ARITIES)),
        ("any_type",): np.zeros(len(ANY_TYPES)),
    }
    for prog in corpus:
        ctx = program_context(prog.params, prog.ret, 10**9)
        ev = choice_events(prog.body, prog.ret, ctx)
        if ev is None:
            raise ValueError("corpus program outside the grammar")
        for x in ev:
            if x[0] == "uniform":
                continue
            if x[0] == "cont":
                counts[("real_consts",)][5:] += 0.5
            else:
                counts[x[0]][x[1]] += 1

    def post(c):
        return (c + alpha) / (c.sum() + alpha * len(c))

    return RuleWeights(
        rules={t: post(counts[("rule", t)]) for t in RULE_TYPES},
        procs={t: post(counts[("proc", t)]) for t in RULE_TYPES},
        real_consts=post(counts[("real_consts",)]),
        bool_consts=post(counts[("bool_consts",)]),
        arity=post(counts[("arity",)]),
        any_type=post(counts[("any_type",)]),
        max_depth=max_depth,
    )
