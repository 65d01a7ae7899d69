"""Interpreters for sampler programs.

Two evaluation strategies share one set of primitive semantics:

* ``evaluate`` / ``run_program`` walk the AST for a single draw.  This is the
  reference interpreter.
* ``sample_program`` / ``draw_samples`` evaluate ``n`` independent draws at
  once.  Every value is an array with one lane per draw; ``if`` splits the
  lanes between its branches, so each lane follows its own control path and
  recursion stops per lane exactly as in the scalar interpreter.

Self-recursion is bounded: the top-level activation of a procedure is depth 0
and a ``recur`` that would open an activation at depth ``cap`` yields 0.0
without evaluating anything.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    BOOL,
    INT,
    Call,
    Const,
    If,
    Lambda,
    Let,
    LetFn,
    Prim,
    Recur,
    TypeTag,
    Var,
)

DEFAULT_CAP = 10
DEFAULT_MAX_STEPS = 200_000

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))


class EvalFault(Exception):
    """Ill-formed program reached the evaluator (a typing bug, never a score)."""


class _OutOfSteps(Exception):
    pass


def _safe_div(a, b):
    q = a / np.where(b == 0, 1.0, b)
    # finite inputs give a finite result; non-finite inputs propagate
    overflow = ~np.isfinite(q) & np.isfinite(a) & np.isfinite(b)
    return np.where((b == 0) | overflow, 0.0, q)


def _safe_log(a):
    return np.where(a <= 0, 0.0, np.log(np.where(a <= 0, 1.0, a)))


def _safe_sqrt(a):
    return np.where(a < 0, 0.0, np.sqrt(np.where(a < 0, 0.0, a)))


def _uc(a, b, u):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    d = hi - lo
    # the convex form only when the width overflows, so ordinary draws are unchanged
    x = np.where(np.isfinite(d), lo + d * u, np.clip(lo * (1 - u) + hi * u, lo, hi))
    return np.where(lo == hi, lo, x)


# raw kernels; callers run them under np.errstate(all="ignore")
_KERNELS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "safe-div": _safe_div,
    "cos": np.cos,
    "exp": np.exp,
    "inc": lambda a: a + 1.0,
    "dec": lambda a: a - 1.0,
    "safe-sqrt": _safe_sqrt,
    "safe-log": _safe_log,
    "<": np.less,
}


def _quiet(f):
    def g(*args):
        with np.errstate(all="ignore"):
            return f(*args)

    return g


# deterministic primitives; operate on float64 scalars or arrays alike
PRIM_FUNCS = {op: _quiet(f) for op, f in _KERNELS.items()}


def safe_uc(a, b, u):
    """Uniform on [min(a,b), max(a,b)] from unit uniforms ``u``; a when a == b."""
    with np.errstate(all="ignore"):
        return _uc(a, b, u)


def coerce(value, t: TypeTag):
    """Apply the Int rounding rule at a binding/output boundary."""
    if t is INT:
        return np.rint(value)
    return value


# ---------------------------------------------------------------------------
# scalar reference interpreter


@dataclass
class DepthBudget:
    cap: int = DEFAULT_CAP
    max_steps: int = DEFAULT_MAX_STEPS
    cap_hits: int = 0
    steps: int = 0


@dataclass(frozen=True)
class Closure:
    name: str
    params: tuple
    ret: TypeTag
    body: object
    env: "Env"


class Env:
    """Lexical environment; ``proc``/``depth`` mark a procedure activation."""

    __slots__ = ("vars", "parent", "proc", "depth")

    def __init__(self, vars=None, parent=None, proc=None, depth=0):
        self.vars = vars or {}
        self.parent = parent
        self.proc = proc
        self.depth = depth

    def lookup(self, name):
        env = self
        while env is not None:
            if name in env.vars:
                return env.vars[name]
            env = env.parent
        raise EvalFault(f"unbound variable {name}")

    def activation(self):
        env = self
        while env is not None:
            if env.proc is not None:
                return env
            env = env.parent
        raise EvalFault("recur outside a procedure")

    def extend(self, name, value):
        return Env({name: value}, self)


def _apply(clo: Closure, args, budget: DepthBudget, rng, depth: int):
    if len(args) != len(clo.params):
        raise EvalFault(f"{clo.name}: arity mismatch")
    frame = {name: coerce(v, t) for (name, t), v in zip(clo.params, args)}
    out = evaluate(clo.body, Env(frame, clo.env, clo, depth), budget, rng)
    return coerce(out, clo.ret)


def evaluate(e, env: Env, budget: DepthBudget, rng: np.random.Generator):
    """Evaluate one expression for a single draw."""
    budget.steps += 1
    if budget.steps > budget.max_steps:
        raise _OutOfSteps
    if isinstance(e, Const):
        return e.value if e.type is BOOL else np.float64(e.value)
    if isinstance(e, Var):
        return env.lookup(e.name)
    if isinstance(e, Prim):
        args = [evaluate(a, env, budget, rng) for a in e.args]
        if e.op == "safe-uc":
            if len(args) != 2:
                raise EvalFault("safe-uc: arity mismatch")
            return np.float64(safe_uc(args[0], args[1], rng.random()))
        f = PRIM_FUNCS.get(e.op)
        if f is None:
            raise EvalFault(f"unknown primitive {e.op}")
        try:
            out = f(*args)
        except TypeError as exc:
            raise EvalFault(f"{e.op}: {exc}") from None
        return bool(out) if e.op == "<" else np.float64(out)
    if isinstance(e, If):
        c = evaluate(e.cond, env, budget, rng)
        if not isinstance(c, (bool, np.bool_)):
            raise EvalFault("if: condition is not bool")
        return evaluate(e.then if c else e.else_, env, budget, rng)
    if isinstance(e, Let):
        v = coerce(evaluate(e.bound, env, budget, rng), e.bound_type)
        return evaluate(e.body, env.extend(e.name, v), budget, rng)
    if isinstance(e, LetFn):
        clo = Closure(e.name, e.params, e.ret, e.fn_body, env)
        return evaluate(e.body, env.extend(e.name, clo), budget, rng)
    if isinstance(e, Call):
        clo = env.lookup(e.fn)
        if not isinstance(clo, Closure):
            raise EvalFault(f"{e.fn} is not a procedure")
        args = [evaluate(a, env, budget, rng) for a in e.args]
        return _apply(clo, args, budget, rng, 0)
    if isinstance(e, Recur):
        act = env.activation()
        args = [evaluate(a, env, budget, rng) for a in e.args]
        if act.depth + 1 >= budget.cap:
            budget.cap_hits += 1
            return np.float64(0.0)
        return _apply(act.proc, args, budget, rng, act.depth + 1)
    raise EvalFault(f"not an expression: {e!r}")


def run_program(
    program: Lambda,
    args,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
    budget: DepthBudget | None = None,
):
    """Run a program once on ``args`` with a fresh depth budget.

    Programs that exhaust the step budget yield NaN (scored as invalid).
    """
    if not isinstance(program, Lambda):
        raise EvalFault("not a program")
    if len(args) != len(program.params):
        raise EvalFault("program arity mismatch")
    budget = budget or DepthBudget(cap)
    clo = Closure("<program>", program.params, program.ret, program.body, Env())
    try:
        out = _apply(clo, [np.float64(a) if not isinstance(a, bool) else a for a in args], budget, rng, 0)
    except _OutOfSteps:
        return np.float64(np.nan)
    return out if isinstance(out, (bool, np.bool_)) else float(out)


# ---------------------------------------------------------------------------
# lane-batched interpreter


@dataclass
class _BClosure:
    name: str
    params: tuple
    ret: TypeTag
    body: object
    env: dict

    def take(self, idx):
        return _BClosure(self.name, self.params, self.ret, self.body, _take_env(self.env, idx))


def _take_env(env: dict, idx) -> dict:
    out = {}
    for k, v in env.items():
        if isinstance(v, np.ndarray):
            out[k] = v[idx]
        elif isinstance(v, _BClosure):
            out[k] = v.take(idx)
        elif k == "%proc":
            out[k] = (v[0].take(idx), v[1])
        else:
            out[k] = v
    return out


@dataclass
class _Run:
    rng: np.random.Generator
    cap: int
    capped: np.ndarray
    max_steps: int
    steps: int = 0


def _bapply(clo: _BClosure, args, env_lanes, run: _Run, depth: int):
    frame = dict(clo.env)
    for (name, t), v in zip(clo.params, args):
        frame[name] = coerce(v, t)
    frame["%proc"] = (clo, depth)
    frame["%lanes"] = env_lanes
    return coerce(_beval(clo.body, frame, len(env_lanes), run), clo.ret)


def _beval(e, env: dict, n: int, run: _Run):
    run.steps += 1
    if run.steps > run.max_steps:
        raise _OutOfSteps
    if n == 0:
        return np.zeros(0, dtype=bool if e.type is BOOL else float)
    if isinstance(e, Const):
        if e.type is BOOL:
            return np.full(n, bool(e.value))
        return np.full(n, float(e.value))
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Prim):
        args = [_beval(a, env, n, run) for a in e.args]
        if e.op == "safe-uc":
            return _uc(args[0], args[1], run.rng.random(n))
        return _KERNELS[e.op](*args)
    if isinstance(e, If):
        c = _beval(e.cond, env, n, run)
        if c.all():
            return _beval(e.then, env, n, run)
        if not c.any():
            return _beval(e.else_, env, n, run)
        it, ie = np.flatnonzero(c), np.flatnonzero(~c)
        a = _beval(e.then, _take_env(env, it), len(it), run)
        b = _beval(e.else_, _take_env(env, ie), len(ie), run)
        out = np.empty(n, dtype=np.result_type(a, b))
        out[it] = a
        out[ie] = b
        return out
    if isinstance(e, Let):
        inner = dict(env)
        inner[e.name] = coerce(_beval(e.bound, env, n, run), e.bound_type)
        return _beval(e.body, inner, n, run)
    if isinstance(e, LetFn):
        inner = dict(env)
        inner[e.name] = _BClosure(e.name, e.params, e.ret, e.fn_body, env)
        return _beval(e.body, inner, n, run)
    if isinstance(e, Call):
        args = [_beval(a, env, n, run) for a in e.args]
        return _bapply(env[e.fn], args, env["%lanes"], run, 0)
    if isinstance(e, Recur):
        clo, depth = env["%proc"]
        args = [_beval(a, env, n, run) for a in e.args]
        if depth + 1 >= run.cap:
            run.capped[env["%lanes"]] = True
            return np.zeros(n)
        return _bapply(clo, args, env["%lanes"], run, depth + 1)
    raise EvalFault(f"not an expression: {e!r}")


@dataclass
class Samples:
    """Draws from a program plus per-draw diagnostics."""

    values: np.ndarray
    capped: np.ndarray = field(repr=False)
    out_of_steps: bool = False

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def cap_fraction(self) -> float:
        return float(self.capped.mean()) if len(self.capped) else 0.0


def sample_program(
    program: Lambda,
    n: int,
    args,
    rng: np.random.Generator,
    cap: int = DEFAULT_CAP,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Samples:
    """Draw ``n`` independent outputs of ``program`` applied to ``args``.

    Each argument is a scalar or an array with one value per draw.
    """
    if len(args) != len(program.params):
        raise EvalFault("program arity mismatch")
    capped = np.zeros(n, dtype=bool)
    if n == 0:
        return Samples(np.zeros(0), capped)
    run = _Run(rng, cap, capped, max_steps)
    lanes = np.arange(n)
    clo = _BClosure("<program>", program.params, program.ret, program.body, {"%lanes": lanes})
    argv = [np.broadcast_to(np.asarray(a, dtype=bool if isinstance(a, bool) else float), (n,)).copy() for a in args]
    try:
        with np.errstate(all="ignore"):
            out = _bapply(clo, argv, lanes, run, 0)
    except _OutOfSteps:
        return Samples(np.full(n, np.nan), capped, out_of_steps=True)
    except (KeyError, TypeError, IndexError) as exc:
        raise EvalFault(str(exc)) from None
    return Samples(np.asarray(out, dtype=float), capped)


def draw_samples(program: Lambda, n: int, args, rng: np.random.Generator, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``n`` i.i.d. outputs as a float array; non-finite values are kept."""
    return sample_program(program, n, args, rng, cap).values
