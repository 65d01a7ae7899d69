"""Typed AST for the sampler language, with its s-expression surface syntax.

Programs look like the listings they were transcribed from::

    (fn [p] (if (< (safe-uc 0.0 1.0) p) 1.0 0.0))

Bindings are written ``name`` (real) or ``name:bool`` / ``name:int``; a
procedure whose return type is not real carries a ``:bool`` / ``:int`` marker
right after its parameter vector.  ``lambda`` and ``begin``/``define`` are
accepted on input and normalized to ``fn`` and ``let``; a named
``(fn f [..] ..)`` may call itself as ``(f ..)``, which reads as ``recur``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterator, Union


class TypeTag(str, enum.Enum):
    REAL = "real"
    BOOL = "bool"
    INT = "int"


REAL, BOOL, INT = TypeTag.REAL, TypeTag.BOOL, TypeTag.INT


def numeric(t: TypeTag) -> TypeTag:
    """Int is a rounded real; for typing purposes it behaves as real."""
    return REAL if t is INT else t


def compatible(want: TypeTag, have: TypeTag) -> bool:
    return numeric(want) is numeric(have)


# name -> (argument types, result type)
PRIMITIVES: dict[str, tuple[tuple[TypeTag, ...], TypeTag]] = {
    "+": ((REAL, REAL), REAL),
    "-": ((REAL, REAL), REAL),
    "*": ((REAL, REAL), REAL),
    "safe-div": ((REAL, REAL), REAL),
    "safe-uc": ((REAL, REAL), REAL),
    "cos": ((REAL,), REAL),
    "exp": ((REAL,), REAL),
    "inc": ((REAL,), REAL),
    "dec": ((REAL,), REAL),
    "safe-sqrt": ((REAL,), REAL),
    "safe-log": ((REAL,), REAL),
    "<": ((REAL, REAL), BOOL),
}

Param = tuple[str, TypeTag]


@dataclass(frozen=True)
class Const:
    value: Union[float, bool]
    type: TypeTag


@dataclass(frozen=True)
class Var:
    name: str
    type: TypeTag


@dataclass(frozen=True)
class Prim:
    op: str
    args: tuple
    type: TypeTag


@dataclass(frozen=True)
class Call:
    """Application of a let-bound compound procedure."""

    fn: str
    args: tuple
    type: TypeTag


@dataclass(frozen=True)
class Let:
    name: str
    bound_type: TypeTag
    bound: "Expr"
    body: "Expr"

    @property
    def type(self) -> TypeTag:
        return self.body.type


@dataclass(frozen=True)
class LetFn:
    name: str
    params: tuple[Param, ...]
    ret: TypeTag
    fn_body: "Expr"
    body: "Expr"

    @property
    def type(self) -> TypeTag:
        return self.body.type


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    else_: "Expr"
    type: TypeTag


@dataclass(frozen=True)
class Recur:
    args: tuple
    type: TypeTag


@dataclass(frozen=True)
class Lambda:
    params: tuple[Param, ...]
    ret: TypeTag
    body: "Expr"

    @property
    def type(self) -> TypeTag:
        return self.ret


Expr = Union[Const, Var, Prim, Call, Let, LetFn, If, Recur]


class TypeCheckError(Exception):
    pass


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# structural helpers


def children(e) -> tuple:
    if isinstance(e, (Prim, Call, Recur)):
        return e.args
    if isinstance(e, Let):
        return (e.bound, e.body)
    if isinstance(e, LetFn):
        return (e.fn_body, e.body)
    if isinstance(e, If):
        return (e.cond, e.then, e.else_)
    if isinstance(e, Lambda):
        return (e.body,)
    return ()


def with_children(e, kids: tuple):
    if isinstance(e, Prim):
        return Prim(e.op, tuple(kids), e.type)
    if isinstance(e, Call):
        return Call(e.fn, tuple(kids), e.type)
    if isinstance(e, Recur):
        return Recur(tuple(kids), e.type)
    if isinstance(e, Let):
        return Let(e.name, e.bound_type, kids[0], kids[1])
    if isinstance(e, LetFn):
        return LetFn(e.name, e.params, e.ret, kids[0], kids[1])
    if isinstance(e, If):
        return If(kids[0], kids[1], kids[2], _if_type(kids[1].type, kids[2].type))
    if isinstance(e, Lambda):
        return Lambda(e.params, e.ret, kids[0])
    return e


def _if_type(a: TypeTag, b: TypeTag) -> TypeTag:
    return a if a is b else numeric(a)


def subtree(e, path: tuple[int, ...]):
    for i in path:
        e = children(e)[i]
    return e


def replace_at(e, path: tuple[int, ...], new):
    """Return a copy of ``e`` with the node at ``path`` replaced by ``new``."""
    if not path:
        return new
    kids = list(children(e))
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return with_children(e, tuple(kids))


def iter_nodes(e) -> Iterator:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def node_count(e) -> int:
    return sum(1 for _ in iter_nodes(e))


def height(e) -> int:
    """Edges on the longest root-to-leaf path (a leaf has height 0)."""
    kids = children(e)
    return 1 + max(height(k) for k in kids) if kids else 0


# ---------------------------------------------------------------------------
# type checking


@dataclass(frozen=True)
class Scope:
    """Lexical typing scope: variables, compound procedures, recur target."""

    vars: tuple[Param, ...] = ()
    fns: tuple[tuple[str, tuple[TypeTag, ...], TypeTag], ...] = ()
    proc: tuple[tuple[TypeTag, ...], TypeTag] | None = None
    # name of a named ``(fn name [..] ..)``; calling it means recur
    self_name: str | None = None

    def lookup_var(self, name: str) -> TypeTag | None:
        for n, t in self.vars:
            if n == name:
                return t
        return None

    def lookup_fn(self, name: str):
        for f in self.fns:
            if f[0] == name:
                return f
        return None

    def _own(self, name: str) -> str | None:
        return None if name == self.self_name else self.self_name

    def add_var(self, name: str, t: TypeTag) -> "Scope":
        return Scope(
            tuple(v for v in self.vars if v[0] != name) + ((name, t),),
            tuple(f for f in self.fns if f[0] != name),
            self.proc,
            self._own(name),
        )

    def add_fn(self, name: str, params: tuple[TypeTag, ...], ret: TypeTag) -> "Scope":
        return Scope(
            tuple(v for v in self.vars if v[0] != name),
            tuple(f for f in self.fns if f[0] != name) + ((name, params, ret),),
            self.proc,
            self._own(name),
        )

    def enter_proc(self, params: tuple[Param, ...], ret: TypeTag, self_name: str | None = None) -> "Scope":
        s = Scope(self.vars, self.fns, (tuple(t for _, t in params), ret), self_name)
        for n, t in params:
            s = s.add_var(n, t)
        return s


def _check_args(what: str, want: tuple[TypeTag, ...], args: tuple) -> None:
    if len(want) != len(args):
        raise TypeCheckError(f"{what}: expected {len(want)} arguments, got {len(args)}")
    for i, (w, a) in enumerate(zip(want, args)):
        if not compatible(w, a.type):
            raise TypeCheckError(f"{what}: argument {i} is {a.type.value}, expected {w.value}")


def check_expr(e, scope: Scope) -> TypeTag:
    """Verify ``e`` against ``scope`` and return its type; raises TypeCheckError."""
    if isinstance(e, Const):
        is_bool = isinstance(e.value, bool)
        if is_bool != (e.type is BOOL):
            raise TypeCheckError(f"constant {e.value!r} tagged {e.type.value}")
        return e.type
    if isinstance(e, Var):
        t = scope.lookup_var(e.name)
        if t is None:
            raise TypeCheckError(f"unbound variable {e.name}")
        if t is not e.type:
            raise TypeCheckError(f"variable {e.name} is {t.value}, tagged {e.type.value}")
        return t
    if isinstance(e, Prim):
        if e.op not in PRIMITIVES:
            raise TypeCheckError(f"unknown primitive {e.op}")
        for a in e.args:
            check_expr(a, scope)
        want, ret = PRIMITIVES[e.op]
        _check_args(e.op, want, e.args)
        if ret is not e.type:
            raise TypeCheckError(f"{e.op} returns {ret.value}, tagged {e.type.value}")
        return ret
    if isinstance(e, Call):
        f = scope.lookup_fn(e.fn)
        if f is None:
            raise TypeCheckError(f"unbound procedure {e.fn}")
        for a in e.args:
            check_expr(a, scope)
        _check_args(e.fn, f[1], e.args)
        if f[2] is not e.type:
            raise TypeCheckError(f"{e.fn} returns {f[2].value}, tagged {e.type.value}")
        return e.type
    if isinstance(e, Let):
        bt = check_expr(e.bound, scope)
        if not compatible(e.bound_type, bt):
            raise TypeCheckError(f"let {e.name}: bound is {bt.value}, declared {e.bound_type.value}")
        return check_expr(e.body, scope.add_var(e.name, e.bound_type))
    if isinstance(e, LetFn):
        inner = scope.enter_proc(e.params, e.ret)
        rt = check_expr(e.fn_body, inner)
        if not compatible(e.ret, rt):
            raise TypeCheckError(f"procedure {e.name} body is {rt.value}, declared {e.ret.value}")
        return check_expr(e.body, scope.add_fn(e.name, tuple(t for _, t in e.params), e.ret))
    if isinstance(e, If):
        if check_expr(e.cond, scope) is not BOOL:
            raise TypeCheckError("if: condition is not bool")
        a, b = check_expr(e.then, scope), check_expr(e.else_, scope)
        if not compatible(a, b):
            raise TypeCheckError(f"if: branches are {a.value} and {b.value}")
        if e.type is not _if_type(a, b):
            raise TypeCheckError("if: wrong type tag")
        return e.type
    if isinstance(e, Recur):
        if scope.proc is None:
            raise TypeCheckError("recur outside a procedure")
        for a in e.args:
            check_expr(a, scope)
        _check_args("recur", scope.proc[0], e.args)
        if e.type is not scope.proc[1]:
            raise TypeCheckError("recur: wrong type tag")
        return e.type
    raise TypeCheckError(f"not an expression: {e!r}")


def check_program(prog: Lambda) -> None:
    if not isinstance(prog, Lambda):
        raise TypeCheckError("a program must be a fn form")
    names = [n for n, _ in prog.params]
    if len(set(names)) != len(names):
        raise TypeCheckError("duplicate parameter names")
    t = check_expr(prog.body, Scope().enter_proc(prog.params, prog.ret))
    if not compatible(prog.ret, t):
        raise TypeCheckError(f"program body is {t.value}, declared {prog.ret.value}")


def is_well_typed(prog: Lambda) -> bool:
    try:
        check_program(prog)
    except TypeCheckError:
        return False
    return True


# ---------------------------------------------------------------------------
# printing


def _fmt_const(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v))


def _fmt_param(p: Param) -> str:
    name, t = p
    return name if t is REAL else f"{name}:{t.value}"


def _fmt_fn(params, ret, body) -> str:
    head = "[" + " ".join(_fmt_param(p) for p in params) + "]"
    if ret is not REAL:
        head += f" :{ret.value}"
    return f"(fn {head} {print_expr(body)})"


def print_expr(e) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Prim):
        return "(" + " ".join([e.op] + [print_expr(a) for a in e.args]) + ")"
    if isinstance(e, Call):
        return "(" + " ".join([e.fn] + [print_expr(a) for a in e.args]) + ")"
    if isinstance(e, Recur):
        return "(" + " ".join(["recur"] + [print_expr(a) for a in e.args]) + ")"
    if isinstance(e, Let):
        name = e.name if e.bound_type is e.bound.type else _fmt_param((e.name, e.bound_type))
        return f"(let [{name} {print_expr(e.bound)}] {print_expr(e.body)})"
    if isinstance(e, LetFn):
        return f"(let [{e.name} {_fmt_fn(e.params, e.ret, e.fn_body)}] {print_expr(e.body)})"
    if isinstance(e, If):
        return f"(if {print_expr(e.cond)} {print_expr(e.then)} {print_expr(e.else_)})"
    if isinstance(e, Lambda):
        return _fmt_fn(e.params, e.ret, e.body)
    raise TypeError(f"cannot print {e!r}")


def print_program(prog: Lambda) -> str:
    """Canonical single-line text of a program."""
    return print_expr(prog)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s+|;[^\n]*|[()\[\]]|[^\s()\[\];]+")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|[+-]?inf$")
_SPECIAL = {"fn", "lambda", "let", "if", "recur", "begin", "define"}


@dataclass
class _Tok:
    text: str
    line: int
    col: int


@dataclass
class _List:
    items: list
    square: bool
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    out, line, col, pos = [], 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        s = m.group(0)
        if not (s[0].isspace() or s[0] == ";"):
            out.append(_Tok(s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    return out


def _read(tokens: list[_Tok]):
    stack: list[_List] = []
    top = []
    for tok in tokens:
        if tok.text in "([":
            stack.append(_List([], tok.text == "[", tok.line, tok.col))
        elif tok.text in ")]":
            if not stack:
                raise ParseError(f"unexpected '{tok.text}'", tok.line, tok.col)
            lst = stack.pop()
            if lst.square != (tok.text == "]"):
                raise ParseError(f"mismatched '{tok.text}'", tok.line, tok.col)
            (stack[-1].items if stack else top).append(lst)
        else:
            (stack[-1].items if stack else top).append(tok)
    if stack:
        raise ParseError("unclosed list", stack[-1].line, stack[-1].col)
    return top


def _pos(x) -> tuple[int, int]:
    return x.line, x.col


def _err(msg: str, x) -> ParseError:
    return ParseError(msg, *_pos(x))


def _head(x) -> str | None:
    if isinstance(x, _List) and not x.square and x.items and isinstance(x.items[0], _Tok):
        return x.items[0].text
    return None


def _parse_param(tok) -> Param:
    if not isinstance(tok, _Tok):
        raise _err("expected a parameter name", tok)
    name, _, t = tok.text.partition(":")
    if not name or name in _SPECIAL or _NUMBER.match(name):
        raise _err(f"bad parameter name {tok.text!r}", tok)
    try:
        return name, TypeTag(t) if t else REAL
    except ValueError:
        raise _err(f"unknown type {t!r}", tok) from None


def _parse_fn_parts(x: _List):
    """Split (fn name? [params] :ret body) into its pieces."""
    items = x.items[1:]
    name = None
    if items and isinstance(items[0], _Tok):
        name = _parse_param(items[0])[0]
        items = items[1:]
    if not items or not isinstance(items[0], _List):
        raise _err("fn needs a parameter list", x)
    params = tuple(_parse_param(p) for p in items[0].items)
    if len({n for n, _ in params}) != len(params):
        raise _err("duplicate parameter names", x)
    rest = items[1:]
    ret = REAL
    if rest and isinstance(rest[0], _Tok) and rest[0].text.startswith(":") and len(rest) > 1:
        try:
            ret = TypeTag(rest[0].text[1:])
        except ValueError:
            raise _err(f"unknown type {rest[0].text!r}", rest[0]) from None
        rest = rest[1:]
    if len(rest) != 1:
        raise _err("fn needs exactly one body expression", x)
    return name, params, ret, rest[0]


def _parse(x, scope: Scope):
    try:
        return _parse_inner(x, scope)
    except TypeCheckError as exc:
        raise _err(str(exc), x) from None


def _parse_inner(x, scope: Scope):
    if isinstance(x, _Tok):
        s = x.text
        if s in ("true", "false"):
            return Const(s == "true", BOOL)
        if _NUMBER.match(s):
            return Const(float(s), REAL)
        if s == "pi":
            return Const(math.pi, REAL)
        t = scope.lookup_var(s)
        if t is None:
            raise _err(f"unbound variable {s}", x)
        return Var(s, t)
    if x.square or not x.items:
        raise _err("expected an expression", x)
    head = _head(x)
    args = x.items[1:]
    if head in ("fn", "lambda"):
        raise _err("procedures may only appear as let-bound values", x)
    if head == "if":
        if len(args) != 3:
            raise _err("if takes three forms", x)
        c, a, b = (_parse(y, scope) for y in args)
        node = If(c, a, b, _if_type(a.type, b.type))
        if c.type is not BOOL:
            raise _err("if: condition is not bool", x)
        if not compatible(a.type, b.type):
            raise _err("if: branch types differ", x)
        return node
    if head == "let":
        if len(args) < 2 or not isinstance(args[0], _List) or not args[0].square:
            raise _err("let needs a binding vector and a body", x)
        binds = args[0].items
        if len(binds) % 2:
            raise _err("let binding vector needs name/value pairs", args[0])
        body = args[1:]
        return _parse_bindings([(binds[i], binds[i + 1]) for i in range(0, len(binds), 2)], body, scope, x)
    if head == "begin":
        defs, body = [], []
        for y in args:
            if _head(y) == "define":
                if body:
                    raise _err("define after a body expression", y)
                if len(y.items) != 3:
                    raise _err("define takes a name and a value", y)
                defs.append((y.items[1], y.items[2]))
            else:
                body.append(y)
        return _parse_bindings(defs, body, scope, x)
    if head == "recur" or (head is not None and head == scope.self_name):
        if scope.proc is None:
            raise _err("recur outside a procedure", x)
        parsed = tuple(_parse(y, scope) for y in args)
        _check_args("recur", scope.proc[0], parsed)
        return Recur(parsed, scope.proc[1])
    if head is None:
        raise _err("expected an operator", x)
    parsed = tuple(_parse(y, scope) for y in args)
    f = scope.lookup_fn(head)
    if f is not None:
        _check_args(head, f[1], parsed)
        return Call(head, parsed, f[2])
    if head in PRIMITIVES:
        want, ret = PRIMITIVES[head]
        _check_args(head, want, parsed)
        return Prim(head, parsed, ret)
    raise _err(f"unknown operator {head}", x)


def _parse_bindings(pairs, body, scope: Scope, where):
    if len(body) != 1:
        raise _err("expected exactly one body expression", where)
    if not pairs:
        return _parse(body[0], scope)
    (name_tok, val), rest = pairs[0], pairs[1:]
    name, declared = _parse_param(name_tok)
    has_type = ":" in name_tok.text
    if _head(val) in ("fn", "lambda"):
        own, params, ret, fbody = _parse_fn_parts(val)
        fn_body = _parse(fbody, scope.enter_proc(params, ret, own))
        if not compatible(ret, fn_body.type):
            raise _err(f"procedure {name} body is {fn_body.type.value}, declared {ret.value}", val)
        inner = _parse_bindings(rest, body, scope.add_fn(name, tuple(t for _, t in params), ret), where)
        return LetFn(name, params, ret, fn_body, inner)
    bound = _parse(val, scope)
    bt = declared if has_type else bound.type
    if not compatible(bt, bound.type):
        raise _err(f"let {name}: bound is {bound.type.value}, declared {bt.value}", val)
    inner = _parse_bindings(rest, body, scope.add_var(name, bt), where)
    return Let(name, bt, bound, inner)


def parse_program(text: str) -> Lambda:
    """Parse program text into a typed ``Lambda``; raises ParseError."""
    forms = _read(_tokenize(text))
    if len(forms) != 1:
        if not forms:
            raise ParseError("empty input", 1, 1)
        raise _err("expected exactly one top-level form", forms[1])
    x = forms[0]
    if _head(x) not in ("fn", "lambda"):
        raise _err("a program must be a fn form", x)
    own, params, ret, body = _parse_fn_parts(x)
    b = _parse(body, Scope().enter_proc(params, ret, own))
    if not compatible(ret, b.type):
        raise _err(f"program body is {b.type.value}, declared {ret.value}", x)
    return Lambda(params, ret, b)


def parse_expr(text: str, scope: Scope = Scope()):
    forms = _read(_tokenize(text))
    if len(forms) != 1:
        raise ParseError("expected exactly one form", 1, 1)
    return _parse(forms[0], scope)
