"""A small arithmetic language for scalar fields in scenario files.

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          right associative, constant exponent
    atom   := number | name | name '(' args ')' | '(' expr ')'

Variables are ``q1..qm``, ``p1..pm``, ``y1..yn`` and ``t``; ``pi`` is a
constant.  So ``-2^2`` is ``-(2^2)``.  Exponents must not contain
variables.  Evaluation raises EvaluationError on domain faults instead of
propagating NaN or Inf.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, GaugePoissonError

FUNCTIONS: dict[str, int] = {
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "abs": 1,
    "atan2": 2,
    "min": 2,
    "max": 2,
}
CONSTANTS = {"pi": math.pi}
_VAR_RE = re.compile(r"([pqy])([1-9][0-9]*)$")


class ExprError(GaugePoissonError):
    """Parse-time error with 1-based line/column."""

    def __init__(self, message: str, line: int, col: int, kind: str = "syntax"):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col
        self.kind = kind


class ExprEvalError(EvaluationError):
    """Evaluation fault with the offending sub-expression and its position."""

    def __init__(self, message: str, node: "Node | None" = None, point=None):
        where = ""
        if node is not None and node.pos is not None:
            where = f" in '{to_string(node)}' at line {node.pos[0]}, column {node.pos[1]}"
        super().__init__(message + where, point)
        self.node = node


# --- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    kind: str  # 'p', 'q', 'y' or 't'
    index: int  # 0-based; 0 for t


@dataclass(frozen=True)
class Const(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Node, ...]


@dataclass(frozen=True)
class Expression:
    """Parsed expression together with the dimensions it was checked against."""

    root: Node
    dims: tuple[int, int]
    source: str = field(default="", compare=False)

    def __call__(self, ctx: "EvalContext") -> float:
        return evaluate(self, ctx)

    def variables(self) -> set[tuple[str, int]]:
        out: set[tuple[str, int]] = set()
        _walk_vars(self.root, out)
        return out


def _walk_vars(node, out):
    if isinstance(node, Var):
        out.add((node.kind, node.index))
    elif isinstance(node, Neg):
        _walk_vars(node.arg, out)
    elif isinstance(node, BinOp):
        _walk_vars(node.left, out)
        _walk_vars(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _walk_vars(a, out)


# --- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    i, line, col = 0, 1, 1
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if m is None:
            raise ExprError(f"unexpected character {src[i]!r}", line, col)
        text = m.group(0)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, text, line, col))
        for ch in text:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        i = m.end()
    toks.append(_Tok("end", "", line, col))
    return toks


# --- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, src: str, dims: tuple[int, int], allow_t: bool):
        self.toks = _tokenize(src)
        self.i = 0
        self.m, self.n = dims
        self.allow_t = allow_t

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text:
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise ExprError(f"expected {text!r}, found {found}", self.tok.line, self.tok.col)
        return self.advance()

    def parse(self) -> Node:
        if self.tok.kind == "end":
            raise ExprError("empty expression", self.tok.line, self.tok.col)
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprError(f"unexpected {self.tok.text!r}", self.tok.line, self.tok.col)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            t = self.advance()
            node = BinOp(t.text, node, self.term(), pos=(t.line, t.col))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            t = self.advance()
            node = BinOp(t.text, node, self.unary(), pos=(t.line, t.col))
        return node

    def unary(self) -> Node:
        if self.tok.text == "-":
            t = self.advance()
            return Neg(self.unary(), pos=(t.line, t.col))
        if self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.text == "^":
            t = self.advance()
            start = self.tok
            exponent = self.unary()
            probe: set = set()
            _walk_vars(exponent, probe)
            if probe:
                raise ExprError("exponent must be a constant", start.line, start.col, "exponent")
            return BinOp("^", base, exponent, pos=(t.line, t.col))
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text), pos=(t.line, t.col))
        if t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "name":
            self.advance()
            if self.tok.text == "(":
                return self.call(t)
            return self.name(t)
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprError(f"unexpected {found}", t.line, t.col)

    def call(self, t: _Tok) -> Node:
        if t.text not in FUNCTIONS:
            raise ExprError(f"unknown function {t.text!r}", t.line, t.col, "unknown")
        self.expect("(")
        args = []
        if self.tok.text != ")":
            args.append(self.expr())
            while self.tok.text == ",":
                self.advance()
                args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[t.text]:
            raise ExprError(f"{t.text} expects {FUNCTIONS[t.text]} argument(s), got {len(args)}", t.line, t.col,
                            "arity")
        return Call(t.text, tuple(args), pos=(t.line, t.col))

    def name(self, t: _Tok) -> Node:
        if t.text in CONSTANTS:
            return Const(t.text, pos=(t.line, t.col))
        if t.text == "t":
            if not self.allow_t:
                raise ExprError("variable 't' is not available here", t.line, t.col, "unknown")
            return Var("t", 0, pos=(t.line, t.col))
        if t.text in FUNCTIONS:
            raise ExprError(f"function {t.text!r} used without arguments", t.line, t.col, "arity")
        m = _VAR_RE.match(t.text)
        if m is None:
            raise ExprError(f"unknown identifier {t.text!r}", t.line, t.col, "unknown")
        kind, idx = m.group(1), int(m.group(2))
        limit = self.n if kind == "y" else self.m
        if idx > limit:
            raise ExprError(f"variable {t.text} out of range ({kind} has {limit} component(s))", t.line, t.col,
                            "index")
        return Var(kind, idx - 1, pos=(t.line, t.col))


def parse(src: str, dims: tuple[int, int], allow_t: bool = True) -> Expression:
    """Parse ``src`` for a base of dimension m and a fiber of dimension n."""
    if not isinstance(src, str):
        raise ExprError(f"expression must be a string, got {type(src).__name__}", 1, 1)
    m, n = dims
    return Expression(_Parser(src, (int(m), int(n)), allow_t).parse(), (int(m), int(n)), src)


# --- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvalContext:
    m: int
    n: int
    q: Sequence[float] = ()
    p: Sequence[float] = ()
    y: Sequence[float] = ()
    t: float = 0.0

    def __post_init__(self):
        q = np.zeros(self.m) if len(self.q) == 0 and self.m else np.asarray(self.q, float)
        p = np.zeros(self.m) if len(self.p) == 0 and self.m else np.asarray(self.p, float)
        y = np.zeros(self.n) if len(self.y) == 0 and self.n else np.asarray(self.y, float)
        if q.shape != (self.m,) or p.shape != (self.m,) or y.shape != (self.n,):
            raise ValueError(f"bindings do not match dimensions (m={self.m}, n={self.n})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)

    def lookup(self, kind: str, index: int) -> float:
        if kind == "t":
            return float(self.t)
        return float(getattr(self, kind)[index])


def _fault(msg, node):
    raise ExprEvalError(msg, node)


def _pow(a, b, node):
    if a == 0.0 and b < 0:
        _fault("zero raised to a negative power", node)
    if a < 0 and b != int(b):
        _fault("negative base with non-integer exponent", node)
    return a**b


def _div(a, b, node):
    if b == 0.0:
        _fault("division by zero", node)
    return a / b


def _log(a, node):
    if a <= 0.0:
        _fault("log of a non-positive number", node)
    return math.log(a)


def _sqrt(a, node):
    if a < 0.0:
        _fault("sqrt of a negative number", node)
    return math.sqrt(a)


_UNARY = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "abs": abs,
}
_BINARY = {"atan2": math.atan2, "min": min, "max": max}


def _checked(value, node):
    if not math.isfinite(value):
        _fault("non-finite result", node)
    return value


def _compile(node: Node) -> Callable[[EvalContext], float]:
    """Turn the tree into nested closures; each node checks its own faults."""
    if isinstance(node, Num):
        v = node.value
        return lambda ctx: v
    if isinstance(node, Const):
        v = CONSTANTS[node.name]
        return lambda ctx: v
    if isinstance(node, Var):
        kind, idx = node.kind, node.index
        return lambda ctx: ctx.lookup(kind, idx)
    if isinstance(node, Neg):
        f = _compile(node.arg)
        return lambda ctx: -f(ctx)
    if isinstance(node, BinOp):
        fl, fr = _compile(node.left), _compile(node.right)
        op = node.op
        if op == "+":
            return lambda ctx: _checked(fl(ctx) + fr(ctx), node)
        if op == "-":
            return lambda ctx: _checked(fl(ctx) - fr(ctx), node)
        if op == "*":
            return lambda ctx: _checked(fl(ctx) * fr(ctx), node)
        if op == "/":
            return lambda ctx: _checked(_div(fl(ctx), fr(ctx), node), node)
        if op == "^":

            def power(ctx):
                try:
                    return _checked(_pow(fl(ctx), fr(ctx), node), node)
                except OverflowError:
                    _fault("overflow", node)

            return power
    if isinstance(node, Call):
        fs = [_compile(a) for a in node.args]
        name = node.name
        if name == "log":
            return lambda ctx: _log(fs[0](ctx), node)
        if name == "sqrt":
            return lambda ctx: _sqrt(fs[0](ctx), node)
        if name in _UNARY:
            fn = _UNARY[name]

            def unary(ctx):
                try:
                    return _checked(fn(fs[0](ctx)), node)
                except OverflowError:
                    _fault("overflow", node)

            return unary
        fn2 = _BINARY[name]
        return lambda ctx: _checked(fn2(fs[0](ctx), fs[1](ctx)), node)
    raise TypeError(f"unknown node {node!r}")


_COMPILED: dict[int, tuple[Node, Callable]] = {}


def compile_expression(e: Expression) -> Callable[[EvalContext], float]:
    key = id(e.root)
    hit = _COMPILED.get(key)
    if hit is None or hit[0] is not e.root:
        hit = (e.root, _compile(e.root))
        _COMPILED[key] = hit
    return hit[1]


def evaluate(e: Expression, ctx: EvalContext) -> float:
    if (ctx.m, ctx.n) != e.dims:
        raise ValueError(f"context dimensions {(ctx.m, ctx.n)} differ from expression dimensions {e.dims}")
    return float(compile_expression(e)(ctx))


# --- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _print(node: Node) -> tuple[str, int]:
    """Canonical text and the precedence of its top-level operator."""
    if isinstance(node, Num):
        return _fmt_num(node.value), 5
    if isinstance(node, Const):
        return node.name, 5
    if isinstance(node, Var):
        return ("t" if node.kind == "t" else f"{node.kind}{node.index + 1}"), 5
    if isinstance(node, Call):
        return f"{node.name}(" + ", ".join(_print(a)[0] for a in node.args) + ")", 5
    if isinstance(node, Neg):
        s, p = _print(node.arg)
        return "-" + (s if p >= _PREC["neg"] else f"({s})"), _PREC["neg"]
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        ls, lp = _print(node.left)
        rs, rp = _print(node.right)
        if node.op == "^":
            # right associative; a unary minus in the base must be wrapped
            left_ok = lp > prec
            right_ok = rp >= _PREC["neg"]
        else:
            left_ok = lp >= prec
            right_ok = rp > prec
        ls = ls if left_ok else f"({ls})"
        rs = rs if right_ok else f"({rs})"
        sep = "" if node.op == "^" else " "
        return f"{ls}{sep}{node.op}{sep}{rs}", prec
    raise TypeError(f"unknown node {node!r}")


def to_string(e: Expression | Node) -> str:
    return _print(e.root if isinstance(e, Expression) else e)[0]


# --- field helpers --------------------------------------------------------------


def field_qy(e: Expression) -> Callable[[np.ndarray, np.ndarray], float]:
    """Scalar field (q, y) -> value."""
    f = compile_expression(e)
    m, n = e.dims

    def fn(q, y):
        return float(f(EvalContext(m, n, q=q, y=y)))

    return fn


def field_q(e: Expression) -> Callable[[np.ndarray], float]:
    f = compile_expression(e)
    m, n = e.dims
    return lambda q: float(f(EvalContext(m, n, q=q)))


def field_phase(e: Expression) -> Callable[[np.ndarray], float]:
    """Scalar field on flat phase states (p, q, y)."""
    f = compile_expression(e)
    m, n = e.dims

    def fn(x):
        x = np.asarray(x, float)
        return float(f(EvalContext(m, n, p=x[:m], q=x[m : 2 * m], y=x[2 * m :])))

    return fn


def parse_all(sources: Sequence[str] | Mapping, dims, allow_t: bool = False):
    if isinstance(sources, Mapping):
        return {k: parse(v, dims, allow_t) for k, v in sources.items()}
    return [parse(s, dims, allow_t) for s in sources]
