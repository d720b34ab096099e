"""A tiny expression language for time-dependent coefficients.

Expressions are built from the variable ``t``, real literals, the binary
operators ``+ - * / ^``, unary minus and the functions ``sin cos exp abs
max min``.  Piecewise definitions are written
``piece([b1, ..., bk], [e0, ..., ek])``: ``e0`` is active for ``t < b1``,
``e_i`` on ``[b_i, b_{i+1})`` and ``ek`` for ``t >= bk``.

Parsing uses precedence climbing.  ``^`` binds tighter than unary minus
and is right associative, so ``-t^2`` is ``-(t^2)`` and ``2^3^2`` is
``2^(3^2)``.
"""
from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import DomainError, ExprSyntaxError, StencilOutOfDomain, UnknownIdentifier


# ---------------------------------------------------------------- AST nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "t"


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Piece:
    bounds: tuple
    branches: tuple


FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "abs": (1, 1),
    "max": (2, None),
    "min": (2, None),
}

# binary operator -> (precedence, right associative)
BINARY = {"+": (1, False), "-": (1, False), "*": (2, False), "/": (2, False), "^": (4, True)}
UNARY_PREC = 3


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),\[\]]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int  # byte offset into the UTF-8 source


def _byte_offset(source, index):
    return len(source[:index].encode("utf-8"))


def _tokenize(source):
    toks = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            toks.append(_Tok("end", "", _byte_offset(source, n)))
            return toks
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(_byte_offset(source, pos), ["number", "identifier", "operator"], source)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), _byte_offset(source, start)))
        pos = m.end()


# ---------------------------------------------------------------- parser

class _Parser:
    def __init__(self, source):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        raise ExprSyntaxError(self.tok.offset, expected, self.source)

    def expect(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            return self.advance()
        self.fail([repr(text)])

    def parse(self):
        node = self.expression(0)
        if self.tok.kind != "end":
            self.fail(["operator", "end of input"])
        return node

    def expression(self, min_prec):
        lhs = self.unary()
        while self.tok.kind == "op" and self.tok.text in BINARY:
            prec, right = BINARY[self.tok.text]
            if prec < min_prec:
                break
            op = self.advance().text
            rhs = self.expression(prec if right else prec + 1)
            lhs = BinOp(op, lhs, rhs)
        return lhs

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            arg = self.expression(UNARY_PREC)
            return Neg(arg) if op == "-" else arg
        return self.primary()

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text == "t":
                return Var("t")
            if tok.text == "piece":
                return self.piece()
            if tok.text in FUNCTIONS:
                return self.call(tok)
            raise UnknownIdentifier(tok.text, tok.offset)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expression(0)
            self.expect(")")
            return node
        self.fail(["number", "t", "function", "'('"])

    def call(self, name_tok):
        lo, hi = FUNCTIONS[name_tok.text]
        self.expect("(")
        args = [self.expression(0)]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.expression(0))
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = f"{lo} argument" if hi == lo else f"at least {lo} arguments"
            raise ExprSyntaxError(self.tok.offset, [want + f" for {name_tok.text}"], self.source)
        self.expect(")")
        return Call(name_tok.text, tuple(args))

    def signed_number(self):
        sign = 1.0
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = -1.0 if self.advance().text == "-" else 1.0
        if self.tok.kind != "num":
            self.fail(["number"])
        return sign * float(self.advance().text)

    def piece(self):
        self.expect("(")
        start = self.expect("[").offset
        bounds = []
        if not (self.tok.kind == "op" and self.tok.text == "]"):
            bounds.append(self.signed_number())
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                bounds.append(self.signed_number())
        self.expect("]")
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ExprSyntaxError(start, ["strictly increasing boundary list"], self.source)
        self.expect(",")
        self.expect("[")
        branches = [self.expression(0)]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            branches.append(self.expression(0))
        if len(branches) != len(bounds) + 1:
            raise ExprSyntaxError(self.tok.offset, [f"{len(bounds) + 1} branch expressions"], self.source)
        self.expect("]")
        self.expect(")")
        return Piece(tuple(bounds), tuple(branches))


# ---------------------------------------------------------------- evaluation

def _pow(a, b):
    if b == int(b):
        k = int(b)
        if a == 0.0 and k < 0:
            raise DomainError("0 raised to a negative power")
        try:
            return a ** k
        except OverflowError:
            raise DomainError("overflow in power") from None
    # real exponents are only defined for nonnegative bases
    if a < 0.0:
        raise DomainError("negative base with non-integer exponent")
    if a == 0.0 and b < 0:
        raise DomainError("0 raised to a negative power")
    try:
        return a ** b
    except OverflowError:
        raise DomainError("overflow in power") from None


def _div(a, b):
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        raise DomainError("overflow in exp") from None


_UNARY_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": _exp, "abs": abs}
_BIN_FUNCS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def _compile(node) -> Callable[[float], float]:
    if isinstance(node, Num):
        v = node.value
        return lambda t: v
    if isinstance(node, Var):
        return lambda t: t
    if isinstance(node, Neg):
        f = _compile(node.arg)
        return lambda t: -f(t)
    if isinstance(node, BinOp):
        f, g, op = _compile(node.left), _compile(node.right), _BIN_FUNCS[node.op]
        return lambda t: op(f(t), g(t))
    if isinstance(node, Call):
        fs = [_compile(a) for a in node.args]
        if node.name in _UNARY_FUNCS:
            fn, f0 = _UNARY_FUNCS[node.name], fs[0]
            return lambda t: fn(f0(t))
        red = max if node.name == "max" else min
        return lambda t: red(f(t) for f in fs)
    if isinstance(node, Piece):
        bounds = list(node.bounds)
        fs = [_compile(b) for b in node.branches]
        # bisect_right gives the left-closed convention: t == b_i selects branch i
        return lambda t: fs[bisect.bisect_right(bounds, t)](t)
    raise TypeError(f"unknown node {node!r}")


def _fmt_num(v):
    s = repr(float(v))
    return f"({s})" if s.startswith("-") else s


def to_source(node) -> str:
    """Fully parenthesised source text that parses back to the same tree."""
    if isinstance(node, CoefficientExpr):
        node = node.ast
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Piece):
        bounds = ", ".join(repr(float(b)) for b in node.bounds)
        branches = ", ".join(to_source(b) for b in node.branches)
        return f"piece([{bounds}], [{branches}])"
    raise TypeError(f"unknown node {node!r}")


def _breakpoints(node, acc):
    if isinstance(node, Piece):
        acc.update(node.bounds)
        for b in node.branches:
            _breakpoints(b, acc)
    elif isinstance(node, Neg):
        _breakpoints(node.arg, acc)
    elif isinstance(node, BinOp):
        _breakpoints(node.left, acc)
        _breakpoints(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _breakpoints(a, acc)
    return acc


def _has_var(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, Neg):
        return _has_var(node.arg)
    if isinstance(node, BinOp):
        return _has_var(node.left) or _has_var(node.right)
    if isinstance(node, Call):
        return any(_has_var(a) for a in node.args)
    return True


@dataclass(frozen=True)
class CoefficientExpr:
    """Parsed coefficient a(t); immutable and callable."""

    ast: object
    source: str = ""
    _fn: Callable = field(default=None, repr=False, compare=False)

    def __call__(self, t):
        v = self._fn(float(t))
        if not math.isfinite(v):
            raise DomainError(f"non-finite value at t={t}")
        return v

    def breakpoints(self):
        """Sorted jump locations of every piecewise node in the tree."""
        return sorted(_breakpoints(self.ast, set()))

    @property
    def is_constant(self):
        return not _has_var(self.ast)

    def __str__(self):
        return to_source(self.ast)


def parse(source: str) -> CoefficientExpr:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    ast = _Parser(source).parse()
    return CoefficientExpr(ast, source, _compile(ast))


def from_ast(ast) -> CoefficientExpr:
    return CoefficientExpr(ast, to_source(ast), _compile(ast))


def constant(value: float) -> CoefficientExpr:
    return from_ast(Num(float(value)))


def _as_expr(e):
    return e if isinstance(e, CoefficientExpr) else parse(e)


def evaluate(e, t: float) -> float:
    if not math.isfinite(t):
        raise DomainError("t must be finite")
    return _as_expr(e)(t)


def _stencil(f, t, order, h, direction):
    # direction 0: central, +1 forward, -1 backward; all second order in h
    if direction == 0:
        if order == 1:
            return (f(t + h) - f(t - h)) / (2 * h)
        return (f(t + h) - 2 * f(t) + f(t - h)) / (h * h)
    s = direction
    if order == 1:
        return s * (-3 * f(t) + 4 * f(t + s * h) - f(t + 2 * s * h)) / (2 * h)
    return (2 * f(t) - 5 * f(t + s * h) + 4 * f(t + 2 * s * h) - f(t + 3 * s * h)) / (h * h)


def derivative_fd(e, t: float, order: int, h: float, domain: Sequence[float] | None = None) -> float:
    """Finite-difference derivative of order 1 or 2, Richardson extrapolated once.

    Central differences are used when the stencil fits inside ``domain``
    (no restriction when ``domain`` is None); otherwise a one-sided second
    order stencil pointing into the domain.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not h > 0:
        raise ValueError("h must be positive")
    f = _as_expr(e)
    if domain is None:
        direction = 0
    else:
        a, b = domain
        reach = 2 if order == 1 else 3
        if a <= t - h and t + h <= b:
            direction = 0
        elif a <= t and t + reach * h <= b:
            direction = 1
        elif a <= t - reach * h and t <= b:
            direction = -1
        else:
            raise StencilOutOfDomain(f"no stencil of width {h} fits at t={t} in [{a}, {b}]")
    coarse = _stencil(f, t, order, h, direction)
    fine = _stencil(f, t, order, h / 2, direction)
    return (4 * fine - coarse) / 3


def _rebuild(source):
    return parse(source)


CoefficientExpr.__reduce__ = lambda self: (_rebuild, (to_source(self.ast),))
