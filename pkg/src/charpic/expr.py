"""A small arithmetic expression language for boundary data, curves and f.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary ("^" unary)?          # right associative
    primary := NUMBER | "pi" | NAME | NAME "(" expr ")" | "(" expr ")"

Expressions evaluate elementwise over numpy arrays, so one parsed tree serves
both scalar probes and whole-grid sweeps.

    >>> e = Expr.parse("exp(x+y)", {"x", "y"})
    >>> round(float(e(x=0.3, y=0.4)), 6)
    2.013753
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import (
    EvalDomainError,
    ExprSyntaxError,
    NotDifferentiable,
    UnknownFunction,
    UnknownVariable,
)

ALL_VARIABLES = frozenset({"x", "y", "u", "p", "q"})
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "tanh")
CONSTANTS = {"pi": math.pi}

Number = Union[float, np.ndarray]


@dataclass(frozen=True)
class Const:
    value: float
    text: str = field(default="", compare=False)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Unary, BinOp]


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            start = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(start, f"unexpected character {source[start]!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, allowed_vars):
        self.source = source
        self.allowed = frozenset(allowed_vars)
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.advance()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(pos, f"expected {value!r}, found {found}")

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, f"unexpected token {text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Node:
        kind, text, pos = self.advance()
        if kind == "num":
            return Const(float(text), text)
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunction(text, pos)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in CONSTANTS:
                return Const(CONSTANTS[text], text)
            if text in FUNCTIONS:
                raise ExprSyntaxError(pos, f"function {text!r} needs an argument")
            if text not in self.allowed:
                raise UnknownVariable(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(pos, f"unexpected {found}")


def parse(source: str, allowed_vars: Iterable[str] = ALL_VARIABLES) -> Node:
    """Parse ``source`` into an AST; variables outside ``allowed_vars`` are rejected."""
    if not source or not source.strip():
        raise ExprSyntaxError(0, "empty expression")
    return _Parser(source, allowed_vars).parse()


# --------------------------------------------------------------------------
# evaluation

def _check(value, what):
    if not np.all(np.isfinite(value)):
        raise EvalDomainError(f"non-finite result in {what}")
    return value


def _eval(node: Node, env: Mapping[str, Number]) -> Number:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnknownVariable(node.name) from None
    if isinstance(node, Unary):
        a = _eval(node.operand, env)
        op = node.op
        if op == "neg":
            return -a
        if op == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise EvalDomainError("sqrt of a negative number")
            return np.sqrt(a)
        if op == "abs":
            return np.abs(a)
        return _check(getattr(np, op)(a), op)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return _check(np.multiply(a, b), "*")
    if op == "/":
        if np.any(np.asarray(b) == 0):
            raise EvalDomainError("division by zero")
        return _check(np.divide(a, b), "/")
    return _check(np.power(np.asarray(a, dtype=float), b), "^")


def evaluate(ast: Node, bindings: Mapping[str, Number]) -> Number:
    """Evaluate ``ast``; returns a float for scalar bindings, an array otherwise."""
    with np.errstate(all="ignore"):
        out = _eval(ast, bindings)
        _check(out, "expression")
    if np.ndim(out) == 0:
        return float(out)
    return out


def variables(node: Node) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Const):
        return frozenset()
    if isinstance(node, Unary):
        return variables(node.operand)
    return variables(node.left) | variables(node.right)


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC["neg"]
    return 5


def _const_text(node: Const) -> str:
    if node.text:
        return node.text
    v = node.value
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(node: Node) -> str:
    """Render with the minimal parentheses needed to reparse to the same tree."""
    if isinstance(node, Const):
        if node.value < 0:
            return "(" + _const_text(node) + ")"
        return _const_text(node)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = to_text(node.operand)
            if _prec(node.operand) < _PREC["neg"]:
                inner = f"({inner})"
            return "-" + inner
        return f"{node.op}({to_text(node.operand)})"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p and not (
        isinstance(node.right, Unary) and node.right.op == "neg"
    ):
        right = f"({right})"
    return f"{left}{node.op}{right}"


# --------------------------------------------------------------------------
# symbolic differentiation (used for phi' and a')

ZERO = Const(0.0)
ONE = Const(1.0)


def _add(a, b):
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a, b):
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.operand
    return Unary("neg", a)


def differentiate(node: Node, var: str) -> Node:
    """d(node)/d(var) as a new tree; raises NotDifferentiable for abs and x^g(x)."""
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Unary):
        a = node.operand
        da = differentiate(a, var)
        if da == ZERO:
            return ZERO
        op = node.op
        if op == "neg":
            return _neg(da)
        if op == "sin":
            return _mul(Unary("cos", a), da)
        if op == "cos":
            return _neg(_mul(Unary("sin", a), da))
        if op == "exp":
            return _mul(node, da)
        if op == "sqrt":
            return _div(da, _mul(Const(2.0), node))
        if op == "tanh":
            return _mul(_sub(ONE, BinOp("^", node, Const(2.0))), da)
        raise NotDifferentiable(f"{op} has no derivative in the expression language")
    a, b = node.left, node.right
    da, db = differentiate(a, var), differentiate(b, var)
    op = node.op
    if op == "+":
        return _add(da, db)
    if op == "-":
        return _sub(da, db)
    if op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), BinOp("^", b, Const(2.0)))
    # power
    if db == ZERO:
        if da == ZERO:
            return ZERO
        if isinstance(b, Const):
            expo = a if b.value == 2 else BinOp("^", a, Const(b.value - 1))
            return _mul(_mul(b, expo), da)
        return _mul(_mul(b, BinOp("^", a, _sub(b, ONE))), da)
    if da == ZERO and isinstance(a, Const) and a.value > 0:
        return _mul(_mul(node, Const(math.log(a.value))), db)
    raise NotDifferentiable("power with a variable exponent and variable base")


# --------------------------------------------------------------------------
# user-facing wrapper

class Expr:
    """A parsed expression bound to its allowed variable set.

    Calling it evaluates elementwise; missing allowed variables default to
    nothing, so every variable the tree uses must be passed.
    """

    def __init__(self, ast: Node, allowed_vars=ALL_VARIABLES, source: str | None = None):
        self.ast = ast
        self.allowed = frozenset(allowed_vars)
        self.source = source if source is not None else to_text(ast)
        self.used = variables(ast)

    @classmethod
    def parse(cls, source: str, allowed_vars=ALL_VARIABLES) -> "Expr":
        return cls(parse(source, allowed_vars), allowed_vars, source)

    def __call__(self, **bindings):
        env = {k: v for k, v in bindings.items() if k in self.used}
        out = evaluate(self.ast, env)
        shapes = [np.shape(v) for v in bindings.values()]
        shape = np.broadcast_shapes(*shapes) if shapes else ()
        if shape == () or np.shape(out) == shape:
            return out
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def derivative(self, var: str) -> "Expr":
        return Expr(differentiate(self.ast, var), self.allowed)

    def is_constant(self) -> bool:
        return not self.used

    def __repr__(self):
        return f"Expr({self.source!r})"


# --------------------------------------------------------------------------
# Lipschitz estimation

@dataclass(frozen=True)
class LipschitzBox:
    bounds: dict
    L: float
    sup_abs: float
    per_variable: dict


def estimate_lipschitz(expr, box: Mapping[str, tuple], grid_density: int = 64,
                       xy_density: int = 5) -> LipschitzBox:
    """Estimate the Lipschitz constant of f in v=(u,p,q) over ``box``.

    The constant is taken w.r.t. the sum norm |u|+|p|+|q|, whose dual is the
    max norm, so L is the largest sampled |df/dv_k|.  Partial derivatives use
    central differences on a ``grid_density`` lattice per dependent variable;
    x and y, if used, get ``xy_density`` samples each.
    """
    if isinstance(expr, Expr):
        ast = expr.ast
    else:
        ast = expr
    used = variables(ast)
    missing = [v for v in used if v not in box]
    if missing:
        raise ValueError(f"box does not bound variables {sorted(missing)}")
    bounds = {k: (float(lo), float(hi)) for k, (lo, hi) in box.items()}
    for k, (lo, hi) in bounds.items():
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise ValueError(f"invalid bounds for {k}: {(lo, hi)}")

    dep = [v for v in ("u", "p", "q") if v in used]
    side = [v for v in ("x", "y") if v in used]
    lattice = {v: np.linspace(*bounds[v], grid_density) for v in dep}
    side_vals = {v: np.linspace(*bounds[v], xy_density) for v in side}

    if dep:
        mesh = np.meshgrid(*[lattice[v] for v in dep], indexing="ij")
        dep_pts = {v: m.ravel() for v, m in zip(dep, mesh)}
    else:
        dep_pts = {}
    if side:
        smesh = np.meshgrid(*[side_vals[v] for v in side], indexing="ij")
        side_pts = [dict(zip(side, vals)) for vals in zip(*(m.ravel() for m in smesh))]
    else:
        side_pts = [{}]

    per_var = {v: 0.0 for v in ("u", "p", "q")}
    sup_abs = 0.0
    for sp in side_pts:
        env = dict(dep_pts)
        env.update({k: float(v) for k, v in sp.items()})
        val = evaluate(ast, env)
        sup_abs = max(sup_abs, float(np.max(np.abs(val))))
        for v in dep:
            lo, hi = bounds[v]
            step = 1e-6 * max(1.0, hi - lo)
            plus = dict(env)
            minus = dict(env)
            plus[v] = dep_pts[v] + step
            minus[v] = dep_pts[v] - step
            d = (np.asarray(evaluate(ast, plus)) - np.asarray(evaluate(ast, minus))) / (2 * step)
            per_var[v] = max(per_var[v], float(np.max(np.abs(d))))
    L = max(per_var.values())
    return LipschitzBox(bounds=bounds, L=L, sup_abs=sup_abs, per_variable=per_var)
