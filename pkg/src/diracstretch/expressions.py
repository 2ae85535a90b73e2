"""Scalar expression language on a chart.

Small AST over coordinate symbols, real literals, +, -, *, /, unary minus,
integer powers and the functions sin, cos, exp, log. Supports plain
evaluation, forward-mode jets (value plus exact gradient, vectorized over
sample points) and symbolic partial derivatives. No simplification beyond
folding of literal zeros and ones when building derivative trees.

Grammar (also documented in the README):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' int_literal)*
    atom   := number | coord | func '(' expr ')' | '(' expr ')'

Binary operators are left-associative; power binds tighter than unary minus;
exponents must be (optionally signed) integer literals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ModelError

FUNCTIONS = ("sin", "cos", "exp", "log")


class ExprSyntaxError(ModelError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at position {position})")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class EvalDomainError(ModelError):
    def __init__(self, message: str, subexpression: "ScalarExpr"):
        self.subexpression = subexpression
        super().__init__(f"{message} in '{to_source(subexpression)}'")


class ScalarExpr:
    """Base class for expression nodes. Nodes are immutable and hashable."""

    __slots__ = ()

    def __add__(self, other):  return add(self, _wrap(other))
    def __radd__(self, other): return add(_wrap(other), self)
    def __sub__(self, other):  return sub(self, _wrap(other))
    def __rsub__(self, other): return sub(_wrap(other), self)
    def __mul__(self, other):  return mul(self, _wrap(other))
    def __rmul__(self, other): return mul(_wrap(other), self)
    def __truediv__(self, other):  return div(self, _wrap(other))
    def __rtruediv__(self, other): return div(_wrap(other), self)
    def __neg__(self): return neg(self)

    def __repr__(self):
        return f"<expr {to_source(self)}>"


@dataclass(frozen=True, repr=False)
class Num(ScalarExpr):
    value: float


@dataclass(frozen=True, repr=False)
class Var(ScalarExpr):
    index: int
    name: str


@dataclass(frozen=True, repr=False)
class Neg(ScalarExpr):
    arg: ScalarExpr


@dataclass(frozen=True, repr=False)
class Add(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True, repr=False)
class Sub(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True, repr=False)
class Mul(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True, repr=False)
class Div(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True, repr=False)
class Pow(ScalarExpr):
    base: ScalarExpr
    exponent: int


@dataclass(frozen=True, repr=False)
class Call(ScalarExpr):
    fn: str
    arg: ScalarExpr


ZERO = Num(0.0)
ONE = Num(1.0)


def _wrap(value) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    return Num(float(value))


def num(value: float) -> Num:
    return Num(float(value))


def _is_const(e: ScalarExpr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Add(a, b)


def sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Sub(a, b)


def mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Mul(a, b)


def div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def neg(a: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def powi(base: ScalarExpr, exponent: int) -> ScalarExpr:
    exponent = int(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Num):
        return Num(float(base.value) ** exponent)
    return Pow(base, exponent)


def call(fn: str, arg: ScalarExpr) -> ScalarExpr:
    if fn not in FUNCTIONS:
        raise ModelError(f"unknown function '{fn}'")
    return Call(fn, arg)


# ---------------------------------------------------------------------------
# rendering

_PREC = {"add": 1, "mul": 2, "unary": 3, "pow": 4, "atom": 5}


def to_source(expr: ScalarExpr) -> str:
    return _render(expr, 0)


def _render(expr: ScalarExpr, parent_prec: int) -> str:
    if isinstance(expr, Num):
        v = expr.value
        text = repr(v) if v >= 0 else f"({v!r})"
        return text
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        inner = _render(expr.arg, _PREC["unary"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["unary"] else text
    if isinstance(expr, (Add, Sub)):
        op = "+" if isinstance(expr, Add) else "-"
        text = f"{_render(expr.left, _PREC['add'])} {op} {_render(expr.right, _PREC['add'] + 1)}"
        return f"({text})" if parent_prec > _PREC["add"] else text
    if isinstance(expr, (Mul, Div)):
        op = "*" if isinstance(expr, Mul) else "/"
        text = f"{_render(expr.left, _PREC['mul'])}{op}{_render(expr.right, _PREC['mul'] + 1)}"
        return f"({text})" if parent_prec > _PREC["mul"] else text
    if isinstance(expr, Pow):
        text = f"{_render(expr.base, _PREC['pow'] + 1)}^{expr.exponent}"
        return f"({text})" if parent_prec > _PREC["pow"] else text
    if isinstance(expr, Call):
        return f"{expr.fn}({_render(expr.arg, 0)})"
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class JetValue:
    """Value and exact gradient of a scalar expression at one point."""

    value: float
    gradient: tuple[float, ...]


def evaluate(expr: ScalarExpr, point) -> float:
    """Plain value at one point (no derivatives)."""
    point = np.asarray(point, dtype=float)
    return float(_value(expr, point))


def evaluate_grid(expr: ScalarExpr, points: np.ndarray) -> np.ndarray:
    """Values at an array of points, shape (P, n) -> (P,)."""
    points = np.asarray(points, dtype=float)
    out = _value(expr, points.T)  # coords[i] must index coordinate i
    return np.broadcast_to(out, (points.shape[0],)).astype(float).copy()


def _value(expr: ScalarExpr, coords):
    # `coords` is indexable by coordinate number: coords[i] is a scalar or an
    # array over sample points.
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return coords[expr.index]
    if isinstance(expr, Neg):
        return -_value(expr.arg, coords)
    if isinstance(expr, Add):
        return _value(expr.left, coords) + _value(expr.right, coords)
    if isinstance(expr, Sub):
        return _value(expr.left, coords) - _value(expr.right, coords)
    if isinstance(expr, Mul):
        return _value(expr.left, coords) * _value(expr.right, coords)
    if isinstance(expr, Div):
        denom = _value(expr.right, coords)
        if np.any(denom == 0.0):
            raise EvalDomainError("division by zero", expr)
        return _value(expr.left, coords) / denom
    if isinstance(expr, Pow):
        base = _value(expr.base, coords)
        if expr.exponent < 0 and np.any(base == 0.0):
            raise EvalDomainError("zero raised to a negative power", expr)
        return base ** expr.exponent
    if isinstance(expr, Call):
        arg = _value(expr.arg, coords)
        if expr.fn == "sin":
            return np.sin(arg)
        if expr.fn == "cos":
            return np.cos(arg)
        if expr.fn == "exp":
            return np.exp(arg)
        if np.any(arg <= 0.0):
            raise EvalDomainError("log of a non-positive value", expr)
        return np.log(arg)
    raise TypeError(f"not an expression node: {expr!r}")


def eval_jet(expr: ScalarExpr, point) -> JetValue:
    """Value and gradient at one point, exact to machine rounding."""
    point = np.asarray(point, dtype=float)
    vals, grads = eval_jet_grid(expr, point[None, :])
    return JetValue(float(vals[0]), tuple(float(g) for g in grads[0]))


def eval_jet_grid(expr: ScalarExpr, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jets over an array of points: (P, n) -> values (P,), gradients (P, n).

    Forward mode with a vector dual part: one pass carries all n coordinate
    directions at once, which is arithmetic-identical to one dual-number pass
    per direction.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ModelError("points must have shape (P, n)")
    p, n = points.shape
    val, grad = _jet(expr, points, p, n)
    val = np.broadcast_to(val, (p,)).astype(float)
    grad = np.broadcast_to(grad, (p, n)).astype(float)
    return val.copy(), grad.copy()


def _jet(expr: ScalarExpr, points, p, n):
    if isinstance(expr, Num):
        return expr.value, 0.0
    if isinstance(expr, Var):
        g = np.zeros((p, n))
        g[:, expr.index] = 1.0
        return points[:, expr.index], g
    if isinstance(expr, Neg):
        v, g = _jet(expr.arg, points, p, n)
        return -v, -g
    if isinstance(expr, Add):
        va, ga = _jet(expr.left, points, p, n)
        vb, gb = _jet(expr.right, points, p, n)
        return va + vb, ga + gb
    if isinstance(expr, Sub):
        va, ga = _jet(expr.left, points, p, n)
        vb, gb = _jet(expr.right, points, p, n)
        return va - vb, ga - gb
    if isinstance(expr, Mul):
        va, ga = _jet(expr.left, points, p, n)
        vb, gb = _jet(expr.right, points, p, n)
        return va * vb, _col(va) * gb + _col(vb) * ga
    if isinstance(expr, Div):
        va, ga = _jet(expr.left, points, p, n)
        vb, gb = _jet(expr.right, points, p, n)
        if np.any(vb == 0.0):
            raise EvalDomainError("division by zero", expr)
        return va / vb, (ga * _col(vb) - _col(va) * gb) / _col(vb * vb)
    if isinstance(expr, Pow):
        vb, gb = _jet(expr.base, points, p, n)
        k = expr.exponent
        if k < 0 and np.any(vb == 0.0):
            raise EvalDomainError("zero raised to a negative power", expr)
        return vb ** k, float(k) * _col(vb ** (k - 1)) * gb
    if isinstance(expr, Call):
        va, ga = _jet(expr.arg, points, p, n)
        if expr.fn == "sin":
            return np.sin(va), _col(np.cos(va)) * ga
        if expr.fn == "cos":
            return np.cos(va), _col(-np.sin(va)) * ga
        if expr.fn == "exp":
            ev = np.exp(va)
            return ev, _col(ev) * ga
        if np.any(va <= 0.0):
            raise EvalDomainError("log of a non-positive value", expr)
        return np.log(va), ga / _col(va)
    raise TypeError(f"not an expression node: {expr!r}")


def _col(v):
    return v[..., None] if isinstance(v, np.ndarray) else v


# ---------------------------------------------------------------------------
# symbolic differentiation

def diff(expr: ScalarExpr, index: int) -> ScalarExpr:
    """Symbolic partial derivative with respect to coordinate `index`."""
    if isinstance(expr, Num):
        return ZERO
    if isinstance(expr, Var):
        return ONE if expr.index == index else ZERO
    if isinstance(expr, Neg):
        return neg(diff(expr.arg, index))
    if isinstance(expr, Add):
        return add(diff(expr.left, index), diff(expr.right, index))
    if isinstance(expr, Sub):
        return sub(diff(expr.left, index), diff(expr.right, index))
    if isinstance(expr, Mul):
        return add(mul(diff(expr.left, index), expr.right),
                   mul(expr.left, diff(expr.right, index)))
    if isinstance(expr, Div):
        numer = sub(mul(diff(expr.left, index), expr.right),
                    mul(expr.left, diff(expr.right, index)))
        return div(numer, powi(expr.right, 2))
    if isinstance(expr, Pow):
        inner = diff(expr.base, index)
        return mul(mul(num(expr.exponent), powi(expr.base, expr.exponent - 1)), inner)
    if isinstance(expr, Call):
        inner = diff(expr.arg, index)
        if expr.fn == "sin":
            return mul(Call("cos", expr.arg), inner)
        if expr.fn == "cos":
            return neg(mul(Call("sin", expr.arg), inner))
        if expr.fn == "exp":
            return mul(expr, inner)
        return div(inner, expr.arg)
    raise TypeError(f"not an expression node: {expr!r}")


def free_coordinates(expr: ScalarExpr) -> set[int]:
    if isinstance(expr, Num):
        return set()
    if isinstance(expr, Var):
        return {expr.index}
    if isinstance(expr, Neg):
        return free_coordinates(expr.arg)
    if isinstance(expr, (Add, Sub, Mul, Div)):
        return free_coordinates(expr.left) | free_coordinates(expr.right)
    if isinstance(expr, Pow):
        return free_coordinates(expr.base)
    if isinstance(expr, Call):
        return free_coordinates(expr.arg)
    raise TypeError(f"not an expression node: {expr!r}")


def is_constant_expr(expr: ScalarExpr) -> bool:
    return not free_coordinates(expr)


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(source) - len(stripped)
            raise ExprSyntaxError(f"unexpected character '{source[bad_at]}'", bad_at)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, coordinate_index: dict[str, int]):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.coords = coordinate_index

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, at = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected '{op}'", at)
        return self.advance()

    def parse(self) -> ScalarExpr:
        expr = self.expr()
        kind, text, at = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected '{text}'", at)
        return expr

    def expr(self) -> ScalarExpr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = add(node, rhs) if text == "+" else sub(node, rhs)
            else:
                return node

    def term(self) -> ScalarExpr:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.unary()
                node = mul(node, rhs) if text == "*" else div(node, rhs)
            else:
                return node

    def unary(self) -> ScalarExpr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return neg(self.unary())
        return self.power()

    def power(self) -> ScalarExpr:
        node = self.atom()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == "^":
                self.advance()
                node = powi(node, self.int_literal())
            else:
                return node

    def int_literal(self) -> int:
        sign = 1
        kind, text, at = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, at = self.peek()
        if kind != "num" or any(c in text for c in ".eE"):
            raise ExprSyntaxError("exponent must be an integer literal", at)
        self.advance()
        return sign * int(text)

    def atom(self) -> ScalarExpr:
        kind, text, at = self.peek()
        if kind == "num":
            self.advance()
            return num(float(text))
        if kind == "ident":
            self.advance()
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                if text not in FUNCTIONS:
                    if text in self.coords:
                        raise ArityError(f"'{text}' is a coordinate, not a function", at)
                    raise UnknownIdentifierError(f"unknown function '{text}'", at)
                self.advance()
                arg = self.expr()
                kind2, text2, at2 = self.peek()
                if kind2 == "op" and text2 == ",":
                    raise ArityError(f"'{text}' takes exactly one argument", at2)
                self.expect_op(")")
                return Call(text, arg)
            if text in self.coords:
                return Var(self.coords[text], text)
            if text in FUNCTIONS:
                raise ArityError(f"function '{text}' requires an argument list", at)
            raise UnknownIdentifierError(f"unknown identifier '{text}'", at)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", at)
        raise ExprSyntaxError(f"unexpected '{text}'", at)


def parse(source: str, chart) -> ScalarExpr:
    """Parse a scalar expression against a chart's coordinate names.

    `chart` needs only a `coordinate_names` attribute, or may be a plain
    sequence of names.
    """
    names = getattr(chart, "coordinate_names", chart)
    index = {name: i for i, name in enumerate(names)}
    return _Parser(source, index).parse()
