"""Scalar expression trees over upper variables x1..xn and lower variables y1..ym.

Grammar (lowest to highest precedence):

    additive        := multiplicative (('+' | '-') multiplicative)*
    multiplicative  := unary (('*' | '/') unary)*
    unary           := '-' unary | power
    power           := atom ('^' ['-'] INTEGER)?
    atom            := NUMBER | VARIABLE | NAME '(' additive ')' | '(' additive ')'

Variables are x<k> / y<k> with 1-based indices; recognized calls are sin, cos,
exp, log, sqrt.  Whitespace is insignificant.  Differentiation is symbolic
with constant folding and 0/1 identities only, so printing and reparsing any
tree built here reproduces it node for node.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ParseError(ValueError):
    """Syntax error with the character offset where scanning stopped."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the domain (division by zero, log/sqrt range, overflow)."""

    def __init__(self, message: str, expr):
        super().__init__(message)
        self.expr = expr


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    axis: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class PowInt:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Expr"


Expr = Const | Var | Neg | Add | Sub | Mul | Div | PowInt | Call

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, v=None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


# ---- smart constructors: constant folding and 0/1 identities only ----

def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b) and b.value != 0.0 and _is_const(a):
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def powi(base: Expr, exponent: int) -> Expr:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if _is_const(base) and not (base.value == 0.0 and exponent < 0):
        try:
            return Const(float(base.value) ** exponent)
        except OverflowError:
            pass
    return PowInt(base, exponent)


def call(name: str, arg: Expr) -> Expr:
    if _is_const(arg):
        try:
            return Const(getattr(math, name)(arg.value))
        except (ValueError, OverflowError):
            pass  # leave the node intact; evaluation will report the domain error
    return Call(name, arg)


# ---- parsing ----

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z]+\d*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


_VAR_RE = re.compile(r"^([xy])(\d+)$")


class _Parser:
    def __init__(self, text: str, n: int, m: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.n = n
        self.m = m

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", off)
        return self.take()

    def parse(self) -> Expr:
        e = self.additive()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", off)
        return e

    def additive(self) -> Expr:
        e = self.multiplicative()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.multiplicative()
                e = add(e, rhs) if text == "+" else sub(e, rhs)
            else:
                return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if text == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            sign = 1
            kind, text, off = self.peek()
            if kind == "op" and text == "-":
                self.take()
                sign = -1
                kind, text, off = self.peek()
            if kind != "num" or not re.fullmatch(r"\d+", text):
                raise ParseError("exponent must be an integer literal", off)
            self.take()
            return powi(base, sign * int(text))
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            m = _VAR_RE.match(text)
            if m:
                axis, idx = m.group(1), int(m.group(2))
                bound = self.n if axis == "x" else self.m
                if not 1 <= idx <= bound:
                    raise IndexError(
                        f"variable {text} out of range ({axis} has {bound} components)"
                    )
                return Var(axis, idx)
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.additive()
                self.expect_op(")")
                return call(text, arg)
            raise ParseError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            e = self.additive()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected token {text!r}" if text else "unexpected end of input", off)


def parse(text: str, n: int, m: int) -> Expr:
    """Parse an expression over x1..xn, y1..ym into a tree.

    Raises ParseError (with character offset) on bad syntax and IndexError
    when a variable index exceeds the declared dimensions.
    """
    return _Parser(text, n, m).parse()


# ---- differentiation ----

def diff(e: Expr, axis: str, index: int) -> Expr:
    """Exact partial derivative with respect to x<index> or y<index>."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if (e.axis == axis and e.index == index) else ZERO
    if isinstance(e, Neg):
        return neg(diff(e.arg, axis, index))
    if isinstance(e, Add):
        return add(diff(e.left, axis, index), diff(e.right, axis, index))
    if isinstance(e, Sub):
        return sub(diff(e.left, axis, index), diff(e.right, axis, index))
    if isinstance(e, Mul):
        return add(
            mul(diff(e.left, axis, index), e.right),
            mul(e.left, diff(e.right, axis, index)),
        )
    if isinstance(e, Div):
        return div(
            sub(
                mul(diff(e.left, axis, index), e.right),
                mul(e.left, diff(e.right, axis, index)),
            ),
            powi(e.right, 2),
        )
    if isinstance(e, PowInt):
        return mul(
            mul(Const(float(e.exponent)), powi(e.base, e.exponent - 1)),
            diff(e.base, axis, index),
        )
    if isinstance(e, Call):
        inner = diff(e.arg, axis, index)
        if e.name == "sin":
            outer = call("cos", e.arg)
        elif e.name == "cos":
            outer = neg(call("sin", e.arg))
        elif e.name == "exp":
            outer = call("exp", e.arg)
        elif e.name == "log":
            return div(inner, e.arg)
        elif e.name == "sqrt":
            return div(inner, mul(Const(2.0), call("sqrt", e.arg)))
        else:  # pragma: no cover - parser restricts names
            raise ValueError(f"unknown function {e.name}")
        return mul(outer, inner)
    raise TypeError(f"not an expression node: {e!r}")


# ---- evaluation ----

def evaluate(e: Expr, x, y) -> float:
    """Evaluate at concrete points, raising DomainError on domain violations."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        vec = x if e.axis == "x" else y
        return float(vec[e.index - 1])
    if isinstance(e, Neg):
        return -evaluate(e.arg, x, y)
    if isinstance(e, Add):
        return evaluate(e.left, x, y) + evaluate(e.right, x, y)
    if isinstance(e, Sub):
        return evaluate(e.left, x, y) - evaluate(e.right, x, y)
    if isinstance(e, Mul):
        return evaluate(e.left, x, y) * evaluate(e.right, x, y)
    if isinstance(e, Div):
        den = evaluate(e.right, x, y)
        if den == 0.0:
            raise DomainError("division by zero", e)
        return evaluate(e.left, x, y) / den
    if isinstance(e, PowInt):
        base = evaluate(e.base, x, y)
        if base == 0.0 and e.exponent < 0:
            raise DomainError("zero raised to a negative power", e)
        try:
            return float(base ** e.exponent)
        except OverflowError:
            raise DomainError("overflow in power", e) from None
    if isinstance(e, Call):
        v = evaluate(e.arg, x, y)
        if e.name == "log" and v <= 0.0:
            raise DomainError(f"log of non-positive value {v}", e)
        if e.name == "sqrt" and v < 0.0:
            raise DomainError(f"sqrt of negative value {v}", e)
        try:
            return getattr(math, e.name)(v)
        except (ValueError, OverflowError):
            raise DomainError(f"{e.name} evaluation failed at {v}", e) from None
    raise TypeError(f"not an expression node: {e!r}")


def evaluate_array(e: Expr, x_cols, y_cols):
    """Vectorized evaluation over numpy arrays (broadcasting, nan-tolerant).

    x_cols and y_cols are sequences of arrays (or scalars), one per variable.
    Domain violations produce nan/inf instead of raising; callers filter.
    """
    with np.errstate(all="ignore"):
        return _eval_array(e, x_cols, y_cols)


def _eval_array(e, x_cols, y_cols):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        cols = x_cols if e.axis == "x" else y_cols
        return cols[e.index - 1]
    if isinstance(e, Neg):
        return -_eval_array(e.arg, x_cols, y_cols)
    if isinstance(e, Add):
        return _eval_array(e.left, x_cols, y_cols) + _eval_array(e.right, x_cols, y_cols)
    if isinstance(e, Sub):
        return _eval_array(e.left, x_cols, y_cols) - _eval_array(e.right, x_cols, y_cols)
    if isinstance(e, Mul):
        return _eval_array(e.left, x_cols, y_cols) * _eval_array(e.right, x_cols, y_cols)
    if isinstance(e, Div):
        return _eval_array(e.left, x_cols, y_cols) / _eval_array(e.right, x_cols, y_cols)
    if isinstance(e, PowInt):
        return np.power(_eval_array(e.base, x_cols, y_cols), float(e.exponent))
    if isinstance(e, Call):
        v = _eval_array(e.arg, x_cols, y_cols)
        if e.name == "log":
            return np.log(np.where(np.asarray(v) > 0, v, np.nan))
        if e.name == "sqrt":
            return np.sqrt(np.where(np.asarray(v) >= 0, v, np.nan))
        return getattr(np, e.name)(v)
    raise TypeError(f"not an expression node: {e!r}")


# ---- printing ----

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_UNARY
    if isinstance(e, PowInt):
        return _PREC_POW
    if isinstance(e, Const) and e.value < 0:
        return _PREC_UNARY  # prints with a leading minus
    return _PREC_ATOM


def _wrap(e: Expr, minimum: int) -> str:
    s = to_string(e)
    return f"({s})" if _prec(e) < minimum else s


def to_string(e: Expr) -> str:
    """Render a tree so that parse(to_string(e)) reproduces it exactly."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"{e.axis}{e.index}"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC_UNARY)
    if isinstance(e, Add):
        return f"{to_string(e.left)} + {_wrap(e.right, _PREC_MUL)}"
    if isinstance(e, Sub):
        return f"{to_string(e.left)} - {_wrap(e.right, _PREC_MUL)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.left, _PREC_MUL)}*{_wrap(e.right, _PREC_UNARY)}"
    if isinstance(e, Div):
        return f"{_wrap(e.left, _PREC_MUL)}/{_wrap(e.right, _PREC_UNARY)}"
    if isinstance(e, PowInt):
        base = _wrap(e.base, _PREC_ATOM)
        return f"{base}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.name}({to_string(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---- compiled bundles ----

@dataclass(frozen=True)
class CompiledFunction:
    """An expression with precomputed symbolic gradient and Hessian trees."""

    expr: Expr
    n: int
    m: int
    _gx: tuple
    _gy: tuple
    _hxx: tuple
    _hxy: tuple
    _hyy: tuple

    @property
    def x_partials(self) -> tuple:
        """Symbolic first-partial trees d/dx1..d/dxn."""
        return self._gx

    @property
    def y_partials(self) -> tuple:
        """Symbolic first-partial trees d/dy1..d/dym."""
        return self._gy

    def value(self, x, y) -> float:
        return evaluate(self.expr, x, y)

    def grad_x(self, x, y) -> np.ndarray:
        return np.array([evaluate(t, x, y) for t in self._gx])

    def grad_y(self, x, y) -> np.ndarray:
        return np.array([evaluate(t, x, y) for t in self._gy])

    def hess_xx(self, x, y) -> np.ndarray:
        return _eval_table(self._hxx, x, y, (self.n, self.n))

    def hess_xy(self, x, y) -> np.ndarray:
        return _eval_table(self._hxy, x, y, (self.n, self.m))

    def hess_yy(self, x, y) -> np.ndarray:
        return _eval_table(self._hyy, x, y, (self.m, self.m))


def _eval_table(table, x, y, shape) -> np.ndarray:
    out = np.zeros(shape)
    for i, row in enumerate(table):
        for k, t in enumerate(row):
            out[i, k] = evaluate(t, x, y)
    return out


def _symmetric_table(grads, axis, size):
    rows = [[None] * size for _ in range(size)]
    for i in range(size):
        for k in range(i, size):
            d = diff(grads[i], axis, k + 1)
            rows[i][k] = d
            rows[k][i] = d  # symmetric by construction
    return tuple(tuple(r) for r in rows)


def compile_expr(e: Expr, n: int, m: int) -> CompiledFunction:
    """Precompute symbolic first and second derivative trees for fast reuse."""
    gx = tuple(diff(e, "x", i + 1) for i in range(n))
    gy = tuple(diff(e, "y", j + 1) for j in range(m))
    hxx = _symmetric_table(gx, "x", n)
    hyy = _symmetric_table(gy, "y", m)
    hxy = tuple(tuple(diff(gx[i], "y", j + 1) for j in range(m)) for i in range(n))
    return CompiledFunction(expr=e, n=n, m=m, _gx=gx, _gy=gy, _hxx=hxx, _hxy=hxy, _hyy=hyy)
