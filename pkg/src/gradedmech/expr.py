"""Scalar expression language with truncated Taylor arithmetic.

Expressions are parsed into small immutable trees.  They can be evaluated
on floats, on :class:`TaylorScalar` jets (exact forward-mode derivatives),
differentiated symbolically, or compiled into plain Python callables.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownVariableError(ParseError):
    pass


class DomainError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Truncated Taylor series


class TaylorScalar:
    """Truncated Taylor series ``sum c_i s^i`` with ``c_i = f^(i)/i!``."""

    __slots__ = ("c",)
    __array_priority__ = 1000

    def __init__(self, coefficients):
        self.c = np.array(coefficients, dtype=float).reshape(-1)

    @classmethod
    def constant(cls, value: float, order: int) -> "TaylorScalar":
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, value: float, order: int, slope: float = 1.0) -> "TaylorScalar":
        c = np.zeros(order + 1)
        c[0] = value
        if order >= 1:
            c[1] = slope
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.size - 1

    @property
    def value(self) -> float:
        return float(self.c[0])

    def derivative(self, i: int = 1) -> float:
        """The i-th derivative at the expansion point."""
        return float(self.c[i] * math.factorial(i))

    def __repr__(self) -> str:
        return f"TaylorScalar({self.c.tolist()})"

    def _lift(self, other) -> "TaylorScalar":
        if isinstance(other, TaylorScalar):
            if other.c.size != self.c.size:
                raise ValueError("jet orders differ")
            return other
        return TaylorScalar.constant(float(other), self.order)

    def __add__(self, other):
        return TaylorScalar(self.c + self._lift(other).c)

    __radd__ = __add__

    def __sub__(self, other):
        return TaylorScalar(self.c - self._lift(other).c)

    def __rsub__(self, other):
        return TaylorScalar(self._lift(other).c - self.c)

    def __neg__(self):
        return TaylorScalar(-self.c)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if not isinstance(other, TaylorScalar):
            return TaylorScalar(self.c * float(other))
        return TaylorScalar(np.convolve(self.c, self._lift(other).c)[: self.c.size])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, TaylorScalar):
            if other == 0:
                raise DomainError("division by zero")
            return TaylorScalar(self.c / float(other))
        return _div(self.c, self._lift(other).c)

    def __rtruediv__(self, other):
        return _div(self._lift(other).c, self.c)

    def __pow__(self, n):
        if isinstance(n, TaylorScalar) or int(n) != n or n < 0:
            raise DomainError("only non-negative integer powers are supported")
        n = int(n)
        result = TaylorScalar.constant(1.0, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def exp(self):
        a = self.c
        e = np.zeros_like(a)
        e[0] = math.exp(a[0])
        for j in range(1, a.size):
            i = np.arange(1, j + 1)
            e[j] = np.dot(i * a[1 : j + 1], e[j - 1 :: -1][: j]) / j
        return TaylorScalar(e)

    def log(self):
        a = self.c
        if a[0] <= 0:
            raise DomainError(f"log of non-positive value {a[0]!r}")
        out = np.zeros_like(a)
        out[0] = math.log(a[0])
        for j in range(1, a.size):
            i = np.arange(1, j)
            acc = np.dot(i * out[1:j], a[j - 1 : 0 : -1]) if j > 1 else 0.0
            out[j] = (a[j] - acc / j) / a[0]
        return TaylorScalar(out)

    def sqrt(self):
        a = self.c
        if a[0] < 0 or (a[0] == 0 and a.size > 1):
            raise DomainError(f"sqrt of non-positive value {a[0]!r}")
        r = np.zeros_like(a)
        r[0] = math.sqrt(a[0])
        for j in range(1, a.size):
            acc = np.dot(r[1:j], r[j - 1 : 0 : -1]) if j > 1 else 0.0
            r[j] = (a[j] - acc) / (2.0 * r[0])
        return TaylorScalar(r)

    def _sincos(self):
        a = self.c
        s = np.zeros_like(a)
        c = np.zeros_like(a)
        s[0], c[0] = math.sin(a[0]), math.cos(a[0])
        for j in range(1, a.size):
            ia = np.arange(1, j + 1) * a[1 : j + 1]
            s[j] = np.dot(ia, c[j - 1 :: -1][:j]) / j
            c[j] = -np.dot(ia, s[j - 1 :: -1][:j]) / j
        return TaylorScalar(s), TaylorScalar(c)

    def sin(self):
        return self._sincos()[0]

    def cos(self):
        return self._sincos()[1]


def _div(a: np.ndarray, b: np.ndarray) -> TaylorScalar:
    if b[0] == 0:
        raise DomainError("division by a series with zero leading coefficient")
    q = np.zeros_like(a)
    for j in range(a.size):
        acc = np.dot(b[1 : j + 1], q[j - 1 :: -1][:j]) if j else 0.0
        q[j] = (a[j] - acc) / b[0]
    return TaylorScalar(q)


def _float_fn(name):
    fn = getattr(math, name)

    def apply(a):
        if isinstance(a, TaylorScalar):
            return getattr(a, name)()
        if name == "log" and a <= 0:
            raise DomainError(f"log of non-positive value {a!r}")
        if name == "sqrt" and a < 0:
            raise DomainError(f"sqrt of negative value {a!r}")
        return fn(a)

    apply.__name__ = name
    return apply


_RUNTIME = {f"_{name}": _float_fn(name) for name in FUNCTIONS}


# ---------------------------------------------------------------------------
# Syntax tree


class Expr:
    """Base class of expression nodes (immutable, hashable)."""

    precedence = 100

    def variables(self) -> set[str]:
        out: set[str] = set()
        for node in self.walk():
            if isinstance(node, Var):
                out.add(node.name)
        return out

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Binary(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


class Add(Binary):
    symbol = "+"


class Sub(Binary):
    symbol = "-"


class Mul(Binary):
    symbol = "*"


class Div(Binary):
    symbol = "/"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def children(self):
        return (self.arg,)


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if not m:
            start = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: set[str] | None):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            where = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {where}", pos)

    def parse(self) -> Expr:
        node = self.sum()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.product()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            kind, text, pos = self.take()
            if kind != "num":
                where = "end of input" if kind == "end" else repr(text)
                raise ParseError(f"exponent must be a non-negative integer literal, found {where}", pos)
            value = float(text)
            if value != int(value) or not re.fullmatch(r"\d+", text):
                raise ParseError(f"non-integer exponent {text!r}", pos)
            base = Pow(base, int(value))
            if self.peek()[1] == "^" and self.peek()[0] == "op":
                raise ParseError("chained exponents need parentheses", self.peek()[2])
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if self.variables is not None and text not in self.variables:
                raise UnknownVariableError(f"unknown variable {text!r}", pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.sum()
            self.expect(")")
            return node
        where = "end of input" if kind == "end" else f"token {text!r}"
        raise ParseError(f"unexpected {where}", pos)


def parse(source: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse ``source``; every variable must belong to ``variables``."""
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty expression", 0)
    names = None if variables is None else set(variables)
    return _Parser(source, names).parse()


# ---------------------------------------------------------------------------
# Printing


def to_source(e: Expr) -> str:
    if isinstance(e, Num):
        text = repr(float(e.value))
        return f"({text})" if e.value < 0 else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if isinstance(e.arg, (Binary, Neg)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        inner = to_source(e.base)
        if not isinstance(e.base, (Num, Var, Call)) or (isinstance(e.base, Num) and e.base.value < 0):
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Binary):
        left, right = to_source(e.left), to_source(e.right)
        if isinstance(e.left, Binary) and _rank(e.left) < _rank(e):
            left = f"({left})"
        if isinstance(e.right, Binary) and _rank(e.right) <= _rank(e):
            right = f"({right})"
        if isinstance(e.right, Neg):
            right = f"({right})"
        if isinstance(e, (Mul, Div)) and isinstance(e.left, Neg):
            left = f"({left})"
        return f"{left} {e.symbol} {right}"
    raise TypeError(f"not an expression: {e!r}")


def _rank(e: Expr) -> int:
    return 1 if isinstance(e, (Add, Sub)) else 2


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(e: Expr, values: Mapping[str, object]):
    """Tree-walking evaluation; works on floats and on TaylorScalar."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return values[e.name]
        except KeyError:
            raise UnknownVariableError(f"unbound variable {e.name!r}", 0) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, values)
    if isinstance(e, Pow):
        return _guard(lambda b: b ** e.exponent, evaluate(e.base, values))
    if isinstance(e, Call):
        return _RUNTIME[f"_{e.func}"](evaluate(e.arg, values))
    a, b = evaluate(e.left, values), evaluate(e.right, values)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(b, (int, float)) and b == 0:
        raise DomainError("division by zero")
    return a / b


def _guard(fn, arg):
    try:
        return fn(arg)
    except (ZeroDivisionError, OverflowError) as exc:
        raise DomainError(str(exc)) from exc


def eval_jet(e: Expr, bindings: Mapping[str, TaylorScalar], order: int) -> TaylorScalar:
    """Taylor expansion of ``e`` along the bound jets, exact through ``order``."""
    for name in e.variables():
        if name not in bindings:
            raise UnknownVariableError(f"unbound variable {name!r}", 0)
        if bindings[name].order != order:
            raise ValueError(f"binding {name!r} has order {bindings[name].order}, expected {order}")
    out = evaluate(e, bindings)
    if not isinstance(out, TaylorScalar):
        out = TaylorScalar.constant(float(out), order)
    return out


def gradient(e: Expr, values: Mapping[str, float], wrt: Sequence[str]) -> np.ndarray:
    """Partial derivatives by one order-1 jet evaluation per seed variable."""
    names = e.variables() | set(wrt)
    base = {name: TaylorScalar.constant(float(values[name]), 1) for name in names if name in values}
    out = np.zeros(len(wrt))
    for i, v in enumerate(wrt):
        if v not in e.variables():
            continue
        seeded = dict(base)
        seeded[v] = TaylorScalar.variable(float(values[v]), 1)
        out[i] = eval_jet(e, seeded, 1).c[1]
    return out


# ---------------------------------------------------------------------------
# Symbolic differentiation (with constant folding so trees stay small)

ZERO = Num(0.0)
ONE = Num(1.0)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Num) and e.value == value


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return Div(a, b)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Num):
        return Num(a.value ** n)
    return Pow(a, n)


def derivative(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to variable ``name``."""
    if name not in e.variables():
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(derivative(e.arg, name))
    if isinstance(e, Add):
        return add(derivative(e.left, name), derivative(e.right, name))
    if isinstance(e, Sub):
        return sub(derivative(e.left, name), derivative(e.right, name))
    if isinstance(e, Mul):
        return add(mul(derivative(e.left, name), e.right), mul(e.left, derivative(e.right, name)))
    if isinstance(e, Div):
        da, db = derivative(e.left, name), derivative(e.right, name)
        return sub(div(da, e.right), div(mul(e.left, db), power(e.right, 2)))
    if isinstance(e, Pow):
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), derivative(e.base, name))
    if isinstance(e, Call):
        inner = derivative(e.arg, name)
        outer = {
            "sin": lambda u: Call("cos", u),
            "cos": lambda u: neg(Call("sin", u)),
            "exp": lambda u: Call("exp", u),
            "log": lambda u: div(ONE, u),
            "sqrt": lambda u: div(ONE, mul(Num(2.0), Call("sqrt", u))),
        }[e.func](e.arg)
        return mul(outer, inner)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, values: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used for named constants)."""
    if isinstance(e, Var):
        return values.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, values))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, values), e.exponent)
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, values))
    return type(e)(substitute(e.left, values), substitute(e.right, values))


# ---------------------------------------------------------------------------
# Compilation


def _emit(e: Expr, slots: Mapping[str, str]) -> str:
    if isinstance(e, Num):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return slots[e.name]
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg, slots)})"
    if isinstance(e, Pow):
        return f"({_emit(e.base, slots)} ** {e.exponent})"
    if isinstance(e, Call):
        return f"_{e.func}({_emit(e.arg, slots)})"
    return f"({_emit(e.left, slots)} {e.symbol} {_emit(e.right, slots)})"


def compile_functions(exprs: Sequence[Expr], variables: Sequence[str]):
    """Compile expressions into one callable ``f(v1, v2, ...) -> tuple``.

    Arguments may be floats or TaylorScalar jets of a common order.
    """
    variables = list(variables)
    known = set(variables)
    for e in exprs:
        missing = e.variables() - known
        if missing:
            raise UnknownVariableError(f"unknown variable {sorted(missing)[0]!r}", 0)
    slots = {name: f"a{i}" for i, name in enumerate(variables)}
    body = ", ".join(_emit(e, slots) for e in exprs)
    args = ", ".join(slots[name] for name in variables)
    source = f"def _compiled({args}):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    namespace = dict(_RUNTIME)
    exec(compile(source, "<expr>", "exec"), namespace)
    raw = namespace["_compiled"]

    def call(*values):
        try:
            return raw(*values)
        except (ZeroDivisionError, OverflowError) as exc:
            raise DomainError(str(exc)) from exc

    call.source = source
    return call


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Num(float(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot convert {value!r} to an expression")
