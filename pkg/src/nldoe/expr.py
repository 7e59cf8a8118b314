"""A small expression language for user-defined mean functions.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ('-')* atom)*
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

All binary operators associate to the left, including ``^``.  Functions
are exp, log, log10 and sqrt.  Every name must be declared as a factor or
a parameter.

>>> ast = parse("th0*R + th1", ["th0", "th1"], ["R"])
>>> ast
Add(left=Mul(left=Param(name='th0'), right=Factor(name='R')), right=Param(name='th1'))
>>> to_source(differentiate(ast, "th0"))
'R'
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .core import Model
from .errors import DomainError, EvaluationError, NldoeError

__all__ = [
    "Num", "Factor", "Param", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "ExprSyntaxError", "UndeclaredSymbolError", "UnboundSymbolError",
    "parse", "differentiate", "evaluate", "to_source", "symbols", "ExprModel",
]

FUNCTIONS = ("exp", "log", "log10", "sqrt")
LN10 = math.log(10.0)


class ExprSyntaxError(NldoeError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UndeclaredSymbolError(NldoeError, ValueError):
    def __init__(self, name: str, position: int | None = None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"undeclared symbol {name!r}{where}")
        self.name = name
        self.position = position


class UnboundSymbolError(EvaluationError):
    def __init__(self, name: str):
        super().__init__(f"no value bound for symbol {name!r}")
        self.name = name


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Factor:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Factor, Param, Neg, Add, Sub, Mul, Div, Pow, Call]
_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div, "^": Pow}
_SYMBOL = {cls: op for op, cls in _BINARY.items()}

# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, params, factors):
        self.tokens = _tokenize(source)
        self.i = 0
        self.params = set(params)
        self.factors = set(factors)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)
        return self.take()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _BINARY[op](node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _BINARY[op](node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[:2] == ("op", "^"):
            self.take()
            node = Pow(node, self.exponent())
        return node

    def exponent(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.exponent())
        return self.atom()

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.params:
                return Param(text)
            if text in self.factors:
                return Factor(text)
            raise UndeclaredSymbolError(text, pos)
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"expected an operand, found {found}", pos)


def parse(source: str, params: Sequence[str], factors: Sequence[str]) -> Node:
    """Parse ``source`` into an immutable expression tree."""
    names = list(params) + list(factors)
    if len(set(names)) != len(names):
        raise ValueError("parameter and factor names must be unique and disjoint")
    for name in names:
        if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", name) or name in FUNCTIONS:
            raise ValueError(f"invalid symbol name {name!r}")
    return _Parser(source, params, factors).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node) -> int:
    return _PREC.get(type(node), 5)


def to_source(node: Node) -> str:
    """Render a tree as source text that parses back to the same tree."""
    t = type(node)
    if t is Num:
        return repr(float(node.value))
    if t in (Factor, Param):
        return node.name
    if t is Call:
        return f"{node.func}({to_source(node.arg)})"
    if t is Neg:
        inner = to_source(node.operand)
        return f"-({inner})" if _prec(node.operand) < 3 else f"-{inner}"
    p = _PREC[t]
    left = to_source(node.left)
    right = to_source(node.right)
    if _prec(node.left) < p or (t is Pow and _prec(node.left) == 3):
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left}{_SYMBOL[t]}{right}"


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _num(c: float) -> Node:
    return Neg(Num(-c)) if c < 0 else Num(c)


def _const(node):
    if type(node) is Num:
        return node.value
    if type(node) is Neg and type(node.operand) is Num:
        return -node.operand.value
    return None


def _add(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if ca is not None and cb is not None:
        return _num(ca + cb)
    return Add(a, b)


def _sub(a, b):
    ca, cb = _const(a), _const(b)
    if cb == 0:
        return a
    if ca == 0:
        return _neg(b)
    if ca is not None and cb is not None:
        return _num(ca - cb)
    return Sub(a, b)


def _neg(a):
    c = _const(a)
    if c is not None:
        return _num(-c)
    if type(a) is Neg:
        return a.operand
    return Neg(a)


def _mul(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return _neg(b)
    if cb == -1:
        return _neg(a)
    if ca is not None and cb is not None:
        return _num(ca * cb)
    return Mul(a, b)


def _div(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    return Div(a, b)


def _pow(a, b):
    cb = _const(b)
    if cb == 1:
        return a
    if cb == 0:
        return ONE
    return Pow(a, b)


def symbols(node: Node) -> set[str]:
    t = type(node)
    if t in (Factor, Param):
        return {node.name}
    if t is Num:
        return set()
    if t in (Neg, Call):
        return symbols(node.operand if t is Neg else node.arg)
    return symbols(node.left) | symbols(node.right)


def _depends(node: Node, param: str) -> bool:
    t = type(node)
    if t is Param:
        return node.name == param
    if t in (Num, Factor):
        return False
    if t is Neg:
        return _depends(node.operand, param)
    if t is Call:
        return _depends(node.arg, param)
    return _depends(node.left, param) or _depends(node.right, param)


def differentiate(node: Node, param: str) -> Node:
    """Symbolic partial derivative with light constant folding."""
    if not _depends(node, param):
        return ZERO
    t = type(node)
    if t is Param:
        return ONE
    if t is Neg:
        return _neg(differentiate(node.operand, param))
    if t is Add:
        return _add(differentiate(node.left, param), differentiate(node.right, param))
    if t is Sub:
        return _sub(differentiate(node.left, param), differentiate(node.right, param))
    if t is Mul:
        u, w = node.left, node.right
        return _add(_mul(differentiate(u, param), w), _mul(u, differentiate(w, param)))
    if t is Div:
        u, w = node.left, node.right
        du, dw = differentiate(u, param), differentiate(w, param)
        if _const(dw) == 0:
            return _div(du, w)
        return _div(_sub(_mul(du, w), _mul(u, dw)), _pow(w, Num(2.0)))
    if t is Pow:
        u, w = node.left, node.right
        du = differentiate(u, param)
        if not _depends(w, param):
            return _mul(_mul(w, _pow(u, _sub(w, ONE))), du)
        # u^w = exp(w log u)
        dw = differentiate(w, param)
        inner = _add(_mul(dw, Call("log", u)), _div(_mul(w, du), u))
        return _mul(node, inner)
    if t is Call:
        u = node.arg
        du = differentiate(u, param)
        if node.func == "exp":
            return _mul(du, node)
        if node.func == "log":
            return _div(du, u)
        if node.func == "log10":
            return _div(du, _mul(u, Num(LN10)))
        if node.func == "sqrt":
            return _div(du, _mul(Num(2.0), node))
    raise TypeError(f"cannot differentiate {node!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _power(a: float, b: float) -> float:
    if a == 0.0 and b < 0:
        raise DomainError(f"0 raised to negative power {b}", "^", a)
    if a < 0 and not float(b).is_integer():
        raise DomainError(f"negative base {a} with non-integer exponent {b}", "^", a)
    try:
        return a ** b
    except OverflowError:
        return math.copysign(math.inf, a) if a < 0 and int(b) % 2 else math.inf
    except ZeroDivisionError:
        raise DomainError(f"0 raised to negative power {b}", "^", a) from None


def _call(func: str, x: float) -> float:
    if func == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    if func in ("log", "log10"):
        if x <= 0:
            raise DomainError(f"{func} of non-positive value {x}", func, x)
        return math.log(x) if func == "log" else math.log10(x)
    if func == "sqrt":
        if x < 0:
            raise DomainError(f"sqrt of negative value {x}", func, x)
        return math.sqrt(x)
    raise EvaluationError(f"unknown function {func!r}")


def evaluate(node: Node, env: Mapping[str, float]) -> float:
    """Evaluate a tree; domain violations raise :class:`DomainError`."""
    t = type(node)
    if t is Num:
        return node.value
    if t in (Factor, Param):
        try:
            return float(env[node.name])
        except KeyError:
            raise UnboundSymbolError(node.name) from None
    if t is Neg:
        return -evaluate(node.operand, env)
    if t is Call:
        return _call(node.func, evaluate(node.arg, env))
    a = evaluate(node.left, env)
    b = evaluate(node.right, env)
    if t is Add:
        return a + b
    if t is Sub:
        return a - b
    if t is Mul:
        return a * b
    if t is Div:
        if b == 0.0:
            raise DomainError(f"division by zero (numerator {a})", "/", b)
        return a / b
    return _power(a, b)


# ---------------------------------------------------------------------------
# Model adapter
# ---------------------------------------------------------------------------


class ExprModel(Model):
    """A :class:`~nldoe.core.Model` defined by expression source text."""

    def __init__(self, source: str, params: Sequence[str], factors: Sequence[str], name: str = "expr"):
        super().__init__(params, factors, name)
        self.source = source
        self.ast = parse(source, params, factors)
        self.derivatives = tuple(differentiate(self.ast, p) for p in self.params)

    def _env(self, point, theta):
        point = np.ravel(point)
        theta = np.ravel(theta)
        if point.size != self.v or theta.size != self.p:
            raise ValueError(f"expected {self.v} factors and {self.p} parameters")
        env = dict(zip(self.factors, map(float, point)))
        env.update(zip(self.params, map(float, theta)))
        return env

    def mean(self, point, theta) -> float:
        return evaluate(self.ast, self._env(point, theta))

    def gradient(self, point, theta) -> np.ndarray:
        env = self._env(point, theta)
        return np.array([evaluate(d, env) for d in self.derivatives])

    def spec(self) -> dict:
        return {"expr": self.source, "params": list(self.params), "factors": list(self.factors)}
