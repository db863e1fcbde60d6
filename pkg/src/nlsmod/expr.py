"""Tiny complex-expression language for the scattering function f_0(z).

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = ("+" | "-") , unary | power ;
    power   = atom , [ "^" , unary ] ;
    atom    = number | "i" | "z" | "pi" | name , "(" , expr , ")" | "(" , expr , ")" ;
    number  = digits , [ "." , digits ] , [ ("e" | "E") , [ "+" | "-" ] , digits ] , [ "i" ] ;

Implicit multiplication is not supported (write ``2*z``), but a number may
carry a trailing ``i`` (``2.5i``).  Functions: ``exp``, ``log``, ``sqrt``
(principal branches).  Trees evaluate on scalars or numpy arrays.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("exp", "log", "sqrt")


class ExprError(ValueError):
    """Parse or evaluation error; ``position`` is a 0-based column when known."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class Node:
    def eval(self, z):
        raise NotImplementedError

    def diff(self) -> Node:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Node):
    value: complex

    def eval(self, z):
        if isinstance(z, np.ndarray):
            return np.full(z.shape, self.value, dtype=complex)
        return complex(self.value)

    def diff(self):
        return Const(0j)

    def __str__(self):
        v = complex(self.value)
        if v.imag == 0:
            return _fmt(v.real)
        if v.real == 0:
            return f"{_fmt(v.imag)}i"
        sign = "+" if v.imag >= 0 or math.isnan(v.imag) else "-"
        return f"({_fmt(v.real)}{sign}{_fmt(abs(v.imag))}i)"


@dataclass(frozen=True)
class Var(Node):
    def eval(self, z):
        return z

    def diff(self):
        return Const(1 + 0j)

    def __str__(self):
        return "z"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def eval(self, z):
        return -self.arg.eval(z)

    def diff(self):
        return neg(self.arg.diff())

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def eval(self, z):
        a = self.left.eval(z)
        b = self.right.eval(z)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return _power(a, b)

    def diff(self):
        u, v = self.left, self.right
        du, dv = u.diff(), v.diff()
        if self.op == "+":
            return add(du, dv)
        if self.op == "-":
            return sub(du, dv)
        if self.op == "*":
            return add(mul(du, v), mul(u, dv))
        if self.op == "/":
            return div(sub(mul(du, v), mul(u, dv)), power(v, Const(2 + 0j)))
        # power
        if isinstance(v, Const):
            return mul(mul(v, power(u, Const(v.value - 1))), du)
        # d(u^v) = u^v (v' log u + v u'/u)
        return mul(self, add(mul(dv, Func("log", u)), div(mul(v, du), u)))

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node

    def eval(self, z):
        a = self.arg.eval(z)
        if isinstance(a, np.ndarray):
            return getattr(np, self.name)(a.astype(complex))
        return getattr(cmath, self.name)(complex(a))

    def diff(self):
        da = self.arg.diff()
        if self.name == "exp":
            return mul(self, da)
        if self.name == "log":
            return div(da, self.arg)
        return div(da, mul(Const(2 + 0j), self))

    def __str__(self):
        return f"{self.name}({self.arg})"


def _fmt(x: float) -> str:
    return repr(float(x))


def _power(a, b):
    if isinstance(b, complex) and b.imag == 0 and b.real == int(b.real) and abs(b.real) < 64:
        n = int(b.real)
        return a**n
    return a**b


# constructors with constant folding
def _is(node: Node, value: complex) -> bool:
    return isinstance(node, Const) and node.value == value


def add(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is(a, 0) or _is(b, 0):
        return Const(0j)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is(a, 0):
        return Const(0j)
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def power(a: Node, b: Node) -> Node:
    if _is(b, 0):
        return Const(1 + 0j)
    if _is(b, 1):
        return a
    return BinOp("^", a, b)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            ws = len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprError(f"unexpected character {text[pos + ws]!r}", pos + ws)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("+", "-"):
            self.take()
            arg = self.unary()
            return neg(arg) if val == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            if val.endswith("i"):
                return Const(complex(0, float(val[:-1])))
            return Const(complex(float(val)))
        if kind == "name":
            if val == "z":
                return Var()
            if val == "i":
                return Const(1j)
            if val == "pi":
                return Const(complex(math.pi))
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            raise ExprError(f"unknown identifier {val!r}", pos)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprError("unexpected end of input", pos)
        raise ExprError(f"unexpected token {val!r}", pos)


def parse(text: str) -> Node:
    """Parse ``text`` into an expression tree over the variable ``z``."""
    return _Parser(text).parse()


def affine_coefficients(node: Node) -> tuple[complex, complex] | None:
    """Return (a, b) if ``node`` is exactly a*z + b, else None."""
    if isinstance(node, Const):
        return 0j, complex(node.value)
    if isinstance(node, Var):
        return 1 + 0j, 0j
    if isinstance(node, Neg):
        ab = affine_coefficients(node.arg)
        return None if ab is None else (-ab[0], -ab[1])
    if isinstance(node, BinOp):
        left = affine_coefficients(node.left)
        right = affine_coefficients(node.right)
        if left is None or right is None:
            return None
        (a1, b1), (a2, b2) = left, right
        if node.op == "+":
            return a1 + a2, b1 + b2
        if node.op == "-":
            return a1 - a2, b1 - b2
        if node.op == "*" and (a1 == 0 or a2 == 0):
            return a1 * b2 + a2 * b1, b1 * b2
        if node.op == "/" and a2 == 0 and b2 != 0:
            return a1 / b2, b1 / b2
    return None


def walk(node: Node):
    yield node
    for child in ("arg", "left", "right"):
        sub_node = getattr(node, child, None)
        if sub_node is not None:
            yield from walk(sub_node)
