"""Recursive-descent parser and numpy evaluator for scalar expressions.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := base ("^" factor)?
    base   := NUMBER | VAR | FUNC "(" expr ")" | "(" expr ")" | "-" base

``^`` is right-associative and unary minus binds tighter than ``^``, so
``-2^2`` is ``(-2)^2``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, ParseError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class Expression:
    """Base AST node. Subclasses are immutable dataclasses."""

    def evaluate(self, x):
        with np.errstate(over="ignore", invalid="ignore"):
            return self._eval(np.asarray(x, dtype=float))

    def __call__(self, x):
        out = self.evaluate(x)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Expression):
    value: float

    def _eval(self, x):
        return np.full_like(x, self.value)

    def __str__(self):
        s = repr(float(self.value))
        return f"({s})" if self.value < 0 else s


@dataclass(frozen=True)
class Var(Expression):
    name: str

    def _eval(self, x):
        return x.copy()

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expression):
    operand: Expression

    def _eval(self, x):
        return -self.operand._eval(x)

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    def _eval(self, x):
        a = self.left._eval(x)
        b = self.right._eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(b == 0):
                raise EvaluationError(f"division by zero in {self}")
            return a / b
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.power(a, b)
        if np.any(np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)):
            raise EvaluationError(f"power undefined in {self}")
        return out

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression

    def _eval(self, x):
        a = self.arg._eval(x)
        if self.func == "log":
            if np.any(a <= 0):
                raise EvaluationError(f"log of nonpositive value in {self}")
            return np.log(a)
        if self.func == "sqrt":
            if np.any(a < 0):
                raise EvaluationError(f"sqrt of negative value in {self}")
            return np.sqrt(a)
        return getattr(np, self.func)(a)

    def __str__(self):
        return f"{self.func}({self.arg})"


class _Parser:
    def __init__(self, text: str, var: str):
        self.text = text
        self.var = var
        self.tokens = self._tokenize(text)
        self.i = 0

    def _tokenize(self, text):
        tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise ParseError(f"unexpected character {text[start]!r}", start, text)
            kind = m.lastgroup
            start = m.start(kind)
            tokens.append((kind, m.group(kind), start))
            pos = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text == self.var:
                return Var(text)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise ParseError(f"unknown name {text!r} (variable is {self.var!r})", pos, self.text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            return Neg(self.base())
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, {self.var!r}, a function or '(', found {found}", pos, self.text)


def parse_expression(text: str, var: str = "u") -> Expression:
    """Parse ``text`` into an AST over the single variable ``var``."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0, text)
    return _Parser(text, var).parse()
