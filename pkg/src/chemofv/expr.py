"""Small arithmetic-expression language for custom motility functions.

Grammar (``s`` is the only variable)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "s" | ("exp" | "ln") "(" expr ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so
``-s^2`` is ``-(s^2)``.  ``**`` and ``·`` are accepted as aliases.

Compiled expressions evaluate on floats, numpy arrays, or ``mpmath.mpf``
values; the last is used by the high-precision hypothesis checks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^()·]))"
)

_FUNCS = ("exp", "ln")


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ConfigError(f"unexpected character {text[pos]!r} at column {pos + 1} in {text!r}")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            op = m.group("op")
            op = {"**": "^", "·": "*"}.get(op, op)
            tokens.append(("op", op, m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg):
        col = self.peek()[2] + 1
        raise ConfigError(f"{msg} at column {col} in {self.text!r}")

    def expect(self, op):
        kind, val, _ = self.peek()
        if kind != "op" or val != op:
            self.fail(f"expected {op!r}")
        self.take()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("unexpected trailing input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            operand = self.unary()
            return ("neg", operand) if val == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, val, _ = self.peek()
        if kind == "num":
            self.take()
            return ("num", val)
        if kind == "name":
            if val == "s":
                self.take()
                return ("var",)
            if val in _FUNCS:
                self.take()
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return (val, arg)
            self.fail(f"unknown name {val!r}")
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail("expected a number, 's', a function or '('")


def _is_mp(x):
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def _eval(node, s):
    tag = node[0]
    if tag == "num":
        return mpmath.mpf(node[1]) if _is_mp(s) else node[1]
    if tag == "var":
        return s
    if tag == "neg":
        return -_eval(node[1], s)
    if tag in ("exp", "ln"):
        arg = _eval(node[1], s)
        if _is_mp(arg):
            return mpmath.exp(arg) if tag == "exp" else mpmath.log(arg)
        return np.exp(arg) if tag == "exp" else np.log(arg)
    lhs = _eval(node[1], s)
    rhs = _eval(node[2], s)
    if tag == "+":
        return lhs + rhs
    if tag == "-":
        return lhs - rhs
    if tag == "*":
        return lhs * rhs
    if tag == "/":
        return lhs / rhs
    return lhs ** rhs


@dataclass(frozen=True)
class Expression:
    """A compiled expression in the variable ``s``."""

    source: str
    tree: tuple

    def __call__(self, s):
        if isinstance(s, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                out = _eval(self.tree, s)
            return np.broadcast_to(out, s.shape).astype(float, copy=True)
        return _eval(self.tree, s)

    def __str__(self):
        return self.source


def parse_expression(text: str) -> Expression:
    """Compile ``text``; raises :class:`ConfigError` with the column on failure."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("expression must be a non-empty string")
    return Expression(text.strip(), _Parser(text.strip()).parse())
