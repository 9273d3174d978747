"""Tiny arithmetic-expression parser for kernel and weight declarations.

Grammar: numbers, the variables ``tau``/``t``/``r``, operators + - * / ^,
parentheses, and the functions sin, cos, exp, ln, log, sqrt.  Expressions are
compiled to closures over (tau, r); no Python evaluation of untrusted text.
"""

from __future__ import annotations

import math
import re

import numpy as np

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[+\-*/^()]))")

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log, "log": np.log,
    "sqrt": np.sqrt, "tan": np.tan, "sinh": np.sinh, "cosh": np.cosh,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}


class ExpressionError(ValueError):
    pass


def _tokenize(text: str):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise ExpressionError(f"cannot tokenize {text[pos:]!r}")
            break
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, got {val!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"unexpected trailing input {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            if val in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return ("call", val, arg)
            if val in _CONSTS:
                return ("const", _CONSTS[val])
            if val in ("tau", "t"):
                return ("var", "tau")
            if val == "r":
                return ("var", "r")
            raise ExpressionError(f"unknown symbol {val!r}")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError(f"unexpected token {val!r}")


def _evaluate(node, tau, r):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        return tau if node[1] == "tau" else r
    if op == "neg":
        return -_evaluate(node[1], tau, r)
    if op == "call":
        return _FUNCS[node[1]](_evaluate(node[2], tau, r))
    a = _evaluate(node[1], tau, r)
    b = _evaluate(node[2], tau, r)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    if op == "pow":
        return a ** b
    raise ExpressionError(f"bad node {op!r}")


def compile_expression(text: str):
    """Compile to fn(tau, r=0.0) vectorized over tau."""
    node = _Parser(_tokenize(str(text))).parse()

    def fn(tau, r=0.0):
        tau = np.asarray(tau, dtype=float)
        out = _evaluate(node, tau, r)
        return np.broadcast_to(np.asarray(out, dtype=float), tau.shape).copy() \
            if np.ndim(out) == 0 else out
    return fn


def compile_matrix(entries):
    """Compile a nested list of expression strings/numbers to fn(tau, r)."""
    rows = [[compile_expression(e) if isinstance(e, str) else
             (lambda t, r=0.0, v=float(e): np.full(np.shape(t), v))
             for e in row] for row in entries]

    def fn(tau, r=0.0):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.stack([np.stack([f(tau, r) for f in row], axis=1)
                         for row in rows], axis=1)
    return fn
