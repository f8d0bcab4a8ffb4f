"""Expression trees for comparison functions, system maps and guards.

Grammar (precedence high to low)::

    atom    := number | name | name '(' args ')' | '(' expr ')'
    power   := atom ['^' unary]              (right associative)
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

Functions: ``exp ln sqrt abs min max`` and
``piecewise(var <= literal, then, else)`` (also ``<``, ``>=``, ``>``).

Trees are immutable.  They evaluate vectorized over numpy arrays and can be
rendered to scalar Python source for the compiled simulation kernels.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Node", "Num", "Var", "Neg", "BinOp", "Call", "Piecewise", "Opaque",
    "ParseError", "parse_expression", "to_text", "evaluate_node",
    "free_vars", "substitute", "to_scalar_source",
]

FUNCTIONS = {"exp": 1, "ln": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}
COMPARATORS = ("<=", ">=", "<", ">")


class ParseError(ValueError):
    """Malformed expression text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        self.reason = message
        super().__init__(f"{message} at position {position}")


class Node:
    """Base class for expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, _lift(other))

    def __radd__(self, other):
        return BinOp("+", _lift(other), self)

    def __sub__(self, other):
        return BinOp("-", self, _lift(other))

    def __mul__(self, other):
        return BinOp("*", self, _lift(other))

    def __rmul__(self, other):
        return BinOp("*", _lift(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, _lift(other))


def _lift(value) -> Node:
    if isinstance(value, Node):
        return value
    return Num(float(value))


@dataclass(frozen=True, eq=True)
class Num(Node):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Node):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True, eq=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True, eq=True)
class Call(Node):
    name: str
    args: tuple


@dataclass(frozen=True, eq=True)
class Piecewise(Node):
    var: str
    cmp: str
    literal: float
    then: Node
    orelse: Node


@dataclass(frozen=True, eq=False)
class Opaque(Node):
    """A numerically defined function applied to sub-expressions.

    ``func`` takes numpy arrays (one per argument) and returns an array.
    Used for inverses, majorizations and other non closed-form pieces.
    """
    label: str
    func: Callable
    args: tuple


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op><=|>=|[-+*/^(),<>]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
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

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise ParseError(message, tok[2], self.text)

    def expect(self, value):
        if self.tok[1] != value or self.tok[0] == "num":
            found = "end of input" if self.tok[0] == "end" else repr(self.tok[1])
            self.fail(f"expected {value!r}, found {found}")
        return self.advance()

    def parse(self) -> Node:
        if self.tok[0] == "end":
            self.fail("empty expression")
        node = self.expr()
        if self.tok[0] != "end":
            self.fail(f"unexpected token {self.tok[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, _ = self.tok
        if kind == "num":
            self.advance()
            return Num(float(value))
        if kind == "name":
            self.advance()
            if self.tok[1] == "(" and self.tok[0] == "op":
                return self.call(value)
            if value in FUNCTIONS or value == "piecewise":
                self.fail(f"function {value!r} needs an argument list")
            return Var(value)
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.fail("unexpected end of input")
        self.fail(f"unexpected token {value!r}")

    def call(self, name):
        name_tok = self.tokens[self.i - 1]
        self.expect("(")
        if name == "piecewise":
            var_tok = self.tok
            if var_tok[0] != "name":
                self.fail("piecewise condition must start with a variable")
            self.advance()
            if self.tok[1] not in COMPARATORS:
                self.fail("expected a comparison operator")
            cmp = self.advance()[1]
            literal = self.signed_literal()
            self.expect(",")
            then = self.expr()
            self.expect(",")
            orelse = self.expr()
            self.expect(")")
            return Piecewise(var_tok[1], cmp, literal, then, orelse)
        if name not in FUNCTIONS:
            self.fail(f"unknown function {name!r}", name_tok)
        args = [self.expr()]
        while self.tok[1] == "," and self.tok[0] == "op":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            self.fail(f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                      name_tok)
        return Call(name, tuple(args))

    def signed_literal(self):
        sign = 1.0
        if self.tok[1] in ("-", "+") and self.tok[0] == "op":
            sign = -1.0 if self.advance()[1] == "-" else 1.0
        if self.tok[0] != "num":
            self.fail("piecewise condition needs a numeric literal")
        return sign * float(self.advance()[1])


def parse_expression(text: str) -> Node:
    """Parse ``text`` into an expression tree or raise :class:`ParseError`."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(node: Node) -> str:
    """Render a tree back to grammar text that reparses to the same tree."""
    return _text(node, 0)


def _text(node, parent_prec):
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        s = "-" + _text(node.operand, 3)
        return f"({s})" if parent_prec > 3 else s
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        if node.op == "^":
            s = f"{_text(node.left, 5)}^{_text(node.right, 3)}"
        else:
            s = f"{_text(node.left, prec)} {node.op} {_text(node.right, prec + 1)}"
        return f"({s})" if prec < parent_prec else s
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_text(a, 0) for a in node.args)})"
    if isinstance(node, Piecewise):
        return (f"piecewise({node.var} {node.cmp} {_fmt_num(node.literal)}, "
                f"{_text(node.then, 0)}, {_text(node.orelse, 0)})")
    if isinstance(node, Opaque):
        return f"{node.label}({', '.join(_text(a, 0) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# evaluation

_NP_FUNCS = {
    "exp": np.exp, "ln": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "min": np.minimum, "max": np.maximum,
}


def _compare(cmp, a, b):
    if cmp == "<=":
        return a <= b
    if cmp == "<":
        return a < b
    if cmp == ">=":
        return a >= b
    return a > b


def evaluate_node(node: Node, env: Mapping[str, np.ndarray]):
    """Vectorized evaluation; invalid operations produce nan/inf silently."""
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node, env):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise NameError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.true_divide(a, b)
        return np.power(np.asarray(a, dtype=float), b)
    if isinstance(node, Call):
        return _NP_FUNCS[node.name](*(_eval(a, env) for a in node.args))
    if isinstance(node, Piecewise):
        cond = _compare(node.cmp, _eval(Var(node.var), env), node.literal)
        return np.where(cond, _eval(node.then, env), _eval(node.orelse, env))
    if isinstance(node, Opaque):
        return node.func(*(np.asarray(_eval(a, env), dtype=float) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


def free_vars(node: Node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_vars(node.operand)
    if isinstance(node, BinOp):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, (Call, Opaque)):
        out = set()
        for a in node.args:
            out |= free_vars(a)
        return out
    if isinstance(node, Piecewise):
        return {node.var} | free_vars(node.then) | free_vars(node.orelse)
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by sub-trees (simultaneously).

    A piecewise condition variable mapped to a non-variable tree is rewritten
    as ``piecewise`` over a fresh opaque comparison, keeping evaluation exact.
    """
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping),
                     substitute(node.right, mapping))
    if isinstance(node, Call):
        return Call(node.name, tuple(substitute(a, mapping) for a in node.args))
    if isinstance(node, Opaque):
        return Opaque(node.label, node.func,
                      tuple(substitute(a, mapping) for a in node.args))
    if isinstance(node, Piecewise):
        then = substitute(node.then, mapping)
        orelse = substitute(node.orelse, mapping)
        target = mapping.get(node.var)
        if target is None:
            return Piecewise(node.var, node.cmp, node.literal, then, orelse)
        if isinstance(target, Var):
            return Piecewise(target.name, node.cmp, node.literal, then, orelse)
        cmp, lit = node.cmp, node.literal

        def select(cond_arg, a, b, _cmp=cmp, _lit=lit):
            return np.where(_compare(_cmp, cond_arg, _lit), a, b)

        label = f"select[{node.var} {cmp} {_fmt_num(lit)}]"
        return Opaque(label, select, (target, then, orelse))
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# scalar code generation for the simulation kernels

_SCALAR_FUNCS = {
    "exp": "_exp", "ln": "_ln", "sqrt": "_sqrt", "abs": "abs",
    "min": "min", "max": "max",
}


def to_scalar_source(node: Node, varmap: Mapping[str, str]) -> str:
    """Python source for scalar evaluation, using the helpers in ``_accel``.

    ``varmap`` maps variable names to source snippets such as ``x[0]``.
    """
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        try:
            return varmap[node.name]
        except KeyError:
            raise NameError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return f"(-{to_scalar_source(node.operand, varmap)})"
    if isinstance(node, BinOp):
        a = to_scalar_source(node.left, varmap)
        b = to_scalar_source(node.right, varmap)
        if node.op == "/":
            return f"_div({a}, {b})"
        if node.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {node.op} {b})"
    if isinstance(node, Call):
        args = ", ".join(to_scalar_source(a, varmap) for a in node.args)
        return f"{_SCALAR_FUNCS[node.name]}({args})"
    if isinstance(node, Piecewise):
        var = varmap.get(node.var)
        if var is None:
            raise NameError(f"unbound variable {node.var!r}")
        return (f"({to_scalar_source(node.then, varmap)} if {var} {node.cmp} "
                f"{float(node.literal)!r} else {to_scalar_source(node.orelse, varmap)})")
    raise TypeError(f"cannot compile {type(node).__name__} nodes to scalar code")


def parse_many(texts: Sequence[str]) -> tuple:
    return tuple(parse_expression(t) for t in texts)
