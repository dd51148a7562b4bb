"""A small arithmetic language for running costs, dynamics and path constraints.

Grammar, lowest to highest precedence::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so ``-2^2``
is ``-4`` and ``2^3^2`` is ``512``.  Names are ``t``, ``y1..y<n_x>`` and
``u1..u<n_u>``.  Evaluation is vectorized: variables may be numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    pass


class ArityError(ExprError):
    pass


class EvaluationError(ExprError):
    pass


class DivisionByZeroError(EvaluationError):
    pass


class NegativeSqrtError(EvaluationError):
    pass


class NonFiniteError(EvaluationError):
    pass


# {{{ syntax tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Node


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    func: str
    arg: Node


Node = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with the arities it was checked against."""

    root: Node
    n_x: int
    n_u: int
    source: str = ""

    def __str__(self) -> str:
        return to_text(self.root)


@dataclass(frozen=True)
class EvalEnv:
    t: float | np.ndarray
    y: tuple | list | np.ndarray = ()
    u: tuple | list | np.ndarray = ()


# }}}


# {{{ parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)
_VARIABLE = re.compile(r"([yu])([1-9][0-9]*)")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        match = _TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append((kind, match.group(kind), start))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n_x: int, n_u: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.n_x = n_x
        self.n_u = n_u

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, value: str):
        kind, text, offset = self.advance()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", offset)

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
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, offset = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            return self.variable(text, offset)
        if (kind, text) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", offset)

    def variable(self, name: str, offset: int) -> Var:
        if name == "t":
            return Var(name)
        match = _VARIABLE.fullmatch(name)
        if match is None:
            raise UnknownIdentifierError(f"unknown identifier {name!r} at offset {offset}")
        index = int(match.group(2))
        limit = self.n_x if match.group(1) == "y" else self.n_u
        if index > limit:
            raise ArityError(
                f"{name!r} at offset {offset} exceeds the declared "
                f"{'state' if match.group(1) == 'y' else 'control'} count {limit}"
            )
        return Var(name)


def parse(text: str, n_x: int = 0, n_u: int = 0) -> Expr:
    """Parse ``text`` with ``n_x`` states and ``n_u`` controls in scope."""
    parser = _Parser(text, n_x, n_u)
    root = parser.expr()
    kind, token, offset = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {token!r}", offset)
    return Expr(root, n_x, n_u, text)


# }}}


# {{{ printing


def to_text(node: Node) -> str:
    """Fully parenthesized source text that parses back to ``node``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# }}}


# {{{ evaluation


def _lookup(name: str, env: EvalEnv):
    if name == "t":
        return env.t
    index = int(name[1:]) - 1
    return env.y[index] if name[0] == "y" else env.u[index]


def _eval(node: Node, env: EvalEnv):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return _lookup(node.name, env)
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        if node.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise NegativeSqrtError(f"sqrt of a negative value in {to_text(node)}")
        return FUNCTIONS[node.func](arg)

    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if np.any(np.asarray(right) == 0):
            raise DivisionByZeroError(f"division by zero in {to_text(node)}")
        return left / right
    return np.power(left, right) if isinstance(left, np.ndarray) else _scalar_pow(
        left, right
    )


def _scalar_pow(left, right):
    if isinstance(right, np.ndarray):
        return np.power(left, right)
    try:
        return float(left) ** float(right)
    except (OverflowError, ZeroDivisionError):
        return np.power(float(left), float(right))


def evaluate(expr: Expr, env: EvalEnv):
    """Evaluate ``expr``; returns a float or an array broadcast from the inputs."""
    if len(env.y) != expr.n_x or len(env.u) != expr.n_u:
        raise ArityError(
            f"environment has {len(env.y)} states and {len(env.u)} controls, "
            f"expression expects {expr.n_x} and {expr.n_u}"
        )
    with np.errstate(all="ignore"):
        value = _eval(expr.root, env)
        if isinstance(value, complex) or not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite value from {expr.source or to_text(expr.root)}")
    if isinstance(value, np.ndarray):
        return value
    return float(value)


# }}}
