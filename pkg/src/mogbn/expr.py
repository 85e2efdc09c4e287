"""Expression mini-language used for densities, link functions and
deterministic relations.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := unary ("^" unary)?
    unary  := "-" unary | atom
    atom   := number | ident | "(" expr ")" | func "(" expr ("," expr)* ")"

Evaluation is vectorised: environment values may be floats or numpy arrays
(broadcast together).  Scalars in, Python float out.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np
from scipy.special import expit, ndtr

from .errors import ExpressionError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

FUNCTIONS = {
    "exp": 1,
    "ln": 1,
    "sqrt": 1,
    "abs": 1,
    "pow": 2,
    "phi": 1,
    "Phi": 1,
    "logistic": 1,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expression = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1
            while col <= n and text[col - 1].isspace():
                col += 1
            raise ExpressionError(
                f"unexpected character {text[col - 1]!r} at column {col} in {text!r}"
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", n + 1))
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

    def error(self, msg, tok):
        raise ExpressionError(f"{msg} at column {tok[2]} in {self.text!r}")

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "end":
            self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)
        return tok

    def parse(self) -> Expression:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected token {tok[1]!r}", tok)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = BinOp(op, left, self.factor())
        return left

    def factor(self):
        base = self.unary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        tok = self.take()
        kind, value = tok[0], tok[1]
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if value not in FUNCTIONS:
                    self.error(f"unknown function {value!r}", tok)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[value]:
                    self.error(
                        f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}", tok
                    )
                return Call(value, tuple(args))
            return Var(value)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"unexpected {value or 'end of input'!r}", tok)


def parse_expression(text: str) -> Expression:
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


# ---------------------------------------------------------- serialization


def _fmt_num(v: float) -> str:
    if v < 0 or not math.isfinite(v):
        raise ExpressionError(f"cannot serialize literal {v!r}")
    return repr(float(v))


def to_string(e: Expression) -> str:
    """Fully parenthesised text form; re-parsing it gives back ``e``."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + to_string(e.arg)
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expression) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    out: set[str] = set()
    for a in e.args:
        out |= variables(a)
    return out


def num(v: float) -> Expression:
    """Literal node that also handles negative values."""
    v = float(v)
    return Neg(Num(-v)) if v < 0 else Num(v)


# ------------------------------------------------------------- evaluation


def _check(bad, what: str, e: Expression):
    if np.any(bad):
        raise ExpressionError(f"{what} in {to_string(e)}")


def _eval(e: Expression, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExpressionError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            _check(np.asarray(b) == 0, "division by zero", e)
            return np.divide(a, b)
        return _power(a, b, e)
    f = e.func
    args = [_eval(a, env) for a in e.args]
    x = args[0]
    if f == "exp":
        return np.exp(x)
    if f == "ln":
        _check(np.asarray(x) <= 0, "ln of nonpositive value", e)
        return np.log(x)
    if f == "sqrt":
        _check(np.asarray(x) < 0, "sqrt of negative value", e)
        return np.sqrt(x)
    if f == "abs":
        return np.abs(x)
    if f == "pow":
        return _power(x, args[1], e)
    if f == "phi":
        return np.exp(-0.5 * np.square(x)) * _INV_SQRT_2PI
    if f == "Phi":
        return ndtr(x)
    if f == "logistic":
        return expit(x)
    raise ExpressionError(f"unknown function {f!r}")


def _power(a, b, e):
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check((a_arr < 0) & (b_arr != np.round(b_arr)), "negative base with fractional exponent", e)
    _check((a_arr == 0) & (b_arr < 0), "division by zero", e)
    return np.power(a_arr, b_arr)


def evaluate(e: Expression, env: Mapping[str, object]):
    """Evaluate ``e``; returns a float for scalar inputs, else an ndarray."""
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if np.ndim(out) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


def evaluate_on(e: Expression, env: Mapping[str, object], shape) -> np.ndarray:
    """Evaluate and broadcast to ``shape`` (constants become filled arrays)."""
    return np.broadcast_to(np.asarray(evaluate(e, env), dtype=float), shape).copy()


# ----------------------------------------------------------------- sympy

def to_sympy(e: Expression, symbols: Mapping[str, object]):
    import sympy as sp

    if isinstance(e, Num):
        return sp.Float(e.value) if e.value != int(e.value) else sp.Integer(int(e.value))
    if isinstance(e, Var):
        return symbols[e.name]
    if isinstance(e, Neg):
        return -to_sympy(e.arg, symbols)
    if isinstance(e, BinOp):
        a, b = to_sympy(e.left, symbols), to_sympy(e.right, symbols)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return a**b
    args = [to_sympy(a, symbols) for a in e.args]
    x = args[0]
    if e.func == "exp":
        return sp.exp(x)
    if e.func == "ln":
        return sp.log(x)
    if e.func == "sqrt":
        return sp.sqrt(x)
    if e.func == "abs":
        return sp.Abs(x)
    if e.func == "pow":
        return x ** args[1]
    if e.func == "phi":
        return sp.exp(-x**2 / 2) / sp.sqrt(2 * sp.pi)
    if e.func == "Phi":
        return (1 + sp.erf(x / sp.sqrt(2))) / 2
    if e.func == "logistic":
        return 1 / (1 + sp.exp(-x))
    raise ExpressionError(f"no sympy form for {e.func}")


def from_sympy(s) -> Expression:
    import sympy as sp

    if s.is_Number:
        return num(float(s))
    if s is sp.pi:
        return Num(math.pi)
    if s is sp.E:
        return Call("exp", (Num(1.0),))
    if s.is_Symbol:
        return Var(s.name)
    if s.is_Add:
        terms = [from_sympy(t) for t in s.as_ordered_terms()]
        out = terms[0]
        for t in terms[1:]:
            out = BinOp("+", out, t)
        return out
    if s.is_Mul:
        factors = [from_sympy(f) for f in s.as_ordered_factors()]
        out = factors[0]
        for f in factors[1:]:
            out = BinOp("*", out, f)
        return out
    if s.is_Pow:
        base, ex = s.args
        if ex == sp.Rational(1, 2):
            return Call("sqrt", (from_sympy(base),))
        if ex == -1:
            return BinOp("/", Num(1.0), from_sympy(base))
        return BinOp("^", from_sympy(base), from_sympy(ex))
    if isinstance(s, sp.exp):
        return Call("exp", (from_sympy(s.args[0]),))
    if isinstance(s, sp.log):
        return Call("ln", (from_sympy(s.args[0]),))
    if isinstance(s, sp.Abs):
        return Call("abs", (from_sympy(s.args[0]),))
    raise ExpressionError(f"cannot express {s} in the expression language")
