"""Expression trees for scalar functions of one variable.

The ODE coefficient functions and everything derived from them are held as
small immutable ASTs.  The module provides an infix parser with standard
precedence, exact symbolic differentiation, scalar and grid evaluation,
and printing that round-trips through the parser.

Rewriting is deliberately limited to constant folding and identity
elimination: correctness rests on evaluation, not canonical forms, and a
fixed tree shape keeps floating point behaviour reproducible.
"""

from __future__ import annotations

import math
import re
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "Expr", "Constant", "Variable", "Add", "Sub", "Mul", "Div", "Pow",
    "Neg", "Abs", "Sign", "Exp", "Ln", "Sqrt", "Sin", "Cos",
    "parse", "evaluate", "evaluate_env", "eval_grid", "differentiate",
    "simplify", "to_text", "const_value",
]

# Printing / parsing precedence levels: ^ binds tighter than unary minus,
# which binds tighter than * and /, which bind tighter than + and -.
_P_ADD = 1
_P_MUL = 2
_P_NEG = 3
_P_POW = 4
_P_ATOM = 9


def _finite(v: float, what: str) -> float:
    if not math.isfinite(v):
        raise DomainError(f"non-finite result from {what}")
    return v


class Expr:
    """Base node.  Instances are immutable and safe to share."""

    __slots__ = ()
    PREC = _P_ATOM

    def ev(self, env: dict) -> float:
        """Evaluate at ``env`` (variable name -> value); raises DomainError."""
        raise NotImplementedError

    def ev_arr(self, env: dict):
        """Vectorized evaluation; non-finite values propagate silently."""
        raise NotImplementedError

    def d(self, var: str = "u") -> "Expr":
        """Raw derivative with respect to ``var`` (not simplified)."""
        raise NotImplementedError

    def simp(self) -> "Expr":
        return self

    def text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.text()

    def __repr__(self) -> str:
        return f"<{type(self).__name__}: {self.text()}>"

    # Trees compare by structure so tests can assert e.g. d(u) == 1.
    def __eq__(self, other) -> bool:
        if not isinstance(other, Expr):
            return NotImplemented
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash((type(self), self._key()))

    def _key(self):
        return tuple(getattr(self, s) for s in self.__slots__)

    # Operator overloads build trees; plain numbers coerce to Constant.
    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __neg__(self):
        return Neg(self)


def _coerce(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Constant(float(v))
    raise TypeError(f"cannot use {type(v).__name__} as an expression")


class Constant(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def ev(self, env):
        return self.value

    def ev_arr(self, env):
        return self.value

    def d(self, var="u"):
        return Constant(0.0)

    def text(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)

    @property
    def PREC(self):  # negative literals print like a unary minus
        return _P_ATOM if self.value >= 0 else _P_NEG


class Variable(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str = "u"):
        self.name = name

    def ev(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise DomainError(f"no value bound for variable '{self.name}'") from None

    def ev_arr(self, env):
        return env[self.name]

    def d(self, var="u"):
        return Constant(1.0 if self.name == var else 0.0)

    def text(self):
        return self.name


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a: Expr, b: Expr):
        self.a = _coerce(a)
        self.b = _coerce(b)


class Add(_Binary):
    PREC = _P_ADD

    def ev(self, env):
        return _finite(self.a.ev(env) + self.b.ev(env), "addition")

    def ev_arr(self, env):
        return self.a.ev_arr(env) + self.b.ev_arr(env)

    def d(self, var="u"):
        return Add(self.a.d(var), self.b.d(var))

    def simp(self):
        a, b = self.a.simp(), self.b.simp()
        if isinstance(a, Constant) and isinstance(b, Constant):
            return _fold(Add(a, b))
        if isinstance(a, Constant) and a.value == 0.0:
            return b
        if isinstance(b, Constant) and b.value == 0.0:
            return a
        return Add(a, b)

    def text(self):
        return f"{_wrap(self.a, _P_ADD)} + {_wrap(self.b, _P_ADD + 1)}"


class Sub(_Binary):
    PREC = _P_ADD

    def ev(self, env):
        return _finite(self.a.ev(env) - self.b.ev(env), "subtraction")

    def ev_arr(self, env):
        return self.a.ev_arr(env) - self.b.ev_arr(env)

    def d(self, var="u"):
        return Sub(self.a.d(var), self.b.d(var))

    def simp(self):
        a, b = self.a.simp(), self.b.simp()
        if isinstance(a, Constant) and isinstance(b, Constant):
            return _fold(Sub(a, b))
        if isinstance(b, Constant) and b.value == 0.0:
            return a
        if isinstance(a, Constant) and a.value == 0.0:
            return Neg(b).simp()
        return Sub(a, b)

    def text(self):
        rhs = self.b
        r = _wrap(rhs, _P_ADD + 1)
        if isinstance(rhs, Neg) or (isinstance(rhs, Constant) and rhs.value < 0):
            r = f"({rhs.text()})"
        return f"{_wrap(self.a, _P_ADD)} - {r}"


class Mul(_Binary):
    PREC = _P_MUL

    def ev(self, env):
        return _finite(self.a.ev(env) * self.b.ev(env), "multiplication")

    def ev_arr(self, env):
        return self.a.ev_arr(env) * self.b.ev_arr(env)

    def d(self, var="u"):
        return Add(Mul(self.a.d(var), self.b), Mul(self.a, self.b.d(var)))

    def simp(self):
        a, b = self.a.simp(), self.b.simp()
        if isinstance(a, Constant) and isinstance(b, Constant):
            return _fold(Mul(a, b))
        for x, y in ((a, b), (b, a)):
            if isinstance(x, Constant):
                if x.value == 0.0:
                    return Constant(0.0)
                if x.value == 1.0:
                    return y
        return Mul(a, b)

    def text(self):
        return f"{_wrap(self.a, _P_MUL)}*{_wrap(self.b, _P_MUL + 1)}"


class Div(_Binary):
    PREC = _P_MUL

    def ev(self, env):
        den = self.b.ev(env)
        if den == 0.0:
            raise DomainError("division by zero")
        return _finite(self.a.ev(env) / den, "division")

    def ev_arr(self, env):
        return self.a.ev_arr(env) / self.b.ev_arr(env)

    def d(self, var="u"):
        num = Sub(Mul(self.a.d(var), self.b), Mul(self.a, self.b.d(var)))
        return Div(num, Mul(self.b, self.b))

    def simp(self):
        a, b = self.a.simp(), self.b.simp()
        if isinstance(a, Constant) and isinstance(b, Constant) and b.value != 0.0:
            return _fold(Div(a, b))
        if isinstance(b, Constant) and b.value == 1.0:
            return a
        return Div(a, b)

    def text(self):
        return f"{_wrap(self.a, _P_MUL)}/{_wrap(self.b, _P_MUL + 1)}"


class Pow(Expr):
    __slots__ = ("base", "exponent")
    PREC = _P_POW

    def __init__(self, base: Expr, exponent: Expr):
        self.base = _coerce(base)
        self.exponent = _coerce(exponent)

    def ev(self, env):
        b = self.base.ev(env)
        e = self.exponent.ev(env)
        try:
            v = math.pow(b, e)
        except (ValueError, OverflowError):
            raise DomainError(f"undefined power {b!r}^{e!r}") from None
        return _finite(v, "power")

    def ev_arr(self, env):
        return np.power(self.base.ev_arr(env), self.exponent.ev_arr(env))

    def d(self, var="u"):
        c = const_value(self.exponent)
        if c is not None:
            # Power rule; keeps fractional powers of abs(...) real-valued.
            return Mul(Mul(Constant(c), Pow(self.base, Constant(c - 1.0))),
                       self.base.d(var))
        # General case b^e * (e' ln b + e b'/b); needs b > 0 to evaluate.
        bracket = Add(Mul(self.exponent.d(var), Ln(self.base)),
                      Div(Mul(self.exponent, self.base.d(var)), self.base))
        return Mul(Pow(self.base, self.exponent), bracket)

    def simp(self):
        b, e = self.base.simp(), self.exponent.simp()
        if isinstance(b, Constant) and isinstance(e, Constant):
            return _fold(Pow(b, e))
        if isinstance(e, Constant):
            if e.value == 1.0:
                return b
            if e.value == 0.0:
                return Constant(1.0)
        if isinstance(b, Constant) and b.value == 1.0:
            return Constant(1.0)
        return Pow(b, e)

    def text(self):
        base = self.base
        b = base.text()
        if base.PREC < _P_ATOM or (isinstance(base, Constant) and base.value < 0):
            b = f"({b})"
        return f"{b}^{_wrap(self.exponent, _P_NEG)}"


class _Unary(Expr):
    __slots__ = ("x",)

    def __init__(self, x: Expr):
        self.x = _coerce(x)

    def simp(self):
        x = self.x.simp()
        node = type(self)(x)
        if isinstance(x, Constant):
            return _fold(node)
        return node


class Neg(_Unary):
    PREC = _P_NEG

    def ev(self, env):
        return -self.x.ev(env)

    def ev_arr(self, env):
        return -self.x.ev_arr(env)

    def d(self, var="u"):
        return Neg(self.x.d(var))

    def text(self):
        inner = self.x
        s = inner.text()
        if inner.PREC < _P_NEG or isinstance(inner, Neg) or \
                (isinstance(inner, Constant) and inner.value < 0):
            s = f"({s})"
        return f"-{s}"


class _Func(_Unary):
    NAME = "?"

    def text(self):
        return f"{self.NAME}({self.x.text()})"


class Abs(_Func):
    NAME = "abs"

    def ev(self, env):
        return abs(self.x.ev(env))

    def ev_arr(self, env):
        return np.abs(self.x.ev_arr(env))

    def d(self, var="u"):
        return Mul(Sign(self.x), self.x.d(var))


class Sign(_Func):
    NAME = "sign"

    def ev(self, env):
        v = self.x.ev(env)
        return float((v > 0.0) - (v < 0.0))

    def ev_arr(self, env):
        return np.sign(self.x.ev_arr(env))

    def d(self, var="u"):
        # Valid away from zeros of the argument; interval machinery keeps
        # a margin from those.
        return Constant(0.0)


class Exp(_Func):
    NAME = "exp"

    def ev(self, env):
        try:
            return _finite(math.exp(self.x.ev(env)), "exp")
        except OverflowError:
            raise DomainError("exp overflow") from None

    def ev_arr(self, env):
        return np.exp(self.x.ev_arr(env))

    def d(self, var="u"):
        return Mul(self, self.x.d(var))


class Ln(_Func):
    NAME = "ln"

    def ev(self, env):
        v = self.x.ev(env)
        if v <= 0.0:
            raise DomainError(f"ln of non-positive value {v!r}")
        return math.log(v)

    def ev_arr(self, env):
        return np.log(self.x.ev_arr(env))

    def d(self, var="u"):
        return Div(self.x.d(var), self.x)


class Sqrt(_Func):
    NAME = "sqrt"

    def ev(self, env):
        v = self.x.ev(env)
        if v < 0.0:
            raise DomainError(f"sqrt of negative value {v!r}")
        return math.sqrt(v)

    def ev_arr(self, env):
        return np.sqrt(self.x.ev_arr(env))

    def d(self, var="u"):
        return Div(self.x.d(var), Mul(Constant(2.0), self))


class Sin(_Func):
    NAME = "sin"

    def ev(self, env):
        return math.sin(self.x.ev(env))

    def ev_arr(self, env):
        return np.sin(self.x.ev_arr(env))

    def d(self, var="u"):
        return Mul(Cos(self.x), self.x.d(var))


class Cos(_Func):
    NAME = "cos"

    def ev(self, env):
        return math.cos(self.x.ev(env))

    def ev_arr(self, env):
        return np.cos(self.x.ev_arr(env))

    def d(self, var="u"):
        return Neg(Mul(Sin(self.x), self.x.d(var)))


def _wrap(e: Expr, min_prec: int) -> str:
    s = e.text()
    return f"({s})" if e.PREC < min_prec else s


def _fold(node: Expr) -> Expr:
    """Fold a node with constant children; left as-is if not evaluable."""
    try:
        v = node.ev({})
    except DomainError:
        return node
    return Constant(v)


# ---------------------------------------------------------------------------
# Parsing

_FUNCTIONS = {
    "abs": Abs, "sign": Sign, "exp": Exp, "ln": Ln,
    "sqrt": Sqrt, "sin": Sin, "cos": Cos,
}

_TOKEN_RE = re.compile(
    r"""(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()])
      | (?P<ws>\s+)
      | (?P<bad>.)""",
    re.VERBOSE,
)


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = set(variables)
        self.tokens = []  # (kind, lexeme, position)
        for m in _TOKEN_RE.finditer(text):
            kind = m.lastgroup
            if kind == "ws":
                continue
            if kind == "bad":
                raise ParseError(f"unknown token {m.group()!r}", m.start())
            self.tokens.append((kind, m.group(), m.start()))
        self.i = 0

    def _peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ("eof", "", max(0, len(self.text) - 1))

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _expect_op(self, op: str):
        kind, lex, pos = self._peek()
        if kind == "op" and lex == op:
            self.i += 1
            return
        raise ParseError(f"expected '{op}'", pos)

    def parse(self) -> Expr:
        e = self._expr()
        kind, lex, pos = self._peek()
        if kind != "eof":
            raise ParseError(f"unexpected {lex!r}", pos)
        return e

    def _expr(self) -> Expr:
        e = self._term()
        while True:
            kind, lex, _ = self._peek()
            if kind == "op" and lex in "+-":
                self.i += 1
                rhs = self._term()
                e = Add(e, rhs) if lex == "+" else Sub(e, rhs)
            else:
                return e

    def _term(self) -> Expr:
        e = self._unary()
        while True:
            kind, lex, _ = self._peek()
            if kind == "op" and lex in "*/":
                self.i += 1
                rhs = self._unary()
                e = Mul(e, rhs) if lex == "*" else Div(e, rhs)
            else:
                return e

    def _unary(self) -> Expr:
        kind, lex, _ = self._peek()
        if kind == "op" and lex == "-":
            self.i += 1
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        kind, lex, _ = self._peek()
        if kind == "op" and lex == "^":
            self.i += 1
            return Pow(base, self._unary())  # right-associative
        return base

    def _atom(self) -> Expr:
        kind, lex, pos = self._next()
        if kind == "num":
            return Constant(float(lex))
        if kind == "name":
            nk, nlex, _ = self._peek()
            if nk == "op" and nlex == "(":
                fn = _FUNCTIONS.get(lex)
                if fn is None:
                    raise ParseError(f"unknown function {lex!r}", pos)
                self.i += 1
                arg = self._expr()
                self._expect_op(")")
                return fn(arg)
            if lex in self.variables:
                return Variable(lex)
            raise ParseError(f"unknown identifier {lex!r}", pos)
        if kind == "op" and lex == "(":
            e = self._expr()
            self._expect_op(")")
            return e
        if kind == "eof":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected {lex!r}", pos)


# ---------------------------------------------------------------------------
# Public API

def parse(text: str, variables: Sequence[str] = ("u",)) -> Expr:
    """Parse infix expression text over the given variable names."""
    return _Parser(text, variables).parse()


def evaluate(e: Expr, u: float) -> float:
    """Evaluate a single-variable expression at ``u``."""
    return float(e.ev({"u": float(u)}))


def evaluate_env(e: Expr, **values: float) -> float:
    """Evaluate with named variable bindings, e.g. ``evaluate_env(e, t=0.5, u=1)``."""
    return float(e.ev({k: float(v) for k, v in values.items()}))


def eval_grid(e: Expr, u: np.ndarray, **extra) -> np.ndarray:
    """Vectorized evaluation over an array of u values.

    Points where the expression is undefined come back as nan/inf instead
    of raising, so callers can mask isolated singularities.
    """
    u = np.asarray(u, dtype=float)
    env = {"u": u}
    env.update(extra)
    with np.errstate(all="ignore"):
        out = e.ev_arr(env)
    out = np.asarray(out, dtype=float)
    if out.shape != u.shape:
        out = np.broadcast_to(out, u.shape).copy()
    return out


def differentiate(e: Expr, var: str = "u") -> Expr:
    """Exact derivative d e / d var, constant-folded."""
    return e.d(var).simp()


def simplify(e: Expr) -> Expr:
    """Constant folding and identity elimination only; value-preserving."""
    return e.simp()


def to_text(e: Expr) -> str:
    """Printable form; ``parse(to_text(e))`` evaluates identically to ``e``."""
    return e.text()


def const_value(e: Expr) -> Optional[float]:
    """Value of a variable-free (sub)expression, or None."""
    try:
        return e.ev({})
    except DomainError:
        return None


def eval_decimal(e: Expr, env: dict, ctx: "decimal.Context"):
    """Evaluate on a Decimal context, for identity checks whose float64
    rounding noise would exceed the tolerance being verified.

    Supports the algebraic nodes plus abs/sign/exp/ln/sqrt; powers need a
    positive base when the exponent is fractional.  Constants convert
    from their floats exactly, so this evaluates the same function the
    double-precision path approximates.
    """
    import decimal

    def rec(node):
        if isinstance(node, Constant):
            return ctx.plus(decimal.Decimal(node.value))
        if isinstance(node, Variable):
            return env[node.name]
        if isinstance(node, Add):
            return ctx.add(rec(node.a), rec(node.b))
        if isinstance(node, Sub):
            return ctx.subtract(rec(node.a), rec(node.b))
        if isinstance(node, Mul):
            return ctx.multiply(rec(node.a), rec(node.b))
        if isinstance(node, Div):
            return ctx.divide(rec(node.a), rec(node.b))
        if isinstance(node, Pow):
            return ctx.power(rec(node.base), rec(node.exponent))
        if isinstance(node, Neg):
            return ctx.minus(rec(node.x))
        if isinstance(node, Abs):
            return ctx.abs(rec(node.x))
        if isinstance(node, Sign):
            v = rec(node.x)
            return decimal.Decimal(0 if v == 0 else (1 if v > 0 else -1))
        if isinstance(node, Exp):
            return ctx.exp(rec(node.x))
        if isinstance(node, Ln):
            return ctx.ln(rec(node.x))
        if isinstance(node, Sqrt):
            return ctx.sqrt(rec(node.x))
        raise DomainError(
            f"{type(node).__name__} is not supported in high precision")

    try:
        return rec(e)
    except (decimal.InvalidOperation, decimal.DivisionByZero,
            decimal.Overflow) as exc:
        raise DomainError(f"high-precision evaluation failed: {exc}") from None
