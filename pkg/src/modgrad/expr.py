"""Expression parsing and forward-mode automatic differentiation.

Scalar expressions over the variables x1..xn and (optionally) the time
symbol t.  Gradients and Hessians are exact forward-mode derivatives via
dual numbers: one evaluation pass per variable for the gradient, one pass
per (i, j) pair with nested duals for the Hessian.

Grammar (precedence low to high: +,- < *,/ < unary minus < ^):

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ['^' exponent]
    exponent := ['-'] NUMBER | '(' ['-'] NUMBER ')'
    atom     := NUMBER | VARIABLE | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC     := 'exp' | 'ln' | 'sin' | 'cos' | 'sqrt'

Numeric literals use decimal or scientific notation.  There is no implicit
multiplication ("2x1" is a syntax error), and exponents are numeric
literals, not sub-expressions.  Integer exponents are evaluated by repeated
multiplication so dual arithmetic stays exact on polynomials; real
exponents go through exp(e*ln(base)) and require a positive base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvalDomainError, ParseError

__all__ = ["Expression", "parse", "ParseError", "EvalDomainError"]


# -- dual numbers ----------------------------------------------------------


class Dual:
    """a + b*eps with eps^2 = 0.  Components may themselves be Duals,
    which is how second derivatives are obtained (nested seeding)."""

    __slots__ = ("re", "du")

    def __init__(self, re, du):
        self.re = re
        self.du = du

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.du + other.du)
        return Dual(self.re + other, self.du)

    def __radd__(self, other):
        return Dual(other + self.re, self.du)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.du - other.du)
        return Dual(self.re - other, self.du)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re)
        return Dual(self.re * other, self.du * other)

    def __rmul__(self, other):
        return Dual(other * self.re, other * self.du)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.re
            return Dual(self.re * inv, (self.du - self.re * inv * other.du) * inv)
        return Dual(self.re / other, self.du / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.re
        v = other * inv
        return Dual(v, -v * inv * self.du)

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"


def _real(v):
    """Innermost real value of a possibly nested dual."""
    while isinstance(v, Dual):
        v = v.re
    return v


def _deriv(v):
    return v.du if isinstance(v, Dual) else 0.0


def _exp(v):
    if isinstance(v, Dual):
        e = _exp(v.re)
        return Dual(e, v.du * e)
    return math.exp(v)


def _ln(v):
    if isinstance(v, Dual):
        return Dual(_ln(v.re), v.du / v.re)
    if v <= 0.0:
        raise EvalDomainError("ln of non-positive argument")
    return math.log(v)


def _sin(v):
    if isinstance(v, Dual):
        return Dual(_sin(v.re), v.du * _cos(v.re))
    return math.sin(v)


def _cos(v):
    if isinstance(v, Dual):
        return Dual(_cos(v.re), -v.du * _sin(v.re))
    return math.cos(v)


def _sqrt(v):
    if isinstance(v, Dual):
        s = _sqrt(v.re)
        return Dual(s, v.du / (2.0 * s))
    if v < 0.0:
        raise EvalDomainError("sqrt of negative argument")
    if v == 0.0:
        # fine for plain evaluation; the dual branch above would divide by 0
        return 0.0
    return math.sqrt(v)


def _ipow(v, n):
    """v**n by repeated (binary) multiplication; exact for duals."""
    if n < 0:
        return 1.0 / _ipow(v, -n)
    r = 1.0
    p = v
    while n:
        if n & 1:
            r = r * p
        if n > 1:
            p = p * p
        n >>= 1
    return r


_SCALAR_FUNCS = {"exp": _exp, "ln": _ln, "sin": _sin, "cos": _cos, "sqrt": _sqrt}
_ARRAY_FUNCS = {"exp": np.exp, "ln": np.log, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}


# -- AST -------------------------------------------------------------------
# ev evaluates with scalar (float or Dual) inputs; eva with numpy arrays,
# where domain violations become NaN/inf instead of raising.


@dataclass(frozen=True, slots=True)
class Const:
    value: float

    def ev(self, xs, t):
        return self.value

    def eva(self, xs, t):
        return self.value

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True, slots=True)
class Var:
    index: int  # 0-based

    def ev(self, xs, t):
        return xs[self.index]

    def eva(self, xs, t):
        return xs[self.index]

    def __str__(self):
        return f"x{self.index + 1}"


@dataclass(frozen=True, slots=True)
class TimeVar:
    def ev(self, xs, t):
        return t

    def eva(self, xs, t):
        return t

    def __str__(self):
        return "t"


@dataclass(frozen=True, slots=True)
class Add:
    a: object
    b: object

    def ev(self, xs, t):
        return self.a.ev(xs, t) + self.b.ev(xs, t)

    def eva(self, xs, t):
        return self.a.eva(xs, t) + self.b.eva(xs, t)

    def __str__(self):
        return f"{_src(self.a, 1)} + {_src(self.b, 1)}"


@dataclass(frozen=True, slots=True)
class Sub:
    a: object
    b: object

    def ev(self, xs, t):
        return self.a.ev(xs, t) - self.b.ev(xs, t)

    def eva(self, xs, t):
        return self.a.eva(xs, t) - self.b.eva(xs, t)

    def __str__(self):
        return f"{_src(self.a, 1)} - {_src(self.b, 2)}"


@dataclass(frozen=True, slots=True)
class Mul:
    a: object
    b: object

    def ev(self, xs, t):
        return self.a.ev(xs, t) * self.b.ev(xs, t)

    def eva(self, xs, t):
        return self.a.eva(xs, t) * self.b.eva(xs, t)

    def __str__(self):
        return f"{_src(self.a, 2)} * {_src(self.b, 2)}"


@dataclass(frozen=True, slots=True)
class Div:
    a: object
    b: object

    def ev(self, xs, t):
        num = self.a.ev(xs, t)
        den = self.b.ev(xs, t)
        try:
            return num / den
        except ZeroDivisionError:
            raise EvalDomainError(f"division by zero in '{self}'") from None

    def eva(self, xs, t):
        return self.a.eva(xs, t) / self.b.eva(xs, t)

    def __str__(self):
        return f"{_src(self.a, 2)} / {_src(self.b, 3)}"


@dataclass(frozen=True, slots=True)
class Neg:
    a: object

    def ev(self, xs, t):
        return -self.a.ev(xs, t)

    def eva(self, xs, t):
        return -self.a.eva(xs, t)

    def __str__(self):
        return f"-{_src(self.a, 3)}"


@dataclass(frozen=True, slots=True)
class Pow:
    base: object
    exponent: float
    integral: bool

    def ev(self, xs, t):
        b = self.base.ev(xs, t)
        if self.integral:
            try:
                return _ipow(b, int(self.exponent))
            except ZeroDivisionError:
                raise EvalDomainError(
                    f"zero base with negative exponent in '{self}'"
                ) from None
        if _real(b) <= 0.0:
            raise EvalDomainError(f"non-positive base for real exponent in '{self}'")
        return _exp(self.exponent * _ln(b))

    def eva(self, xs, t):
        b = self.base.eva(xs, t)
        if self.integral:
            return np.power(b, int(self.exponent))
        return np.power(b, self.exponent)

    def __str__(self):
        e = self.exponent
        etxt = repr(int(e)) if self.integral else repr(e)
        if e < 0:
            etxt = f"({etxt})"
        return f"{_src(self.base, 4)}^{etxt}"


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    a: object

    def ev(self, xs, t):
        v = self.a.ev(xs, t)
        try:
            return _SCALAR_FUNCS[self.func](v)
        except EvalDomainError as exc:
            raise EvalDomainError(f"{exc} in '{self}'") from None
        except OverflowError:
            raise EvalDomainError(f"overflow in '{self}'") from None

    def eva(self, xs, t):
        return _ARRAY_FUNCS[self.func](self.a.eva(xs, t))

    def __str__(self):
        return f"{self.func}({self.a})"


def _src(node, level):
    """Render *node*, parenthesizing when its precedence is below *level*."""
    prec = _PRECEDENCE[type(node)]
    txt = str(node)
    if prec < level or (level >= 4 and txt.startswith("-")):
        return f"({txt})"
    return txt


_PRECEDENCE = {
    Add: 1,
    Sub: 1,
    Mul: 2,
    Div: 2,
    Neg: 3,
    Pow: 4,
    Call: 5,
    Const: 5,
    Var: 5,
    TimeVar: 5,
}


def _collect_refs(node, vars_out):
    """Record referenced variable indices; return True if t is referenced."""
    if isinstance(node, Var):
        vars_out.add(node.index)
        return False
    if isinstance(node, TimeVar):
        return True
    if isinstance(node, (Const,)):
        return False
    if isinstance(node, (Neg, Call)):
        return _collect_refs(node.a, vars_out)
    if isinstance(node, Pow):
        return _collect_refs(node.base, vars_out)
    used_t = _collect_refs(node.a, vars_out)
    return _collect_refs(node.b, vars_out) or used_t


# -- tokenizer -------------------------------------------------------------

_OPS = set("+-*/^()")


def _tokenize(source):
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            tokens.append(("num", source[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("ident", source[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


# -- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens, dimension, allow_t):
        self.tokens = tokens
        self.pos = 0
        self.dimension = dimension
        self.allow_t = allow_t

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, text, at = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected '{op}'", at)
        self.take()

    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.parse_term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.parse_unary()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def parse_unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            value, integral = self.parse_exponent()
            return Pow(base, value, integral)
        return base

    def parse_exponent(self):
        kind, text, at = self.peek()
        if kind == "op" and text == "(":
            self.take()
            value, integral = self.parse_signed_number()
            self.expect_op(")")
            return value, integral
        return self.parse_signed_number()

    def parse_signed_number(self):
        sign = 1.0
        kind, text, at = self.peek()
        if kind == "op" and text == "-":
            self.take()
            sign = -1.0
            kind, text, at = self.peek()
        if kind != "num":
            raise ParseError("expected numeric exponent", at)
        self.take()
        value = sign * float(text)
        integral = value.is_integer() and abs(value) < 2**31
        return value, integral

    def parse_atom(self):
        kind, text, at = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            if text in _SCALAR_FUNCS:
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(text, arg)
            if text == "t":
                if not self.allow_t:
                    raise ParseError("'t' is not allowed in this expression", at)
                return TimeVar()
            if text.startswith("x") and text[1:].isdigit():
                index = int(text[1:])
                if index < 1 or index > self.dimension:
                    raise ParseError(
                        f"variable index out of range: {text} (dimension {self.dimension})",
                        at,
                    )
                return Var(index - 1)
            raise ParseError(f"unknown identifier {text!r}", at)
        raise ParseError("expected expression", at)


# -- public wrapper --------------------------------------------------------


class Expression:
    """Immutable parsed expression; evaluation, gradient and Hessian are
    pure functions of the inputs and safe for concurrent use."""

    __slots__ = ("ast", "dimension", "uses_t", "var_indices")

    def __init__(self, ast, dimension, uses_t, var_indices):
        object.__setattr__(self, "ast", ast)
        object.__setattr__(self, "dimension", dimension)
        object.__setattr__(self, "uses_t", uses_t)
        object.__setattr__(self, "var_indices", var_indices)

    def __setattr__(self, name, value):
        raise AttributeError("Expression is immutable")

    @property
    def arity(self):
        return len(self.var_indices)

    def __str__(self):
        return str(self.ast)

    def __repr__(self):
        return f"Expression({str(self.ast)!r}, dimension={self.dimension})"

    def _check(self, point, time):
        if len(point) != self.dimension:
            raise ValueError(
                f"point has length {len(point)}, expression dimension is {self.dimension}"
            )
        if self.uses_t and time is None:
            raise ValueError("expression references t but no time was supplied")

    def eval(self, point, time=None):
        self._check(point, time)
        xs = [float(v) for v in point]
        t = None if time is None else float(time)
        return self.ast.ev(xs, t)

    def grad(self, point, time=None):
        self._check(point, time)
        base = [float(v) for v in point]
        t = None if time is None else float(time)
        out = np.empty(self.dimension)
        for i in range(self.dimension):
            xs = [Dual(v, 1.0) if j == i else Dual(v, 0.0) for j, v in enumerate(base)]
            out[i] = _deriv(self.ast.ev(xs, t))
        return out

    def hessian(self, point, time=None):
        self._check(point, time)
        base = [float(v) for v in point]
        t = None if time is None else float(time)
        n = self.dimension
        h = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                xs = [
                    Dual(Dual(v, 1.0 if k == i else 0.0), Dual(1.0 if k == j else 0.0, 0.0))
                    for k, v in enumerate(base)
                ]
                v = self.ast.ev(xs, t)
                d2 = _deriv(_deriv(v)) if isinstance(v, Dual) else 0.0
                h[i, j] = d2
                h[j, i] = d2  # mirrored, so symmetry is bitwise
        return h

    def eval_array(self, columns, time=None):
        """Vectorized evaluation over numpy arrays (one per variable).

        Domain violations yield NaN/inf instead of raising, so callers can
        treat bad cells as "outside" when scanning grids.
        """
        if len(columns) != self.dimension:
            raise ValueError("wrong number of columns")
        with np.errstate(all="ignore"):
            out = self.ast.eva(list(columns), time)
        return np.asarray(out, dtype=float)


def parse(source, dimension, allow_t=False):
    """Parse *source* over x1..x<dimension> (and t when *allow_t*)."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    parser = _Parser(_tokenize(source), dimension, allow_t)
    ast = parser.parse_expr()
    kind, text, at = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing input {text!r}", at)
    var_indices = set()
    uses_t = _collect_refs(ast, var_indices)
    return Expression(ast, dimension, uses_t, frozenset(var_indices))
