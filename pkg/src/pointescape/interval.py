"""Exact dyadic interval arithmetic over a small expression language.

Expressions are built from variables, rational constants and the operations
``neg add sub mul div abs min max``.  Interval evaluation is exact in dyadic
arithmetic except for division and non-dyadic constants, which are rounded
outward to a caller-chosen number of fractional bits.

Internally an interval is a triple ``(lo, hi, e)`` of Python ints denoting
``[lo * 2**e, hi * 2**e]``; expressions are compiled once to straight-line
Python code over such triples.
"""

from __future__ import annotations

import itertools
import numbers
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Callable, Iterable, Sequence, Union


class DivisionIndeterminate(ArithmeticError):
    """A denominator enclosure contains zero; the quotient is unbounded."""


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Dyadic rationals
# ---------------------------------------------------------------------------


def _trailing_zeros(m: int) -> int:
    return (m & -m).bit_length() - 1


@total_ordering
class Dyadic(numbers.Rational):
    """``mantissa * 2**exponent`` with an odd (or zero) mantissa."""

    __slots__ = ("mantissa", "exponent")

    def __init__(self, mantissa: int, exponent: int = 0):
        mantissa = int(mantissa)
        if mantissa == 0:
            exponent = 0
        else:
            tz = _trailing_zeros(mantissa)
            mantissa >>= tz
            exponent += tz
        self.mantissa = mantissa
        self.exponent = exponent

    @classmethod
    def from_rational(cls, value) -> "Dyadic":
        if isinstance(value, Dyadic):
            return value
        f = Fraction(value)
        den = f.denominator
        if den & (den - 1):
            raise ValueError(f"{f} is not a dyadic rational")
        return cls(f.numerator, -(den.bit_length() - 1))

    @property
    def numerator(self) -> int:
        return self.mantissa << self.exponent if self.exponent > 0 else self.mantissa

    @property
    def denominator(self) -> int:
        return 1 << -self.exponent if self.exponent < 0 else 1

    def to_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def _pair(self, other):
        if isinstance(other, Dyadic):
            return other
        if isinstance(other, int):
            return Dyadic(other)
        return None

    def __add__(self, other):
        o = self._pair(other)
        if o is None:
            return self.to_fraction() + other
        e = min(self.exponent, o.exponent)
        return Dyadic(
            (self.mantissa << (self.exponent - e)) + (o.mantissa << (o.exponent - e)), e
        )

    __radd__ = __add__

    def __neg__(self):
        return Dyadic(-self.mantissa, self.exponent)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._pair(other)
        if o is None:
            return self.to_fraction() * other
        return Dyadic(self.mantissa * o.mantissa, self.exponent + o.exponent)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.to_fraction() / Fraction(other)

    def __rtruediv__(self, other):
        return Fraction(other) / self.to_fraction()

    def __floordiv__(self, other):
        return self.to_fraction() // Fraction(other)

    def __rfloordiv__(self, other):
        return Fraction(other) // self.to_fraction()

    def __mod__(self, other):
        return self.to_fraction() % Fraction(other)

    def __rmod__(self, other):
        return Fraction(other) % self.to_fraction()

    def __pow__(self, k):
        if isinstance(k, int) and k >= 0:
            return Dyadic(self.mantissa**k, self.exponent * k)
        return self.to_fraction() ** k

    def __rpow__(self, base):
        return base ** self.to_fraction()

    def __abs__(self):
        return Dyadic(abs(self.mantissa), self.exponent)

    def __trunc__(self):
        return int(self.to_fraction())

    def __floor__(self):
        m, e = self.mantissa, self.exponent
        return m << e if e >= 0 else m >> -e

    def __ceil__(self):
        return -(-self).__floor__()

    def __round__(self, ndigits=None):
        return round(self.to_fraction(), ndigits)

    def __eq__(self, other):
        if isinstance(other, Dyadic):
            return self.mantissa == other.mantissa and self.exponent == other.exponent
        if isinstance(other, (int, Fraction)):
            return self.to_fraction() == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, (Dyadic, int, Fraction)):
            return self.to_fraction() < Fraction(other)
        return NotImplemented

    def __le__(self, other):
        if isinstance(other, (Dyadic, int, Fraction)):
            return self.to_fraction() <= Fraction(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.to_fraction())

    def __float__(self):
        return float(self.to_fraction())

    def __repr__(self):
        return f"Dyadic({self.mantissa}, {self.exponent})"

    def __str__(self):
        return str(self.to_fraction())


@dataclass(frozen=True, slots=True)
class DyadicInterval:
    lo: Dyadic
    hi: Dyadic

    def __post_init__(self):
        object.__setattr__(self, "lo", Dyadic.from_rational(self.lo))
        object.__setattr__(self, "hi", Dyadic.from_rational(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v) -> "DyadicInterval":
        return cls(v, v)

    def contains(self, v) -> bool:
        f = Fraction(v)
        return self.lo.to_fraction() <= f <= self.hi.to_fraction()

    def subset_of(self, other: "DyadicInterval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    @property
    def width(self) -> Fraction:
        return (self.hi - self.lo).to_fraction()

    def as_fractions(self) -> tuple[Fraction, Fraction]:
        return self.lo.to_fraction(), self.hi.to_fraction()

    def _triple(self) -> tuple[int, int, int]:
        e = min(self.lo.exponent, self.hi.exponent)
        return (
            self.lo.mantissa << (self.lo.exponent - e),
            self.hi.mantissa << (self.hi.exponent - e),
            e,
        )

    @classmethod
    def _from_triple(cls, t: tuple[int, int, int]) -> "DyadicInterval":
        lo, hi, e = t
        return cls(Dyadic(lo, e), Dyadic(hi, e))


# ---------------------------------------------------------------------------
# Expression AST
# ---------------------------------------------------------------------------


class Expr:
    """Base class of expression nodes; supports ``+ - * /`` for building."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_sexpr(self)


@dataclass(frozen=True, eq=True, repr=True)
class Var(Expr):
    index: int  # 1-based

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"variable index must be >= 1, got {self.index}")


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expr):
    p: int
    q: int = 1

    def __post_init__(self):
        if self.q == 0:
            raise ValueError("constant with zero denominator")
        f = Fraction(self.p, self.q)
        object.__setattr__(self, "p", f.numerator)
        object.__setattr__(self, "q", f.denominator)

    @property
    def value(self) -> Fraction:
        return Fraction(self.p, self.q)


@dataclass(frozen=True, eq=True, repr=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Abs(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Min(Expr):
    args: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError("min needs at least one argument")


@dataclass(frozen=True, eq=True, repr=True)
class Max(Expr):
    args: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError("max needs at least one argument")


ExprLike = Union[Expr, int, Fraction]


def as_expr(v: ExprLike) -> Expr:
    if isinstance(v, Expr):
        return v
    f = Fraction(v)
    return Const(f.numerator, f.denominator)


def const(v) -> Const:
    f = Fraction(v)
    return Const(f.numerator, f.denominator)


def vmin(*args: ExprLike) -> Expr:
    return Min(tuple(as_expr(a) for a in args))


def vmax(*args: ExprLike) -> Expr:
    return Max(tuple(as_expr(a) for a in args))


def variables(dim: int) -> list[Var]:
    return [Var(i + 1) for i in range(dim)]


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Var, Const)):
        return ()
    if isinstance(e, (Neg, Abs)):
        return (e.arg,)
    if isinstance(e, (Min, Max)):
        return e.args
    return (e.left, e.right)


def max_var_index(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    return max((max_var_index(c) for c in _children(e)), default=0)


def depth(e: Expr) -> int:
    return 1 + max((depth(c) for c in _children(e)), default=0)


def check_dimension(exprs: Iterable[Expr], dim: int) -> None:
    for e in exprs:
        k = max_var_index(e)
        if k > dim:
            raise ValueError(f"expression {to_sexpr(e)} uses variable {k} > dimension {dim}")


# ---------------------------------------------------------------------------
# Exact rational evaluation (oracle side)
# ---------------------------------------------------------------------------


def eval_exact(e: Expr, point: Sequence[Fraction]) -> Fraction:
    """Evaluate ``e`` exactly at a rational point (raises ZeroDivisionError)."""
    if isinstance(e, Var):
        return Fraction(point[e.index - 1])
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg):
        return -eval_exact(e.arg, point)
    if isinstance(e, Abs):
        return abs(eval_exact(e.arg, point))
    if isinstance(e, Min):
        return min(eval_exact(a, point) for a in e.args)
    if isinstance(e, Max):
        return max(eval_exact(a, point) for a in e.args)
    a = eval_exact(e.left, point)
    b = eval_exact(e.right, point)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, Div):
        return a / b
    raise TypeError(f"unknown node {e!r}")


def eval_exact_vector(es: Sequence[Expr], point: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return tuple(eval_exact(e, point) for e in es)


# ---------------------------------------------------------------------------
# Interval kernels on (lo, hi, e) triples
# ---------------------------------------------------------------------------


def _align(a, b):
    al, ah, ae = a
    bl, bh, be = b
    if ae == be:
        return al, ah, bl, bh, ae
    if ae > be:
        s = ae - be
        return al << s, ah << s, bl, bh, be
    s = be - ae
    return al, ah, bl << s, bh << s, ae


def _i_add(a, b):
    al, ah, bl, bh, e = _align(a, b)
    return (al + bl, ah + bh, e)


def _i_sub(a, b):
    al, ah, bl, bh, e = _align(a, b)
    return (al - bh, ah - bl, e)


def _i_neg(a):
    return (-a[1], -a[0], a[2])


def _i_abs(a):
    lo, hi, e = a
    if lo >= 0:
        return a
    if hi <= 0:
        return (-hi, -lo, e)
    return (0, max(-lo, hi), e)


def _i_mul(a, b):
    al, ah, ae = a
    bl, bh, be = b
    if al >= 0 and bl >= 0:
        return (al * bl, ah * bh, ae + be)
    p1, p2, p3, p4 = al * bl, al * bh, ah * bl, ah * bh
    return (min(p1, p2, p3, p4), max(p1, p2, p3, p4), ae + be)


def _i_min(*xs):
    e = min(x[2] for x in xs)
    return (
        min(x[0] << (x[2] - e) for x in xs),
        min(x[1] << (x[2] - e) for x in xs),
        e,
    )


def _i_max(*xs):
    e = min(x[2] for x in xs)
    return (
        max(x[0] << (x[2] - e) for x in xs),
        max(x[1] << (x[2] - e) for x in xs),
        e,
    )


def _floor_quot(n: int, ne: int, d: int, de: int, prec: int) -> tuple[int, int]:
    """floor and ceil of ``(n 2^ne) / (d 2^de)`` in units of ``2^-prec``."""
    s = ne - de + prec
    if s >= 0:
        n <<= s
    else:
        d <<= -s
    if d < 0:
        n, d = -n, -d
    q, r = divmod(n, d)
    return q, q + (1 if r else 0)


def _i_div(a, b, prec):
    al, ah, ae = a
    bl, bh, be = b
    if bl <= 0 <= bh:
        raise DivisionIndeterminate("denominator enclosure contains zero")
    los = []
    his = []
    for n in (al, ah):
        for d in (bl, bh):
            f, c = _floor_quot(n, ae, d, be, prec)
            los.append(f)
            his.append(c)
    return (min(los), max(his), -prec)


def _const_triple(p: int, q: int, prec: int):
    if q & (q - 1) == 0:
        return (p, p, -(q.bit_length() - 1))
    f, c = _floor_quot(p, 0, q, 0, prec)
    return (f, c, -prec)


_KERNELS = {
    "add": _i_add,
    "sub": _i_sub,
    "neg": _i_neg,
    "abs": _i_abs,
    "mul": _i_mul,
    "min": _i_min,
    "max": _i_max,
    "div": _i_div,
    "const": _const_triple,
}


class CompiledMap:
    """Straight-line interval evaluator for a vector of expressions.

    Structurally equal subexpressions are evaluated once per call.
    """

    def __init__(self, exprs: Sequence[Expr], dim: int):
        self.exprs = tuple(exprs)
        self.dim = dim
        check_dimension(self.exprs, dim)
        self._fn = self._compile()

    def _compile(self) -> Callable:
        slots: dict[Expr, str] = {}
        lines: list[str] = []
        consts: list[str] = []
        counter = itertools.count()

        def fresh() -> str:
            return f"v{next(counter)}"

        def emit(e: Expr) -> str:
            if e in slots:
                return slots[e]
            if isinstance(e, Var):
                name = f"box[{e.index - 1}]"
                slots[e] = name
                return name
            # children first, so that every node gets a fresh register
            if isinstance(e, Const):
                name = fresh()
                consts.append(f"    {name} = const({e.p}, {e.q}, prec)")
            elif isinstance(e, (Neg, Abs)):
                a = emit(e.arg)
                name = fresh()
                op = "neg" if isinstance(e, Neg) else "abs"
                lines.append(f"    {name} = {op}({a})")
            elif isinstance(e, (Min, Max)):
                args = ", ".join(emit(a) for a in e.args)
                name = fresh()
                op = "min" if isinstance(e, Min) else "max"
                lines.append(f"    {name} = {op}({args})")
            elif isinstance(e, Div):
                a, b = emit(e.left), emit(e.right)
                name = fresh()
                lines.append(f"    {name} = div({a}, {b}, prec)")
            else:
                op = {Add: "add", Sub: "sub", Mul: "mul"}[type(e)]
                a, b = emit(e.left), emit(e.right)
                name = fresh()
                lines.append(f"    {name} = {op}({a}, {b})")
            slots[e] = name
            return name

        outs = [emit(e) for e in self.exprs]
        src = "def _eval(box, prec):\n"
        src += "\n".join(consts + lines) + ("\n" if consts or lines else "")
        src += f"    return ({', '.join(outs)},)\n"
        ns: dict = dict(_KERNELS)
        exec(compile(src, "<pointescape.interval>", "exec"), ns)
        self.source = src
        return ns["_eval"]

    def eval_triples(self, box: Sequence[tuple[int, int, int]], prec: int):
        """Evaluate on a box of triples; returns a tuple of triples."""
        return self._fn(box, prec)

    def __call__(self, box: Sequence[DyadicInterval], prec: int) -> tuple[DyadicInterval, ...]:
        if len(box) != self.dim:
            raise ValueError(f"box has dimension {len(box)}, expected {self.dim}")
        out = self._fn(tuple(iv._triple() for iv in box), prec)
        return tuple(DyadicInterval._from_triple(t) for t in out)


def eval_interval(e: Expr, box: Sequence[DyadicInterval], precision: int) -> DyadicInterval:
    """Enclosure of ``{e(x) : x in box}``; raises DivisionIndeterminate."""
    return CompiledMap([e], len(box))(box, precision)[0]


def eval_vector(
    es: Sequence[Expr], box: Sequence[DyadicInterval], precision: int
) -> tuple[DyadicInterval, ...]:
    return CompiledMap(es, len(box))(box, precision)


# ---------------------------------------------------------------------------
# s-expression syntax
# ---------------------------------------------------------------------------

_INT = re.compile(r"[+-]?\d+\Z")


@dataclass(frozen=True, slots=True)
class Token:
    text: str
    line: int
    column: int


def tokenize(text: str, line: int = 1, column: int = 1) -> list[Token]:
    """Split into ``(``, ``)`` and atoms; ``#`` starts a comment to end of line."""
    out: list[Token] = []
    for lineno, raw in enumerate(text.split("\n"), start=line):
        body = raw.split("#", 1)[0]
        col0 = column if lineno == line else 1
        for m in re.finditer(r"\(|\)|[^\s()]+", body):
            out.append(Token(m.group(0), lineno, m.start() + col0))
    return out


_UNARY = {"neg": Neg, "abs": Abs}
_BINARY = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}
_NARY = {"min": Min, "max": Max}


def _parse_int(tok: Token) -> int:
    if not _INT.match(tok.text):
        raise ExprSyntaxError(f"expected an integer, got {tok.text!r}", tok.line, tok.column)
    return int(tok.text)


def parse_tokens(tokens: Sequence[Token], pos: int = 0) -> tuple[Expr, int]:
    """Parse one expression starting at ``tokens[pos]``; returns (expr, next pos)."""
    if pos >= len(tokens):
        last = tokens[-1] if tokens else Token("", 1, 1)
        raise ExprSyntaxError("unexpected end of input", last.line, last.column)
    tok = tokens[pos]
    if tok.text != "(":
        raise ExprSyntaxError(f"expected '(', got {tok.text!r}", tok.line, tok.column)
    if pos + 1 >= len(tokens):
        raise ExprSyntaxError("unexpected end of input after '('", tok.line, tok.column)
    head = tokens[pos + 1]
    name = head.text
    pos += 2
    args: list = []
    while True:
        if pos >= len(tokens):
            raise ExprSyntaxError(f"unclosed '(' for {name!r}", tok.line, tok.column)
        t = tokens[pos]
        if t.text == ")":
            pos += 1
            break
        if t.text == "(":
            sub, pos = parse_tokens(tokens, pos)
            args.append(sub)
        else:
            args.append(t)
            pos += 1

    def need(n: int, kind: type):
        if len(args) != n or not all(isinstance(a, kind) for a in args):
            what = "integer" if kind is Token else "expression"
            raise ExprSyntaxError(
                f"{name!r} takes {n} {what} argument(s)", head.line, head.column
            )

    if name == "var":
        need(1, Token)
        idx = _parse_int(args[0])
        if idx < 1:
            raise ExprSyntaxError("variable index must be >= 1", args[0].line, args[0].column)
        return Var(idx), pos
    if name == "const":
        need(2, Token)
        p, q = _parse_int(args[0]), _parse_int(args[1])
        if q == 0:
            raise ExprSyntaxError("zero denominator", args[1].line, args[1].column)
        return Const(p, q), pos
    if name in _UNARY:
        need(1, Expr)
        return _UNARY[name](args[0]), pos
    if name in _BINARY:
        need(2, Expr)
        return _BINARY[name](args[0], args[1]), pos
    if name in _NARY:
        if not args or not all(isinstance(a, Expr) for a in args):
            raise ExprSyntaxError(
                f"{name!r} takes one or more expression arguments", head.line, head.column
            )
        return _NARY[name](tuple(args)), pos
    raise ExprSyntaxError(f"unknown operator {name!r}", head.line, head.column)


def parse_expr(text: str) -> Expr:
    tokens = tokenize(text)
    e, pos = parse_tokens(tokens, 0)
    if pos != len(tokens):
        t = tokens[pos]
        raise ExprSyntaxError(f"trailing input {t.text!r}", t.line, t.column)
    return e


def to_sexpr(e: Expr) -> str:
    if isinstance(e, Var):
        return f"(var {e.index})"
    if isinstance(e, Const):
        return f"(const {e.p} {e.q})"
    if isinstance(e, Neg):
        return f"(neg {to_sexpr(e.arg)})"
    if isinstance(e, Abs):
        return f"(abs {to_sexpr(e.arg)})"
    if isinstance(e, (Min, Max)):
        head = "min" if isinstance(e, Min) else "max"
        return f"({head} {' '.join(to_sexpr(a) for a in e.args)})"
    head = {Add: "add", Sub: "sub", Mul: "mul", Div: "div"}[type(e)]
    return f"({head} {to_sexpr(e.left)} {to_sexpr(e.right)})"
