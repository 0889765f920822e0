"""Text formats for problem instances.

System spec (s-expression based)::

    # z -> z^2 + 1 on the sup-norm ball of radius 3
    dimension 2
    map
      (add (sub (mul (var 1) (var 1)) (mul (var 2) (var 2))) (const 1 1))
      (mul (const 2 1) (mul (var 1) (var 2)))
    set
      (sub (max (abs (var 1)) (abs (var 2))) (const 3 1))
    point 0 0

Sections are introduced by the keywords ``dimension``, ``map``, ``set`` and
``point`` at the top level and may span lines.  ``map`` holds one expression
per coordinate, ``set`` zero or more constraints ``g`` describing
``{x : g(x) <= 0}`` (an empty ``set`` means all of ``R^d``), and ``point``
holds rationals written ``p/q`` or ``p``.

Affine system file (line based)::

    dimension 1
    matrix
      2
    offset
      0
    halfspaces
      -1 ; 0      # -x <= 0
    point
      1

Matrix entries are read row-major.  Each halfspace line is ``N_1 ... N_d ; D``
meaning ``N . x <= D``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .interval import Expr, ExprSyntaxError, Token, max_var_index, parse_tokens, to_sexpr, tokenize
from .systems import AffineSystem, Halfspace

SYSTEM_SECTIONS = ("dimension", "map", "set", "point")
AFFINE_SECTIONS = ("dimension", "matrix", "offset", "halfspaces", "point")

_RATIONAL = re.compile(r"[+-]?\d+(/[+-]?\d+)?\Z")


class SpecSyntaxError(ExprSyntaxError):
    """A malformed spec or affine file; carries line and column."""


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    map: tuple[Expr, ...]
    constraints: tuple[Expr, ...]
    point: tuple[Fraction, ...]


def parse_rational(tok: Token) -> Fraction:
    if not _RATIONAL.match(tok.text):
        raise SpecSyntaxError(f"expected a rational p/q, got {tok.text!r}", tok.line, tok.column)
    try:
        return Fraction(tok.text)
    except ZeroDivisionError:
        raise SpecSyntaxError("zero denominator", tok.line, tok.column) from None


def _sections(tokens: list[Token], names: Sequence[str]) -> dict[str, tuple[Token, list]]:
    """Group top-level tokens by section keyword.

    Parenthesized groups are kept as parsed expressions, other atoms as tokens.
    """
    out: dict[str, tuple[Token, list]] = {}
    current: Optional[list] = None
    pos = 0
    while pos < len(tokens):
        t = tokens[pos]
        if t.text == "(":
            if current is None:
                raise SpecSyntaxError("expression outside of a section", t.line, t.column)
            e, pos = parse_tokens(tokens, pos)
            current.append((t, e))
            continue
        if t.text == ")":
            raise SpecSyntaxError("unbalanced ')'", t.line, t.column)
        if t.text in names:
            if t.text in out:
                raise SpecSyntaxError(f"duplicate section {t.text!r}", t.line, t.column)
            current = []
            out[t.text] = (t, current)
        elif current is None:
            raise SpecSyntaxError(f"expected a section keyword, got {t.text!r}", t.line, t.column)
        else:
            current.append((t, None))
        pos += 1
    return out


def _require(secs: dict, name: str, at: Token) -> tuple[Token, list]:
    if name not in secs:
        raise SpecSyntaxError(f"missing section {name!r}", at.line, at.column)
    return secs[name]


def _atoms(kw: Token, items: list, what: str) -> list[Token]:
    for t, e in items:
        if e is not None:
            raise SpecSyntaxError(f"{kw.text!r} expects {what}, not an expression", t.line, t.column)
    return [t for t, _ in items]


def _exprs(kw: Token, items: list) -> list[Expr]:
    for t, e in items:
        if e is None:
            raise SpecSyntaxError(f"{kw.text!r} expects expressions, got {t.text!r}", t.line, t.column)
    return [e for _, e in items]


def _dimension(secs: dict, at: Token) -> int:
    kw, items = _require(secs, "dimension", at)
    toks = _atoms(kw, items, "one integer")
    if len(toks) != 1:
        raise SpecSyntaxError("'dimension' expects one integer", kw.line, kw.column)
    t = toks[0]
    if not re.fullmatch(r"\d+", t.text) or int(t.text) < 1:
        raise SpecSyntaxError(f"bad dimension {t.text!r}", t.line, t.column)
    return int(t.text)


def _vector(secs: dict, name: str, d: int, at: Token) -> tuple[Fraction, ...]:
    kw, items = _require(secs, name, at)
    toks = _atoms(kw, items, "rationals")
    if len(toks) != d:
        raise SpecSyntaxError(f"{name!r} expects {d} rationals, got {len(toks)}", kw.line, kw.column)
    return tuple(parse_rational(t) for t in toks)


def parse_system(text: str) -> SystemSpec:
    tokens = tokenize(text)
    if not tokens:
        raise SpecSyntaxError("empty system spec", 1, 1)
    secs = _sections(tokens, SYSTEM_SECTIONS)
    at = tokens[0]
    d = _dimension(secs, at)
    kw, items = _require(secs, "map", at)
    es = _exprs(kw, items)
    if len(es) != d:
        raise SpecSyntaxError(f"'map' expects {d} expressions, got {len(es)}", kw.line, kw.column)
    gs: list[Expr] = []
    if "set" in secs:
        skw, sitems = secs["set"]
        gs = _exprs(skw, sitems)
    for (t, e) in [(kw, e) for e in es] + [(secs["set"][0], g) for g in gs]:
        if max_var_index(e) > d:
            raise SpecSyntaxError(
                f"variable index {max_var_index(e)} exceeds dimension {d}", t.line, t.column
            )
    point = _vector(secs, "point", d, at)
    return SystemSpec(d, tuple(es), tuple(gs), point)


def _fmt_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_system(spec: SystemSpec) -> str:
    lines = [f"dimension {spec.dim}", "map"]
    lines += [f"  {to_sexpr(e)}" for e in spec.map]
    lines.append("set")
    lines += [f"  {to_sexpr(g)}" for g in spec.constraints]
    lines.append("point " + " ".join(_fmt_rational(p) for p in spec.point))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# affine files
# ---------------------------------------------------------------------------


def _affine_lines(text: str) -> dict[str, tuple[Token, list[list[Token]]]]:
    out: dict[str, tuple[Token, list[list[Token]]]] = {}
    rows: Optional[list[list[Token]]] = None
    for lineno, raw in enumerate(text.split("\n"), start=1):
        body = raw.split("#", 1)[0]
        toks = [
            Token(m.group(0), lineno, m.start() + 1) for m in re.finditer(r";|[^\s;]+", body)
        ]
        if not toks:
            continue
        if toks[0].text in AFFINE_SECTIONS:
            kw = toks[0]
            if kw.text in out:
                raise SpecSyntaxError(f"duplicate section {kw.text!r}", kw.line, kw.column)
            rows = []
            out[kw.text] = (kw, rows)
            toks = toks[1:]
            if not toks:
                continue
        elif rows is None:
            t = toks[0]
            raise SpecSyntaxError(f"expected a section keyword, got {t.text!r}", t.line, t.column)
        rows.append(toks)
    return out


def is_affine_text(text: str) -> bool:
    """Whether ``text`` looks like an affine system file (has a ``matrix`` section)."""
    for raw in text.split("\n"):
        words = raw.split("#", 1)[0].split()
        if words and words[0] == "matrix":
            return True
    return False


def parse_affine(text: str) -> AffineSystem:
    secs = _affine_lines(text)
    first = Token("", 1, 1)

    def flat(name: str) -> tuple[Token, list[Token]]:
        if name not in secs:
            raise SpecSyntaxError(f"missing section {name!r}", first.line, first.column)
        kw, rows = secs[name]
        toks = [t for r in rows for t in r]
        for t in toks:
            if t.text == ";":
                raise SpecSyntaxError(f"unexpected ';' in {name!r}", t.line, t.column)
        return kw, toks

    kw, toks = flat("dimension")
    if len(toks) != 1 or not re.fullmatch(r"\d+", toks[0].text) or int(toks[0].text) < 1:
        raise SpecSyntaxError("'dimension' expects one positive integer", kw.line, kw.column)
    d = int(toks[0].text)

    def vec(name: str, n: int) -> list[Fraction]:
        kw, toks = flat(name)
        if len(toks) != n:
            raise SpecSyntaxError(f"{name!r} expects {n} rationals, got {len(toks)}", kw.line, kw.column)
        return [parse_rational(t) for t in toks]

    m = vec("matrix", d * d)
    matrix = [m[i * d : (i + 1) * d] for i in range(d)]
    offset = vec("offset", d)
    point = vec("point", d)

    if "halfspaces" not in secs:
        raise SpecSyntaxError("missing section 'halfspaces'", 1, 1)
    hkw, rows = secs["halfspaces"]
    if not rows:
        raise SpecSyntaxError("at least one halfspace is required", hkw.line, hkw.column)
    hs = []
    for row in rows:
        semis = [i for i, t in enumerate(row) if t.text == ";"]
        if len(semis) != 1:
            t = row[0]
            raise SpecSyntaxError("halfspace line must read 'N_1 ... N_d ; D'", t.line, t.column)
        k = semis[0]
        normal, rhs = row[:k], row[k + 1 :]
        if len(normal) != d or len(rhs) != 1:
            t = row[0]
            raise SpecSyntaxError(
                f"halfspace needs {d} normal entries and one offset", t.line, t.column
            )
        nv = [parse_rational(t) for t in normal]
        if not any(nv):
            t = row[0]
            raise SpecSyntaxError("halfspace normal must be nonzero", t.line, t.column)
        hs.append(Halfspace(nv, parse_rational(rhs[0])))
    return AffineSystem(matrix, offset, hs, point)


def format_affine(sys: AffineSystem) -> str:
    lines = [f"dimension {sys.dim}", "matrix"]
    lines += ["  " + " ".join(_fmt_rational(a) for a in row) for row in sys.matrix]
    lines += ["offset", "  " + " ".join(_fmt_rational(b) for b in sys.offset), "halfspaces"]
    for h in sys.halfspaces:
        lines.append("  " + " ".join(_fmt_rational(a) for a in h.normal) + f" ; {_fmt_rational(h.offset)}")
    lines += ["point", "  " + " ".join(_fmt_rational(p) for p in sys.point)]
    return "\n".join(lines) + "\n"
