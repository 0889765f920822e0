"""Shared generators and reference implementations for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

from hypothesis import strategies as st

from pointescape.grid import CubeSet, cube_compactly_in, in_domain, inside_window
from pointescape.interval import Abs, Add, Const, Div, Max, Min, Mul, Neg, Sub, Var


def random_expr(rng: random.Random, dim: int, depth: int, *, allow_div: bool = True):
    """A random expression tree of depth at most ``depth``."""
    if depth <= 1 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return Var(rng.randint(1, dim))
        return Const(rng.randint(-4, 4), rng.choice([1, 2, 3, 4, 8]))
    ops = ["add", "sub", "mul", "neg", "abs", "min", "max"] + (["div"] if allow_div else [])
    op = rng.choice(ops)
    sub = lambda: random_expr(rng, dim, depth - 1, allow_div=allow_div)  # noqa: E731
    if op == "neg":
        return Neg(sub())
    if op == "abs":
        return Abs(sub())
    if op in ("min", "max"):
        args = tuple(sub() for _ in range(rng.randint(2, 3)))
        return (Min if op == "min" else Max)(args)
    cls = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}[op]
    return cls(sub(), sub())


def random_map(rng: random.Random, dim: int, depth: int, **kw):
    return [random_expr(rng, dim, depth, **kw) for _ in range(dim)]


small_rationals = st.builds(
    Fraction, st.integers(-64, 64), st.sampled_from([1, 2, 3, 4, 5, 7, 8, 16])
)


@st.composite
def exprs(draw, dim: int = 2, depth: int = 4):
    """Hypothesis strategy for expression trees (seeded through ``random_expr``)."""
    seed = draw(st.integers(0, 2**32 - 1))
    d = draw(st.integers(1, depth))
    return random_expr(random.Random(seed), dim, d)


# ---------------------------------------------------------------------------
# reference stage procedure
# ---------------------------------------------------------------------------


def _image(F, n, cubes):
    """``(union of values, whether some value meets the outside region)``."""
    out = set()
    outside = False
    for c in cubes:
        v = F.cells(n, c)
        if v is None:
            outside = True
        else:
            out.update(v)
    return out, outside


def reference_stage(n, F, setname, X, max_iterations=10_000):
    """Literal transcription of the stage procedure, one iteration per line.

    Returns ``(verdict, steps, orbit)`` with verdict ``escapes``, ``trapped``
    or ``unknown``; ``steps`` is the first index with an empty pruned set.
    Used only as an oracle on small instances (it materializes every chain).
    """
    inner, outer = setname.stage(n)
    E = outer.cubes

    def prune(cubes):
        return {q for q in cubes if not cube_compactly_in(q, E)}

    xs = X.stage(n).cubes
    if not all(inside_window(n, c) for c in xs):
        return "unknown", None, None
    Q, out_q = _image(F, n, xs)
    P = prune(Q)
    O = set(Q)
    first_empty = 1 if not P else None
    if out_q:
        return "unknown", None, None
    for i in range(1, max_iterations):
        Qn, out_q = _image(F, n, Q)
        Pn, out_p = _image(F, n, P)
        Pn = prune(Pn)
        On = O | Qn
        if not out_p and not Pn:
            return "escapes", first_empty or i + 1, None
        if out_q or out_p:
            return "unknown", None, None
        if On == O:
            whole = CubeSet(n, F.dim, frozenset(O))
            if all(cube_compactly_in(c, inner.cubes) for c in whole):
                return "trapped", None, frozenset(O)
            return "unknown", None, None
        Q, P, O = Qn, Pn, On
        assert all(in_domain(n, c) for c in Q)
    raise RuntimeError("reference stage did not settle")
