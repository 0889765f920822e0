"""Finite-stage names of points, functions and closed sets.

A name is queried one stage at a time.  At stage ``n`` everything lives on
the level-``n`` grid, and function values are only defined on cubes meeting
the window ``[-2^n, 2^n]^d``.

Function values are grid boxes: the rasterized, padded interval enclosure
intersected with the refined value of the parent cube.  Because both are
products of integer ranges, a value is stored as one ``(lo, hi)`` pair per
axis rather than as an explicit cube list.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .grid import (
    Coords,
    CubeSet,
    DyadicCube,
    box_ranges,
    cubes_containing,
    cubes_of_ranges,
    in_domain,
    neighbourhood,
    refine,
)
from .interval import CompiledMap, DivisionIndeterminate, Expr, eval_exact

Ranges = tuple[tuple[int, int], ...]


class _OutOfWindow:
    """Marker for a function value that leaves the stage window."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OUT_OF_WINDOW"

    def __bool__(self):
        return False


OUT_OF_WINDOW = _OutOfWindow()


def _cube_triples(n: int, coords: Coords):
    return tuple((x, x + 1, -n) for x in coords)


def _iter_ranges(ranges: Ranges):
    if len(ranges) == 1:
        (lo, hi), = ranges
        return ((x,) for x in range(lo, hi + 1))
    if len(ranges) == 2:
        (l0, h0), (l1, h1) = ranges
        return ((x, y) for x in range(l0, h0 + 1) for y in range(l1, h1 + 1))
    return itertools.product(*[range(lo, hi + 1) for lo, hi in ranges])


def stage_precision(n: int) -> int:
    """Fractional bits used for division and constants at stage ``n``."""
    return n + 4


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


class PointName:
    """Stage ``n`` is the set of level-``n`` cubes meeting ``B(x, 2^(1-n))``."""

    def __init__(self, point: Sequence[Fraction]):
        self.point = tuple(Fraction(p) for p in point)
        self.dim = len(self.point)
        if self.dim < 1:
            raise ValueError("point needs at least one coordinate")
        self._memo: dict[int, CubeSet] = {}

    def radius(self, n: int) -> Fraction:
        return Fraction(2) / (1 << n)

    def stage(self, n: int) -> CubeSet:
        got = self._memo.get(n)
        if got is None:
            r = self.radius(n)
            got = cubes_of_ranges(n, box_ranges(n, [(p - r, p + r) for p in self.point]))
            self._memo[n] = got
        return got


def point_from_rational(x: Sequence) -> PointName:
    return PointName(x)


# ---------------------------------------------------------------------------
# functions
# ---------------------------------------------------------------------------


class ImageTooLarge(Exception):
    """An image computation exceeded its cube limit."""


class FunctionName:
    """Expression-backed name of a map ``R^d -> R^d``."""

    def __init__(self, exprs: Sequence[Expr], dim: Optional[int] = None):
        exprs = tuple(exprs)
        self.dim = len(exprs) if dim is None else dim
        if len(exprs) != self.dim:
            raise ValueError(f"{len(exprs)} component expressions for dimension {self.dim}")
        self.exprs = exprs
        self.compiled = CompiledMap(exprs, self.dim)
        self._memo: dict[tuple[int, Coords], Optional[Ranges]] = {}
        self._cells: dict[int, dict[Coords, tuple[Coords, ...]]] = {}
        self.evaluations = 0

    # The two hooks below are what the test fixtures override.
    def _raster(self, n: int, enclosure) -> Optional[Ranges]:
        """Pad by ``2^(-n-2)``, window-check, and rasterize an enclosure."""
        out = []
        window_exp = -n - 2
        for lo, hi, e in enclosure:
            if e > window_exp:
                lo <<= e - window_exp
                hi <<= e - window_exp
                e = window_exp
            pad = 1 << (window_exp - e)
            lo -= pad
            hi += pad
            bound = 1 << (n - e)
            if lo < -bound or hi > bound:
                return None
            s = -(e + n)
            out.append((-((-lo) >> s) - 1, hi >> s))
        return tuple(out)

    def _use_parent(self) -> bool:
        return True

    def ranges(self, n: int, coords: Coords) -> Optional[Ranges]:
        """The stage-``n`` value at a cube as per-axis ranges, or None if out of window."""
        key = (n, coords)
        memo = self._memo
        if key in memo:
            return memo[key]
        if not in_domain(n, coords):
            raise ValueError(f"cube {coords} is outside the stage-{n} window")
        self.evaluations += 1
        try:
            enc = self.compiled.eval_triples(_cube_triples(n, coords), stage_precision(n))
        except DivisionIndeterminate:
            enc = None
        value = None if enc is None else self._raster(n, enc)
        if value is not None and n > 0 and self._use_parent():
            parent = tuple(x >> 1 for x in coords)
            if in_domain(n - 1, parent):
                pv = self.ranges(n - 1, parent)
                if pv is not None:
                    value = tuple(
                        (max(lo, 2 * plo), min(hi, 2 * phi + 1))
                        for (lo, hi), (plo, phi) in zip(value, pv)
                    )
        memo[key] = value
        return value

    def value(self, n: int, cube) -> CubeSet | _OutOfWindow:
        coords = cube.coords if isinstance(cube, DyadicCube) else tuple(cube)
        r = self.ranges(n, coords)
        if r is None:
            return OUT_OF_WINDOW
        return cubes_of_ranges(n, r)

    def cells(self, n: int, coords: Coords) -> Optional[tuple[Coords, ...]]:
        """The stage-``n`` value at a cube as a tuple of cubes, or None."""
        cache = self._cells.setdefault(n, {})
        v = cache.get(coords)
        if v is None:
            r = self.ranges(n, coords)
            if r is None:
                return None
            v = tuple(_iter_ranges(r))
            if len(v) <= 256:
                cache[coords] = v
        return v

    def image(
        self, n: int, cubes: Iterable[Coords], limit: Optional[int] = None
    ) -> Optional[set[Coords]]:
        """Union of values over ``cubes``; None if any value is out of window.

        With ``limit``, raises :class:`ImageTooLarge` as soon as the union
        exceeds ``limit`` cubes.
        """
        out: set[Coords] = set()
        add = out.update
        cells = self._cells.setdefault(n, {})
        get = cells.get
        for c in cubes:
            v = get(c)
            if v is None:
                r = self.ranges(n, c)
                if r is None:
                    return None
                v = tuple(_iter_ranges(r))
                # small values dominate in practice and are cheap to keep
                if len(v) <= 256:
                    cells[c] = v
            add(v)
            if limit is not None and len(out) > limit:
                raise ImageTooLarge(len(out))
        return out

    def evaluate_exact(self, point: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(eval_exact(e, point) for e in self.exprs)


def function_from_exprs(es: Sequence[Expr], dim: Optional[int] = None) -> FunctionName:
    return FunctionName(es, dim)


# ---------------------------------------------------------------------------
# closed sets
# ---------------------------------------------------------------------------

INNER = 1
OUTER = -1
UNDECIDED = 0


class ClosedSetName:
    """Name of ``A = {x : g_i(x) <= 0 for all i}``.

    ``I_n`` holds window cubes on which every ``g_i`` is certainly negative,
    ``E_n`` those on which some ``g_i`` is certainly positive; both also
    contain the children of the previous stage's members.  The construction
    is only a valid name when ``{g_i < 0 for all i}`` is dense in ``int A``;
    that precondition is not checked.
    """

    def __init__(self, constraints: Sequence[Expr], dim: int):
        self.constraints = tuple(constraints)
        self.dim = dim
        self.compiled = CompiledMap(self.constraints, dim) if self.constraints else None
        self._memo: dict[int, dict[Coords, int]] = {}
        self._compact: dict[tuple[int, int], dict[Coords, bool]] = {}

    def _direct(self, n: int, coords: Coords) -> int:
        if self.compiled is None:
            return INNER
        try:
            encs = self.compiled.eval_triples(_cube_triples(n, coords), stage_precision(n))
        except DivisionIndeterminate:
            return UNDECIDED
        if all(hi < 0 for _, hi, _ in encs):
            return INNER
        if any(lo > 0 for lo, _, _ in encs):
            return OUTER
        return UNDECIDED

    def _level(self, n: int) -> dict[Coords, int]:
        memo = self._memo.get(n)
        if memo is None:
            memo = self._memo[n] = {}
        return memo

    def classify(self, n: int, coords: Coords) -> int:
        """INNER, OUTER or UNDECIDED for a stage-``n`` cube."""
        memo = self._level(n)
        got = memo.get(coords)
        if got is not None:
            return got
        m = 1 << (2 * n)
        got = UNDECIDED
        if all(-m - 1 <= x <= m for x in coords):
            if n > 0:
                parent = tuple(x >> 1 for x in coords)
                if in_domain(n - 1, parent):
                    got = self.classify(n - 1, parent)
            if got == UNDECIDED:
                got = self._direct(n, coords)
        memo[coords] = got
        return got

    def inner(self, n: int, coords: Coords) -> bool:
        return self.classify(n, coords) == INNER

    def outer(self, n: int, coords: Coords) -> bool:
        return self.classify(n, coords) == OUTER

    def inner_view(self, n: int) -> "_Membership":
        return _Membership(self, n, INNER)

    def outer_view(self, n: int) -> "_Membership":
        return _Membership(self, n, OUTER)

    def _compact_level(self, n: int, kind: int) -> dict[Coords, bool]:
        key = (n, kind)
        memo = self._compact.get(key)
        if memo is None:
            memo = self._compact[key] = {}
        return memo

    def _compactly(self, n: int, coords: Coords, kind: int) -> bool:
        memo = self._compact_level(n, kind)
        got = memo.get(coords)
        if got is None:
            level = self._level(n)
            classify = self.classify
            got = True
            for nb in neighbourhood(coords):
                k = level.get(nb)
                if k is None:
                    k = classify(n, nb)
                if k != kind:
                    got = False
                    break
            memo[coords] = got
        return got

    def box_compactly_outer(self, n: int, ranges: Ranges) -> bool:
        """Sufficient test that every cube of a coordinate box is ``⋐ |E_n|``.

        Interval evaluation is inclusion-monotone, so a constraint that is
        certainly positive on the box grown by one cube is certainly positive
        on each of its cubes and their neighbours.
        """
        if self.compiled is None:
            return False
        m = 1 << (2 * n)
        if any(lo - 1 < -m - 1 or hi + 1 > m for lo, hi in ranges):
            return False
        box = tuple((lo - 1, hi + 2, -n) for lo, hi in ranges)
        try:
            encs = self.compiled.eval_triples(box, stage_precision(n))
        except DivisionIndeterminate:
            return False
        return any(lo > 0 for lo, _, _ in encs)

    def not_compactly_outer(self, n: int, cubes: Iterable[Coords]) -> set[Coords]:
        """The cubes of ``cubes`` that are not compactly contained in ``|E_n|``."""
        memo = self._compact_level(n, OUTER)
        get = memo.get
        slow = self._compactly
        out = set()
        for q in cubes:
            got = get(q)
            if got is None:
                got = slow(n, q, OUTER)
            if not got:
                out.add(q)
        return out

    def compactly_inner(self, n: int, coords: Coords) -> bool:
        """``Q ⋐ |I_n|`` for a single cube."""
        return self._compactly(n, coords, INNER)

    def compactly_outer(self, n: int, coords: Coords) -> bool:
        """``Q ⋐ |E_n|`` for a single cube."""
        return self._compactly(n, coords, OUTER)

    def stage(self, n: int, limit: int = 1 << 20) -> tuple[CubeSet, CubeSet]:
        """Materialize ``(I_n, E_n)`` over the whole window (small stages only)."""
        m = 1 << (2 * n)
        count = (2 * m + 2) ** self.dim
        if count > limit:
            raise ValueError(f"stage {n} window has {count} cubes; above limit {limit}")
        inner, outer = set(), set()
        for c in itertools.product(range(-m - 1, m + 1), repeat=self.dim):
            k = self.classify(n, c)
            if k == INNER:
                inner.add(c)
            elif k == OUTER:
                outer.add(c)
        return CubeSet(n, self.dim, frozenset(inner)), CubeSet(n, self.dim, frozenset(outer))

    def contains_exact(self, point: Sequence[Fraction]) -> bool:
        return all(eval_exact(g, point) <= 0 for g in self.constraints)


class _Membership:
    """Lazy ``in`` test against ``I_n`` or ``E_n``."""

    __slots__ = ("name", "n", "kind")

    def __init__(self, name: ClosedSetName, n: int, kind: int):
        self.name, self.n, self.kind = name, n, kind

    def __contains__(self, coords) -> bool:
        return self.name.classify(self.n, coords) == self.kind


def closedset_from_constraints(gs: Sequence[Expr], dim: int) -> ClosedSetName:
    return ClosedSetName(gs, dim)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    condition: str
    stage: int
    cube: Coords
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    checks: int = 0
    samples: int = 0  # exact point evaluations
    modulus_level: Optional[int] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


def in_interior(level: int, cubes, point: Sequence[Fraction]) -> bool:
    """Whether ``point`` lies in the interior of the union of level-``level`` cubes."""
    return all(c in cubes for c in cubes_containing(level, point))


def _random_point(rng: random.Random, n: int, coords: Coords, bits: int = 20) -> tuple[Fraction, ...]:
    den = 1 << (n + bits)
    return tuple(Fraction((x << bits) + rng.randrange(0, (1 << bits) + 1), den) for x in coords)


def _corners(n: int, coords: Coords):
    h = Fraction(1, 1 << n)
    return itertools.product(*[(x * h, (x + 1) * h) for x in coords])


def _random_cube(rng: random.Random, n: int, dim: int, radius: Fraction) -> Coords:
    r = int(radius * (1 << n))
    m = 1 << (2 * n)
    r = min(r, m)
    return tuple(rng.randint(-r - 1, r) for _ in range(dim))


def validate_name(
    name,
    max_stage: int,
    samples: int = 200,
    *,
    seed: int = 0,
    probe_radius: Fraction = Fraction(2),
    points_per_cube: int = 4,
    modulus_target: Optional[int] = None,
    modulus_max_level: int = 10,
) -> ValidationReport:
    """Spot-check the defining conditions of a name up to ``max_stage``.

    Function names: interior soundness at corners and random rationals,
    nesting against the parent value, and (when ``modulus_target`` is given)
    the least level ``m`` at which every level-``m`` cube of
    ``[-1/2, 1/2]^d`` has a value of diameter below ``2^-modulus_target``.
    Closed-set names: soundness of ``I_n``/``E_n`` and the hereditary
    conditions.  Point names: interiority, nesting and the diameter bound.
    """
    rng = random.Random(seed)
    report = ValidationReport()
    if isinstance(name, FunctionName):
        _validate_function(name, max_stage, samples, rng, probe_radius, points_per_cube, report)
        if modulus_target is not None:
            report.modulus_level = modulus_level(name, modulus_target, modulus_max_level)
    elif isinstance(name, ClosedSetName):
        _validate_closed_set(name, max_stage, samples, rng, probe_radius, points_per_cube, report)
    elif isinstance(name, PointName):
        _validate_point(name, max_stage, report)
    else:
        raise TypeError(f"cannot validate {type(name).__name__}")
    return report


def _validate_function(f, max_stage, samples, rng, radius, ppc, report):
    for n in range(max_stage + 1):
        for _ in range(samples):
            q = _random_cube(rng, n, f.dim, radius)
            r = f.ranges(n, q)
            report.checks += 1
            if r is None:
                continue
            members = set(_iter_ranges(r))
            pts = list(_corners(n, q)) + [_random_point(rng, n, q) for _ in range(ppc)]
            for p in pts:
                try:
                    y = f.evaluate_exact(p)
                except ZeroDivisionError:
                    continue
                report.samples += 1
                if not in_interior(n, members, y):
                    report.violations.append(
                        Violation("soundness", n, q, f"f({tuple(map(str, p))}) not interior")
                    )
                    return
            if n > 0:
                parent = tuple(x >> 1 for x in q)
                if in_domain(n - 1, parent):
                    pr = f.ranges(n - 1, parent)
                    if pr is not None:
                        fine = refine(cubes_of_ranges(n - 1, pr), n).cubes
                        if not members <= fine:
                            report.violations.append(Violation("nesting", n, q))
                            return


def modulus_level(f: FunctionName, target: int, max_level: int) -> Optional[int]:
    """Least ``m <= max_level`` with all level-``m`` values over ``[-1/2,1/2]^d`` of
    diameter below ``2^-target`` (out-of-window values count as failures)."""
    bound = Fraction(1, 1 << target)
    for m in range(max_level + 1):
        half = 1 << max(m - 1, 0)
        lo, hi = (-half, half - 1) if m > 0 else (-1, 0)
        good = True
        for q in itertools.product(range(lo, hi + 1), repeat=f.dim):
            r = f.ranges(m, q)
            if r is None or Fraction(max(h - l + 1 for l, h in r), 1 << m) >= bound:
                good = False
                break
        if good:
            return m
    return None


def _validate_closed_set(s, max_stage, samples, rng, radius, ppc, report):
    for n in range(max_stage + 1):
        for _ in range(samples):
            q = _random_cube(rng, n, s.dim, radius)
            k = s.classify(n, q)
            report.checks += 1
            if k == UNDECIDED:
                continue
            pts = list(_corners(n, q)) + [_random_point(rng, n, q) for _ in range(ppc)]
            for p in pts:
                vals = [eval_exact(g, p) for g in s.constraints]
                report.samples += 1
                if k == INNER and not all(v < 0 for v in vals):
                    report.violations.append(Violation("inner-soundness", n, q))
                    return
                if k == OUTER and not any(v > 0 for v in vals):
                    report.violations.append(Violation("outer-soundness", n, q))
                    return
            for child in itertools.product(*[(2 * x, 2 * x + 1) for x in q]):
                if s.classify(n + 1, child) != k:
                    report.violations.append(Violation("hereditary", n, q, f"child {child}"))
                    return


def _validate_point(x: PointName, max_stage, report):
    for n in range(max_stage + 1):
        cur = x.stage(n)
        report.checks += 1
        if not in_interior(n, cur.cubes, x.point):
            report.violations.append(Violation("interior", n, ()))
            return
        if cur.diameter() > Fraction(6, 1 << n):
            report.violations.append(Violation("diameter", n, (), str(cur.diameter())))
            return
        if n < max_stage and not x.stage(n + 1).is_subset(refine(cur, n + 1)):
            report.violations.append(Violation("nesting", n + 1, ()))
            return
