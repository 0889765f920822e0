"""Dyadic cube grids and finite same-level cube unions.

A cube at level ``n`` with integer coordinates ``(x_1, ..., x_d)`` is the
closed box ``prod_i [x_i / 2^n, (x_i + 1) / 2^n]``.  All predicates here are
exact and work on integer coordinates only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

Coords = tuple[int, ...]


class LevelMismatch(ValueError):
    """Raised when two cube sets of different level or dimension are combined."""


@dataclass(frozen=True, slots=True)
class DyadicCube:
    level: int
    coords: Coords

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if len(self.coords) < 1:
            raise ValueError("a cube needs at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def side(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    def bounds(self) -> tuple[tuple[Fraction, Fraction], ...]:
        s = self.side
        return tuple((x * s, (x + 1) * s) for x in self.coords)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ValueError("level-0 cubes have no parent")
        return DyadicCube(self.level - 1, tuple(x >> 1 for x in self.coords))


def children(cube: DyadicCube) -> "CubeSet":
    """The ``2^d`` cubes of the next level tiling ``cube``."""
    axes = [(2 * x, 2 * x + 1) for x in cube.coords]
    return CubeSet(cube.level + 1, cube.dim, frozenset(itertools.product(*axes)))


@dataclass(frozen=True, slots=True)
class CubeSet:
    """A finite set of level-``level`` cubes in ``R^dim``."""

    level: int
    dim: int
    cubes: frozenset[Coords] = frozenset()

    def __post_init__(self) -> None:
        if self.level < 0 or self.dim < 1:
            raise ValueError(f"bad level/dimension {self.level}/{self.dim}")
        if not isinstance(self.cubes, frozenset):
            object.__setattr__(self, "cubes", frozenset(self.cubes))
        for c in self.cubes:
            if len(c) != self.dim:
                raise ValueError(f"cube {c} does not have dimension {self.dim}")

    @classmethod
    def of(cls, level: int, dim: int, cubes: Iterable[Sequence[int]]) -> "CubeSet":
        return cls(level, dim, frozenset(tuple(c) for c in cubes))

    def __len__(self) -> int:
        return len(self.cubes)

    def __iter__(self) -> Iterator[Coords]:
        return iter(self.cubes)

    def __contains__(self, coords: object) -> bool:
        return coords in self.cubes

    def __bool__(self) -> bool:
        return bool(self.cubes)

    def sorted(self) -> list[Coords]:
        return sorted(self.cubes)

    def _check(self, other: "CubeSet") -> None:
        if self.level != other.level or self.dim != other.dim:
            raise LevelMismatch(
                f"level/dim {self.level}/{self.dim} vs {other.level}/{other.dim}"
            )

    def _new(self, cubes: frozenset[Coords]) -> "CubeSet":
        return CubeSet(self.level, self.dim, cubes)

    def union(self, other: "CubeSet") -> "CubeSet":
        self._check(other)
        return self._new(self.cubes | other.cubes)

    def intersect(self, other: "CubeSet") -> "CubeSet":
        self._check(other)
        return self._new(self.cubes & other.cubes)

    def difference(self, other: "CubeSet") -> "CubeSet":
        self._check(other)
        return self._new(self.cubes - other.cubes)

    def is_subset(self, other: "CubeSet") -> bool:
        self._check(other)
        return self.cubes <= other.cubes

    __or__ = union
    __and__ = intersect
    __sub__ = difference
    __le__ = is_subset

    def compactly_contained(self, other: "CubeSet") -> bool:
        return compactly_contained(self, other)

    def refine(self, target_level: int) -> "CubeSet":
        return refine(self, target_level)

    def bounding_box(self) -> tuple[tuple[int, int], ...]:
        """Inclusive integer coordinate ranges per axis (nonempty sets only)."""
        if not self.cubes:
            raise ValueError("empty cube set has no bounding box")
        return tuple(
            (min(c[i] for c in self.cubes), max(c[i] for c in self.cubes))
            for i in range(self.dim)
        )

    def diameter(self) -> Fraction:
        """Sup-norm diameter of ``|self|``; zero for the empty set."""
        if not self.cubes:
            return Fraction(0)
        box = self.bounding_box()
        return Fraction(max(hi - lo + 1 for lo, hi in box), 1 << self.level)

    def contains_point(self, point: Sequence[Fraction]) -> bool:
        """Whether ``point`` lies in the closed region ``|self|``."""
        return any(c in self.cubes for c in cubes_containing(self.level, point))


def union(a: CubeSet, b: CubeSet) -> CubeSet:
    return a.union(b)


def intersect(a: CubeSet, b: CubeSet) -> CubeSet:
    return a.intersect(b)


def difference(a: CubeSet, b: CubeSet) -> CubeSet:
    return a.difference(b)


def is_subset(a: CubeSet, b: CubeSet) -> bool:
    return a.is_subset(b)


def neighbourhood(coords: Coords) -> Iterator[Coords]:
    """All ``3^d`` cubes whose coordinates differ from ``coords`` by at most 1."""
    return itertools.product(*[(x - 1, x, x + 1) for x in coords])


def cube_compactly_in(coords: Coords, members) -> bool:
    """Whether a single cube is compactly contained in the union ``members``.

    ``members`` is anything supporting ``in`` on coordinate tuples.
    """
    return all(nb in members for nb in neighbourhood(coords))


def compactly_contained(a: CubeSet, b: CubeSet) -> bool:
    """Decide ``|a| ⋐ |b|`` for same-level cube sets.

    Every point of a cube ``Q`` has a neighbourhood covered by the ``3^d``
    cubes around ``Q``, and every such neighbour meets ``Q``; so the closure
    of ``|a|`` lies in the interior of ``|b|`` iff each neighbour of each cube
    of ``a`` is a member of ``b``.
    """
    a._check(b)
    members = b.cubes
    return all(cube_compactly_in(c, members) for c in a.cubes)


def refine(a: CubeSet, target_level: int) -> CubeSet:
    """The same region ``|a|`` expressed at ``target_level >= a.level``."""
    if target_level < a.level:
        raise ValueError(f"cannot refine level {a.level} to {target_level}")
    k = target_level - a.level
    if k == 0:
        return a
    out = set()
    for c in a.cubes:
        axes = [range(x << k, (x << k) + (1 << k)) for x in c]
        out.update(itertools.product(*axes))
    return CubeSet(target_level, a.dim, frozenset(out))


def _floor_scaled(v: Fraction, level: int) -> int:
    return (v.numerator << level) // v.denominator


def _ceil_scaled(v: Fraction, level: int) -> int:
    return -((-v.numerator << level) // v.denominator)


def box_ranges(level: int, box: Sequence[tuple[Fraction, Fraction]]) -> tuple[tuple[int, int], ...]:
    """Inclusive coordinate ranges of the level-``level`` cubes meeting ``box``.

    Cube ``[x, x+1]`` (in grid units) meets ``[lo, hi]`` iff
    ``ceil(lo) - 1 <= x <= floor(hi)``.
    """
    out = []
    for lo, hi in box:
        lo, hi = Fraction(lo), Fraction(hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        out.append((_ceil_scaled(lo, level) - 1, _floor_scaled(hi, level)))
    return tuple(out)


def cubes_of_ranges(level: int, ranges: Sequence[tuple[int, int]]) -> CubeSet:
    axes = [range(lo, hi + 1) for lo, hi in ranges]
    return CubeSet(level, len(ranges), frozenset(itertools.product(*axes)))


def rasterize_box(level: int, box: Sequence[tuple[Fraction, Fraction]]) -> CubeSet:
    """All level-``level`` cubes meeting the closed box (face contact counts)."""
    return cubes_of_ranges(level, box_ranges(level, box))


def cubes_containing(level: int, point: Sequence[Fraction]) -> Iterator[Coords]:
    """The (one to ``2^d``) level-``level`` cubes containing ``point``."""
    return iter(rasterize_box(level, [(Fraction(p), Fraction(p)) for p in point]).cubes)


def window_bound(level: int) -> int:
    """``M`` such that the stage window ``[-2^n, 2^n]`` is ``[-M, M]`` in grid units."""
    return 1 << (2 * level)


def in_domain(level: int, coords: Coords) -> bool:
    """Whether the cube meets the closed window ``[-2^n, 2^n]^d``."""
    m = 1 << (2 * level)
    return all(-m - 1 <= x <= m for x in coords)


def inside_window(level: int, coords: Coords) -> bool:
    """Whether the cube lies in the closed window ``[-2^n, 2^n]^d``.

    Equivalently, the cube does not touch any cube outside the domain.
    """
    m = 1 << (2 * level)
    return all(-m <= x <= m - 1 for x in coords)
