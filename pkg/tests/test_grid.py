from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointescape.grid import (
    CubeSet,
    DyadicCube,
    LevelMismatch,
    box_ranges,
    children,
    compactly_contained,
    cubes_containing,
    in_domain,
    inside_window,
    rasterize_box,
    refine,
    window_bound,
)


def cs(level, *cubes):
    return CubeSet.of(level, len(cubes[0]) if cubes else 1, cubes)


def test_cube_bounds_and_parent():
    q = DyadicCube(2, (-1, 3))
    assert q.bounds() == ((Fraction(-1, 4), 0), (Fraction(3, 4), 1))
    assert q.parent() == DyadicCube(1, (-1, 1))
    with pytest.raises(ValueError):
        DyadicCube(0, (0,)).parent()


def test_children_tile_parent():
    kids = children(DyadicCube(1, (0, -1)))
    assert kids.level == 2 and len(kids) == 4
    assert refine(cs(1, (0, -1)), 2) == kids


def test_set_algebra_and_level_checks():
    a = cs(1, (0,), (1,))
    b = cs(1, (1,), (2,))
    assert (a | b).sorted() == [(0,), (1,), (2,)]
    assert (a & b).sorted() == [(1,)]
    assert (a - b).sorted() == [(0,)]
    assert not a <= b
    with pytest.raises(LevelMismatch):
        a | cs(2, (0,))


def test_compact_containment_examples():
    big = CubeSet.of(0, 2, [(x, y) for x in range(-1, 2) for y in range(-1, 2)])
    assert compactly_contained(cs(0, (0, 0)), big)
    assert not compactly_contained(cs(0, (1, 0)), big)
    # diagonal contact is enough to break compact containment
    missing_corner = CubeSet(0, 2, big.cubes - {(1, 1)})
    assert not compactly_contained(cs(0, (0, 0)), missing_corner)
    assert compactly_contained(CubeSet(0, 2), big)


def test_closed_rasterization_counts_face_contact():
    # [0, 1/2] at level 1 touches cubes -1 (at 0), 0, and 1 (at 1/2)
    assert box_ranges(1, [(Fraction(0), Fraction(1, 2))]) == ((-1, 1),)
    assert rasterize_box(2, [(Fraction(1, 8), Fraction(1, 8))]).sorted() == [(0,)]
    assert sorted(cubes_containing(1, [Fraction(0), Fraction(1, 3)])) == [(-1, 0), (0, 0)]


def test_window_predicates():
    assert window_bound(1) == 4
    assert in_domain(1, (-5,)) and in_domain(1, (4,))
    assert not in_domain(1, (-6,)) and not in_domain(1, (5,))
    assert inside_window(1, (-4,)) and inside_window(1, (3,))
    assert not inside_window(1, (-5,)) and not inside_window(1, (4,))


coords = st.tuples(st.integers(-6, 6), st.integers(-6, 6))
sets2 = st.frozensets(coords, max_size=25)


@settings(max_examples=200, deadline=None)
@given(sets2, sets2, st.integers(0, 2))
def test_refine_preserves_containment_and_algebra(a, b, k):
    A, B = CubeSet(1, 2, a), CubeSet(1, 2, b)
    assert refine(A | B, 1 + k) == refine(A, 1 + k) | refine(B, 1 + k)
    assert (A <= B) == (refine(A, 1 + k) <= refine(B, 1 + k))
    # refining both sides never changes the answer
    assert compactly_contained(A, B) == compactly_contained(refine(A, 2 + k), refine(B, 2 + k))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), st.lists(st.tuples(st.integers(-40, 40), st.integers(-40, 40), st.integers(1, 16)), min_size=1, max_size=2))
def test_rasterization_covers_box(n, raw):
    box = [(Fraction(min(a, b), q), Fraction(max(a, b), q)) for a, b, q in raw]
    cubes = rasterize_box(n, box)
    for lo, hi in [box[0]]:
        for p in (lo, hi, (lo + hi) / 2):
            point = [p] + [b[0] for b in box[1:]]
            assert cubes.contains_point(point)
    # every rasterized cube meets the box
    side = Fraction(1, 1 << n)
    for c in cubes:
        for x, (lo, hi) in zip(c, box):
            assert x * side <= hi and (x + 1) * side >= lo
