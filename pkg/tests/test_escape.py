import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_expr, reference_stage
from pointescape.escape import (
    BUDGET_EXHAUSTED,
    CUBE_CAP,
    ESCAPES,
    ITERATION_CAP,
    OUT_OF_WINDOW,
    POINT_UNCERTAIN,
    TRAPPED,
    UNKNOWN,
    CertificateFormatError,
    EscapeCertificate,
    EscapeConfig,
    TrappedCertificate,
    check_certificate,
    check_escape_certificate,
    check_trapped_certificate,
    check_trapped_pairing,
    dumps_certificate,
    loads_certificate,
    point_escape,
    point_escape_stage,
)
from pointescape.grid import CubeSet
from pointescape.interval import Abs, Const, Var
from pointescape.names import closedset_from_constraints, function_from_exprs, point_from_rational
from pointescape.systems import QuadraticParameter, mandelbrot_reduce

x, y = Var(1), Var(2)


def interval_set(a):
    """``[-a, a]`` in one dimension."""
    return closedset_from_constraints([Abs(x) - Const(a)], 1)


def test_contraction_is_trapped_with_valid_certificate():
    F = function_from_exprs([x / 2])
    A, X = interval_set(1), point_from_rational([Fraction(1, 3)])
    out = point_escape(F, A, X, EscapeConfig(max_stage=6))
    assert out.kind == TRAPPED
    cert = out.certificate
    assert check_certificate(cert, F, A, X)
    assert all(A.compactly_inner(cert.stage, c) for c in cert.cubes)


def test_doubling_on_the_line_escapes():
    F = function_from_exprs([x * 2])
    A, X = interval_set(1), point_from_rational([Fraction(1, 3)])
    out = point_escape(F, A, X, EscapeConfig(max_stage=6))
    assert out.kind == ESCAPES
    # 1/3 -> 2/3 -> 4/3 leaves [-1, 1] at step 2; the enclosure needs longer
    assert out.steps >= 2
    assert check_certificate(out.certificate, F, A, X)


def test_point_outside_the_window_defers():
    F = function_from_exprs([x])
    v = point_escape_stage(0, F, interval_set(4), point_from_rational([Fraction(5, 2)]))
    assert (v.kind, v.reason) == (UNKNOWN, POINT_UNCERTAIN)


def test_budget_exhausted_lists_per_stage_reasons():
    # the identity never stabilizes because every value is padded
    F = function_from_exprs([x])
    out = point_escape(F, interval_set(1), point_from_rational([0]), EscapeConfig(max_stage=4))
    assert out.kind == BUDGET_EXHAUSTED
    assert set(out.reasons) == set(range(5))
    assert out.reasons[4] == OUT_OF_WINDOW


def test_caps_report_their_reason():
    F = function_from_exprs([x])
    A, X = interval_set(1), point_from_rational([0])
    assert point_escape_stage(4, F, A, X, max_iterations=2).reason == ITERATION_CAP
    assert point_escape_stage(4, F, A, X, max_cubes=20).reason == CUBE_CAP


def test_quadratic_fixtures_small():
    for c, kind in [(1, ESCAPES), (0, TRAPPED), (-1, TRAPPED)]:
        names = mandelbrot_reduce(QuadraticParameter(c, 0))
        out = point_escape(*names, EscapeConfig(max_stage=7))
        assert out.kind == kind, c
        assert check_certificate(out.certificate, *names)
        if c == 1:
            assert out.steps == 3


def test_observer_sees_growing_orbit():
    seen = []
    F = function_from_exprs([x / 2])
    point_escape_stage(
        4, F, interval_set(1), point_from_rational([Fraction(1, 2)]),
        observer=lambda i, d, p, o: seen.append((i, len(o))),
    )
    assert seen[0][0] == 1
    assert [s for _, s in seen] == sorted(s for _, s in seen)


# ---------------------------------------------------------------------------
# the frontier loop against the plain recursion
# ---------------------------------------------------------------------------


def _compare(n, F, A, X):
    ref_kind, ref_steps, ref_orbit = reference_stage(n, F, A, X)
    got = point_escape_stage(n, F, A, X)
    assert got.kind == ref_kind
    if ref_kind == ESCAPES:
        assert got.steps == ref_steps
    if ref_kind == TRAPPED:
        assert got.certificate.cubes.cubes == ref_orbit
    return got.kind


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 5))
def test_stage_matches_reference_1d(seed, n):
    rng = random.Random(seed)
    F = function_from_exprs([random_expr(rng, 1, 3)])
    A = interval_set(Fraction(rng.randint(1, 12), 4))
    X = point_from_rational([Fraction(rng.randint(-8, 8), rng.randint(1, 9))])
    _compare(n, F, A, X)


@settings(max_examples=60, deadline=None)
@given(st.integers(-12, 6), st.integers(-8, 8), st.integers(0, 3))
def test_stage_matches_reference_quadratic(a, b, n):
    names = mandelbrot_reduce(QuadraticParameter(Fraction(a, 8), Fraction(b, 8)))
    _compare(n, *names)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 3))
def test_stage_matches_reference_affine_2d(seed, n):
    rng = random.Random(seed)
    q = lambda: Const(rng.randint(-6, 6), rng.choice([4, 8]))  # noqa: E731
    F = function_from_exprs([q() * x + q() * y + q(), q() * x + q() * y + q()])
    A = closedset_from_constraints([Abs(x) - Const(rng.randint(1, 6), 2), Abs(y) - Const(3, 2)], 2)
    X = point_from_rational([Fraction(rng.randint(-4, 4), 8), Fraction(rng.randint(-4, 4), 8)])
    _compare(n, F, A, X)


def test_reference_comparison_covers_every_verdict():
    kinds = set()
    for c in [(2, 0), (0, 0), (Fraction(1, 4), 0), (-2, 1)]:
        for n in range(4):
            kinds.add(_compare(n, *mandelbrot_reduce(QuadraticParameter(*c))))
    assert kinds == {ESCAPES, TRAPPED, UNKNOWN}


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trapped_run():
    names = mandelbrot_reduce(QuadraticParameter(-1, 0))
    out = point_escape(*names, EscapeConfig(max_stage=7))
    assert out.kind == TRAPPED
    return names, out.certificate


@pytest.fixture(scope="module")
def escape_run():
    names = mandelbrot_reduce(QuadraticParameter(1, 0))
    out = point_escape(*names, EscapeConfig(max_stage=7))
    return names, out.certificate


def test_serialization_round_trip(trapped_run, escape_run):
    for _, cert in (trapped_run, escape_run):
        text = dumps_certificate(cert)
        assert loads_certificate(text) == cert
        assert dumps_certificate(loads_certificate(text)) == text


def test_digest_mismatch_is_rejected(trapped_run):
    rec = json.loads(dumps_certificate(trapped_run[1]))
    rec["cubes"].pop()
    with pytest.raises(CertificateFormatError):
        loads_certificate(json.dumps(rec))
    # without the digest check the checker itself catches the damage
    cert = loads_certificate(json.dumps(rec), require_digest=False)
    F, A, X = trapped_run[0]
    assert not check_certificate(cert, F, A, X)


@pytest.mark.parametrize(
    "text",
    [
        "[]",
        "{",
        '{"kind": "trapped", "stage": 1, "dimension": 1, "cubes": []}',
        '{"kind": "trapped", "stage": 1, "dimension": 2, "cubes": [[0]]}',
        '{"kind": "escapes", "stage": 1, "dimension": 1, "steps": 0}',
        '{"kind": "escapes", "stage": true, "dimension": 1, "steps": 2}',
        '{"kind": "other", "stage": 1, "dimension": 1}',
    ],
)
def test_malformed_certificates(text):
    with pytest.raises(CertificateFormatError):
        loads_certificate(text, require_digest=False)


def test_checker_rejects_semantic_tampering(trapped_run, escape_run):
    (F, A, X), cert = trapped_run
    smaller = CubeSet(cert.stage, 2, frozenset(cert.cubes.sorted()[1:]))
    assert not check_trapped_certificate(TrappedCertificate(cert.stage, smaller), F, A)
    shifted = TrappedCertificate(cert.stage + 1, CubeSet(cert.stage + 1, 2, cert.cubes.cubes))
    assert not check_trapped_certificate(shifted, F, A)
    assert not check_certificate(EscapeCertificate(cert.stage, 5, 2), F, A, X)
    # an invariant of another system does not pair with this point
    far = TrappedCertificate(cert.stage, CubeSet(cert.stage, 2, frozenset({(0, 0)})))
    assert not check_trapped_pairing(far, F, X)

    (F, A, X), cert = escape_run
    assert not check_escape_certificate(EscapeCertificate(cert.stage, cert.steps - 1, 2), F, A, X)
    assert not check_escape_certificate(EscapeCertificate(cert.stage, cert.steps, 1), F, A, X)
    assert not check_certificate(cert, *trapped_run[0])
