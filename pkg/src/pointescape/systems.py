"""Affine systems via compactification, and the quadratic family.

All norms are sup-norms.  The compactification ``x -> x / (1 + |x|)`` maps
``R^d`` onto the open unit ball and conjugates ``x -> Ax + b`` to a map that
extends continuously to all of ``R^d``; unbounded affine orbits then become
bounded orbits that the staged decision procedure can certify.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from .interval import Abs, Const, Expr, Max, Min, Var, as_expr, const, variables
from .names import (
    ClosedSetName,
    FunctionName,
    PointName,
    closedset_from_constraints,
    function_from_exprs,
    point_from_rational,
)

Vector = tuple[Fraction, ...]
Matrix = tuple[tuple[Fraction, ...], ...]


def _vec(v) -> Vector:
    return tuple(Fraction(x) for x in v)


def _mat(a) -> Matrix:
    return tuple(tuple(Fraction(x) for x in row) for row in a)


@dataclass(frozen=True)
class Halfspace:
    """``{x : normal . x <= offset}``."""

    normal: Vector
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "normal", _vec(self.normal))
        object.__setattr__(self, "offset", Fraction(self.offset))
        if not any(self.normal):
            raise ValueError("halfspace normal must be nonzero")

    def slack(self, x: Sequence[Fraction]) -> Fraction:
        return self.offset - sum(n * xi for n, xi in zip(self.normal, x))


@dataclass(frozen=True)
class AffineSystem:
    matrix: Matrix
    offset: Vector
    halfspaces: tuple[Halfspace, ...]
    point: Vector

    def __post_init__(self):
        object.__setattr__(self, "matrix", _mat(self.matrix))
        object.__setattr__(self, "offset", _vec(self.offset))
        object.__setattr__(self, "point", _vec(self.point))
        hs = tuple(h if isinstance(h, Halfspace) else Halfspace(*h) for h in self.halfspaces)
        object.__setattr__(self, "halfspaces", hs)
        d = self.dim
        if any(len(r) != d for r in self.matrix) or len(self.offset) != d or len(self.point) != d:
            raise ValueError("inconsistent dimensions in affine system")
        if not hs:
            raise ValueError("at least one halfspace is required")
        if any(len(h.normal) != d for h in hs):
            raise ValueError("halfspace normal has wrong dimension")

    @property
    def dim(self) -> int:
        return len(self.matrix)

    def step(self, x: Sequence[Fraction]) -> Vector:
        return tuple(
            sum(a * xi for a, xi in zip(row, x)) + b for row, b in zip(self.matrix, self.offset)
        )

    def contains(self, x: Sequence[Fraction]) -> bool:
        return all(h.slack(x) >= 0 for h in self.halfspaces)


# ---------------------------------------------------------------------------
# compactification
# ---------------------------------------------------------------------------


def sup_norm(v: Sequence[Fraction]) -> Fraction:
    return max(abs(Fraction(x)) for x in v)


def compactify_point(x: Sequence) -> Vector:
    x = _vec(x)
    s = 1 + sup_norm(x)
    return tuple(xi / s for xi in x)


def decompactify_point(y: Sequence) -> Vector:
    y = _vec(y)
    s = 1 - sup_norm(y)
    if s <= 0:
        raise ValueError("point is not inside the open unit ball")
    return tuple(yi / s for yi in y)


def _norm_expr(es: Sequence[Expr]) -> Expr:
    if len(es) == 1:
        return Abs(es[0])
    return Max(tuple(Abs(e) for e in es))


def _linear(coeffs: Sequence[Fraction], xs: Sequence[Expr]) -> Optional[Expr]:
    out: Optional[Expr] = None
    for a, x in zip(coeffs, xs):
        if a == 0:
            continue
        term = x if a == 1 else Const(a.numerator, a.denominator) * x
        out = term if out is None else out + term
    return out


def compactified_exprs(A, b) -> list[Expr]:
    """Expressions for ``(Ax + (1-m)b) / (|Ax + (1-m)b| + 1 - m)``, ``m = min(1, |x|)``."""
    A, b = _mat(A), _vec(b)
    xs = variables(len(A))
    one_minus_m = Const(1) - Min((Const(1), _norm_expr(xs)))
    ys = []
    for row, bi in zip(A, b):
        y = _linear(row, xs)
        if bi != 0:
            shift = Const(bi.numerator, bi.denominator) * one_minus_m
            y = shift if y is None else y + shift
        ys.append(y if y is not None else Const(0))
    denom = _norm_expr(ys) + one_minus_m
    return [y / denom for y in ys]


def build_compactified_map(A, b) -> FunctionName:
    return function_from_exprs(compactified_exprs(A, b))


def compactified_constraints(halfspaces: Sequence[Halfspace], dim: int) -> list[Expr]:
    xs = variables(dim)
    one_minus_m = Const(1) - Min((Const(1), _norm_expr(xs)))
    out = []
    for h in halfspaces:
        g = _linear(h.normal, xs)
        if h.offset != 0:
            g = g - Const(h.offset.numerator, h.offset.denominator) * one_minus_m
        out.append(g)
    return out


def build_compactified_polyhedron(halfspaces: Sequence[Halfspace], dim: int) -> ClosedSetName:
    return closedset_from_constraints(compactified_constraints(halfspaces, dim), dim)


def affine_exprs(A, b) -> list[Expr]:
    A, b = _mat(A), _vec(b)
    xs = variables(len(A))
    out = []
    for row, bi in zip(A, b):
        y = _linear(row, xs)
        if bi != 0:
            y = const(bi) if y is None else y + const(bi)
        out.append(y if y is not None else Const(0))
    return out


def polyhedron_constraints(halfspaces: Sequence[Halfspace], dim: int) -> list[Expr]:
    xs = variables(dim)
    return [_linear(h.normal, xs) - const(h.offset) for h in halfspaces]


def reduce_affine(sys: AffineSystem) -> tuple[FunctionName, ClosedSetName, PointName]:
    """The compactified instance; trapped iff the original instance is."""
    return (
        build_compactified_map(sys.matrix, sys.offset),
        build_compactified_polyhedron(sys.halfspaces, sys.dim),
        point_from_rational(compactify_point(sys.point)),
    )


def raw_affine(sys: AffineSystem) -> tuple[FunctionName, ClosedSetName, PointName]:
    """The uncompactified instance, for comparison."""
    return (
        function_from_exprs(affine_exprs(sys.matrix, sys.offset)),
        closedset_from_constraints(polyhedron_constraints(sys.halfspaces, sys.dim), sys.dim),
        point_from_rational(sys.point),
    )


# ---------------------------------------------------------------------------
# advisory classification of trapped affine instances
# ---------------------------------------------------------------------------

ROBUST_TRAPPED = "robust-trapped"
ESCAPING = "escaping"
NOT_ROBUST = "not-robust"
UNDETERMINED = "undetermined"


@dataclass
class RobustnessClass:
    kind: str
    case: Optional[int] = None
    reason: str = ""
    details: dict = field(default_factory=dict)
    advisory: bool = True

    def __str__(self) -> str:
        if self.kind == ROBUST_TRAPPED:
            return f"{self.kind} (case {self.case})"
        return f"{self.kind}: {self.reason}" if self.reason else self.kind


def classify_affine(sys: AffineSystem, tolerance: float = 1e-9, horizon: int = 200) -> RobustnessClass:
    """Floating-point classification of ``sys`` against the three robust cases.

    Escape and boundary contact within ``horizon`` steps are detected exactly.
    Everything spectral is double precision; any quantity within
    ``tolerance`` of a decision threshold yields ``undetermined``.  The
    result is advisory and never enters a certificate.
    """
    if sys.dim > 6:
        raise ValueError("classify_affine supports dimension <= 6")
    tol = tolerance
    x = sys.point
    for k in range(horizon + 1):
        slacks = [h.slack(x) for h in sys.halfspaces]
        if min(slacks) < 0:
            return RobustnessClass(ESCAPING, reason=f"orbit leaves P at step {k}", details={"step": k})
        if min(slacks) == 0:
            return RobustnessClass(NOT_ROBUST, reason=f"orbit touches the boundary at step {k}")
        x = sys.step(x)

    A = np.array([[float(a) for a in row] for row in sys.matrix])
    b = np.array([float(v) for v in sys.offset])
    x0 = np.array([float(v) for v in sys.point])
    normals = [np.array([float(v) for v in h.normal]) for h in sys.halfspaces]
    offsets = [float(h.offset) for h in sys.halfspaces]
    eig, vecs = np.linalg.eig(A)
    mods = np.abs(eig)
    r = float(mods.max())
    details = {"spectral_radius": r, "eigenvalues": [complex(e) for e in eig]}

    if r < 1 - tol:
        try:
            fixed = np.linalg.solve(np.eye(sys.dim) - A, b)
        except np.linalg.LinAlgError:
            return RobustnessClass(UNDETERMINED, reason="singular I - A", details=details)
        margins = [
            (off - float(nv @ fixed)) / float(np.abs(nv).sum()) for nv, off in zip(normals, offsets)
        ]
        details["fixed_point"] = fixed.tolist()
        scale = tol * (1 + float(np.abs(fixed).max()))
        if min(margins) > scale:
            return RobustnessClass(ROBUST_TRAPPED, 1, details=details)
        if min(margins) < -scale:
            return RobustnessClass(
                UNDETERMINED, reason="fixed point outside P but no escape seen", details=details
            )
        return RobustnessClass(UNDETERMINED, reason="fixed point on the boundary", details=details)

    if abs(r - 1) <= tol and r < 1:
        return RobustnessClass(UNDETERMINED, reason="spectral radius within tolerance of 1", details=details)

    order = np.argsort(-mods)
    top = order[0]
    rho = eig[top]
    if abs(rho.imag) > tol:
        return RobustnessClass(NOT_ROBUST, reason="dominant eigenvalues are complex", details=details)
    if len(eig) > 1 and mods[order[1]] >= r - tol:
        return RobustnessClass(
            UNDETERMINED, reason="dominant eigenvalue not separated", details=details
        )
    rho = float(rho.real)
    if rho < 0:
        return RobustnessClass(NOT_ROBUST, reason="dominant eigenvalue is negative", details=details)
    if abs(rho - 1) <= tol:
        case = 3
    elif rho > 1 + tol:
        case = 2
    else:
        return RobustnessClass(UNDETERMINED, reason="dominant eigenvalue near 1", details=details)

    v = np.real(vecs[:, top])
    leig, lvecs = np.linalg.eig(A.T)
    u = np.real(lvecs[:, int(np.argmin(np.abs(leig - rho)))])
    cone = [float(nv @ v) / (float(np.abs(nv).sum()) * float(np.abs(v).max())) for nv in normals]
    if any(abs(s) <= tol for s in cone):
        return RobustnessClass(
            UNDETERMINED, reason="eigenvector on the boundary of the recession cone", details=details
        )
    if all(s > 0 for s in cone):
        v = -v
        cone = [-s for s in cone]
    if not all(s < 0 for s in cone):
        return RobustnessClass(
            NOT_ROBUST, reason="eigenvector not in the interior of the recession cone", details=details
        )
    uv = float(u @ v)
    alpha = float(u @ x0) / uv
    details.update(rho=rho, eigenvector=v.tolist(), alpha=alpha)
    if abs(alpha) <= tol:
        return RobustnessClass(UNDETERMINED, reason="alpha within tolerance of 0", details=details)
    if alpha < 0:
        return RobustnessClass(NOT_ROBUST, reason="alpha < 0", details=details)
    if case == 3:
        beta = float(u @ b) / uv
        details["beta"] = beta
        if abs(beta) <= tol:
            return RobustnessClass(UNDETERMINED, reason="beta within tolerance of 0", details=details)
        if beta < 0:
            return RobustnessClass(NOT_ROBUST, reason="beta < 0", details=details)
    return RobustnessClass(ROBUST_TRAPPED, case, details=details)


# ---------------------------------------------------------------------------
# the quadratic family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticParameter:
    re: Fraction
    im: Fraction

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))


def quadratic_exprs(c: QuadraticParameter) -> list[Expr]:
    """Real form of ``z^2 + c``: ``(x^2 - y^2 + a, 2xy + b)``."""
    x, y = Var(1), Var(2)
    return [x * x - y * y + const(c.re), Const(2) * (x * y) + const(c.im)]


ESCAPE_RADIUS = 3


def disk_constraint(radius=ESCAPE_RADIUS) -> Expr:
    """``max(|x|, |y|) - radius``: the sup-norm ball of the given radius."""
    return Max((Abs(Var(1)), Abs(Var(2)))) - const(radius)


def mandelbrot_reduce(c: QuadraticParameter) -> tuple[FunctionName, ClosedSetName, PointName]:
    if not isinstance(c, QuadraticParameter):
        c = QuadraticParameter(*c)
    return (
        function_from_exprs(quadratic_exprs(c)),
        closedset_from_constraints([disk_constraint()], 2),
        point_from_rational((0, 0)),
    )


@dataclass(frozen=True)
class CycleInfo:
    period: int
    multiplier: float
    points: tuple[complex, ...]


def attracting_cycle_oracle(
    c,
    max_iter: int = 20000,
    period_bound: int = 64,
    tol: float = 1e-10,
    prec: int = 128,
) -> Optional[CycleInfo]:
    """Find an attracting cycle of ``z^2 + c`` by following the critical orbit.

    Returns the least period ``p`` with ``|f^p(z) - z| < tol`` for a late orbit
    point ``z``, and ``|prod 2 z_i|`` over the refined cycle.  ``None`` if the
    orbit escapes or no cycle shows up within ``max_iter`` iterations.
    """
    with mpmath.workprec(prec):
        cc = _mp_complex(c)
        z = mpmath.mpc(0)
        it = 0
        chunk = 256
        while it < max_iter:
            for _ in range(chunk):
                z = z * z + cc
                if abs(z.real) > 2 or abs(z.imag) > 2:
                    if abs(z) > 2:
                        return None
            it += chunk
            period = _near_period(z, cc, period_bound, tol)
            if period is not None:
                break
        else:
            return None
        for _ in range(64):
            w = z
            for _ in range(period):
                w = w * w + cc
            z = w
        pts = []
        mult = mpmath.mpf(1)
        w = z
        for _ in range(period):
            pts.append(complex(w))
            mult *= abs(2 * w)
            w = w * w + cc
        return CycleInfo(period, float(mult), tuple(pts))


def _mp_complex(c) -> "mpmath.mpc":
    if isinstance(c, QuadraticParameter):
        re, im = c.re, c.im
    elif isinstance(c, complex):
        re, im = Fraction(c.real), Fraction(c.imag)
    else:
        re, im = Fraction(c), Fraction(0)
    return mpmath.mpc(
        mpmath.mpf(re.numerator) / re.denominator, mpmath.mpf(im.numerator) / im.denominator
    )


def _near_period(z, cc, bound: int, tol: float) -> Optional[int]:
    w = z
    for p in range(1, bound + 1):
        w = w * w + cc
        if abs(w - z) < tol:
            return p
    return None


def escape_step_exact(c, max_steps: int = 1000, radius=ESCAPE_RADIUS, exact_steps: int = 18) -> Optional[int]:
    """First ``k`` with ``|f_c^k(0)| > radius`` (Euclidean), or None.

    The orbit is computed exactly in dyadic arithmetic for the first
    ``exact_steps`` steps and with rigorous mpmath intervals afterwards.
    Returns None if no exit is certain within ``max_steps``.
    """
    if not isinstance(c, QuadraticParameter):
        c = QuadraticParameter(c.real, c.imag) if isinstance(c, complex) else QuadraticParameter(c, 0)
    a, b = c.re, c.im
    r2 = Fraction(radius) ** 2
    x, y = Fraction(0), Fraction(0)
    k = 0
    while k < min(exact_steps, max_steps):
        x, y = x * x - y * y + a, 2 * x * y + b
        k += 1
        if x * x + y * y > r2:
            return k
    if k >= max_steps:
        return None
    iv = mpmath.iv
    with mpmath.workprec(4096):
        old = iv.prec
        iv.prec = 4096
        try:
            X = iv.mpf([x.numerator, x.numerator]) / x.denominator
            Y = iv.mpf([y.numerator, y.numerator]) / y.denominator
            A = iv.mpf([a.numerator, a.numerator]) / a.denominator
            B = iv.mpf([b.numerator, b.numerator]) / b.denominator
            R2 = iv.mpf(r2.numerator) / r2.denominator
            while k < max_steps:
                X, Y = X * X - Y * Y + A, 2 * X * Y + B
                k += 1
                m = X * X + Y * Y
                if m.a > R2.b:
                    return k
                if float(m.delta) > 1.0:
                    return None
        finally:
            iv.prec = old
    return None


# ---------------------------------------------------------------------------
# bump perturbation
# ---------------------------------------------------------------------------


def bump_weight(center: Sequence[Fraction], radius: Fraction) -> Expr:
    """``max(0, 1 - |x - center| / radius)`` as an expression."""
    radius = Fraction(radius)
    if radius <= 0:
        raise ValueError("bump radius must be positive")
    xs = variables(len(center))
    dist = _norm_expr([x - const(p) for x, p in zip(xs, center)])
    return Max((Const(0), Const(1) - const(1 / radius) * dist))


def perturb_toward(es: Sequence[Expr], center, radius, target) -> list[Expr]:
    """Blend ``f`` toward the constant ``target`` on ``B(center, radius)``.

    The result is ``target * t + f * (1 - t)`` with ``t`` the bump weight: it
    agrees with ``f`` outside the ball and equals ``target`` at ``center``.
    """
    center, target = _vec(center), _vec(target)
    if not (len(es) == len(center) == len(target)):
        raise ValueError("dimension mismatch in perturbation")
    t = bump_weight(center, Fraction(radius))
    return [const(y) * t + as_expr(f) * (Const(1) - t) for f, y in zip(es, target)]
