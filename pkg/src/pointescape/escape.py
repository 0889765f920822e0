"""Staged point-escape decision with re-checkable certificates.

Each stage ``n`` over-approximates the orbit of the point on the level-``n``
grid.  Two chains are iterated: the orbit enclosure ``Q_i = F(Q_{i-1})``
and the pruned chain ``P_i``, which keeps only cubes that are not certainly
outside the set.  An empty ``P_i`` proves escape within ``i`` steps; a
stabilized orbit closure ``O`` compactly inside the set proves the point is
trapped.  Anything else defers to the next, finer stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .grid import Coords, CubeSet, in_domain, inside_window
from .names import ClosedSetName, FunctionName, ImageTooLarge, PointName, _iter_ranges

log = logging.getLogger(__name__)

ESCAPES = "escapes"
TRAPPED = "trapped"
UNKNOWN = "unknown"
BUDGET_EXHAUSTED = "budget-exhausted"

POINT_UNCERTAIN = "point-uncertain"
OUT_OF_WINDOW = "out-of-window"
NOT_INTERIOR = "orbit-closure-not-interior"
ITERATION_CAP = "iteration-cap"
CUBE_CAP = "cube-cap"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class EscapeConfig:
    max_stage: int = 8
    max_iterations_per_stage: Optional[int] = None
    wall_timeout: Optional[float] = None  # seconds, whole run
    max_cubes: Optional[int] = None  # orbit-closure size cap per stage
    min_stage: int = 0

    def __post_init__(self):
        if self.max_stage < 0 or self.min_stage < 0:
            raise ValueError("stages must be nonnegative")


@dataclass(frozen=True)
class TrappedCertificate:
    stage: int
    cubes: CubeSet  # the stabilized orbit closure

    kind = TRAPPED

    @property
    def dim(self) -> int:
        return self.cubes.dim

    @property
    def invariant_cubes(self) -> CubeSet:
        return self.cubes


@dataclass(frozen=True)
class EscapeCertificate:
    stage: int
    steps: int
    dim: int

    kind = ESCAPES


Certificate = Union[TrappedCertificate, EscapeCertificate]


@dataclass
class StageStats:
    stage: int
    verdict: str
    reason: Optional[str] = None
    steps: Optional[int] = None
    iterations: int = 0
    orbit_cubes: int = 0
    evaluations: int = 0
    seconds: float = 0.0


@dataclass
class StageVerdict:
    kind: str
    stats: StageStats
    certificate: Optional[Certificate] = None

    @property
    def reason(self) -> Optional[str]:
        return self.stats.reason

    @property
    def steps(self) -> Optional[int]:
        return self.stats.steps


@dataclass
class Outcome:
    kind: str
    certificate: Optional[Certificate] = None
    stages: list[StageStats] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def steps(self) -> Optional[int]:
        if isinstance(self.certificate, EscapeCertificate):
            return self.certificate.steps
        return None

    @property
    def stage(self) -> Optional[int]:
        return None if self.certificate is None else self.certificate.stage

    @property
    def reasons(self) -> dict[int, str]:
        return {s.stage: s.reason for s in self.stages if s.verdict == UNKNOWN}


Observer = Callable[[int, set, set, set], None]


def _prune(setname: ClosedSetName, n: int, cubes) -> set[Coords]:
    """Cubes not compactly contained in ``|E_n|``."""
    return setname.not_compactly_outer(n, cubes)


def _next_p(
    F: FunctionName, setname: ClosedSetName, n: int, P, limit, memo: dict
) -> Optional[set[Coords]]:
    """``{Q in F(P) : Q not ⋐ |E_n|}``, or None if a value leaves the window.

    ``memo`` maps a cube to its pruned value and lives for one stage.
    """
    out: set[Coords] = set()
    for c in P:
        kept = memo.get(c)
        if kept is None:
            r = F.ranges(n, c)
            if r is None:
                return None
            acc: set[Coords] = set()
            _prune_box(setname, n, r, acc)
            kept = memo[c] = tuple(acc)
        out.update(kept)
        if limit is not None and len(out) > limit:
            raise ImageTooLarge(len(out))
    return out


def _prune_box(setname: ClosedSetName, n: int, r, out: set) -> None:
    """Add the cubes of box ``r`` not ``⋐ |E_n|`` to ``out``.

    Boxes lying deep in the exterior are dropped whole; others are bisected
    along their longest side down to a few cubes.
    """
    size = 1
    for lo, hi in r:
        size *= hi - lo + 1
    if size <= 4:
        out |= _prune(setname, n, _iter_ranges(r))
        return
    if setname.box_compactly_outer(n, r):
        return
    k = max(range(len(r)), key=lambda j: r[j][1] - r[j][0])
    lo, hi = r[k]
    mid = (lo + hi) // 2
    _prune_box(setname, n, r[:k] + ((lo, mid),) + r[k + 1 :], out)
    _prune_box(setname, n, r[:k] + ((mid + 1, hi),) + r[k + 1 :], out)


def point_escape_stage(
    n: int,
    F: FunctionName,
    setname: ClosedSetName,
    X: PointName,
    *,
    max_iterations: Optional[int] = None,
    max_cubes: Optional[int] = None,
    deadline: Optional[float] = None,
    observer: Optional[Observer] = None,
) -> StageVerdict:
    """Run stage ``n`` of the decision procedure.

    The orbit closure is grown breadth-first: ``O_{i+1} = O_i | F(D_i)`` where
    ``D_i`` holds the cubes first reached at iteration ``i``.  This is the
    same set as ``O_i | F(Q_i)``, and a value outside the window first shows
    up in ``Q_i`` exactly when it first shows up in ``D_i``, so verdicts,
    step counts and iteration counts agree with the plain recursion on
    ``Q_i``.  New cubes are valued as soon as they are reached (largest
    first), which lets a run stop at the first out-of-window value instead
    of materializing the huge image that usually precedes it.

    ``observer(i, D_i, P_i, O_i)`` is called after every iteration when given.
    """
    t0 = time.perf_counter()
    evals0 = F.evaluations
    stats = StageStats(stage=n, verdict=UNKNOWN)

    def finish(kind, reason=None, cert=None):
        stats.verdict = kind
        stats.reason = reason
        stats.evaluations = F.evaluations - evals0
        stats.seconds = time.perf_counter() - t0
        return StageVerdict(kind, stats, cert)

    xs = X.stage(n)
    if not all(inside_window(n, c) for c in xs.cubes):
        return finish(UNKNOWN, POINT_UNCERTAIN)

    Q = F.image(n, xs.cubes)
    if Q is None:
        return finish(UNKNOWN, OUT_OF_WINDOW)
    P = _prune(setname, n, Q)
    O = set(Q)
    D = Q
    stats.orbit_cubes = len(O)
    first_empty = 1 if not P else None
    pmemo: dict[Coords, tuple[Coords, ...]] = {}
    # a cube of Q_1 valued outside the window ends the next iteration
    leaving = any(F.cells(n, c) is None for c in D)
    if observer:
        observer(1, D, P, O)

    i = 1
    while True:
        if max_iterations is not None and i > max_iterations:
            return finish(UNKNOWN, ITERATION_CAP)
        if deadline is not None and time.monotonic() > deadline:
            return finish(UNKNOWN, TIMEOUT)
        try:
            Pn = _next_p(F, setname, n, P, max_cubes, pmemo)
        except ImageTooLarge:
            return finish(UNKNOWN, CUBE_CAP)
        stats.iterations = i
        if Pn is not None and not Pn:
            stats.steps = first_empty or i + 1
            cert = EscapeCertificate(n, stats.steps, F.dim)
            return finish(ESCAPES, cert=cert)
        if leaving or Pn is None:
            return finish(UNKNOWN, OUT_OF_WINDOW)

        new: set[Coords] = set()
        room = None if max_cubes is None else max_cubes - len(O)
        for c in sorted(D, key=_sup, reverse=True):
            for q in F.cells(n, c):
                if q in O or q in new:
                    continue
                new.add(q)
                if F.ranges(n, q) is None:
                    leaving = True
                    break
            if leaving:
                break
            if room is not None and len(new) > room:
                return finish(UNKNOWN, CUBE_CAP)
        O |= new
        stats.orbit_cubes = len(O)
        if observer:
            observer(i + 1, new, Pn, O)
        if not new:
            if all(setname.compactly_inner(n, c) for c in O):
                cert = TrappedCertificate(n, CubeSet(n, F.dim, frozenset(O)))
                return finish(TRAPPED, cert=cert)
            return finish(UNKNOWN, NOT_INTERIOR)
        if not leaving and max_cubes is not None and len(O) > max_cubes:
            return finish(UNKNOWN, CUBE_CAP)
        D, P = new, Pn
        i += 1


def _sup(c: Coords) -> int:
    return max(x if x >= 0 else -x - 1 for x in c)


def point_escape(
    F: FunctionName,
    setname: ClosedSetName,
    X: PointName,
    config: EscapeConfig = EscapeConfig(),
) -> Outcome:
    """Run stages ``min_stage..max_stage`` until one of them decides."""
    t0 = time.perf_counter()
    deadline = None if config.wall_timeout is None else time.monotonic() + config.wall_timeout
    outcome = Outcome(BUDGET_EXHAUSTED)
    for n in range(config.min_stage, config.max_stage + 1):
        v = point_escape_stage(
            n,
            F,
            setname,
            X,
            max_iterations=config.max_iterations_per_stage,
            max_cubes=config.max_cubes,
            deadline=deadline,
        )
        outcome.stages.append(v.stats)
        log.debug("stage %d: %s %s", n, v.kind, v.reason or "")
        if v.kind != UNKNOWN:
            outcome.kind = v.kind
            outcome.certificate = v.certificate
            break
        if v.reason == TIMEOUT:
            break
    outcome.seconds = time.perf_counter() - t0
    return outcome


# ---------------------------------------------------------------------------
# checking
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    ok: bool
    reason: str = ""
    witness: object = None

    def __bool__(self) -> bool:
        return self.ok


def check_trapped_certificate(
    cert: TrappedCertificate, F: FunctionName, setname: ClosedSetName
) -> CheckResult:
    """Re-derive ``F_n(O) ⊆ O`` and ``O ⋐ I_n`` at the certificate's stage.

    This does not check that the image of the starting point lies in ``O``;
    see :func:`check_trapped_pairing` for that.
    """
    n = cert.stage
    cubes = cert.cubes
    if n < 0 or cubes.level != n:
        return CheckResult(False, "stage does not match cube level", n)
    if cubes.dim != F.dim or setname.dim != F.dim:
        return CheckResult(False, "dimension mismatch", cubes.dim)
    if not cubes:
        return CheckResult(False, "empty invariant")
    for c in cubes.sorted():
        if not in_domain(n, c):
            return CheckResult(False, "cube outside the stage window", c)
        img = F.image(n, [c])
        if img is None:
            return CheckResult(False, "image leaves the stage window", c)
        missing = img - cubes.cubes
        if missing:
            return CheckResult(False, "image not contained in invariant", (c, min(missing)))
    for c in cubes.sorted():
        if not setname.compactly_inner(n, c):
            return CheckResult(False, "invariant not compactly inside the set", c)
    return CheckResult(True)


def check_trapped_pairing(
    cert: TrappedCertificate, F: FunctionName, X: PointName
) -> CheckResult:
    """Check ``F_n(X_n) ⊆ O``, linking the invariant to the starting point."""
    n = cert.stage
    xs = X.stage(n)
    if X.dim != cert.dim:
        return CheckResult(False, "dimension mismatch", X.dim)
    if not all(inside_window(n, c) for c in xs.cubes):
        return CheckResult(False, "point enclosure leaves the window")
    img = F.image(n, xs.cubes)
    if img is None:
        return CheckResult(False, "image of the point enclosure leaves the window")
    missing = img - cert.cubes.cubes
    if missing:
        return CheckResult(False, "first iterate not inside invariant", min(missing))
    return CheckResult(True)


def check_escape_certificate(
    cert: EscapeCertificate, F: FunctionName, setname: ClosedSetName, X: PointName
) -> CheckResult:
    """Replay the pruned chain and confirm it is empty by step ``cert.steps``."""
    n, steps = cert.stage, cert.steps
    if n < 0 or steps < 1:
        return CheckResult(False, "malformed stage/steps", (n, steps))
    if not (cert.dim == F.dim == X.dim == setname.dim):
        return CheckResult(False, "dimension mismatch", cert.dim)
    xs = X.stage(n)
    if not all(inside_window(n, c) for c in xs.cubes):
        return CheckResult(False, "point enclosure leaves the window")
    img = F.image(n, xs.cubes)
    if img is None:
        return CheckResult(False, "chain leaves the window at step 1")
    P = _prune(setname, n, img)
    k = 1
    while P and k < steps:
        img = F.image(n, P)
        if img is None:
            return CheckResult(False, f"chain leaves the window at step {k + 1}")
        P = _prune(setname, n, img)
        k += 1
    if P:
        return CheckResult(False, f"chain still nonempty at step {steps}", sorted(P)[:8])
    return CheckResult(True)


def check_certificate(cert: Certificate, F, setname, X=None) -> CheckResult:
    if isinstance(cert, TrappedCertificate):
        res = check_trapped_certificate(cert, F, setname)
        if res and X is not None:
            res = check_trapped_pairing(cert, F, X)
        return res
    if X is None:
        return CheckResult(False, "escape certificates need the point name")
    return check_escape_certificate(cert, F, setname, X)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


class CertificateFormatError(ValueError):
    pass


def certificate_record(cert: Certificate) -> dict:
    if isinstance(cert, TrappedCertificate):
        rec = {
            "kind": TRAPPED,
            "stage": cert.stage,
            "dimension": cert.dim,
            "cubes": [list(c) for c in cert.cubes.sorted()],
        }
    else:
        rec = {"kind": ESCAPES, "stage": cert.stage, "steps": cert.steps, "dimension": cert.dim}
    rec["digest"] = record_digest(rec)
    return rec


def record_digest(rec: dict) -> str:
    body = {k: v for k, v in rec.items() if k != "digest"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def dumps_certificate(cert: Certificate) -> str:
    rec = certificate_record(cert)
    # One cube per line keeps large certificates diffable.
    head = {k: v for k, v in rec.items() if k != "cubes"}
    lines = ["{"]
    items = [f'  "{k}": {json.dumps(v)}' for k, v in head.items()]
    if "cubes" in rec:
        cubes = ",\n".join("    " + json.dumps(c) for c in rec["cubes"])
        items.append('  "cubes": [\n' + cubes + "\n  ]")
    lines.append(",\n".join(items))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _int(rec: dict, key: str) -> int:
    v = rec.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise CertificateFormatError(f"field {key!r} must be an integer")
    return v


def loads_certificate(text: str, *, require_digest: bool = True) -> Certificate:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as e:
        raise CertificateFormatError(f"{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(rec, dict):
        raise CertificateFormatError("certificate must be a JSON object")
    if require_digest:
        if rec.get("digest") != record_digest(rec):
            raise CertificateFormatError("digest does not match certificate contents")
    kind = rec.get("kind")
    stage = _int(rec, "stage")
    dim = _int(rec, "dimension")
    if stage < 0 or dim < 1:
        raise CertificateFormatError("stage must be >= 0 and dimension >= 1")
    if kind == TRAPPED:
        if "steps" in rec:
            raise CertificateFormatError("trapped certificates carry no 'steps'")
        raw = rec.get("cubes")
        if not isinstance(raw, list) or not raw:
            raise CertificateFormatError("trapped certificates need a nonempty 'cubes' list")
        cubes = []
        for c in raw:
            if (
                not isinstance(c, list)
                or len(c) != dim
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in c)
            ):
                raise CertificateFormatError(f"bad cube {c!r} for dimension {dim}")
            cubes.append(tuple(c))
        return TrappedCertificate(stage, CubeSet(stage, dim, frozenset(cubes)))
    if kind == ESCAPES:
        if "cubes" in rec:
            raise CertificateFormatError("escape certificates carry no 'cubes'")
        steps = _int(rec, "steps")
        if steps < 1:
            raise CertificateFormatError("steps must be >= 1")
        return EscapeCertificate(stage, steps, dim)
    raise CertificateFormatError(f"unknown certificate kind {kind!r}")
