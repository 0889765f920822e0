"""Command-line front end.

Exit codes for ``escape`` and ``linear``::

    0   trapped (robust invariant found)
    1   escapes
    2   budget exhausted (no stage decided)
    64  the input file does not parse

``verify`` exits 0 when the certificate checks and 1 when it is rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional, Sequence

from . import __version__
from .escape import (
    BUDGET_EXHAUSTED,
    ESCAPES,
    TRAPPED,
    CertificateFormatError,
    EscapeConfig,
    Outcome,
    StageStats,
    certificate_record,
    check_certificate,
    dumps_certificate,
    loads_certificate,
    point_escape,
)
from .formats import SystemSpec, is_affine_text, parse_affine, parse_system
from .interval import ExprSyntaxError
from .names import closedset_from_constraints, function_from_exprs, point_from_rational
from .systems import QuadraticParameter, classify_affine, mandelbrot_reduce, raw_affine, reduce_affine

log = logging.getLogger("pointescape")

EXIT_CODES = {TRAPPED: 0, ESCAPES: 1, BUDGET_EXHAUSTED: 2}
EXIT_PARSE = 64
EXIT_REJECTED = 1

# Orbit-closure cap per stage.  A finite default keeps boundary instances
# (where closures grow without bound) from exhausting memory.
DEFAULT_MAX_CUBES = 200_000
SCAN_MAX_CUBES = 4_000

PGM_LEVELS = {ESCAPES: 0, BUDGET_EXHAUSTED: 128, TRAPPED: 255}


# ---------------------------------------------------------------------------
# run reports
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    outcome: Outcome
    certificate_path: Optional[str] = None
    classification: Optional[dict] = None  # kind, case, reason (advisory)

    @property
    def seconds(self) -> float:
        return self.outcome.seconds

    def to_record(self) -> dict:
        o = self.outcome
        return {
            "outcome": o.kind,
            "stage": o.stage,
            "steps": o.steps,
            "seconds": o.seconds,
            "stages": [asdict(s) for s in o.stages],
            "certificate": None if o.certificate is None else certificate_record(o.certificate),
            "certificate_path": self.certificate_path,
            "classification": self.classification,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2) + "\n"

    @classmethod
    def from_record(cls, rec: dict) -> "RunReport":
        cert = rec.get("certificate")
        outcome = Outcome(
            rec["outcome"],
            None if cert is None else loads_certificate(json.dumps(cert)),
            [StageStats(**s) for s in rec["stages"]],
            rec["seconds"],
        )
        return cls(outcome, rec.get("certificate_path"), rec.get("classification"))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_record(json.loads(text))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _parse_error(path: str, e: ExprSyntaxError) -> int:
    print(f"{path}: {e}", file=sys.stderr)
    return EXIT_PARSE


def names_of_spec(spec: SystemSpec):
    return (
        function_from_exprs(spec.map, spec.dim),
        closedset_from_constraints(spec.constraints, spec.dim),
        point_from_rational(spec.point),
    )


def load_problem(path: str, raw: bool = False):
    """Names ``(F, A, X)`` for a system spec or affine file.

    Affine files go through the compactifying reduction unless ``raw``.
    """
    text = _read(path)
    if is_affine_text(text):
        sys_ = parse_affine(text)
        return (raw_affine if raw else reduce_affine)(sys_)
    return names_of_spec(parse_system(text))


def _config(args) -> EscapeConfig:
    return EscapeConfig(
        max_stage=args.max_stage,
        max_iterations_per_stage=args.max_iters,
        wall_timeout=args.timeout,
        max_cubes=args.max_cubes or None,
    )


def _write_atomic(path: str, data: bytes) -> None:
    tmp = f"{path}.partial"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _finish_run(args, F, A, X, classification=None) -> int:
    outcome = point_escape(F, A, X, _config(args))
    report = RunReport(outcome, classification=classification)
    if args.cert and outcome.certificate is not None:
        _write_atomic(args.cert, dumps_certificate(outcome.certificate).encode())
        report.certificate_path = args.cert
    text = report.to_json()
    if args.report:
        _write_atomic(args.report, text.encode())
    else:
        sys.stdout.write(text)
    for s in outcome.stages:
        log.info(
            "stage %d: %s%s (%d iterations, %d cubes, %.2fs)",
            s.stage,
            s.verdict,
            f" [{s.reason}]" if s.reason else "",
            s.iterations,
            s.orbit_cubes,
            s.seconds,
        )
    return EXIT_CODES[outcome.kind]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_escape(args) -> int:
    try:
        F, A, X = load_problem(args.spec)
    except ExprSyntaxError as e:
        return _parse_error(args.spec, e)
    return _finish_run(args, F, A, X)


def cmd_linear(args) -> int:
    try:
        sys_ = parse_affine(_read(args.affine))
    except ExprSyntaxError as e:
        return _parse_error(args.affine, e)
    cls = classify_affine(sys_)
    print(f"classification (advisory): {cls}", file=sys.stderr)
    F, A, X = (raw_affine if args.raw else reduce_affine)(sys_)
    info = {"kind": cls.kind, "case": cls.case, "reason": cls.reason}
    return _finish_run(args, F, A, X, classification=info)


def cmd_verify(args) -> int:
    try:
        F, A, X = load_problem(args.spec, raw=args.raw)
    except ExprSyntaxError as e:
        return _parse_error(args.spec, e)
    try:
        cert = loads_certificate(_read(args.cert))
    except CertificateFormatError as e:
        print(f"{args.cert}: rejected: {e}", file=sys.stderr)
        return EXIT_REJECTED
    res = check_certificate(cert, F, A, X)
    if not res:
        msg = f"{args.cert}: rejected: {res.reason}"
        if res.witness is not None:
            msg += f" (witness: {res.witness})"
        print(msg, file=sys.stderr)
        return EXIT_REJECTED
    print(f"{args.cert}: ok ({cert.kind} at stage {cert.stage})")
    return 0


# ---------------------------------------------------------------------------
# parameter scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanGrid:
    re0: Fraction
    re1: Fraction
    im0: Fraction
    im1: Fraction
    width: int
    height: int

    def center(self, i: int, j: int) -> QuadraticParameter:
        """Center of column ``i``, row ``j``; row 0 is the top (largest im)."""
        re = self.re0 + (self.re1 - self.re0) * (2 * i + 1) / (2 * self.width)
        im = self.im1 - (self.im1 - self.im0) * (2 * j + 1) / (2 * self.height)
        return QuadraticParameter(re, im)

    @property
    def symmetric(self) -> bool:
        return self.im0 == -self.im1


@dataclass(frozen=True)
class ScanCell:
    re: Fraction
    im: Fraction
    verdict: str
    stage: Optional[int] = None
    steps: Optional[int] = None


def classify_parameter(c: QuadraticParameter, config: EscapeConfig) -> ScanCell:
    o = point_escape(*mandelbrot_reduce(c), config)
    return ScanCell(c.re, c.im, o.kind, o.stage, o.steps)


def _scan_job(job):
    re, im, config = job
    return classify_parameter(QuadraticParameter(re, im), config)


def _conjugate(cell: ScanCell) -> ScanCell:
    return ScanCell(cell.re, -cell.im, cell.verdict, cell.stage, cell.steps)


def scan(grid: ScanGrid, config: EscapeConfig, jobs: int = 1, mirror: bool = True) -> list[list[ScanCell]]:
    """Classify every cell center; rows top to bottom.

    With ``mirror`` and a box symmetric about the real axis, only the upper
    rows are computed.  ``z -> z^2 + conj(c)`` is the complex conjugate of
    ``z -> z^2 + c`` and every name in the reduction commutes with ``y -> -y``
    (cube ``k`` maps to cube ``-k-1``), so conjugate cells get identical
    verdicts, stages and steps.
    """
    rows = list(range(grid.height))
    if mirror and grid.symmetric:
        rows = rows[: (grid.height + 1) // 2]
    todo = []
    for j in rows:
        for i in range(grid.width):
            c = grid.center(i, j)
            todo.append((c.re, c.im, config))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(_scan_job, todo, chunksize=1))
    else:
        done = [_scan_job(t) for t in todo]
    by_row = {j: done[k * grid.width : (k + 1) * grid.width] for k, j in enumerate(rows)}
    out = []
    for j in range(grid.height):
        if j in by_row:
            out.append(by_row[j])
        else:
            out.append([_conjugate(cell) for cell in by_row[grid.height - 1 - j]])
    return out


def _opt(v) -> str:
    return "" if v is None else str(v)


def scan_csv(cells: list[list[ScanCell]]) -> str:
    lines = ["re,im,verdict,stage,steps"]
    for row in cells:
        for c in row:
            lines.append(f"{float(c.re)!r},{float(c.im)!r},{c.verdict},{_opt(c.stage)},{_opt(c.steps)}")
    return "\n".join(lines) + "\n"


def scan_pgm(cells: list[list[ScanCell]]) -> bytes:
    h, w = len(cells), len(cells[0])
    body = bytes(PGM_LEVELS[c.verdict] for row in cells for c in row)
    return f"P5\n{w} {h}\n255\n".encode() + body


def cmd_mandelbrot_scan(args) -> int:
    try:
        re0, re1, im0, im1 = (Fraction(v) for v in args.box)
    except (ValueError, ZeroDivisionError) as e:
        print(f"bad --box: {e}", file=sys.stderr)
        return EXIT_PARSE
    w, h = args.res
    if not (re0 < re1 and im0 < im1 and w > 0 and h > 0):
        print("--box must be increasing and --res positive", file=sys.stderr)
        return EXIT_PARSE
    grid = ScanGrid(re0, re1, im0, im1, w, h)
    config = EscapeConfig(max_stage=args.max_stage, max_cubes=args.max_cubes or None)
    t0 = time.perf_counter()
    cells = scan(grid, config, jobs=args.jobs, mirror=not args.no_mirror)
    counts = {k: sum(c.verdict == k for row in cells for c in row) for k in PGM_LEVELS}
    log.info("scan finished in %.1fs: %s", time.perf_counter() - t0, counts)
    # Files are only written once every cell is known, so an interrupted
    # scan leaves nothing behind.
    _write_atomic(args.csv, scan_csv(cells).encode())
    if args.pgm:
        _write_atomic(args.pgm, scan_pgm(cells))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-stage", type=int, default=8, help="last stage to try (default 8)")
    p.add_argument("--max-iters", type=_positive_int, default=None, help="iteration cap per stage")
    p.add_argument("--timeout", type=float, default=None, help="wall-clock limit in seconds")
    p.add_argument(
        "--max-cubes",
        type=int,
        default=DEFAULT_MAX_CUBES,
        help=f"orbit-closure cap per stage, 0 for none (default {DEFAULT_MAX_CUBES})",
    )
    p.add_argument("--cert", metavar="OUT", help="write the certificate here")
    p.add_argument("--report", metavar="OUT", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointescape",
        description="Decide whether a point escapes a closed set under a map, with certificates.",
        epilog="exit codes: 0 trapped, 1 escapes (verify: rejected), 2 budget exhausted, 64 parse error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("escape", help="run the decision procedure on a system spec")
    p.add_argument("spec", help="system spec or affine file")
    _run_flags(p)
    p.set_defaults(func=cmd_escape)

    p = sub.add_parser("linear", help="classify and decide an affine system")
    p.add_argument("affine", help="affine system file")
    p.add_argument("--raw", action="store_true", help="skip the compactifying reduction")
    _run_flags(p)
    p.set_defaults(func=cmd_linear)

    p = sub.add_parser("verify", help="check a certificate against a spec")
    p.add_argument("cert")
    p.add_argument("spec", help="system spec or affine file the certificate claims to answer")
    p.add_argument("--raw", action="store_true", help="affine files: check against the raw system")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mandelbrot-scan", help="classify a grid of quadratic parameters")
    p.add_argument("--box", nargs=4, required=True, metavar=("RE0", "RE1", "IM0", "IM1"))
    p.add_argument("--res", nargs=2, type=_positive_int, required=True, metavar=("W", "H"))
    p.add_argument("--max-stage", type=int, default=9)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument(
        "--max-cubes",
        type=int,
        default=SCAN_MAX_CUBES,
        help=f"orbit-closure cap per stage, 0 for none (default {SCAN_MAX_CUBES})",
    )
    p.add_argument("--no-mirror", action="store_true", help="do not reuse conjugate rows")
    p.add_argument("--csv", default="scan.csv")
    p.add_argument("--pgm", default="scan.pgm")
    p.set_defaults(func=cmd_mandelbrot_scan)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
