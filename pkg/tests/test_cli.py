import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest

from pointescape.cli import (
    PGM_LEVELS,
    RunReport,
    ScanGrid,
    main,
    scan,
    scan_csv,
    scan_pgm,
)
from pointescape.escape import ESCAPES, TRAPPED, EscapeConfig

SPECS = Path(__file__).resolve().parent.parent / "specs"
SYSTEMS = SPECS / "systems"
AFFINE = SPECS / "affine"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_escape_c1_reports_three_steps(capsys, tmp_path):
    cert = tmp_path / "c1.cert"
    code, out, _ = run(capsys, "escape", SYSTEMS / "quadratic_c1.spec", "--cert", cert)
    assert code == 1
    report = json.loads(out)
    assert report["outcome"] == ESCAPES and report["steps"] == 3
    assert report["certificate_path"] == str(cert)
    code, _, _ = run(capsys, "verify", cert, SYSTEMS / "quadratic_c1.spec")
    assert code == 0


def test_escape_trapped_writes_certificate(capsys, tmp_path):
    cert = tmp_path / "c0.cert"
    code, _, _ = run(capsys, "escape", SYSTEMS / "quadratic_c0.spec", "--cert", cert)
    assert code == 0 and cert.exists()
    assert run(capsys, "verify", cert, SYSTEMS / "quadratic_c0.spec")[0] == 0
    # the same invariant does not certify a different system
    code, _, err = run(capsys, "verify", cert, SYSTEMS / "quadratic_c1.spec")
    assert code != 0 and "rejected" in err


def test_budget_exhausted_exit_code(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run(
        capsys, "escape", SYSTEMS / "quadratic_c_quarter.spec", "--max-stage", 5, "--report", report
    )
    assert code == 2 and out == ""
    rec = json.loads(report.read_text())
    assert rec["outcome"] == "budget-exhausted" and len(rec["stages"]) == 6


def test_parse_errors_exit_64(capsys, tmp_path):
    bad = tmp_path / "bad.spec"
    bad.write_text("dimension 1\nmap (add (var 1)\npoint 0\n")
    code, _, err = run(capsys, "escape", bad)
    assert code == 64
    assert "2:5" in err
    cert = tmp_path / "x.cert"
    cert.write_text("{}")
    assert run(capsys, "verify", cert, bad)[0] == 64


def test_missing_file_is_an_input_error(capsys, tmp_path):
    assert run(capsys, "escape", tmp_path / "nope.spec")[0] == 64


def test_verify_rejects_garbage(capsys, tmp_path):
    cert = tmp_path / "g.cert"
    cert.write_text("not json")
    code, _, err = run(capsys, "verify", cert, SYSTEMS / "quadratic_c0.spec")
    assert code == 1 and "rejected" in err


def test_linear_doubling(capsys, tmp_path):
    cert = tmp_path / "d.cert"
    code, out, err = run(capsys, "linear", AFFINE / "case2_doubling.affine", "--cert", cert)
    assert code == 0
    rec = json.loads(out)
    assert rec["classification"] == {"kind": "robust-trapped", "case": 2, "reason": ""}
    assert "robust-trapped (case 2)" in err
    # affine files verify against their reduction
    assert run(capsys, "verify", cert, AFFINE / "case2_doubling.affine")[0] == 0
    assert run(capsys, "verify", cert, AFFINE / "case2_doubling.affine", "--raw")[0] == 1
    # and against the equivalent hand-written spec
    assert run(capsys, "verify", cert, SYSTEMS / "doubling_compactified.spec")[0] == 0


def test_linear_raw_doubling_is_exhausted(capsys):
    code, _, _ = run(capsys, "linear", AFFINE / "case2_doubling.affine", "--raw", "--max-stage", 5)
    assert code == 2


def test_linear_contraction(capsys):
    code, out, _ = run(capsys, "linear", AFFINE / "case1_scalar.affine")
    assert code == 0 and json.loads(out)["classification"]["case"] == 1


def test_escape_accepts_affine_files(capsys):
    assert run(capsys, "escape", AFFINE / "case3_translation.affine")[0] == 0


def test_report_round_trip(capsys, tmp_path):
    for spec in ("quadratic_c0.spec", "quadratic_c1.spec", "quadratic_c_quarter.spec"):
        code, out, _ = run(capsys, "escape", SYSTEMS / spec, "--max-stage", 4)
        report = RunReport.from_json(out)
        assert report.to_json() == out
        assert RunReport.from_json(report.to_json()) == report


def test_help_documents_exit_codes(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "64 parse error" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pointescape.cli", "escape", str(SYSTEMS / "quadratic_c1.spec")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def test_scan_single_trapped_pixel(capsys, tmp_path):
    csv, pgm = tmp_path / "s.csv", tmp_path / "s.pgm"
    code, _, _ = run(
        capsys, "mandelbrot-scan", "--box", "-0.25", "0.25", "-0.25", "0.25",
        "--res", 1, 1, "--max-stage", 6, "--csv", csv, "--pgm", pgm,
    )
    assert code == 0
    assert csv.read_text().splitlines() == ["re,im,verdict,stage,steps", f"0.0,0.0,{TRAPPED},3,"]
    assert pgm.read_bytes() == b"P5\n1 1\n255\n" + bytes([255])


def test_scan_far_region_all_escapes(capsys, tmp_path):
    csv, pgm = tmp_path / "s.csv", tmp_path / "s.pgm"
    code, _, _ = run(
        capsys, "mandelbrot-scan", "--box", "2.5", "3.5", "0.5", "1.5",
        "--res", 3, 2, "--max-stage", 6, "--csv", csv, "--pgm", pgm,
    )
    assert code == 0
    rows = csv.read_text().splitlines()[1:]
    assert len(rows) == 6 and all(r.split(",")[2] == ESCAPES for r in rows)
    assert pgm.read_bytes().endswith(bytes([PGM_LEVELS[ESCAPES]] * 6))


def test_scan_centers_and_row_order():
    g = ScanGrid(Fraction(-2), Fraction(2), Fraction(-1), Fraction(1), 4, 2)
    assert g.center(0, 0).re == Fraction(-3, 2) and g.center(0, 0).im == Fraction(1, 2)
    assert g.center(3, 1).re == Fraction(3, 2) and g.center(3, 1).im == Fraction(-1, 2)
    assert g.symmetric


def test_mirroring_and_jobs_do_not_change_bytes():
    grid = ScanGrid(Fraction(-2), Fraction(1, 2), Fraction(-5, 4), Fraction(5, 4), 5, 5)
    config = EscapeConfig(max_stage=6, max_cubes=2000)
    plain = scan(grid, config, jobs=1, mirror=False)
    mirrored = scan(grid, config, jobs=1, mirror=True)
    parallel = scan(grid, config, jobs=2, mirror=True)
    assert scan_csv(plain) == scan_csv(mirrored) == scan_csv(parallel)
    assert scan_pgm(plain) == scan_pgm(mirrored)
    assert len({c.verdict for row in plain for c in row}) >= 2


def test_scan_rejects_bad_box(capsys, tmp_path):
    code, _, _ = run(capsys, "mandelbrot-scan", "--box", "1", "0", "0", "1", "--res", 1, 1,
                     "--csv", tmp_path / "a.csv")
    assert code == 64
    code, _, _ = run(capsys, "mandelbrot-scan", "--box", "x", "0", "0", "1", "--res", 1, 1,
                     "--csv", tmp_path / "a.csv")
    assert code == 64
    assert not (tmp_path / "a.csv").exists()


def test_interrupted_scan_leaves_no_files(monkeypatch, capsys, tmp_path):
    import pointescape.cli as cli

    def boom(*a, **k):
        raise KeyboardInterrupt

    monkeypatch.setattr(cli, "scan", boom)
    csv = tmp_path / "i.csv"
    code, _, _ = run(capsys, "mandelbrot-scan", "--box", "0", "1", "0", "1", "--res", 2, 2,
                     "--csv", csv, "--pgm", tmp_path / "i.pgm")
    assert code == 130
    assert list(tmp_path.iterdir()) == []
