"""Acceptance criteria 1-12 at desk scale (n = 1025, grading exponent 4, seed 0).

Each test re-checks the stated tolerance on the measured quantities rather
than trusting the battery's own verdict, then prints one PASS/FAIL line.
"""

from __future__ import annotations

import subprocess
import sys

import pytest

from homax.verify import CRITERIA, run_criterion

N, GRADING, SEED = 1025, 4.0, 0


def check(k, report_line, conditions):
    result = run_criterion(k, N, GRADING, SEED)
    ok = result.passed and all(conditions(result.values))
    line = result.line()
    if ok != result.passed:
        line = line.replace("PASS", "FAIL", 1)
    report_line(line)
    assert ok, line


def test_criterion_01_closed_form_boundary(report_line):
    check(1, report_line, lambda v: [v["points"] == 10, v["max_err"] <= 1e-6])


def test_criterion_02_landau_family(report_line):
    check(2, report_line, lambda v: [v["riccati_res"] <= 1e-8, v["endpoint"] <= 1e-4])


def test_criterion_03_endpoint_roots(report_line):
    check(3, report_line, lambda v: [v["points"] == 50, v["max_identity_err"] <= 1e-4, v["branches_ok"] == "10/10"])


def test_criterion_04_eta_limits(report_line):
    check(4, report_line, lambda v: [v["points"] == 5, v["max_eta_err"] <= 0.1, v["selected"] == "5/5"])


def test_criterion_05_operator_identities(report_line):
    check(5, report_line, lambda v: [v["right_inverse_rel"] <= 1e-5, v["kernel"] <= 1e-6, v["triangular"] <= 1e-8])


def test_criterion_06_linearization(report_line):
    check(6, report_line, lambda v: [0.8 <= v["min_slope"], v["max_slope"] <= 1.2])


def test_criterion_07_swirl_existence(report_line):
    check(7, report_line, lambda v: [v["points"] == 8, v["max_residual"] <= 1e-7, v["max_iterations"] <= 50, v["swirl"]])


def test_criterion_08_tangency(report_line):
    check(8, report_line, lambda v: [v["min_order"] >= 1.8, v["max_limit_err"] <= 1e-4])


def test_criterion_09_quadratic_correction(report_line):
    check(9, report_line, lambda v: [v["slope"] >= 1.9])


def test_criterion_10_symmetry(report_line):
    check(10, report_line, lambda v: [v["max_ratio"] <= 10.0])


def test_criterion_11_rigidity_form(report_line):
    check(11, report_line, lambda v: [v["max_residual"] <= 1e-10])


def test_criterion_12_determinism(report_line):
    cmd = [sys.executable, "-m", "homax.cli", "verify", "--seed", "0"]
    procs = [subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE) for _ in range(2)]
    outs = [p.communicate(timeout=600) for p in procs]
    reports = [o[0] for o in outs]
    same = reports[0] == reports[1] and len(reports[0]) > 0
    complete = reports[0].decode().count("criterion ") == len(CRITERIA)
    ok = same and complete
    status = "PASS" if ok else "FAIL"
    report_line(f"criterion 12 {status} determinism: runs=2 bytes={len(reports[0])} identical={str(same).lower()}")
    assert ok, outs[0][1].decode() + outs[1][1].decode()
