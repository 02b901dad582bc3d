"""Commands behind the golden files in tests/golden, one per output schema.

Regenerate with `python3 tests/golden_cases.py` after an intentional
format change.
"""

from __future__ import annotations

import csv
import json
import math
import shutil
import sys
from pathlib import Path

GOLDEN = Path(__file__).parent / "golden"
POINT = ["--c1", "0", "--c2", "0", "--c3", "0", "--gamma", "-1", "--mesh-n", "65"]

# name -> (argv with {out} placeholder, produced file name)
CASES = {
    "classify.json": ["classify", *POINT, "--out", "{out}"],
    "gamma_bounds.json": ["gamma-bounds", "--c1", "0", "--c2", "0", "--c3", "0", "--mesh-n", "65", "--out", "{out}"],
    "noswirl.json": ["noswirl", *POINT, "--json", "--out", "{out}"],
    "noswirl.csv": ["noswirl", *POINT, "--csv", "--out", "{out}"],
    "kernel.json": ["kernel", *POINT, "--out", "{out}"],
    "solve.json": ["solve", *POINT, "--beta3", "0.01", "--out", "{out}"],
    "fields.csv": ["fields", *POINT, "--beta3", "0.01", "--out", "{out}"],
    "fields.json": ["fields", *POINT, "--out", "{out}"],
    "point_cloud.csv": ["fields", *POINT, "--radii", "1,2", "--out", "{out}"],
    "verify_report.txt": ["verify", "--only", "1,2", "--out", "{out}"],
}
SWEEP = ["sweep", "--grid", str(GOLDEN / "grid.json"), "--mesh-n", "65", "--out", "{out}"]
SWEEP_FILES = ("index.csv", "point_00000.json", "point_00001.json")


def run_case(argv: list[str], out: Path) -> int:
    from homax.cli import main

    return main([a.replace("{out}", str(out)) for a in argv])


def close(a, b, rtol: float = 1e-7, atol: float = 1e-9) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        if isinstance(a, bool) or isinstance(b, bool) or a is None or b is None:
            return a == b
        a, b = float(a), float(b)
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
        return abs(a - b) <= atol + rtol * abs(b)
    return a == b


def compare_json(got, want, path: str = "$") -> list[str]:
    """Structural equality with numeric tolerance; returns the mismatching paths."""
    if isinstance(want, dict):
        if not isinstance(got, dict) or set(got) != set(want):
            return [f"{path}: keys {sorted(got) if isinstance(got, dict) else type(got)} != {sorted(want)}"]
        return [m for k in want for m in compare_json(got[k], want[k], f"{path}.{k}")]
    if isinstance(want, list):
        if not isinstance(got, list) or len(got) != len(want):
            return [f"{path}: length mismatch"]
        return [m for i, (g, w) in enumerate(zip(got, want)) for m in compare_json(g, w, f"{path}[{i}]")]
    if type(got) is not type(want) and not (isinstance(got, (int, float)) and isinstance(want, (int, float))):
        return [f"{path}: type {type(got).__name__} != {type(want).__name__}"]
    return [] if close(got, want) else [f"{path}: {got!r} != {want!r}"]


def _cell(v: str):
    try:
        return float(v)
    except ValueError:
        return v


def compare_csv(got: Path, want: Path) -> list[str]:
    def rows(p):
        with open(p, newline="") as fh:
            return [r for r in csv.reader(fh) if not (r and r[0].startswith("#"))]

    g, w = rows(got), rows(want)
    if g[:1] != w[:1]:
        return [f"header {g[:1]} != {w[:1]}"]
    if len(g) != len(w):
        return [f"{len(g)} rows != {len(w)}"]
    return [
        f"row {i} col {j}: {a} != {b}"
        for i, (rg, rw) in enumerate(zip(g[1:], w[1:]), 1)
        for j, (a, b) in enumerate(zip(rg, rw))
        if not close(_cell(a), _cell(b))
    ]


def compare_file(got: Path, want: Path) -> list[str]:
    if want.suffix == ".json":
        return compare_json(json.loads(got.read_text()), json.loads(want.read_text()))
    if want.suffix == ".csv":
        return compare_csv(got, want)
    gl, wl = got.read_text().splitlines(), want.read_text().splitlines()
    if len(gl) != len(wl):
        return ["line count differs"]
    out = []
    for a, b in zip(gl, wl):
        ta, tb = a.split(), b.split()
        if len(ta) != len(tb) or not all(close(_cell(x.split("=")[-1]), _cell(y.split("=")[-1])) for x, y in zip(ta, tb)):
            out.append(f"{a!r} != {b!r}")
    return out


def regenerate() -> None:
    for name, argv in CASES.items():
        code = run_case(argv, GOLDEN / name)
        if code != 0:
            sys.exit(f"{name}: exit {code}")
    tmp = GOLDEN / "sweep"
    shutil.rmtree(tmp, ignore_errors=True)
    if run_case(SWEEP, tmp) != 0:
        sys.exit("sweep failed")


if __name__ == "__main__":
    regenerate()
