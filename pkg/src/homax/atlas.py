"""Parameter sweeps and their on-disk atlas (one JSON per point plus an index CSV)."""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import HomaxError, ParameterError
from .mesh import build_mesh
from .noswirl import Params, RegionLabel, cbar3, classify, gamma_bounds, solve_profile

INDEX_COLUMNS = (
    "index", "c1", "c2", "c3", "gamma", "beta1", "beta2", "beta3", "beta4",
    "stratum", "case", "converged", "residual", "iterations", "status",
)
BETA_KEYS = ("beta1", "beta2", "beta3", "beta4")


@dataclass(frozen=True)
class AtlasRecord:
    index: int
    params: Params
    label: RegionLabel | None
    endpoints: dict
    gamma_bounds: tuple[float, float] | None
    beta: dict
    swirl: dict | None
    status: str

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "params": self.params.to_dict(),
            "label": None if self.label is None else self.label.to_dict(),
            "endpoints": dict(self.endpoints),
            "gamma_bounds": None if self.gamma_bounds is None else list(self.gamma_bounds),
            "beta": dict(self.beta),
            "swirl": self.swirl,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AtlasRecord:
        gb = d["gamma_bounds"]
        return cls(
            int(d["index"]),
            Params.from_dict(d["params"]),
            None if d["label"] is None else RegionLabel.from_dict(d["label"]),
            dict(d["endpoints"]),
            None if gb is None else (float(gb[0]), float(gb[1])),
            {k: float(v) for k, v in d["beta"].items()},
            d["swirl"],
            str(d["status"]),
        )

    def index_row(self) -> list[str]:
        p = self.params
        sw = self.swirl or {}
        label = self.label
        return [
            str(self.index),
            *(repr(v) for v in (p.c1, p.c2, p.c3, p.gamma)),
            *(repr(self.beta.get(k, 0.0)) for k in BETA_KEYS),
            "" if label is None or label.i_stratum is None else label.to_dict()["i_stratum"],
            "" if label is None else label.case_tag,
            str(sw.get("converged", "")),
            repr(sw["residual_Y"]) if "residual_Y" in sw else "",
            str(sw.get("iterations", "")),
            self.status,
        ]


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of the grid axes, in a fixed order.

    Axes: c1, c2 (required); c3 or c3_offset (added to cbar3); gamma or
    gamma_fraction (position between gamma- and gamma+); beta1..beta4.
    """
    known = {"c1", "c2", "c3", "c3_offset", "gamma", "gamma_fraction", *BETA_KEYS}
    unknown = set(grid) - known
    if unknown:
        raise ParameterError(f"unknown grid keys: {sorted(unknown)}")
    for k in ("c1", "c2"):
        if k not in grid:
            raise ParameterError(f"grid needs a {k!r} axis")
    if ("c3" in grid) == ("c3_offset" in grid):
        raise ParameterError("grid needs exactly one of 'c3', 'c3_offset'")
    if ("gamma" in grid) == ("gamma_fraction" in grid):
        raise ParameterError("grid needs exactly one of 'gamma', 'gamma_fraction'")
    c3_key = "c3" if "c3" in grid else "c3_offset"
    g_key = "gamma" if "gamma" in grid else "gamma_fraction"
    axes = ["c1", "c2", c3_key, g_key, *BETA_KEYS]
    values = [[float(v) for v in np.atleast_1d(grid.get(k, [0.0]))] for k in axes]
    return [dict(zip(axes, combo)) for combo in itertools.product(*values)]


def solve_point(task: tuple) -> dict:
    """Worker: classify one grid point and, if beta is nonzero, solve for swirl."""
    index, point, cfg = task
    from .operators import make_context
    from .swirl import beta_vector, picard_solve, newton_refine

    mesh = build_mesh(cfg["mesh_n"], cfg["grading_exponent"])
    beta = {k: point[k] for k in BETA_KEYS}
    c1, c2 = point["c1"], point["c2"]
    c3 = point["c3"] if "c3" in point else cbar3(c1, c2) + point["c3_offset"]
    gamma = point.get("gamma", math.nan)
    label = bounds = None
    endpoints: dict = {}
    swirl = None
    status = "ok"
    try:
        bounds = gamma_bounds((c1, c2, c3), tol=cfg["gamma_tol"])
        if "gamma_fraction" in point:
            gamma = bounds[0] + point["gamma_fraction"] * (bounds[1] - bounds[0])
        prof = solve_profile(Params(c1, c2, c3, gamma), mesh, bounds, snap=cfg["gamma_snap"])
        gamma = prof.params.gamma
        label = prof.stratum
        endpoints = {"u_minus": prof.endpoint_minus, "u_plus": prof.endpoint_plus, "eta1": prof.eta1, "eta2": prof.eta2}
        if any(beta.values()):
            ctx = make_context(prof)
            sol = picard_solve(ctx, beta_vector(ctx, **beta), tol=cfg["solver_tol"], max_iter=cfg["max_iter"], guard=cfg["beta_guard"])
            if cfg.get("newton"):
                sol = newton_refine(ctx, sol)
            swirl = sol.summary()
    except HomaxError as exc:
        status = f"{type(exc).__name__}: {exc}"
    rec = AtlasRecord(index, Params(c1, c2, c3, float(gamma)), label, endpoints, bounds, beta, swirl, status)
    return rec.to_dict()


def run_sweep(grid: dict, out_dir: str | Path, cfg: dict, workers: int = 1) -> list[AtlasRecord]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(i, p, cfg) for i, p in enumerate(expand_grid(grid))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            dicts = list(pool.map(solve_point, tasks, chunksize=1))
    else:
        dicts = [solve_point(t) for t in tasks]
    records = [AtlasRecord.from_dict(d) for d in dicts]
    for rec in records:
        write_record(out / record_name(rec.index), rec)
    write_index(out / "index.csv", records)
    return records


def record_name(index: int) -> str:
    return f"point_{index:05d}.json"


def write_record(path: Path, rec: AtlasRecord) -> None:
    path.write_text(json.dumps(rec.to_dict(), indent=1, sort_keys=True) + "\n")


def write_index(path: Path, records: list[AtlasRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_COLUMNS)
        for rec in records:
            w.writerow(rec.index_row())


def load_atlas(out_dir: str | Path, check_fraction: float = 0.01, seed: int = 0) -> list[AtlasRecord]:
    """Read every record listed in the index and re-classify a random sample of them."""
    out = Path(out_dir)
    with open(out / "index.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = [AtlasRecord.from_dict(json.loads((out / record_name(int(r["index"]))).read_text())) for r in rows]
    labelled = [r for r in records if r.label is not None]
    if labelled and check_fraction > 0:
        rng = np.random.default_rng(seed)
        count = max(1, math.ceil(check_fraction * len(labelled)))
        for k in sorted(rng.choice(len(labelled), size=count, replace=False)):
            rec = labelled[k]
            again = classify(rec.params, bounds=rec.gamma_bounds)
            if again != rec.label:
                raise ParameterError(f"record {rec.index}: stored label {rec.label} but recomputed {again}")
    return records
