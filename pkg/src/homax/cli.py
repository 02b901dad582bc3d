"""Command-line interface.

Exit codes: 0 success, 1 parameter or region error (including bad flags),
2 numerical divergence or a failed verification, 3 file errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import DivergenceError, HomaxError, ParameterError
from .mesh import build_mesh

CONFIG_ENV = "HOMAX_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    mesh_n: int = 1025
    grading_exponent: float = 4.0
    solver_tol: float = 1e-8
    max_iter: int = 200
    beta_guard: float = 0.1
    gamma_tol: float = 1e-10
    gamma_snap: float = 1e-8
    out_dir: str = "."
    seed: int = 0

    def __post_init__(self):
        if self.mesh_n < 64 or self.mesh_n % 2 == 0:
            raise ParameterError(f"mesh_n must be odd and at least 64, got {self.mesh_n}")
        if self.grading_exponent < 1.0:
            raise ParameterError(f"grading_exponent must be >= 1, got {self.grading_exponent}")
        for name in ("solver_tol", "beta_guard", "gamma_tol", "gamma_snap"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        names = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        casts = {"int": int, "float": float, "str": str}
        try:
            values = {k: casts[names[k]](v) for k, v in d.items()}
        except (TypeError, ValueError) as exc:
            raise ParameterError(f"bad config value: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def override(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def mesh(self):
        return build_mesh(self.mesh_n, self.grading_exponent)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def resolve_config(args) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = RunConfig.load(path) if path else RunConfig()
    return cfg.override(
        mesh_n=args.mesh_n,
        grading_exponent=args.grading,
        seed=getattr(args, "seed", None),
        solver_tol=getattr(args, "tol", None),
        max_iter=getattr(args, "max_iter", None),
    )


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _params(args):
    from .noswirl import Params

    return Params(args.c1, args.c2, args.c3, args.gamma)


def _profile(args, cfg):
    from .noswirl import gamma_bounds, solve_profile

    p = _params(args)
    bounds = gamma_bounds(p.coeffs, tol=cfg.gamma_tol)
    return solve_profile(p, cfg.mesh, bounds, snap=cfg.gamma_snap), bounds


def _profile_summary(prof, bounds) -> dict:
    return {
        "params": prof.params.to_dict(),
        "label": prof.stratum.to_dict(),
        "endpoints": {"u_minus": prof.endpoint_minus, "u_plus": prof.endpoint_plus, "eta1": prof.eta1, "eta2": prof.eta2},
        "gamma_bounds": list(bounds),
    }


# ----------------------------------------------------------------------------
# commands


def cmd_classify(args, cfg) -> int:
    prof, bounds = _profile(args, cfg)
    _emit(_profile_summary(prof, bounds), args.out)
    return 0


def cmd_noswirl(args, cfg) -> int:
    prof, bounds = _profile(args, cfg)
    if args.csv:
        if args.out:
            prof.u_theta_bar.write_csv(args.out)
        else:
            sys.stdout.write(f"# n={cfg.mesh_n} grading_exponent={cfg.grading_exponent!r}\nx,value\n")
            for x, v in zip(prof.mesh.nodes, prof.u_theta_bar.values):
                sys.stdout.write(f"{x:.17g},{v:.17g}\n")
        return 0
    payload = _profile_summary(prof, bounds)
    payload["profile"] = json.loads(prof.u_theta_bar.to_json())
    _emit(payload, args.out)
    return 0


def cmd_gamma_bounds(args, cfg) -> int:
    from .noswirl import gamma_bounds

    lo, hi = gamma_bounds((args.c1, args.c2, args.c3), tol=cfg.gamma_tol)
    _emit({"c": [args.c1, args.c2, args.c3], "gamma_minus": lo, "gamma_plus": hi}, args.out)
    return 0


def cmd_kernel(args, cfg) -> int:
    from .operators import BASIS_NAMES, FUNCTIONAL_NAMES, functional_matrix, kernel_basis, make_context, norm_Y, op_A

    prof, bounds = _profile(args, cfg)
    ctx = make_context(prof, args.epsilon)
    basis = kernel_basis(ctx)
    names = BASIS_NAMES[ctx.variant]
    payload = _profile_summary(prof, bounds)
    payload.update(
        variant=ctx.variant,
        epsilon=ctx.epsilon,
        functionals=list(FUNCTIONAL_NAMES[ctx.variant]),
        functional_matrix=functional_matrix(ctx).tolist(),
        residuals={n: norm_Y(ctx, op_A(ctx, v)).to_dict() for n, v in zip(names, basis)},
        basis={n: v.to_dict() for n, v in zip(names, basis)},
    )
    _emit(payload, args.out)
    return 0


def cmd_solve(args, cfg) -> int:
    from .fields import reduced_residual
    from .operators import make_context, norm_X, norm_Y, op_G
    from .swirl import beta_vector, newton_refine, picard_solve

    prof, bounds = _profile(args, cfg)
    ctx = make_context(prof)
    beta = beta_vector(ctx, args.beta1, args.beta2, args.beta3, args.beta4)
    sol = picard_solve(ctx, beta, tol=cfg.solver_tol, max_iter=cfg.max_iter, guard=cfg.beta_guard)
    if args.newton:
        sol = newton_refine(ctx, sol)
    payload = _profile_summary(prof, bounds)
    payload.update(sol.to_dict())
    payload["epsilon"] = ctx.epsilon
    payload["norm_X_correction"] = norm_X(ctx, sol.correction).to_dict()
    payload["norm_Y_residual"] = norm_Y(ctx, op_G(ctx, sol.pair)).to_dict()
    payload["reduced_residual"] = list(reduced_residual(ctx.mesh, ctx.ubar + sol.pair.theta, sol.pair.phi, sol.chat, ctx.epsilon))
    _emit(payload, args.out)
    if not sol.converged:
        sys.stderr.write(f"not converged after {sol.iterations} iterations\n")
        return 2
    return 0


def cmd_fields(args, cfg) -> int:
    from .fields import from_profile, from_solution
    from .operators import make_context
    from .swirl import beta_vector, picard_solve

    prof, _ = _profile(args, cfg)
    betas = (args.beta1, args.beta2, args.beta3, args.beta4)
    if any(betas):
        ctx = make_context(prof)
        sol = picard_solve(ctx, beta_vector(ctx, *betas), tol=cfg.solver_tol, max_iter=cfg.max_iter, guard=cfg.beta_guard)
        fld = from_solution(ctx, sol)
    else:
        fld = from_profile(prof)
    if args.radii:
        radii = [float(r) for r in args.radii.split(",")]
        fld.write_point_cloud(args.out, radii)
    elif args.out.endswith(".json"):
        Path(args.out).write_text(fld.to_json() + "\n")
    else:
        fld.write_csv(args.out)
    return 0


def cmd_sweep(args, cfg) -> int:
    from .atlas import run_sweep

    grid = json.loads(Path(args.grid).read_text())
    task_cfg = cfg.to_dict()
    task_cfg["newton"] = bool(args.newton)
    records = run_sweep(grid, args.out or cfg.out_dir, task_cfg, workers=args.workers)
    failed = sum(r.status != "ok" for r in records)
    sys.stdout.write(f"{len(records)} points written, {failed} with errors\n")
    return 0


def cmd_verify(args, cfg) -> int:
    from .verify import format_report, run_all

    only = [int(k) for k in args.only.split(",")] if args.only else None
    results = run_all(cfg.mesh_n, cfg.grading_exponent, cfg.seed, only)
    report = format_report(results)
    if args.out:
        Path(args.out).write_text(report)
    sys.stdout.write(report)
    return 0 if all(r.passed for r in results) else 2


def cmd_verify_operators(args, cfg) -> int:
    args.only = "5,6"
    return cmd_verify(args, cfg)


# ----------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--mesh-n", type=int, dest="mesh_n")
    p.add_argument("--grading", type=float)
    p.add_argument("--out")


def _add_point(p: argparse.ArgumentParser, gamma: bool = True) -> None:
    for name in ("c1", "c2", "c3"):
        p.add_argument(f"--{name}", type=float, required=True)
    if gamma:
        p.add_argument("--gamma", type=float, required=True)


def _add_beta(p: argparse.ArgumentParser) -> None:
    for k in range(1, 5):
        p.add_argument(f"--beta{k}", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homax", description="Homogeneous axisymmetric Navier-Stokes profiles and swirl branches.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="region label of (c, gamma)")
    _add_common(p)
    _add_point(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("noswirl", help="no-swirl profile on the mesh")
    _add_common(p)
    _add_point(p)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_noswirl)

    p = sub.add_parser("gamma-bounds", help="gamma- and gamma+ for c")
    _add_common(p)
    _add_point(p, gamma=False)
    p.set_defaults(func=cmd_gamma_bounds)

    p = sub.add_parser("kernel", help="kernel basis of the linearised operator")
    _add_common(p)
    _add_point(p)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("solve", help="swirl solution by contraction")
    _add_common(p)
    _add_point(p)
    _add_beta(p)
    p.add_argument("--newton", action="store_true")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("fields", help="export spherical fields (CSV, JSON or a 3-D point cloud)")
    _add_common(p)
    _add_point(p)
    _add_beta(p)
    p.add_argument("--radii", help="comma-separated radii for a point cloud")
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("sweep", help="classify and solve over a parameter grid")
    _add_common(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--newton", action="store_true")
    p.set_defaults(func=cmd_sweep)

    for name, func in (("verify", cmd_verify), ("verify-operators", cmd_verify_operators)):
        p = sub.add_parser(name, help="run the verification batteries")
        _add_common(p)
        p.add_argument("--seed", type=int)
        p.add_argument("--only", help="comma-separated criterion numbers")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "fields" and not args.out:
        parser.error("fields needs --out")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except HomaxError as exc:
        sys.stderr.write(f"homax: {type(exc).__name__}: {exc}\n")
        if isinstance(exc, DivergenceError) and exc.trace:
            sys.stderr.write("trace: " + " ".join(f"{v:.3e}" for v in exc.trace) + "\n")
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"homax: I/O error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
