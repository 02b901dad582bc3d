"""Verification batteries run by `homax verify` and the acceptance tests.

Each battery returns a CriterionResult holding the measured quantities and
the tolerance it was held to.  Reports are formatted with fixed precision
and no timings, so identical inputs give byte-identical text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DivergenceError
from .mesh import Mesh, build_mesh
from .noswirl import (
    Params,
    boundary_solution,
    cbar3,
    endpoint_roots,
    gamma_bounds,
    solve_profile,
    solve_riccati,
)
from .operators import (
    OperatorContext,
    ProfilePair,
    _core_functionals,
    case_functionals,
    kernel_basis,
    kernel_vectors,
    make_context,
    norm_X,
    norm_Y,
    op_A,
    op_G,
    op_L,
    project,
    right_inverse_W,
)
from .swirl import beta_derivative_check, beta_vector, mirror_pair, picard_solve

# stratum -> (c1, c2, c3, gamma); gamma is a number, "+"/"-" for a bound or "mid"
REPRESENTATIVES = {
    "I_{1,1}": (0.0, 0.0, 0.0, -1.0),
    "I_{1,2}": (-0.96, 0.0, 0.0, "+"),
    "I_{1,3}": (0.0, -0.96, 0.0, "-"),
    "I_{2,1}": (-1.0, 0.0, 1.0, "mid"),
    "I_{2,3}": (-1.0, -0.96, 1.0, "-"),
    "I_{3,1}": (0.0, -1.0, 1.0, "mid"),
    "I_{4,1}": (-1.0, -1.0, 1.0, "mid"),
    "I_{5,1}": (-0.96, -0.91, None, "+"),
}
VARIANT_POINTS = {"1": "I_{1,1}", "2a": "I_{1,2}", "2b": "I_{1,3}", "3": "I_{5,1}"}

CRITERIA = {
    1: "closed-form boundary solution",
    2: "Landau family",
    3: "endpoint root identities",
    4: "eta limits",
    5: "operator identities",
    6: "linearization consistency",
    7: "swirl existence",
    8: "tangency",
    9: "quadratic correction",
    10: "symmetry transport",
    11: "rigidity form",
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = " ".join(f"{k}={_fmt(v)}" for k, v in self.values.items())
        return f"criterion {self.number:2d} {status} {self.name}: {detail}"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return f"{v:.3e}"
    return str(v)


def format_report(results: list[CriterionResult]) -> str:
    lines = [r.line() for r in results]
    total = sum(r.passed for r in results)
    lines.append(f"summary {total}/{len(results)} passed")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# shared fixtures


@lru_cache(maxsize=None)
def representative_context(name: str, n: int = 1025, grading_exponent: float = 4.0) -> OperatorContext:
    c1, c2, c3, g = REPRESENTATIVES[name]
    if c3 is None:
        c3 = cbar3(c1, c2)
    mesh = build_mesh(n, grading_exponent)
    bounds = gamma_bounds((c1, c2, c3))
    if g == "+":
        g = bounds[1]
    elif g == "-":
        g = bounds[0]
    elif g == "mid":
        g = 0.5 * (bounds[0] + bounds[1])
    prof = solve_profile(Params(c1, c2, c3, g), mesh, bounds)
    return make_context(prof)


def random_y(mesh: Mesh, rng: np.random.Generator) -> ProfilePair:
    """Random element of Y: theta part vanishes at the poles with zero second derivative at 0.

    The x^2 coefficient repeats the constant one, which cancels (1-x^2)'' at 0.
    """
    x = mesh.nodes
    a = rng.normal(size=6)
    poly = a[0] + a[1] * x + a[0] * x**2 + a[3] * x**3 + a[4] * x**4 + a[5] * x**5
    phi = rng.normal() * np.cos(2.0 * x) + rng.normal() * x + rng.normal() * mesh.weight
    return ProfilePair(mesh, mesh.weight * poly, phi)


# ----------------------------------------------------------------------------
# batteries


def check_boundary_closed_form(mesh: Mesh, rng: np.random.Generator, count: int = 10, tol: float = 1e-6):
    worst = 0.0
    for c1, c2 in rng.uniform(-1.0, 4.0, size=(count, 2)):
        c = (float(c1), float(c2), cbar3(c1, c2))
        g = float(boundary_solution(c1, c2, np.array(0.0)))
        prof = solve_riccati(c, g, mesh, snap=1e-6)
        err = np.max(np.abs(prof.u_theta_bar.values - boundary_solution(c1, c2, mesh.nodes)))
        worst = max(worst, float(err))
    return CriterionResult(1, CRITERIA[1], worst <= tol, {"points": count, "max_err": worst, "tol": tol})


def landau(a: float, x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """U = 2 (1 - x^2) / (x - A), the no-swirl profile with c = 0 and gamma = -2/A."""
    return 2.0 * weight / (x - a)


def check_landau(mesh: Mesh, res_tol: float = 1e-8, end_tol: float = 1e-4):
    worst_res = worst_end = worst_form = 0.0
    for a in (1.5, -1.5, 2.0, -2.0, 5.0, -5.0):
        prof = solve_profile(Params(0.0, 0.0, 0.0, -2.0 / a), mesh)
        worst_res = max(worst_res, float(np.max(np.abs(prof.riccati_residual()))))
        worst_end = max(worst_end, abs(prof.raw_minus), abs(prof.raw_plus))
        exact = landau(a, mesh.nodes, mesh.weight)
        worst_form = max(worst_form, float(np.max(np.abs(prof.u_theta_bar.values - exact))))
    ok = worst_res <= res_tol and worst_end <= end_tol
    return CriterionResult(
        2, CRITERIA[2], ok, {"riccati_res": worst_res, "endpoint": worst_end, "closed_form_err": worst_form}
    )


def _random_interior_c(rng: np.random.Generator) -> tuple[float, float, float]:
    c1, c2 = rng.uniform(-0.9, 3.0, size=2)
    return float(c1), float(c2), float(cbar3(c1, c2) + rng.uniform(0.1, 3.0))


def check_endpoint_roots(mesh: Mesh, rng: np.random.Generator, count: int = 50, boundary: int = 10, tol: float = 1e-4):
    worst = 0.0
    for _ in range(count):
        c = _random_interior_c(rng)
        lo, hi = gamma_bounds(c)
        g = lo + rng.uniform(0.1, 0.9) * (hi - lo)
        prof = solve_profile(Params(*c, g), mesh, (lo, hi))
        um, up = prof.raw_minus, prof.raw_plus
        worst = max(worst, abs(0.5 * um * um - 2.0 * um - 2.0 * c[0]), abs(0.5 * up * up + 2.0 * up - 2.0 * c[1]))
    branch_ok = 0
    for k in range(boundary):
        c = _random_interior_c(rng)
        lo, hi = gamma_bounds(c)
        upper = k % 2 == 0
        prof = solve_profile(Params(*c, hi if upper else lo), mesh, (lo, hi))
        roots = endpoint_roots(c[0], c[1])
        near = lambda v, a, b: abs(v - a) < abs(v - b)  # noqa: E731
        m_unstable = near(prof.raw_minus, roots["minus_unstable"], roots["minus_stable"])
        p_unstable = near(prof.raw_plus, roots["plus_unstable"], roots["plus_stable"])
        if (m_unstable, p_unstable) == (upper, not upper):
            branch_ok += 1
    ok = worst <= tol and branch_ok == boundary
    return CriterionResult(3, CRITERIA[3], ok, {"points": count, "max_identity_err": worst, "branches_ok": f"{branch_ok}/{boundary}"})


ETA_POINTS = ((0.0, 0.0, 0.3), (0.5, 1.0, 0.5), (2.0, 2.0, 0.8), (0.0, 0.5, 1.0), (1.0, 1.5, 1.0))


def check_eta(mesh: Mesh, tol: float = 0.1):
    """c1 = -1 with (c2, c3, fraction); fraction 1 means gamma = gamma+."""
    worst = 0.0
    selected = 0
    for c2, c3, frac in ETA_POINTS:
        c = (-1.0, c2, c3)
        lo, hi = gamma_bounds(c)
        g = lo + frac * (hi - lo)
        prof = solve_profile(Params(*c, g), mesh, (lo, hi))
        target = 0.0 if frac == 1.0 else 4.0
        raw = prof.raw_eta1
        worst = max(worst, abs(raw - target))
        selected += prof.eta1 == target
    ok = worst <= tol and selected == len(ETA_POINTS)
    return CriterionResult(4, CRITERIA[4], ok, {"points": len(ETA_POINTS), "max_eta_err": worst, "selected": f"{selected}/{len(ETA_POINTS)}"})


def full_functional_matrix(ctx: OperatorContext) -> np.ndarray:
    """(l_i(V^j)) over l1..l4 and V1..V4, whatever the variant's own basis is."""
    vecs = kernel_vectors(ctx)
    vals = [_core_functionals(vecs[n]) for n in ("V1", "V2", "V3", "V4")]
    return np.array([[v[ln] for v in vals] for ln in ("l1", "l2", "l3", "l4")])


def check_operators(n: int, grading: float, rng: np.random.Generator, samples: int = 20):
    w_worst = k_worst = t_worst = 0.0
    for name in REPRESENTATIVES:
        ctx = representative_context(name, n, grading)
        for v in kernel_basis(ctx):
            k_worst = max(k_worst, norm_Y(ctx, op_A(ctx, v)).total)
        mat = full_functional_matrix(ctx)
        t_worst = max(t_worst, float(np.max(np.abs(np.triu(mat, 1)))), float(np.max(np.abs(np.diag(mat) - 1.0))))
        if name in VARIANT_POINTS.values():
            for _ in range(samples):
                xi = random_y(ctx.mesh, rng)
                r = op_A(ctx, right_inverse_W(ctx, xi)) - xi
                w_worst = max(w_worst, norm_Y(ctx, r).total / norm_Y(ctx, xi).total)
    ok = w_worst <= 1e-5 and k_worst <= 1e-6 and t_worst <= 1e-8
    return CriterionResult(5, CRITERIA[5], ok, {"right_inverse_rel": w_worst, "kernel": k_worst, "triangular": t_worst})


def check_linearization(ctx: OperatorContext, rng: np.random.Generator, count: int = 5):
    hs = (1e-3, 1e-4, 1e-5)
    slopes = []
    basis = kernel_basis(ctx)
    for _ in range(count):
        # base point small, direction of unit size so h Q(V, V) stays above roundoff
        pairs = []
        for scale in (1e-2, 1.0):
            coef = rng.normal(size=len(basis)) * scale
            p = project(ctx, right_inverse_W(ctx, random_y(ctx.mesh, rng))) * scale
            for a, v in zip(coef, basis):
                p = p + a * v
            pairs.append(p)
        u, v = pairs
        g0 = op_G(ctx, u)
        lin = op_L(ctx, u, v)
        errs = [norm_Y(ctx, (op_G(ctx, u + h * v) - g0) * (1.0 / h) - lin).total for h in hs]
        slopes.append(float(np.polyfit(np.log(hs), np.log(errs), 1)[0]))
    ok = all(abs(s - 1.0) <= 0.2 for s in slopes)
    return CriterionResult(6, CRITERIA[6], ok, {"min_slope": min(slopes), "max_slope": max(slopes)})


def check_existence(n: int, grading: float, beta: float = 1e-2):
    worst_res = worst_fun = 0.0
    max_it = 0
    swirl = True
    for name in REPRESENTATIVES:
        ctx = representative_context(name, n, grading)
        sol = picard_solve(ctx, beta_vector(ctx, beta3=beta))
        worst_res = max(worst_res, sol.residual_Y)
        max_it = max(max_it, sol.iterations if sol.converged else 10**6)
        worst_fun = max(worst_fun, max(abs(v) for v in case_functionals(ctx, sol.correction).values()))
        swirl = swirl and float(np.max(np.abs(sol.pair.phi))) > 0.0
    ok = worst_res <= 1e-7 and max_it <= 50 and swirl and worst_fun <= 1e-8
    return CriterionResult(
        7, CRITERIA[7], ok,
        {"points": len(REPRESENTATIVES), "max_residual": worst_res, "max_iterations": max_it, "functionals": worst_fun, "swirl": swirl},
    )


def check_tangency(n: int, grading: float):
    orders = []
    limits = []
    formula = 0.0
    for name in ("I_{1,1}", "I_{5,1}"):
        rep = beta_derivative_check(representative_context(name, n, grading))
        for slot in rep["slots"].values():
            orders.append(slot["order"] if slot["order"] is not None else -math.inf)
            limits.append(slot.get("limit_error", math.inf))
        formula = max(formula, rep.get("formula_error", 0.0))
    ok = min(orders) >= 1.8 and max(limits) <= 1e-4 and formula <= 1e-6
    return CriterionResult(8, CRITERIA[8], ok, {"min_order": min(orders), "max_limit_err": max(limits), "v1_formula_err": formula})


def check_quadratic(ctx: OperatorContext):
    betas = np.logspace(-3.0, -1.5, 7)
    sizes = [norm_X(ctx, picard_solve(ctx, beta_vector(ctx, beta3=float(b))).correction).total for b in betas]
    slope = float(np.polyfit(np.log(betas), np.log(sizes), 1)[0])
    return CriterionResult(9, CRITERIA[9], slope >= 1.9, {"slope": slope})


SYMMETRY_PAIRS = (("I_{1,1}", None), ("I_{1,2}", "I_{1,3}"), ("I_{2,1}", "I_{3,1}"), ("I_{4,1}", None), ("I_{5,1}", None))


def check_symmetry(n: int, grading: float, beta: float = 1e-2, floor: float = 1e-12):
    worst = 0.0
    for name, _ in SYMMETRY_PAIRS:
        ctx = representative_context(name, n, grading)
        sol = picard_solve(ctx, beta_vector(ctx, beta3=beta))
        p = ctx.params
        mirrored = solve_profile(Params(p.c2, p.c1, p.c3, -p.gamma), ctx.mesh)
        mctx = make_context(mirrored, ctx.epsilon)
        r = norm_Y(mctx, op_G(mctx, mirror_pair(sol.pair))).total
        ratio = max(r, floor) / max(sol.residual_Y, floor)
        worst = max(worst, ratio)
    return CriterionResult(10, CRITERIA[10], worst <= 10.0, {"points": len(SYMMETRY_PAIRS), "max_ratio": worst})


def check_rigidity(n: int, grading: float, c: float = 1e-2, tol: float = 1e-10):
    worst = 0.0
    for name in REPRESENTATIVES:
        ctx = representative_context(name, n, grading)
        sol = picard_solve(ctx, beta_vector(ctx, beta4=c))
        const = ProfilePair(ctx.mesh, np.zeros(ctx.mesh.n), np.full(ctx.mesh.n, c))
        worst = max(worst, sol.residual_Y, norm_Y(ctx, op_G(ctx, const)).total)
    return CriterionResult(11, CRITERIA[11], worst <= tol, {"points": len(REPRESENTATIVES), "max_residual": worst})


def run_criterion(k: int, n: int = 1025, grading: float = 4.0, seed: int = 0) -> CriterionResult:
    mesh = build_mesh(n, grading)
    rng = np.random.default_rng([seed, k])
    try:
        if k == 1:
            return check_boundary_closed_form(mesh, rng)
        if k == 2:
            return check_landau(mesh)
        if k == 3:
            return check_endpoint_roots(mesh, rng)
        if k == 4:
            return check_eta(mesh)
        if k == 5:
            return check_operators(n, grading, rng)
        if k == 6:
            return check_linearization(representative_context("I_{1,1}", n, grading), rng)
        if k == 7:
            return check_existence(n, grading)
        if k == 8:
            return check_tangency(n, grading)
        if k == 9:
            return check_quadratic(representative_context("I_{1,1}", n, grading))
        if k == 10:
            return check_symmetry(n, grading)
        if k == 11:
            return check_rigidity(n, grading)
    except DivergenceError as exc:
        return CriterionResult(k, CRITERIA[k], False, {"error": type(exc).__name__, "message": str(exc)})
    raise ValueError(f"unknown criterion {k}")


def run_all(n: int = 1025, grading: float = 4.0, seed: int = 0, only=None) -> list[CriterionResult]:
    ks = sorted(CRITERIA) if not only else sorted(only)
    return [run_criterion(k, n, grading, seed) for k in ks]
