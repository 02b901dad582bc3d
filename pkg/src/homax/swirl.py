"""With-swirl solutions near a no-swirl profile.

The perturbation is written as U~ = sum_i beta_i V^i + V where the V^i span
the kernel of L_0 = A and V lies in the case's complement space (the case
functionals vanish on it).  Since A kills the kernel, G(U~) = 0 becomes

    V = -P W Q(U~, U~),

which is a contraction for small beta.  The induced constants chat are the
ones the total profile Ubar + U~ satisfies in the reduced system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import DivergenceError, ParameterError, RegionError
from .noswirl import RegionLabel, is_cbar3
from .operators import (
    OperatorContext,
    ProfilePair,
    _psi,
    _psi_alpha,
    case_functionals,
    kernel_basis,
    norm_X,
    norm_Y,
    op_G,
    op_Q,
    probe_context,
    project,
    right_inverse_W,
    select_epsilon,
    varphi_ddot0,
)

TOL = 1e-8
MAX_ITER = 200
BETA_GUARD = 0.1
STALL_STEPS = 3

# beta slot (1..4) carried by each basis vector, per variant
BETA_SLOTS = {"1": (1, 2, 3, 4), "2a": (2, 3, 4), "2b": (2, 3, 4), "3": (3, 4)}


@dataclass(frozen=True, eq=False)
class SwirlSolution:
    params: object
    variant: str
    beta: tuple[float, ...]
    pair: ProfilePair
    correction: ProfilePair
    chat: tuple[float, float, float]
    residual_Y: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def beta_by_slot(self) -> dict[int, float]:
        return dict(zip(BETA_SLOTS[self.variant], self.beta))

    def summary(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "variant": self.variant,
            "beta": {f"beta{k}": v for k, v in self.beta_by_slot().items()},
            "chat": list(self.chat),
            "residual_Y": self.residual_Y,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["trace"] = list(self.trace)
        out["notes"] = list(self.notes)
        out["pair"] = self.pair.to_dict()
        out["correction"] = self.correction.to_dict()
        return out


def beta_vector(ctx: OperatorContext, beta1=0.0, beta2=0.0, beta3=0.0, beta4=0.0) -> tuple[float, ...]:
    """Pack named swirl parameters into the variant's beta vector."""
    given = {1: beta1, 2: beta2, 3: beta3, 4: beta4}
    slots = BETA_SLOTS[ctx.variant]
    extra = [k for k, v in given.items() if v and k not in slots]
    if extra:
        raise ParameterError(f"beta{extra[0]} is not a free parameter for variant {ctx.variant}")
    return tuple(float(given[k]) for k in slots)


def kernel_part(ctx: OperatorContext, beta) -> ProfilePair:
    basis = kernel_basis(ctx)
    if len(beta) != len(basis):
        raise ParameterError(f"variant {ctx.variant} takes {len(basis)} beta components, got {len(beta)}")
    out = ProfilePair.zeros(ctx.mesh)
    for b, v in zip(beta, basis):
        if b:
            out = out + b * v
    return out


def chat(ctx: OperatorContext, pair: ProfilePair) -> tuple[float, float, float]:
    """Constants of the reduced system satisfied by Ubar + pair.

    With G(pair) = 0 the first equation reads LHS = P_c + P~, which gives
    chat1 = c1 + psi(-1)/2, chat2 = c2 + psi(1)/2, chat3 = c3 - varphi''(0)/2.
    """
    c = ctx.params
    _, pm, pp = _psi(ctx.mesh, pair.phi, pair.phi, _psi_alpha(ctx))
    if not (math.isfinite(pm) and math.isfinite(pp)):
        raise DivergenceError("psi has no finite endpoint limit")
    return (c.c1 + 0.5 * pm, c.c2 + 0.5 * pp, c.c3 - 0.5 * varphi_ddot0(ctx, pair.theta))


def _finish(ctx, beta, kern, v, iterations, converged, trace, notes=()) -> SwirlSolution:
    pair = kern + v
    res = norm_Y(ctx, op_G(ctx, pair)).total
    return SwirlSolution(
        ctx.params, ctx.variant, tuple(beta), pair, v, chat(ctx, pair), res, iterations, converged, trace, list(notes)
    )


def picard_solve(
    ctx: OperatorContext,
    beta,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    guard: float = BETA_GUARD,
) -> SwirlSolution:
    """Contraction iteration V <- -P W Q(K + V, K + V) with K = sum beta_i V^i."""
    beta = tuple(float(b) for b in beta)
    size = math.sqrt(sum(b * b for b in beta))
    if size > guard:
        raise ParameterError(f"|beta| = {size:.3g} exceeds the guard {guard}")
    kern = kernel_part(ctx, beta)
    v = ProfilePair.zeros(ctx.mesh)
    trace: list[float] = []
    stalls = 0
    for it in range(1, max_iter + 1):
        u = kern + v
        new = -project(ctx, right_inverse_W(ctx, op_Q(ctx, u, u)))
        step = norm_X(ctx, new - v).total
        if not math.isfinite(step):
            raise DivergenceError("Picard iterate is not finite", trace)
        trace.append(step)
        v = new
        if step < tol:
            return _finish(ctx, beta, kern, v, it, True, trace)
        if len(trace) > 1 and step >= trace[-2]:
            stalls += 1
            if stalls >= STALL_STEPS:
                raise DivergenceError(f"no contraction after {it} iterations", trace)
        else:
            stalls = 0
    return _finish(ctx, beta, kern, v, max_iter, False, trace)


def newton_refine(
    ctx: OperatorContext,
    solution: SwirlSolution,
    tol: float = 1e-12,
    max_steps: int = 5,
    inner_tol: float = 1e-13,
    inner_max: int = 100,
) -> SwirlSolution:
    """Newton steps L_U d = -G(U) with d in the complement space.

    Each linear solve is done matrix-free: since P W A is the identity on the
    complement space, d = -P W (G + (L_U - A) d) is iterated to a fixed point.
    On failure the input solution is returned with a note.
    """
    pair = solution.pair
    kern = pair - solution.correction
    residuals = [norm_Y(ctx, op_G(ctx, pair)).total]
    notes = list(solution.notes)
    steps = 0
    for _ in range(max_steps):
        if residuals[-1] <= tol:
            break
        g = op_G(ctx, pair)
        d = ProfilePair.zeros(ctx.mesh)
        prev = math.inf
        ok = False
        try:
            for _ in range(inner_max):
                coupling = op_Q(ctx, pair, d) + op_Q(ctx, d, pair)
                new = -project(ctx, right_inverse_W(ctx, g + coupling))
                change = norm_X(ctx, new - d).total
                d = new
                if change <= inner_tol * max(1.0, norm_X(ctx, d).total):
                    ok = True
                    break
                if not change < prev:
                    break
                prev = change
        except DivergenceError as exc:
            notes.append(f"newton: {exc}")
        if not ok:
            notes.append("newton: linearisation did not invert, kept previous iterate")
            break
        trial = pair + d
        r = norm_Y(ctx, op_G(ctx, trial)).total
        if not r < residuals[-1]:
            notes.append("newton: step did not reduce the residual, stopped")
            break
        pair = trial
        residuals.append(r)
        steps += 1
    v = pair - kern
    trace = list(solution.trace) + residuals[1:]
    out = SwirlSolution(
        ctx.params,
        ctx.variant,
        solution.beta,
        pair,
        v,
        chat(ctx, pair),
        residuals[-1],
        solution.iterations + steps,
        solution.converged or residuals[-1] <= tol,
        trace,
        notes,
    )
    return out


# ----------------------------------------------------------------------------
# diagnostics


def _weighted_sup(ctx: OperatorContext, pair: ProfilePair) -> float:
    """sup of sin(theta) |u|, i.e. of the weighted U components."""
    w = ctx.mesh.weight
    return float(max(np.max(np.abs(w**ctx.epsilon * pair.theta)), np.max(np.abs(w**ctx.epsilon * pair.phi))))


def v1_formula(ctx: OperatorContext, x: np.ndarray) -> np.ndarray:
    """sin(theta) v^1 from the theta-integral of e^{-b} sin t, by adaptive quadrature.

    Ubar is interpolated by a cubic spline and b is integrated with quad, so
    nothing here shares code with the mesh integrals.
    """
    m = ctx.mesh
    spline = CubicSpline(m.nodes, ctx.ubar)

    def b(t: float) -> float:
        s = math.cos(t)
        return quad(lambda r: spline(r) / (1.0 - r * r), 0.0, s, epsabs=1e-13, epsrel=1e-12)[0]

    out = []
    for xv in np.atleast_1d(x):
        th = math.acos(xv)
        val = quad(lambda t: math.exp(-b(t)) * math.sin(t), 0.5 * math.pi, th, epsabs=1e-13, epsrel=1e-12)[0]
        out.append(-val)
    return np.array(out)


def beta_derivative_check(
    ctx: OperatorContext,
    slots=(3, 4),
    h: float = 1e-2,
    formula_points: int = 9,
    floor: float = 1e-13,
) -> dict:
    """Central differences of the solution map in beta against the kernel vectors.

    For each slot the difference quotient (U~(h e_i) - U~(-h e_i)) / 2h is
    compared to V^i in a weighted sup norm at h and h/2; the ratio of the two
    errors gives the observed order.  Errors below `floor` count as exact.
    """
    basis = dict(zip(BETA_SLOTS[ctx.variant], kernel_basis(ctx)))
    report: dict = {"variant": ctx.variant, "h": [h, h / 2], "slots": {}}
    for i in slots:
        if i not in basis:
            raise ParameterError(f"beta{i} is not a free parameter for variant {ctx.variant}")
        errs = []
        try:
            for step in (h, h / 2):
                sols = []
                for sign in (1.0, -1.0):
                    beta = [0.0] * len(basis)
                    beta[list(basis).index(i)] = sign * step
                    sols.append(picard_solve(ctx, beta))
                quotient = (sols[0].pair - sols[1].pair) * (0.5 / step)
                errs.append(_weighted_sup(ctx, quotient - basis[i]))
        except DivergenceError as exc:
            report["slots"][i] = {"errors": errs, "order": None, "partial": True, "message": str(exc)}
            continue
        if errs[1] <= floor:
            order = math.inf
        else:
            order = math.log2(max(errs[0], floor) / errs[1])
        report["slots"][i] = {"errors": errs, "order": order, "limit_error": errs[1], "partial": False}
    if 3 in slots and 3 in basis and formula_points:
        m = ctx.mesh
        xs = np.linspace(-0.9, 0.9, formula_points)
        idx = np.searchsorted(m.nodes, xs)
        xs = m.nodes[idx]
        ref = v1_formula(ctx, xs)
        report["formula_error"] = float(np.max(np.abs(ref - basis[3].phi[idx])))
    return report


def _probe_label(ctx_label: RegionLabel, cbar: bool) -> RegionLabel:
    return RegionLabel(ctx_label.j_stratum, (5, 1) if cbar else (1, 1), "Case1", ctx_label.in_I_hat)


def rigidity_probe(profile, beta3: float = 1e-2, beta4: float = 0.0, epsilon: float | None = None, tol: float = 1e-8) -> dict:
    """Try to build swirl at a point of the rigid set and report what happens.

    The contraction is run with the interior right inverse (or the c3 = cbar3
    one) and its kernel basis, although the function-space setting does not
    apply there.  The outcome is recorded, never asserted.
    """
    label = profile.stratum
    report = {"params": profile.params.to_dict(), "label": None if label is None else label.to_dict(), "beta3": beta3, "beta4": beta4}
    if label is None:
        report.update(outcome="unlabelled")
        return report
    cbar = is_cbar3(profile.coeffs)
    if epsilon is None:
        try:
            epsilon = select_epsilon("Case1", profile.endpoint_minus, profile.endpoint_plus)
        except RegionError:
            epsilon = 0.25
    try:
        ctx = probe_context(profile, _probe_label(label, cbar), epsilon)
        beta = (beta3, beta4) if cbar else (0.0, 0.0, beta3, beta4)
        sol = picard_solve(ctx, beta, tol=tol)
    except DivergenceError as exc:
        outcome = "non-contraction" if exc.trace else "divergence"
        report.update(outcome=outcome, message=str(exc), trace=list(exc.trace))
        return report
    except (ParameterError, RegionError, FloatingPointError) as exc:
        report.update(outcome="failed", message=str(exc))
        return report
    spread = float(np.max(np.abs(sol.pair.phi - sol.pair.phi[ctx.mesh.center])))
    report.update(
        outcome="collapse" if spread < tol else "swirl",
        converged=sol.converged,
        residual_Y=sol.residual_Y,
        phi_spread=spread,
        iterations=sol.iterations,
    )
    return report


def mirror_pair(pair: ProfilePair) -> ProfilePair:
    """(x, U_theta, U_phi) -> (-x, -U_theta(-x), U_phi(-x)) on a symmetric mesh."""
    return ProfilePair(pair.mesh, -pair.theta[::-1], pair.phi[::-1])
