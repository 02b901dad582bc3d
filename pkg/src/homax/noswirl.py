"""No-swirl profiles: the Riccati boundary problem and region classification.

The profile solves

    (1 - x^2) U' + 2 x U + U^2 / 2 = c1 (1 - x) + c2 (1 + x) + c3 (1 - x^2),   U(0) = gamma.

In sigma = atanh(x) this is the regular equation dU/dsigma = P - 2xU - U^2/2,
which tends to an autonomous quadratic at each pole.  Shooting from 0 settles
onto the stable root at each end or escapes past the unstable one.  The two
extreme values gamma-(c) <= gamma+(c) are found by bisection on that
outcome.  Profiles sitting exactly at gamma+ (gamma-) follow the unstable root at
x = -1 (x = +1); they are computed by integrating inward from that root, where
the flow is contracting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import ode, solve_ivp

from .errors import ParameterError, RegionError
from .mesh import EndpointLimit, GridFunction, Mesh, extrapolate_log, extrapolate_power

SIGMA_END = 40.0
SIGMA_FATE = 20.0
GUARD = 1e6
RTOL = 1e-13
ATOL = 1e-14
PARAM_SNAP = 1e-8
GAMMA_TOL = 1e-10
GAMMA_SNAP = 1e-8

CASE_TAGS = ("Case1", "Case2", "Case2'", "Case3", "Case4")


@dataclass(frozen=True)
class Coefficients:
    c1: float
    c2: float
    c3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c1, self.c2, self.c3)

    def mirrored(self) -> Coefficients:
        return Coefficients(self.c2, self.c1, self.c3)


@dataclass(frozen=True)
class Params:
    c1: float
    c2: float
    c3: float
    gamma: float

    @property
    def coeffs(self) -> Coefficients:
        return Coefficients(self.c1, self.c2, self.c3)

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> Params:
        return cls(float(d["c1"]), float(d["c2"]), float(d["c3"]), float(d["gamma"]))


@dataclass(frozen=True)
class RegionLabel:
    j_stratum: int
    i_stratum: tuple[int, int] | None
    case_tag: str
    in_I_hat: bool

    @property
    def variant(self) -> str:
        """Which right inverse, kernel basis and projection the stratum uses."""
        if self.i_stratum is None:
            raise RegionError("no construction is available outside the strata I_{k,l}")
        k, l = self.i_stratum
        if k >= 5:
            return "3"
        return {1: "1", 2: "2a", 3: "2b"}[l]

    def to_dict(self) -> dict:
        return {
            "j_stratum": f"J{self.j_stratum}",
            "i_stratum": None if self.i_stratum is None else f"I_{{{self.i_stratum[0]},{self.i_stratum[1]}}}",
            "case_tag": self.case_tag,
            "in_I_hat": self.in_I_hat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RegionLabel:
        i = d["i_stratum"]
        pair = None
        if i is not None:
            k, l = i[3:-1].split(",")
            pair = (int(k), int(l))
        return cls(int(d["j_stratum"][1:]), pair, d["case_tag"], bool(d["in_I_hat"]))


@dataclass(frozen=True)
class BlowUp:
    """The shot left (-1) or right (+1) of 0 escapes to infinity near x_star."""

    side: int
    x_star: float
    sigma_star: float
    finite: bool


@dataclass(frozen=True, eq=False)
class NoSwirlProfile:
    params: Params
    u_theta_bar: GridFunction
    endpoint_minus: float
    endpoint_plus: float
    eta1: float | None
    eta2: float | None
    stratum: RegionLabel | None = None
    raw_minus: float = math.nan
    raw_plus: float = math.nan
    on_upper_branch: bool = False
    on_lower_branch: bool = False
    raw_eta1: float | None = None
    raw_eta2: float | None = None
    tails: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.u_theta_bar.mesh

    @property
    def coeffs(self) -> Coefficients:
        return self.params.coeffs

    def riccati_residual(self) -> np.ndarray:
        return riccati_residual(self.coeffs, self.u_theta_bar)


def _check_coeffs(c) -> Coefficients:
    if isinstance(c, Params):
        c = c.coeffs
    elif not isinstance(c, Coefficients):
        c = Coefficients(*map(float, c))
    if not all(math.isfinite(v) for v in c.as_tuple()):
        raise ParameterError(f"non-finite coefficients {c}")
    return c


def cbar3(c1: float, c2: float) -> float:
    """Lower edge of the admissible c3 range."""
    if c1 < -1.0 or c2 < -1.0 or math.isnan(c1) or math.isnan(c2):
        raise ParameterError(f"cbar3 needs c1, c2 >= -1, got ({c1}, {c2})")
    s = math.sqrt(1.0 + c1) + math.sqrt(1.0 + c2)
    return -0.5 * s * (s + 2.0)


def endpoint_roots(c1: float, c2: float) -> dict[str, float]:
    """Roots of U^2 - 4U - 4c1 = 0 at x = -1 and U^2 + 4U - 4c2 = 0 at x = +1."""
    r1 = math.sqrt(max(1.0 + c1, 0.0))
    r2 = math.sqrt(max(1.0 + c2, 0.0))
    return {
        "minus_stable": 2.0 - 2.0 * r1,
        "minus_unstable": 2.0 + 2.0 * r1,
        "plus_stable": -2.0 + 2.0 * r2,
        "plus_unstable": -2.0 - 2.0 * r2,
    }


def boundary_solution(c1: float, c2: float, x: np.ndarray) -> np.ndarray:
    """The unique solution at c3 = cbar3(c1, c2), linear in x."""
    return (1.0 + math.sqrt(1.0 + c1)) * (1.0 - x) - (1.0 + math.sqrt(1.0 + c2)) * (1.0 + x)


def is_cbar3(c: Coefficients, tol: float = PARAM_SNAP) -> bool:
    return abs(c.c3 - cbar3(c.c1, c.c2)) <= tol * max(1.0, abs(c.c3))


def forcing(c: Coefficients, gp, gm):
    """c1 (1-x) + c2 (1+x) + c3 (1-x^2) from the two pole gaps."""
    return c.c1 * gp + c.c2 * gm + c.c3 * gp * gm


def riccati_residual(c, u: GridFunction) -> np.ndarray:
    c = _check_coeffs(c)
    m = u.mesh
    v = u.values
    return m.weight * m.derivative(v, 1) + 2.0 * m.nodes * v + 0.5 * v * v - forcing(c, m.gap_plus, m.gap_minus)


def _sigma_gaps(s: float) -> tuple[float, float, float]:
    e = math.exp(-2.0 * abs(s))
    near, far = 2.0 * e / (1.0 + e), 2.0 / (1.0 + e)
    if s >= 0:
        return near, far, math.tanh(s)
    return far, near, math.tanh(s)


def _rhs(c: Coefficients):
    c1, c2, c3 = c.c1, c.c2, c.c3

    def f(s, u):
        gp, gm, x = _sigma_gaps(s)
        v = u[0]
        return [c1 * gp + c2 * gm + c3 * gp * gm - 2.0 * x * v - 0.5 * v * v]

    return f


def _guard(s, u):
    return abs(u[0]) - GUARD


_guard.terminal = True


def _log_gap(s: float) -> float:
    """ln(1 -+ x) at sigma = s on the pole side of s (valid for huge |s|)."""
    a = abs(s)
    return math.log(2.0) - 2.0 * a - math.log1p(math.exp(-2.0 * a))


def _integrate(c: Coefficients, s0: float, u0: float, s1: float, t_eval=None, rtol: float = RTOL):
    return solve_ivp(
        _rhs(c), (s0, s1), [u0], method="DOP853", rtol=rtol, atol=ATOL,
        t_eval=t_eval, events=_guard, dense_output=False,
    )


def shoot(c, gamma: float, side: int, sigma_end: float = SIGMA_FATE) -> tuple[bool, float, float]:
    """Integrate from x=0 toward the pole at `side`.

    Returns (escaped, sigma_reached, u_reached).  Escape is either a guard
    crossing or an end state beyond the unstable root, from which the
    autonomous tail diverges.
    """
    c = _check_coeffs(c)
    rhs = _rhs(c)
    hit = []

    def solout(s, u):
        if abs(u[0]) > GUARD:
            hit.append(s)
            return -1
        return 0

    r = ode(rhs).set_integrator("dop853", rtol=1e-12, atol=ATOL, nsteps=10**6)
    r.set_solout(solout)
    r.set_initial_value([float(gamma)], 0.0)
    r.integrate(side * sigma_end)
    u_end = float(r.y[0])
    if hit:
        return True, float(hit[0]), u_end
    roots = endpoint_roots(c.c1, c.c2)
    if side < 0:
        return bool(u_end > roots["minus_unstable"]), float(r.t), u_end
    return bool(u_end < roots["plus_unstable"]), float(r.t), u_end


def escapes(c, gamma: float, side: int) -> bool:
    return shoot(c, gamma, side)[0]


def manifold_gamma(c, side: int) -> float:
    """Value at 0 of the profile that sits on the unstable root at x = side."""
    c = _check_coeffs(c)
    roots = endpoint_roots(c.c1, c.c2)
    u0 = roots["minus_unstable"] if side < 0 else roots["plus_unstable"]
    sol = _integrate(c, side * SIGMA_END, u0, 0.0)
    if sol.status == 1:
        raise RegionError(f"profile leaving the unstable root at x={side} escapes before x=0")
    return float(sol.y[0, -1])


def _bisect(c: Coefficients, side: int, tol: float, max_iter: int = 60) -> float:
    """Largest (side=-1) or smallest (side=+1) gamma whose shot stays bounded."""
    # Escape toward -1 happens for large gamma, toward +1 for small gamma.
    bad_dir = -side
    inside = 0.0
    step = 1.0
    if escapes(c, inside, side):
        while escapes(c, inside, side):
            inside -= bad_dir * step
            step *= 2.0
            if step > 1e6:
                raise RegionError(f"no bounded shot found toward x={side} for {c}")
    outside = inside + bad_dir * 1.0
    step = 1.0
    while not escapes(c, outside, side):
        inside = outside
        step *= 2.0
        outside = inside + bad_dir * step
        if step > 1e6:
            raise RegionError(f"could not bracket the escape toward x={side} for {c}")
    for _ in range(max_iter):
        if abs(outside - inside) <= tol:
            break
        mid = 0.5 * (inside + outside)
        if escapes(c, mid, side):
            outside = mid
        else:
            inside = mid
    return 0.5 * (inside + outside)


def gamma_bounds(c, mesh: Mesh | None = None, tol: float = GAMMA_TOL) -> tuple[float, float]:
    """(gamma-, gamma+) by bisection on the escape of the shot from 0."""
    c = _check_coeffs(c)
    cb = cbar3(c.c1, c.c2)
    if c.c3 < cb and not is_cbar3(c):
        raise RegionError(f"c3={c.c3} is below cbar3={cb}")
    if is_cbar3(c):
        g = float(boundary_solution(c.c1, c.c2, np.array(0.0)))
        return g, g
    g_plus = _bisect(c, -1, tol)
    g_minus = _bisect(c, +1, tol)
    return g_minus, g_plus


def _sample(sol, grid: np.ndarray) -> np.ndarray:
    if sol.t.shape != grid.shape:
        raise RegionError("integration stopped before reaching every sample point")
    return sol.y[0].copy()


def _half_profile(c: Coefficients, gamma: float, side: int, mesh: Mesh, boundary: bool):
    """Values on one closed half of the mesh (ordered outward from 0) plus far-tail samples."""
    s_nodes = mesh.sigma[mesh.center :] if side > 0 else mesh.sigma[: mesh.center + 1][::-1]
    n_nodes = len(s_nodes)
    roots = endpoint_roots(c.c1, c.c2)
    tail_s = side * (SIGMA_END - 0.5 * np.arange(1, 7))
    if boundary:
        u0 = roots["minus_unstable"] if side < 0 else roots["plus_unstable"]
        grid = np.concatenate([tail_s, s_nodes[::-1]])
        sol = _integrate(c, side * SIGMA_END, u0, 0.0, t_eval=grid)
        if sol.status == 1:
            raise RegionError(f"boundary profile toward x={side} escapes before x=0")
        y = _sample(sol, grid)
        return y[len(tail_s) :][::-1], (tail_s, y[: len(tail_s)]), None
    grid = np.concatenate([s_nodes, tail_s[::-1]])
    sol = _integrate(c, 0.0, gamma, side * SIGMA_END, t_eval=grid)
    if sol.status == 1:
        s_star = float(sol.t_events[0][0])
        return None, None, BlowUp(side, math.tanh(s_star), s_star, True)
    y = _sample(sol, grid)
    u_end = y[-1]
    escaped = u_end > roots["minus_unstable"] if side < 0 else u_end < roots["plus_unstable"]
    if escaped:
        return None, None, BlowUp(side, float(side), math.inf * side, False)
    values = y[:n_nodes]
    double = (c.c1 if side < 0 else c.c2) <= -1.0 + PARAM_SNAP
    if double:
        # Algebraic approach to a double root: follow it far enough for a log fit.
        far = side * SIGMA_END * 2.0 ** np.arange(1, 8)
        sol2 = _integrate(c, side * SIGMA_END, u_end, far[-1], t_eval=far)
        return values, (far, _sample(sol2, far)), None
    return values, (tail_s, y[n_nodes:][::-1]), None


def solve_riccati(c, gamma: float, mesh: Mesh, snap: float = GAMMA_SNAP) -> NoSwirlProfile | BlowUp:
    """No-swirl profile with U(0) = gamma, or the BlowUp report if it escapes.

    If gamma lies within `snap` of gamma+ (gamma-) the half toward x=-1 (x=+1)
    is taken from the unstable-root trajectory and gamma is replaced by its
    value at 0.
    """
    c = _check_coeffs(c)
    gamma = float(gamma)
    if not math.isfinite(gamma):
        raise ParameterError("gamma must be finite")
    upper = lower = False
    if snap > 0.0:
        try:
            g_plus = manifold_gamma(c, -1)
            upper = abs(gamma - g_plus) <= snap
        except RegionError:
            upper = False
        try:
            g_minus = manifold_gamma(c, +1)
            lower = abs(gamma - g_minus) <= snap
        except RegionError:
            lower = False
        if upper:
            gamma = g_plus
        elif lower:
            gamma = g_minus
    left, tail_l, blow = _half_profile(c, gamma, -1, mesh, upper)
    if blow is not None:
        return blow
    right, tail_r, blow = _half_profile(c, gamma, +1, mesh, lower)
    if blow is not None:
        return blow
    values = np.concatenate([left[::-1], right[1:]])
    values[mesh.center] = gamma if not (upper and lower) else 0.5 * (left[0] + right[0])
    u = GridFunction(mesh, values)
    params = Params(c.c1, c.c2, c.c3, float(values[mesh.center]))
    prof = NoSwirlProfile(
        params=params, u_theta_bar=u, endpoint_minus=math.nan, endpoint_plus=math.nan,
        eta1=None, eta2=None, on_upper_branch=upper, on_lower_branch=lower,
        tails={-1: tail_l, 1: tail_r},
    )
    return _fill_endpoints(prof)


def _tail_limit(tail, side: int, model: str, shift: float = 0.0, log_weight: bool = False) -> EndpointLimit:
    s, vals = tail
    order = np.argsort(-np.abs(s))
    s, vals = s[order], vals[order] - shift
    log_g = np.array([_log_gap(v) for v in s])
    if log_weight:
        vals = vals * (log_g - math.log(3.0))
    if model == "log":
        return extrapolate_log(None, vals, log_gaps=log_g)
    return extrapolate_power(np.exp(log_g), vals)


def _snap(raw: EndpointLimit, candidates: list[float], floor: float = 1e-9) -> tuple[float, bool]:
    best = min(candidates, key=lambda r: abs(raw.value - r))
    if abs(raw.value - best) <= max(3.0 * raw.error, floor):
        return best, True
    return raw.value, False


def _fill_endpoints(prof: NoSwirlProfile) -> NoSwirlProfile:
    c = prof.coeffs
    roots = endpoint_roots(c.c1, c.c2)
    ends = {}
    vals = {}
    raws = {}
    etas: dict[int, float | None] = {-1: None, 1: None}
    raw_etas: dict[int, float | None] = {-1: None, 1: None}
    for side in (-1, 1):
        ci = c.c1 if side < 0 else c.c2
        double = ci <= -1.0 + PARAM_SNAP
        tail = prof.tails[side]
        model = "log" if double and len(tail[0]) > 6 else "power"
        lim = _tail_limit(tail, side, model)
        if side < 0:
            cands = [roots["minus_stable"], roots["minus_unstable"]]
        else:
            cands = [roots["plus_stable"], roots["plus_unstable"]]
        value, _ = _snap(lim, cands)
        ends[side], vals[side], raws[side] = lim, value, lim.value
        if double:
            centre = 2.0 if side < 0 else -2.0
            if model == "log":
                eta = _tail_limit(tail, side, "log", shift=centre, log_weight=True)
            else:
                eta = EndpointLimit(0.0, 0.0, math.inf, True)
            target = [0.0, 4.0] if side < 0 else [0.0, -4.0]
            etas[side], _ = _snap(eta, target, floor=0.05)
            raw_etas[side] = eta.value
    u = prof.u_theta_bar.with_endpoints(ends[-1], ends[1])
    return replace(
        prof, u_theta_bar=u, endpoint_minus=vals[-1], endpoint_plus=vals[1],
        raw_minus=raws[-1], raw_plus=raws[1], eta1=etas[-1], eta2=etas[1],
        raw_eta1=raw_etas[-1], raw_eta2=raw_etas[1],
    )


def endpoint_data(profile: NoSwirlProfile) -> tuple[float, float, float | None, float | None]:
    return profile.endpoint_minus, profile.endpoint_plus, profile.eta1, profile.eta2


def j_stratum(c: Coefficients, tol: float = PARAM_SNAP) -> int:
    m1 = abs(c.c1 + 1.0) <= tol
    m2 = abs(c.c2 + 1.0) <= tol
    base = 5 if is_cbar3(c, tol) else 1
    return base + (1 if m1 else 0) + (2 if m2 else 0)


def classify(
    params: Params,
    profile: NoSwirlProfile | None = None,
    bounds: tuple[float, float] | None = None,
    param_tol: float = PARAM_SNAP,
    gamma_tol: float = GAMMA_SNAP,
) -> RegionLabel:
    """Stratum J_k, stratum I_{k,l}, analysis case and membership in I-hat."""
    c = params.coeffs
    if c.c1 < -1.0 - param_tol or c.c2 < -1.0 - param_tol:
        raise RegionError(f"c1, c2 must be >= -1 (got {c.c1}, {c.c2})")
    c = Coefficients(max(c.c1, -1.0), max(c.c2, -1.0), c.c3)
    if c.c3 < cbar3(c.c1, c.c2) and not is_cbar3(c, param_tol):
        raise RegionError(f"c3={c.c3} below cbar3={cbar3(c.c1, c.c2)}")
    g_minus, g_plus = bounds if bounds is not None else gamma_bounds(c)
    g = params.gamma
    if g > g_plus + gamma_tol or g < g_minus - gamma_tol:
        raise RegionError(f"gamma={g} outside [{g_minus}, {g_plus}]")
    at_plus = abs(g - g_plus) <= gamma_tol
    at_minus = abs(g - g_minus) <= gamma_tol
    k = j_stratum(c, param_tol)
    low1 = c.c1 < -0.75
    low2 = c.c2 < -0.75
    i_kl: tuple[int, int] | None = None
    if k >= 5:
        if low1 and low2:
            i_kl = (k, 1)
    elif at_plus and at_minus:
        i_kl = None
    elif not at_plus and not at_minus:
        i_kl = (k, 1)
    elif at_plus and low1:
        i_kl = (k, 2)
    elif at_minus and low2:
        i_kl = (k, 3)
    in_hat = i_kl is None and (c.c1 > -0.75 or c.c2 > -0.75)
    if i_kl is None:
        case = "Case4"
    elif i_kl[0] == 1 or i_kl[0] >= 5 or i_kl in ((2, 2), (3, 3)):
        case = "Case1"
    elif i_kl in ((2, 1), (2, 3), (4, 3)):
        case = "Case2"
    elif i_kl in ((3, 1), (3, 2), (4, 2)):
        case = "Case2'"
    else:
        case = "Case3"
    return RegionLabel(k, i_kl, case, in_hat)


def solve_profile(
    params: Params, mesh: Mesh, bounds: tuple[float, float] | None = None, snap: float = GAMMA_SNAP
) -> NoSwirlProfile:
    """solve_riccati followed by classify; raises RegionError on blow-up."""
    c = params.coeffs
    if bounds is None:
        bounds = gamma_bounds(c)
    gamma = params.gamma
    for b in bounds:
        if abs(gamma - b) <= snap:
            gamma = b
    if is_cbar3(c):
        prof = _cbar3_profile(c, mesh)
    else:
        prof = solve_riccati(c, gamma, mesh, snap=snap)
    if isinstance(prof, BlowUp):
        raise RegionError(f"profile escapes toward x={prof.side} near x*={prof.x_star}")
    label = classify(Params(c.c1, c.c2, c.c3, gamma), prof, bounds)
    return replace(prof, stratum=label)


def _cbar3_profile(c: Coefficients, mesh: Mesh) -> NoSwirlProfile:
    g = float(boundary_solution(c.c1, c.c2, np.array(0.0)))
    prof = solve_riccati(c, g, mesh, snap=max(GAMMA_SNAP, 1e-6))
    if isinstance(prof, BlowUp):
        raise RegionError(f"boundary solution at cbar3 could not be integrated for {c}")
    return prof
