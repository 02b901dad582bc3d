"""Linearised operator, quadratic part, right inverses and weighted norms.

Everything here acts on pairs (U_theta, U_phi) sampled on a mesh, around a
fixed no-swirl profile Ubar.  With

    a(x) = int_0^x (2s + Ubar)/(1 - s^2) ds,   b(x) = int_0^x Ubar/(1 - s^2) ds,
    l[U] = (1 - x^2) U' + (2x + Ubar) U,

the operators are

    A(U)   = ( l[U_theta] + l[U_theta]''(0) (1 - x^2) / 2,  (1 - x^2) U_phi'' + Ubar U_phi' )
    Q(U,V) = ( U_th V_th / 2 + psi[U_ph, V_ph] - (1-x) psi(-1) / 2 - (1+x) psi(1) / 2
               + (U_th V_th)''(0) (1 - x^2) / 4,   U_th V_ph' )
    G(U)   = A(U) + Q(U, U),     L_U V = A(V) + Q(U, V) + Q(V, U),

where psi[U, V] is the triple integral from 0 of 2 U V' / (1 - s^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CaseMismatchError, DivergenceError, ParameterError, RegionError
from .mesh import GridFunction, Mesh, extrapolate_power, richardson_fixed, tail_integral
from .noswirl import NoSwirlProfile, Params, RegionLabel

EPS_MARGIN = 0.02
MIDDLE = 0.5


@dataclass(frozen=True, eq=False)
class ProfilePair:
    """Perturbation (U_theta, U_phi) sampled on a mesh."""

    mesh: Mesh
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        for name in ("theta", "phi"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (self.mesh.n,):
                raise ParameterError(f"{name} has shape {v.shape}, expected ({self.mesh.n},)")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def zeros(cls, mesh: Mesh) -> ProfilePair:
        return cls(mesh, np.zeros(mesh.n), np.zeros(mesh.n))

    @property
    def u_theta(self) -> GridFunction:
        return GridFunction(self.mesh, self.theta)

    @property
    def u_phi(self) -> GridFunction:
        return GridFunction(self.mesh, self.phi)

    def __add__(self, other: ProfilePair) -> ProfilePair:
        return ProfilePair(self.mesh, self.theta + other.theta, self.phi + other.phi)

    def __sub__(self, other: ProfilePair) -> ProfilePair:
        return ProfilePair(self.mesh, self.theta - other.theta, self.phi - other.phi)

    def __mul__(self, t: float) -> ProfilePair:
        return ProfilePair(self.mesh, t * self.theta, t * self.phi)

    __rmul__ = __mul__

    def __neg__(self) -> ProfilePair:
        return ProfilePair(self.mesh, -self.theta, -self.phi)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.theta)), np.max(np.abs(self.phi))))

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.mesh.nodes],
            "u_theta": [float(v) for v in self.theta],
            "u_phi": [float(v) for v in self.phi],
        }


@dataclass(frozen=True)
class NormReport:
    case_tag: str
    space: str
    components: dict
    total: float

    def to_dict(self) -> dict:
        return {"case_tag": self.case_tag, "space": self.space, "components": dict(self.components), "total": self.total}


def side_kinds(case_tag: str) -> dict[int, str]:
    """Weight family ("power" or "log") used at each pole for a case."""
    return {
        "Case1": {-1: "power", 1: "power"},
        "Case2": {-1: "log", 1: "power"},
        "Case2'": {-1: "power", 1: "log"},
        "Case3": {-1: "log", 1: "log"},
    }.get(case_tag, {-1: "power", 1: "power"})


def epsilon_bounds(case_tag: str, u_minus: float, u_plus: float) -> float:
    """Largest of the lower bounds on epsilon imposed by the case (at least 0)."""
    kinds = side_kinds(case_tag)
    lows = [0.0]
    if kinds[-1] == "power":
        lows.append(u_minus / 4.0 if u_minus < 2.0 else u_minus / 2.0 - 1.0)
    if kinds[1] == "power":
        lows.append(-u_plus / 4.0 if u_plus > -2.0 else -u_plus / 2.0 - 1.0)
    return max(lows)


def select_epsilon(case_tag: str, u_minus: float, u_plus: float) -> float:
    """Midpoint between the case's lower bound and 1/2."""
    lo = epsilon_bounds(case_tag, u_minus, u_plus)
    if lo >= 0.5 - EPS_MARGIN:
        raise RegionError(f"no admissible epsilon: lower bound {lo:.4f} leaves no room below 1/2")
    return 0.5 * (lo + 0.5)


def compute_ab(profile: NoSwirlProfile) -> tuple[GridFunction, GridFunction]:
    """a and b, with the logarithmic parts at the poles integrated in closed form."""
    m = profile.mesh
    u = profile.u_theta_bar.values
    um, up = profile.endpoint_minus, profile.endpoint_plus
    blend = 0.5 * um * m.gap_plus + 0.5 * up * m.gap_minus
    rest = m.cumint((u - blend) / m.weight)
    b = rest + 0.5 * um * np.log(m.gap_minus) - 0.5 * up * np.log(m.gap_plus)
    b[m.center] = 0.0
    a = b - np.log(m.weight)
    return GridFunction(m, a), GridFunction(m, b)


@dataclass(frozen=True, eq=False)
class OperatorContext:
    params: Params
    profile: NoSwirlProfile
    a: GridFunction
    b: GridFunction
    label: RegionLabel
    epsilon: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.profile.mesh

    @property
    def case_tag(self) -> str:
        return self.label.case_tag

    @property
    def variant(self) -> str:
        return self.label.variant

    @cached_property
    def ubar(self) -> np.ndarray:
        return self.profile.u_theta_bar.values

    @cached_property
    def ubar_derivs0(self) -> tuple[float, float, float]:
        m = self.mesh
        return (self.ubar[m.center], m.derivative_at(self.ubar, m.center, 1), m.derivative_at(self.ubar, m.center, 2))

    @cached_property
    def exp_a(self) -> np.ndarray:
        return np.exp(self.a.values)

    @cached_property
    def exp_minus_a(self) -> np.ndarray:
        return np.exp(-self.a.values)

    @cached_property
    def exp_b(self) -> np.ndarray:
        return np.exp(self.b.values)

    @cached_property
    def exp_minus_b(self) -> np.ndarray:
        return np.exp(-self.b.values)

    def endpoint(self, side: int) -> float:
        return self.profile.endpoint_minus if side < 0 else self.profile.endpoint_plus

    def exponent_a(self, side: int) -> float:
        """e^a behaves like (1 -+ x)^p at the pole; returns p."""
        u = self.endpoint(side)
        return u / 2.0 - 1.0 if side < 0 else -u / 2.0 - 1.0

    def exponent_minus_b(self, side: int) -> float:
        u = self.endpoint(side)
        return -u / 2.0 if side < 0 else u / 2.0

    def psi_exponent(self, side: int) -> float:
        """Decay rate of psi(x) - psi(pole) for swirl components built from the kernel."""
        k = self.exponent_minus_b(side)
        return min(k + 2.0, 2.0 * k + 3.0)


def make_context(profile: NoSwirlProfile, epsilon: float | None = None) -> OperatorContext:
    if profile.stratum is None:
        raise ParameterError("profile has no region label; build it with solve_profile")
    label = profile.stratum
    if label.case_tag == "Case4" or label.i_stratum is None:
        raise RegionError(f"no function-space setting for {label.case_tag} (stratum {label.i_stratum})")
    if epsilon is None:
        epsilon = select_epsilon(label.case_tag, profile.endpoint_minus, profile.endpoint_plus)
    elif not 0.0 < epsilon < 0.5:
        raise ParameterError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    a, b = compute_ab(profile)
    return OperatorContext(profile.params, profile, a, b, label, float(epsilon))


def probe_context(profile: NoSwirlProfile, label: RegionLabel, epsilon: float = 0.25) -> OperatorContext:
    """Context with an explicitly chosen label and epsilon, bypassing the case checks."""
    a, b = compute_ab(profile)
    return OperatorContext(profile.params, profile, a, b, label, float(epsilon))


# ----------------------------------------------------------------------------
# building blocks


def _from_pole(m: Mesh, f: np.ndarray, side: int, alpha: float | None = None) -> np.ndarray:
    """int_{side}^{x} f ds at every node, accumulated from the pole at `side`."""
    t = tail_integral(m, f, side, alpha)
    if side < 0:
        return m.cumint(f, 0) + t
    return m.cumint(f, m.n - 1) - t


def _pole_limit(m: Mesh, v: np.ndarray, side: int, alpha: float | None) -> float:
    idx = m.tail_indices(side, count=2)
    g = m.gap(side)
    if alpha is None:
        idx = m.tail_indices(side)
        lim = extrapolate_power(g[idx], v[idx])
        return lim.require("psi endpoint")
    if alpha <= 0.0:
        raise DivergenceError(f"psi has no limit at x={side} (decay exponent {alpha:.3f})")
    return richardson_fixed(v[idx[0]], v[idx[1]], g[idx[0]], g[idx[1]], alpha)


def psi(u_phi, v_phi, alpha: tuple[float, float] | None = None) -> tuple[GridFunction, float, float]:
    """Triple integral from 0 of 2 U V' / (1 - s^2) and its limits at -1, +1.

    alpha fixes the decay exponents of psi - psi(+-1) at the two poles, which
    makes the limits linear in the data; without it they are fitted.
    """
    u = u_phi.values if isinstance(u_phi, GridFunction) else np.asarray(u_phi)
    v = v_phi.values if isinstance(v_phi, GridFunction) else np.asarray(v_phi)
    m = u_phi.mesh if isinstance(u_phi, GridFunction) else v_phi.mesh
    return _psi(m, u, v, alpha)


def _psi(m: Mesh, u: np.ndarray, v: np.ndarray, alpha) -> tuple[GridFunction, float, float]:
    integrand = 2.0 * u * m.derivative(v, 1) / m.weight
    if not np.any(integrand):
        return GridFunction(m, np.zeros(m.n)), 0.0, 0.0
    p = m.cumint(m.cumint(m.cumint(integrand)))
    am, ap = (None, None) if alpha is None else alpha
    return GridFunction(m, p), _pole_limit(m, p, -1, am), _pole_limit(m, p, 1, ap)


def _psi_alpha(ctx: OperatorContext) -> tuple[float, float]:
    return ctx.psi_exponent(-1), ctx.psi_exponent(1)


def _second_at_zero(m: Mesh, f: np.ndarray, g: np.ndarray) -> float:
    """(f g)''(0) by the product rule."""
    i = m.center
    f0, f1, f2 = f[i], m.derivative_at(f, i, 1), m.derivative_at(f, i, 2)
    g0, g1, g2 = g[i], m.derivative_at(g, i, 1), m.derivative_at(g, i, 2)
    return f2 * g0 + 2.0 * f1 * g1 + f0 * g2


def l_map(ctx: OperatorContext, u: np.ndarray) -> np.ndarray:
    m = ctx.mesh
    return m.weight * m.derivative(u, 1) + (2.0 * m.nodes + ctx.ubar) * u


def l_ddot0(ctx: OperatorContext, u: np.ndarray) -> float:
    """l[U]''(0) = U'''(0) + Ubar(0) U''(0) + 2 (1 + Ubar'(0)) U'(0) + Ubar''(0) U(0)."""
    m = ctx.mesh
    i = m.center
    b0, b1, b2 = ctx.ubar_derivs0
    u0 = u[i]
    u1, u2, u3 = (m.derivative_at(u, i, k) for k in (1, 2, 3))
    return u3 + b0 * u2 + 2.0 * (1.0 + b1) * u1 + b2 * u0


def varphi_ddot0(ctx: OperatorContext, u_theta) -> float:
    """(l[U] + U^2/2)''(0)."""
    u = u_theta.values if isinstance(u_theta, GridFunction) else np.asarray(u_theta)
    return l_ddot0(ctx, u) + 0.5 * _second_at_zero(ctx.mesh, u, u)


def op_A(ctx: OperatorContext, pair: ProfilePair) -> ProfilePair:
    m = ctx.mesh
    th = pair.theta
    theta = l_map(ctx, th) + 0.5 * l_ddot0(ctx, th) * m.weight
    phi = m.weight * m.derivative(pair.phi, 2) + ctx.ubar * m.derivative(pair.phi, 1)
    return ProfilePair(m, theta, phi)


def op_Q(ctx: OperatorContext, pu: ProfilePair, pv: ProfilePair) -> ProfilePair:
    m = ctx.mesh
    uv = pu.theta * pv.theta
    p, pm, pp = _psi(m, pu.phi, pv.phi, _psi_alpha(ctx))
    theta = (
        0.5 * uv
        + p.values
        - 0.5 * m.gap_plus * pm
        - 0.5 * m.gap_minus * pp
        + 0.25 * _second_at_zero(m, pu.theta, pv.theta) * m.weight
    )
    phi = pu.theta * m.derivative(pv.phi, 1)
    return ProfilePair(m, theta, phi)


def op_G(ctx: OperatorContext, pair: ProfilePair) -> ProfilePair:
    return op_A(ctx, pair) + op_Q(ctx, pair, pair)


def op_L(ctx: OperatorContext, base: ProfilePair, direction: ProfilePair) -> ProfilePair:
    """Derivative of G at `base` in the direction `direction`."""
    out = op_A(ctx, direction)
    if base.max_abs() == 0.0:
        return out
    return out + op_Q(ctx, base, direction) + op_Q(ctx, direction, base)


# ----------------------------------------------------------------------------
# kernel, functionals, projections


def _integral_pole_to_pole(ctx: OperatorContext, f: np.ndarray, alpha_m=None, alpha_p=None) -> float:
    m = ctx.mesh
    return float(m.cumint(f, 0)[-1] + tail_integral(m, f, -1, alpha_m) + tail_integral(m, f, 1, alpha_p))


def kernel_vectors(ctx: OperatorContext) -> dict[str, ProfilePair]:
    """All kernel vectors that are finite for this profile."""
    if "kernel" in ctx._cache:
        return ctx._cache["kernel"]
    m = ctx.mesh
    ea, ema = ctx.exp_a, ctx.exp_minus_a
    zero = np.zeros(m.n)
    out = {
        "V1": ProfilePair(m, ema, zero),
        "V2": ProfilePair(m, ema * m.cumint(ea), zero),
        "V3": ProfilePair(m, zero, m.cumint(ctx.exp_minus_b)),
        "V4": ProfilePair(m, zero, np.ones(m.n)),
    }
    if ctx.exponent_a(-1) > -1.0:
        out["V2a"] = ProfilePair(m, ema * _from_pole(m, ea, -1, ctx.exponent_a(-1)), zero)
    if ctx.exponent_a(1) > -1.0:
        out["V2b"] = ProfilePair(m, ema * _from_pole(m, ea, 1, ctx.exponent_a(1)), zero)
    ctx._cache["kernel"] = out
    return out


BASIS_NAMES = {"1": ("V1", "V2", "V3", "V4"), "2a": ("V2a", "V3", "V4"), "2b": ("V2b", "V3", "V4"), "3": ("V3", "V4")}
FUNCTIONAL_NAMES = {"1": ("l1", "l2", "l3", "l4"), "2a": ("l1", "l3", "l4"), "2b": ("l1", "l3", "l4"), "3": ("l3", "l4")}


def kernel_basis(ctx: OperatorContext) -> list[ProfilePair]:
    vecs = kernel_vectors(ctx)
    names = BASIS_NAMES[ctx.variant]
    missing = [n for n in names if n not in vecs]
    if missing:
        raise CaseMismatchError(f"kernel vectors {missing} are not integrable for this profile")
    return [vecs[n] for n in names]


def functionals(pair: ProfilePair) -> dict[str, float]:
    """l1 = V_th(0), l2 = V_th'(0), l3 = V_ph'(0), l4 = V_ph(0), l2a = V_th'(-1), l2b = V_th'(1)."""
    m = pair.mesh
    i = m.center
    d = m.derivative(pair.theta, 1)
    ends = {}
    for side, name in ((-1, "l2a"), (1, "l2b")):
        idx = m.tail_indices(side)
        lim = extrapolate_power(m.gap(side)[idx], d[idx])
        ends[name] = lim.value if lim.converged else math.nan
    return {
        "l1": float(pair.theta[i]),
        "l2": float(d[i]),
        "l3": m.derivative_at(pair.phi, i, 1),
        "l4": float(pair.phi[i]),
        **ends,
    }


def _core_functionals(pair: ProfilePair) -> dict[str, float]:
    m = pair.mesh
    i = m.center
    return {
        "l1": float(pair.theta[i]),
        "l2": m.derivative_at(pair.theta, i, 1),
        "l3": m.derivative_at(pair.phi, i, 1),
        "l4": float(pair.phi[i]),
    }


def functional_matrix(ctx: OperatorContext) -> np.ndarray:
    basis = kernel_basis(ctx)
    names = FUNCTIONAL_NAMES[ctx.variant]
    return np.array([[_core_functionals(v)[ln] for v in basis] for ln in names])


def project(ctx: OperatorContext, pair: ProfilePair) -> ProfilePair:
    """Remove the kernel component so that the case's functionals vanish."""
    basis = kernel_basis(ctx)
    names = FUNCTIONAL_NAMES[ctx.variant]
    if "projection" not in ctx._cache:
        ctx._cache["projection"] = functional_matrix(ctx)
    mat = ctx._cache["projection"]
    vals = _core_functionals(pair)
    coef = np.linalg.solve(mat, np.array([vals[n] for n in names]))
    out = pair
    for c, v in zip(coef, basis):
        out = out - c * v
    return out


def case_functionals(ctx: OperatorContext, pair: ProfilePair) -> dict[str, float]:
    vals = _core_functionals(pair)
    return {n: vals[n] for n in FUNCTIONAL_NAMES[ctx.variant]}


# ----------------------------------------------------------------------------
# right inverse


def y_defect(ctx: OperatorContext, xi: ProfilePair) -> dict[str, float]:
    """Values that must vanish for xi to lie in Y: xi_theta(-1), xi_theta(1), xi_theta''(0)."""
    m = ctx.mesh
    out = {}
    for side, name in ((-1, "theta_minus"), (1, "theta_plus")):
        idx = m.tail_indices(side)
        out[name] = extrapolate_power(m.gap(side)[idx], xi.theta[idx]).value
    out["theta_ddot0"] = m.derivative_at(xi.theta, m.center, 2)
    return out


def right_inverse_W(ctx: OperatorContext, xi: ProfilePair) -> ProfilePair:
    """W(xi) with A(W(xi)) = xi for xi in Y; the base point depends on the stratum."""
    m = ctx.mesh
    ea, ema = ctx.exp_a, ctx.exp_minus_a
    f = ea * xi.theta / m.weight
    variant = ctx.variant
    if variant == "1":
        theta = ema * m.cumint(f)
    elif variant == "2a":
        theta = ema * _from_pole(m, f, -1)
    elif variant == "2b":
        theta = ema * _from_pole(m, f, 1)
    elif variant == "3":
        cw = c_w(ctx, xi)
        g = f - cw * ea
        left = _from_pole(m, g, -1)
        right = _from_pole(m, g, 1)
        theta = ema * np.where(m.nodes <= 0.0, left, right)
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    inner = m.cumint(ctx.exp_b * xi.phi / m.weight)
    phi = m.cumint(ctx.exp_minus_b * inner)
    return ProfilePair(m, theta, phi)


def c_w(ctx: OperatorContext, xi: ProfilePair) -> float:
    """Constant making int_{-1}^{1} e^a (xi_theta/(1-s^2) - C) ds vanish."""
    m = ctx.mesh
    ea = ctx.exp_a
    if "int_ea" not in ctx._cache:
        ctx._cache["int_ea"] = _integral_pole_to_pole(ctx, ea, ctx.exponent_a(-1), ctx.exponent_a(1))
    num = _integral_pole_to_pole(ctx, ea * xi.theta / m.weight)
    return num / ctx._cache["int_ea"]


# ----------------------------------------------------------------------------
# norms


def _middle(m: Mesh) -> np.ndarray:
    return np.abs(m.nodes) < MIDDLE


def _sup(v: np.ndarray) -> float:
    if np.any(~np.isfinite(v)):
        return math.inf
    return float(np.max(np.abs(v))) if v.size else 0.0


def _side_weight(m: Mesh, side: int, kind: str, power: float, log_power: int, gap_power: float = 0.0) -> np.ndarray:
    g = m.gap(side)
    if kind == "power":
        return g**power
    return g**gap_power * np.abs(np.log(g / 3.0)) ** log_power


def norm_X(ctx: OperatorContext, pair: ProfilePair) -> NormReport:
    m = ctx.mesh
    eps = ctx.epsilon
    kinds = side_kinds(ctx.case_tag)
    w1 = _side_weight(m, -1, kinds[-1], -1 + 2 * eps, 1) * _side_weight(m, 1, kinds[1], -1 + 2 * eps, 1)
    w2 = _side_weight(m, -1, kinds[-1], 2 * eps, 2, 1.0) * _side_weight(m, 1, kinds[1], 2 * eps, 2, 1.0)
    th, ph = pair.theta, pair.phi
    mid = _middle(m)
    w = m.weight
    comps = {
        "M1_weighted": _sup(w1 * th),
        "M1_weighted_d1": _sup(w2 * m.derivative(th, 1)),
        "M1_d2_middle": _sup(m.derivative(th, 2)[mid]),
        "M1_d3_middle": _sup(m.derivative(th, 3)[mid]),
        "M2_weighted": _sup(w**eps * ph),
        "M2_weighted_d1": _sup(w ** (1 + eps) * m.derivative(ph, 1)),
        "M2_weighted_d2": _sup(w ** (2 + eps) * m.derivative(ph, 2)),
    }
    return NormReport(ctx.case_tag, "X", comps, float(sum(comps.values())))


def norm_Y(ctx: OperatorContext, pair: ProfilePair) -> NormReport:
    m = ctx.mesh
    eps = ctx.epsilon
    kinds = side_kinds(ctx.case_tag)
    w1 = _side_weight(m, -1, kinds[-1], -1 + 2 * eps, 2) * _side_weight(m, 1, kinds[1], -1 + 2 * eps, 2)
    th, ph = pair.theta, pair.phi
    mid = _middle(m)
    comps = {
        "N1_weighted": _sup(w1 * th),
        "N1_d1_middle": _sup(m.derivative(th, 1)[mid]),
        "N1_d2_middle": _sup(m.derivative(th, 2)[mid]),
        "N2_weighted": _sup(m.weight ** (1 + eps) * ph),
    }
    return NormReport(ctx.case_tag, "Y", comps, float(sum(comps.values())))
