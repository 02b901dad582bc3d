"""Graded meshes on (-1, 1), local-stencil calculus and endpoint limits.

Nodes are placed uniformly in the stretched coordinate sigma = atanh(x), so
the distance to either pole shrinks geometrically and power laws in (1 -+ x)
look like exponentials in sigma.  All node differences are evaluated through

    x_j - x_i = sinh(sigma_j - sigma_i) / (cosh sigma_i cosh sigma_j)

which keeps relative accuracy even when both nodes sit 1e-11 from a pole.
Derivatives and cell integrals use Fornberg weights on those offsets, so
every operator is exact for polynomials in x up to the stencil degree.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .errors import DivergenceError, ParameterError

DIFF_WIDTH = 11
CELL_WIDTH = 8
TAIL_SAMPLES = 6
MAX_ORDER = 3


def fornberg_weights(offsets: np.ndarray, max_order: int) -> np.ndarray:
    """Finite-difference weights at 0 for derivatives 0..max_order.

    Returns an array of shape (max_order + 1, len(offsets)).
    """
    z = [float(v) for v in offsets]
    n = len(z)
    c = [[0.0] * n for _ in range(max_order + 1)]
    c[0][0] = 1.0
    c1 = 1.0
    c4 = z[0]
    for i in range(1, n):
        mn = min(i, max_order)
        c2 = 1.0
        c5 = c4
        c4 = z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2
            for k in range(mn, 0, -1):
                c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3
            c[0][j] = c4 * c[0][j] / c3
        c1 = c2
    return np.array(c)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Symmetric node set x_i = tanh(i * step), i = -m..m."""

    half: int
    step: float
    grading_exponent: float

    @property
    def n(self) -> int:
        return 2 * self.half + 1

    @property
    def center(self) -> int:
        return self.half

    @cached_property
    def sigma(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.step

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.tanh(self.sigma)
        x[self.center] = 0.0
        return x

    @cached_property
    def _gaps(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.sigma
        e = np.exp(-2.0 * np.abs(s))
        near = 2.0 * e / (1.0 + e)
        far = 2.0 / (1.0 + e)
        gp = np.where(s >= 0, near, far)
        gm = np.where(s >= 0, far, near)
        return gp, gm

    @property
    def gap_plus(self) -> np.ndarray:
        """1 - x, accurate near x = 1."""
        return self._gaps[0]

    @property
    def gap_minus(self) -> np.ndarray:
        """1 + x, accurate near x = -1."""
        return self._gaps[1]

    @cached_property
    def weight(self) -> np.ndarray:
        """1 - x^2 without cancellation."""
        return self.gap_plus * self.gap_minus

    def gap(self, side: int) -> np.ndarray:
        return self.gap_plus if side > 0 else self.gap_minus

    def offsets(self, i: int, idx: np.ndarray) -> np.ndarray:
        s = self.sigma
        return np.sinh(s[idx] - s[i]) / (np.cosh(s[i]) * np.cosh(s[idx]))

    @cached_property
    def _diff_tables(self) -> tuple[np.ndarray, np.ndarray]:
        n, w = self.n, DIFF_WIDTH
        starts = np.clip(np.arange(n) - w // 2, 0, n - w)
        table = np.empty((MAX_ORDER + 1, n, w))
        for i in range(n):
            idx = np.arange(starts[i], starts[i] + w)
            table[:, i, :] = fornberg_weights(self.offsets(i, idx), MAX_ORDER)
        return starts, table

    @cached_property
    def _cell_tables(self) -> tuple[np.ndarray, np.ndarray]:
        n, q = self.n, CELL_WIDTH
        starts = np.clip(np.arange(n - 1) - (q // 2 - 1), 0, n - q)
        weights = np.empty((n - 1, q))
        orders = np.arange(0, q, 2)
        fact = np.array([math.factorial(m + 1) for m in orders], dtype=float)
        for k in range(n - 1):
            idx = np.arange(starts[k], starts[k] + q)
            width = float(self.offsets(k, np.array([k + 1]))[0])
            z = self.offsets(k, idx) - 0.5 * width
            c = fornberg_weights(z, q - 1)
            moments = 2.0 * (0.5 * width) ** (orders + 1) / fact
            weights[k] = moments @ c[orders]
        return starts, weights

    def derivative(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        if order not in (1, 2, 3):
            raise ParameterError(f"derivative order {order} is not supported")
        starts, table = self._diff_tables
        values = np.asarray(values, dtype=float)
        # weights sum to zero; differencing against the node's own value keeps
        # constants exact where the weights are huge
        gathered = values[starts[:, None] + np.arange(DIFF_WIDTH)] - values[:, None]
        return np.einsum("ij,ij->i", table[order], gathered)

    def derivative_at(self, values: np.ndarray, i: int, order: int) -> float:
        starts, table = self._diff_tables
        s = starts[i]
        return float(table[order, i] @ (values[s : s + DIFF_WIDTH] - values[i]))

    def cell_integrals(self, values: np.ndarray) -> np.ndarray:
        starts, weights = self._cell_tables
        gathered = values[starts[:, None] + np.arange(CELL_WIDTH)]
        return np.einsum("ij,ij->i", weights, gathered)

    def cumint(self, values: np.ndarray, base: int | None = None) -> np.ndarray:
        """F(x_i) = integral from node `base` (default: centre) to x_i."""
        b = self.center if base is None else base
        cells = self.cell_integrals(values)
        out = np.zeros(self.n)
        out[b + 1 :] = np.cumsum(cells[b:])
        out[:b] = -np.cumsum(cells[:b][::-1])[::-1]
        return out

    def tail_indices(self, side: int, count: int = TAIL_SAMPLES, stride: int | None = None) -> np.ndarray:
        """Strided node indices walking inward from the pole at `side`."""
        if stride is None:
            stride = max(1, round(0.5 / self.step))
        stride = min(stride, max(1, (self.half - 1) // max(count - 1, 1)))
        steps = np.arange(count) * stride
        return (self.n - 1 - steps) if side > 0 else steps

    def index_of(self, x: float) -> int:
        i = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[i] - x) > 1e-14 * max(1.0, abs(x)):
            raise ParameterError(f"{x!r} is not a mesh node")
        return i

    def to_dict(self) -> dict:
        return {"n": self.n, "grading_exponent": self.grading_exponent}


@lru_cache(maxsize=16)
def build_mesh(n: int = 1025, grading_exponent: float = 4.0) -> Mesh:
    """Symmetric graded mesh with n nodes (n odd, so that x = 0 is a node).

    The outermost node sits at distance (2 / (n + 1)) ** grading_exponent from
    each pole.
    """
    if not isinstance(n, (int, np.integer)) or n < 64:
        raise ParameterError(f"mesh needs at least 64 nodes, got {n!r}")
    if n % 2 == 0:
        raise ParameterError(f"mesh size must be odd so that x=0 is a node, got {n}")
    if not (grading_exponent >= 1.0) or not math.isfinite(grading_exponent):
        raise ParameterError(f"grading exponent must be >= 1, got {grading_exponent!r}")
    half = (n - 1) // 2
    g = (2.0 / (n + 1)) ** grading_exponent
    sigma_max = 0.5 * math.log((2.0 - g) / g)
    return Mesh(half=half, step=sigma_max / half, grading_exponent=float(grading_exponent))


@dataclass(frozen=True)
class EndpointLimit:
    value: float
    error: float
    order: float
    converged: bool = True

    def require(self, what: str = "endpoint limit") -> float:
        if not self.converged:
            raise DivergenceError(f"{what} does not converge (tail estimate {self.value!r})")
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "error": self.error, "order": self.order, "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> EndpointLimit:
        return cls(float(d["value"]), float(d["error"]), float(d["order"]), bool(d["converged"]))


def _aitken(f0: float, f1: float, f2: float) -> tuple[float, float]:
    """Limit and ratio for a sequence behaving like A + B q^k."""
    d0, d1 = f0 - f1, f1 - f2
    if d0 == 0.0:
        return f0, 0.0
    denom = d1 - d0
    if denom == 0.0:
        return f0, 1.0
    return f0 + d0 * d0 / denom, d0 / d1 if d1 != 0.0 else math.inf


def extrapolate_power(gaps: np.ndarray, values: np.ndarray) -> EndpointLimit:
    """Limit of values ~ A + B g^alpha as g -> 0 (samples ordered nearest first)."""
    f = np.asarray(values, dtype=float)
    g = np.asarray(gaps, dtype=float)
    scale = max(float(np.max(np.abs(f))), 1e-300)
    if not np.all(np.isfinite(f)):
        return EndpointLimit(float(f[0]), math.inf, math.nan, False)
    if float(np.max(np.abs(np.diff(f)))) <= 1e-15 * scale:
        return EndpointLimit(float(f[0]), 1e-15 * scale, math.inf, True)
    limits, ratios = [], []
    for k in range(len(f) - 2):
        a, r = _aitken(f[k], f[k + 1], f[k + 2])
        limits.append(a)
        ratios.append(r)
    r0 = ratios[0]
    log_q = math.log(g[0] / g[1])
    if 0.0 < r0 < 1.0:
        order = math.log(r0) / log_q
    else:
        order = math.nan
    err = abs(limits[0] - limits[1]) if len(limits) > 1 else abs(f[0] - limits[0])
    converged = 0.0 < r0 < 1.0 or abs(f[0] - f[1]) <= 1e-12 * scale
    # Aitken on a sequence that is already converged to rounding returns noise.
    if converged and abs(f[0] - f[1]) <= 1e-13 * scale:
        return EndpointLimit(float(f[0]), max(err, abs(f[0] - f[1])), order, True)
    return EndpointLimit(float(limits[0]), float(err), order, bool(converged))


def extrapolate_log(gaps: np.ndarray | None, values: np.ndarray, log_gaps: np.ndarray | None = None) -> EndpointLimit:
    """Limit of values ~ A + B/L + C/L^2 with L = ln(g/3).

    Pass log_gaps = ln(g) instead of gaps when g underflows.
    """
    f = np.asarray(values, dtype=float)
    if log_gaps is None:
        log_gaps = np.log(np.asarray(gaps, dtype=float))
    inv = 1.0 / (np.asarray(log_gaps, dtype=float) - math.log(3.0))
    if not np.all(np.isfinite(f)):
        return EndpointLimit(float(f[0]), math.inf, 0.0, False)

    def fit(sel: slice, terms: int) -> float:
        basis = np.vander(inv[sel], terms, increasing=True)
        coef, *_ = np.linalg.lstsq(basis, f[sel], rcond=None)
        return float(coef[0])

    full = fit(slice(None), 3)
    alt = fit(slice(0, len(f) - 1), 3)
    lower = fit(slice(None), 2)
    err = max(abs(full - alt), 0.1 * abs(full - lower))
    return EndpointLimit(full, err, 0.0, bool(np.isfinite(full)))


def richardson_fixed(f0: float, f1: float, g0: float, g1: float, alpha: float) -> float:
    """Limit of A + B g^alpha from two samples; linear in the sampled values."""
    if not math.isfinite(alpha) or alpha > 60.0:
        return f0
    t0, t1 = g0**alpha, g1**alpha
    return (f0 * t1 - f1 * t0) / (t1 - t0)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on a mesh, optionally with extrapolated limits at x = -1 and x = +1."""

    mesh: Mesh
    values: np.ndarray
    endpoints: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ParameterError(f"expected {self.mesh.n} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, mesh: Mesh, fn) -> GridFunction:
        return cls(mesh, fn(mesh.nodes))

    @property
    def x(self) -> np.ndarray:
        return self.mesh.nodes

    def at_zero(self) -> float:
        return float(self.values[self.mesh.center])

    def with_endpoints(self, minus: EndpointLimit | None = None, plus: EndpointLimit | None = None) -> GridFunction:
        ends = dict(self.endpoints)
        if minus is not None:
            ends[-1] = minus
        if plus is not None:
            ends[1] = plus
        return GridFunction(self.mesh, self.values, ends)

    def __add__(self, other):
        other_v = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.mesh, self.values + other_v)

    def __sub__(self, other):
        other_v = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.mesh, self.values - other_v)

    def __mul__(self, other):
        other_v = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.mesh, self.values * other_v)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.mesh, -self.values)

    def to_json(self) -> str:
        return json.dumps(
            {
                "mesh": self.mesh.to_dict(),
                "values": [float(v) for v in self.values],
                "endpoints": {str(k): e.to_dict() for k, e in sorted(self.endpoints.items())},
            }
        )

    @classmethod
    def from_json(cls, text: str) -> GridFunction:
        d = json.loads(text)
        mesh = build_mesh(int(d["mesh"]["n"]), float(d["mesh"]["grading_exponent"]))
        ends = {int(k): EndpointLimit.from_dict(e) for k, e in d.get("endpoints", {}).items()}
        return cls(mesh, np.array(d["values"], dtype=float), ends)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# n={self.mesh.n} grading_exponent={self.mesh.grading_exponent!r}\n")
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(self.mesh.nodes, self.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])

    @classmethod
    def read_csv(cls, path: str | Path) -> GridFunction:
        with open(path, newline="") as fh:
            header = fh.readline()
            meta = dict(item.split("=") for item in header.lstrip("# ").split())
            rows = list(csv.reader(fh))[1:]
        mesh = build_mesh(int(meta["n"]), float(meta["grading_exponent"]))
        xs = np.array([float(r[0]) for r in rows])
        if xs.shape != mesh.nodes.shape or np.max(np.abs(xs - mesh.nodes)) > 0.0:
            raise ParameterError(f"{path}: node column does not match the declared mesh")
        return cls(mesh, np.array([float(r[1]) for r in rows]))


def differentiate(f: GridFunction, order: int = 1) -> GridFunction:
    """Derivative of order 1, 2 or 3 from 11-point local stencils."""
    if order not in (1, 2, 3):
        raise ParameterError(f"derivative order {order} is not supported")
    return GridFunction(f.mesh, f.mesh.derivative(f.values, order))


def cumulative_integral(f: GridFunction, base: float = 0.0) -> GridFunction:
    """F(x) = integral of f from `base` (a mesh node) to x."""
    if np.any(np.isnan(f.values)):
        raise ParameterError("NaN in integrand")
    return GridFunction(f.mesh, f.mesh.cumint(f.values, f.mesh.index_of(base)))


def _weighted(mesh: Mesh, values: np.ndarray, side: int, weight) -> np.ndarray:
    if weight is None:
        return values
    g = mesh.gap(side)
    if isinstance(weight, str):
        if weight != "log":
            raise ParameterError(f"unknown weight {weight!r}")
        return values * np.log(g / 3.0)
    return values * g ** float(weight)


def endpoint_limit(f: GridFunction, side: int, weight=None, model: str = "power") -> EndpointLimit:
    """Extrapolated limit of f * weight at x = side.

    weight is None, "log" for ln((1 -+ x)/3), or a float p for (1 -+ x)**p.
    model "power" fits A + B g^alpha, model "log" fits A + B/L + C/L^2.
    """
    mesh = f.mesh
    vals = _weighted(mesh, f.values, side, weight)
    if model == "power":
        idx = mesh.tail_indices(side)
        return extrapolate_power(mesh.gap(side)[idx], vals[idx])
    if model == "log":
        idx = mesh.tail_indices(side, count=8, stride=max(1, mesh.half // 16))
        return extrapolate_log(mesh.gap(side)[idx], vals[idx])
    raise ParameterError(f"unknown extrapolation model {model!r}")


def log_singular_integral(g: GridFunction, side: int, x: float = 0.0, tol: float = 1e-6) -> float:
    """Integral of g(s)/(1-s^2) from x to the pole at `side` (side = +1 or -1).

    The integral converges only when g vanishes at the pole; otherwise the
    logarithmic divergence is reported by raising DivergenceError.
    """
    mesh = g.mesh
    if side not in (-1, 1):
        raise ParameterError("side must be -1 or +1")
    vals = g.values
    lim = endpoint_limit(g, side)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if not lim.converged or abs(lim.value) > tol * scale:
        raise DivergenceError(f"integrand does not vanish at x={side}: limit {lim.value!r}")
    integrand = vals / mesh.weight
    i = mesh.index_of(x)
    end = mesh.n - 1 if side > 0 else 0
    body = mesh.cumint(integrand, i)[end]
    return body + side * tail_integral(mesh, integrand, side)


def tail_integral(mesh: Mesh, integrand: np.ndarray, side: int, alpha: float | None = None) -> float:
    """Integral of the integrand between the outermost node and the pole.

    The integrand is modelled as B g^alpha with alpha > -1.  When alpha is not
    given it is read off the decay of the sampled tail.  The returned value is
    oriented along increasing distance from the last node (always x-ordered
    from the node toward the pole).
    """
    idx = mesh.tail_indices(side, count=2)
    gaps = mesh.gap(side)
    f0, f1 = integrand[idx[0]], integrand[idx[1]]
    g0, g1 = gaps[idx[0]], gaps[idx[1]]
    if alpha is None:
        if f0 == 0.0:
            return 0.0
        ratio = f0 / f1 if f1 != 0.0 else math.inf
        if not (ratio > 0.0) or not math.isfinite(ratio):
            return f0 * g0
        alpha = math.log(ratio) / math.log(g0 / g1)
    if alpha <= -1.0:
        raise DivergenceError(f"tail exponent {alpha:.3f} is not integrable at x={side}")
    return f0 * g0 / (alpha + 1.0)
