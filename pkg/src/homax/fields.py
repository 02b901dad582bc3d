"""Physical fields on the sphere and residuals of the reduced system.

With x = cos(theta), u_theta = U_theta / sin(theta), u_phi = U_phi / sin(theta)
and the divergence-free relation, the radial part collapses to

    u_r = U_theta'(x),

with no cot(theta) terms left to cancel near the poles.  Two more chain-rule
steps give the pressure as

    p = -1/2 ( (1-x^2) U''' - 2x U'' + U U'' + U'^2 + (U_theta^2 + U_phi^2) / (1-x^2) ).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .mesh import Mesh

CSV_COLUMNS = ("theta", "u_r", "u_theta", "u_phi", "p")


@dataclass(frozen=True, eq=False)
class SphericalField:
    theta: np.ndarray
    u_r: np.ndarray
    u_theta: np.ndarray
    u_phi: np.ndarray
    p: np.ndarray
    provenance: dict

    def to_dict(self) -> dict:
        out = {k: [float(v) for v in getattr(self, k)] for k in CSV_COLUMNS}
        out["provenance"] = dict(self.provenance)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in zip(*(getattr(self, k) for k in CSV_COLUMNS)):
                w.writerow([f"{v:.17g}" for v in row])

    def point_cloud(self, radii) -> np.ndarray:
        """Rows (r, theta, u_r, u_theta, u_phi, p) with u ~ 1/r and p ~ 1/r^2 applied."""
        rows = []
        for r in radii:
            r = float(r)
            if not r > 0.0:
                raise ParameterError(f"radius must be positive, got {r}")
            rr = r * r
            block = np.column_stack(
                [
                    np.full(self.theta.size, r),
                    self.theta,
                    self.u_r / r,
                    self.u_theta / r,
                    self.u_phi / r,
                    self.p / rr,
                ]
            )
            rows.append(block)
        return np.vstack(rows)

    def write_point_cloud(self, path: str | Path, radii) -> None:
        data = self.point_cloud(radii)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("r", *CSV_COLUMNS))
            for row in data:
                w.writerow([f"{v:.17g}" for v in row])


def _as_values(mesh: Mesh, u) -> np.ndarray:
    if u is None:
        return np.zeros(mesh.n)
    v = np.asarray(getattr(u, "values", u), dtype=float)
    if v.shape != (mesh.n,):
        raise ParameterError(f"expected {mesh.n} samples, got shape {v.shape}")
    return v


def reconstruct(
    mesh: Mesh, u_theta, u_phi=None, provenance: dict | None = None, c3hat: float | None = None
) -> SphericalField:
    """Spherical velocity and pressure from the total (U_theta, U_phi) on the mesh.

    When c3hat is given, U is taken to solve the reduced system and p comes
    from pressure_reduced, which stays accurate up to the poles.  Otherwise
    the direct form is used; near the poles its third derivative inherits
    the conditioning of high differences on a tightly graded mesh.
    """
    U = _as_values(mesh, u_theta)
    V = _as_values(mesh, u_phi)
    s = np.sqrt(mesh.weight)
    prov = dict(provenance or {})
    if c3hat is None:
        p = pressure_direct(mesh, U, V)
        prov["pressure"] = "direct"
    else:
        p = pressure_reduced(mesh, U, V, c3hat)
        prov["pressure"] = "reduced"
    return SphericalField(np.arccos(mesh.nodes), mesh.derivative(U, 1), U / s, V / s, p, prov)


def pressure_direct(mesh: Mesh, u_theta, u_phi=None) -> np.ndarray:
    U = _as_values(mesh, u_theta)
    V = _as_values(mesh, u_phi)
    x, w = mesh.nodes, mesh.weight
    d1, d2, d3 = (mesh.derivative(U, k) for k in (1, 2, 3))
    return -0.5 * (w * d3 - 2.0 * x * d2 + U * d2 + d1 * d1 + (U * U + V * V) / w)


def sample_at(field: SphericalField, theta: float) -> dict:
    """Field values at one angle, by linear interpolation in theta; poles are excluded."""
    if not 0.0 < theta < math.pi:
        raise ParameterError(f"theta must lie strictly between 0 and pi, got {theta}")
    order = np.argsort(field.theta)
    t = field.theta[order]
    return {k: float(np.interp(theta, t, getattr(field, k)[order])) for k in CSV_COLUMNS[1:]}


def pressure_theta_form(mesh: Mesh, field: SphericalField) -> np.ndarray:
    """p from the theta-derivative form, differentiating the sampled u_r.

    Uses d/dtheta = -sin(theta) d/dx on u_r directly, a different stencil
    path from the closed form used in reconstruct.
    """
    s = np.sqrt(mesh.weight)
    ur = field.u_r
    dur = -s * mesh.derivative(ur, 1)
    ddur = -s * mesh.derivative(dur, 1)
    cot = mesh.nodes / s
    return -0.5 * (ddur + (cot - field.u_theta) * dur + ur * ur + field.u_theta**2 + field.u_phi**2)


def pressure_reduced(mesh: Mesh, u_theta, u_phi, c3hat: float) -> np.ndarray:
    """p on a solution of the reduced system, using only first derivatives.

    Differentiating the first reduced equation twice gives
    (1-x^2) U''' - 2x U'' + U U'' + U'^2 = -2 chat3 - 2 U' - psi'', with
    psi'' = int_0^x 2 U_phi U_phi' / (1-s^2).
    """
    U = _as_values(mesh, u_theta)
    V = _as_values(mesh, u_phi)
    w = mesh.weight
    d1 = mesh.derivative(U, 1)
    psi2 = mesh.cumint(2.0 * V * mesh.derivative(V, 1) / w)
    return -0.5 * (-2.0 * c3hat - 2.0 * d1 - psi2 + (U * U + V * V) / w)


def reduced_lhs(mesh: Mesh, u_theta, u_phi=None) -> tuple[np.ndarray, np.ndarray]:
    """Left-hand sides of the two reduced equations for the total profile."""
    U = _as_values(mesh, u_theta)
    V = _as_values(mesh, u_phi)
    x, w = mesh.nodes, mesh.weight
    dV = mesh.derivative(V, 1)
    triple = mesh.cumint(mesh.cumint(mesh.cumint(2.0 * V * dV / w)))
    first = w * mesh.derivative(U, 1) + 2.0 * x * U + 0.5 * U * U + triple
    second = w * mesh.derivative(V, 2) + U * dV
    return first, second


def reduced_residual(mesh: Mesh, u_theta, u_phi, chat, epsilon: float = 0.0) -> tuple[float, float]:
    """Sup over the nodes of both reduced equations, with P built from chat.

    The second equation is scaled by (1-x^2)^(1+epsilon), the weight of the
    swirl residual in the Y norm, since U_phi'' is unbounded at the poles.
    """
    c1, c2, c3 = chat
    first, second = reduced_lhs(mesh, u_theta, u_phi)
    x = mesh.nodes
    forcing = c1 * (1.0 - x) + c2 * (1.0 + x) + c3 * mesh.weight
    second = second * mesh.weight ** (1.0 + epsilon)
    return float(np.max(np.abs(first - forcing))), float(np.max(np.abs(second)))


def from_profile(profile) -> SphericalField:
    prov = {"source": "noswirl", "params": profile.params.to_dict()}
    return reconstruct(profile.mesh, profile.u_theta_bar.values, None, prov, c3hat=profile.params.c3)


def from_solution(ctx, solution) -> SphericalField:
    U = ctx.ubar + solution.pair.theta
    prov = {"source": "swirl", "params": solution.params.to_dict(), "beta": list(solution.beta)}
    return reconstruct(ctx.mesh, U, solution.pair.phi, prov, c3hat=solution.chat[2])
