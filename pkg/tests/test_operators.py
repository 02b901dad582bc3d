from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from homax.errors import ParameterError, RegionError
from homax.mesh import GridFunction
from homax.noswirl import Params, cbar3, gamma_bounds, solve_profile, solve_riccati
from homax.operators import (
    ProfilePair,
    c_w,
    case_functionals,
    compute_ab,
    functional_matrix,
    functionals,
    kernel_basis,
    kernel_vectors,
    make_context,
    norm_X,
    norm_Y,
    op_A,
    op_G,
    op_L,
    op_Q,
    project,
    psi,
    right_inverse_W,
    select_epsilon,
    side_kinds,
    varphi_ddot0,
)
from homax.verify import random_y, representative_context

X, S = sp.symbols("x s")


def sym_on_mesh(expr, mesh):
    return sp.lambdify(X, expr, "numpy")(mesh.nodes)


def test_ab_for_zero_profile(zero_ctx):
    m = zero_ctx.mesh
    assert np.max(np.abs(zero_ctx.b.values)) == 0.0
    np.testing.assert_allclose(zero_ctx.a.values, -np.log(m.weight), atol=1e-10)


def test_ab_for_linear_boundary_profile(mesh):
    prof = solve_profile(Params(3.0, 0.0, cbar3(3.0, 0.0), 1.0), mesh)
    a, b = compute_ab(prof)
    # closed-form antiderivatives from sympy, rewritten with the cancellation-free gaps
    b_sym = sp.integrate((1 - 5 * S) / (1 - S**2), (S, 0, X))
    a_sym = sp.integrate((2 * S + 1 - 5 * S) / (1 - S**2), (S, 0, X))
    assert sp.simplify(b_sym - (2 * sp.log(X - 1) + 3 * sp.log(X + 1) - 2 * sp.I * sp.pi)) == 0
    assert sp.simplify(a_sym - (sp.log(X - 1) + 2 * sp.log(X + 1) - sp.I * sp.pi)) == 0
    gp, gm = np.log(mesh.gap_plus), np.log(mesh.gap_minus)
    np.testing.assert_allclose(b.values, 2 * gp + 3 * gm, atol=1e-8)
    np.testing.assert_allclose(a.values, gp + 2 * gm, atol=1e-8)


def test_psi_zero(mesh):
    p, pm, pp = psi(GridFunction(mesh, np.zeros(mesh.n)), GridFunction(mesh, mesh.nodes))
    assert np.all(p.values == 0.0) and pm == 0.0 and pp == 0.0


def test_psi_polynomial_oracle(mesh):
    f = GridFunction(mesh, mesh.weight)
    p, pm, pp = psi(f, f)

    # nested adaptive quadrature of 2 (1-s^2)(-2s)/(1-s^2), triple from 0
    def inner(t):
        return -2.0 * t * t

    def middle(r):
        return quad(inner, 0.0, r, epsabs=1e-14)[0]

    def outer(x):
        return quad(middle, 0.0, x, epsabs=1e-14)[0]

    for x in (-1.0, -0.5, 0.3, 1.0):
        ref = outer(x)
        assert ref == pytest.approx(-(x**4) / 6.0, abs=1e-12)
    xs = mesh.nodes[::64]
    np.testing.assert_allclose(p.values[::64], [outer(x) for x in xs], atol=1e-8)
    assert pm == pytest.approx(-1.0 / 6.0, abs=1e-8)
    assert pp == pytest.approx(-1.0 / 6.0, abs=1e-8)


def test_varphi_ddot0(zero_ctx):
    m = zero_ctx.mesh
    assert varphi_ddot0(zero_ctx, np.zeros(m.n)) == 0.0
    # l[x] + x^2/2 = (1-x^2) + 2x^2 + x^2/2
    phi = (1 - X**2) + 2 * X**2 + X**2 / 2
    expected = float(sp.diff(phi, X, 2).subs(X, 0))
    assert expected == 3.0
    assert varphi_ddot0(zero_ctx, m.nodes) == pytest.approx(expected, abs=1e-9)


def test_zero_kernel_basis_closed_forms(zero_ctx):
    m = zero_ctx.mesh
    vecs = kernel_vectors(zero_ctx)
    np.testing.assert_allclose(vecs["V1"].theta, m.weight, atol=1e-12)
    atanh = 0.5 * (np.log(m.gap_minus) - np.log(m.gap_plus))
    np.testing.assert_allclose(vecs["V2"].theta, m.weight * atanh, atol=1e-10)
    np.testing.assert_allclose(vecs["V3"].phi, m.nodes, atol=1e-12)
    np.testing.assert_allclose(vecs["V4"].phi, 1.0, atol=0)
    # brute-force e^{-a} int_0^x e^a with e^a = 1/(1-s^2)
    for x in (-0.7, 0.2, 0.9):
        i = int(np.argmin(np.abs(m.nodes - x)))
        xi = m.nodes[i]
        ref = (1 - xi * xi) * quad(lambda s: 1.0 / (1 - s * s), 0.0, xi)[0]
        assert vecs["V2"].theta[i] == pytest.approx(ref, abs=1e-10)


def test_kernel_is_annihilated(landau_ctx):
    for v in kernel_basis(landau_ctx):
        assert norm_Y(landau_ctx, op_A(landau_ctx, v)).total <= 1e-6
    v1 = kernel_vectors(landau_ctx)["V1"]
    assert np.max(np.abs(op_A(landau_ctx, v1).theta)) <= 1e-6


def test_functionals_of_basis(zero_ctx):
    vecs = kernel_vectors(zero_ctx)
    f4 = functionals(vecs["V4"])
    assert (f4["l1"], f4["l2"], f4["l3"], f4["l4"]) == (0.0, 0.0, 0.0, 1.0)
    assert f4["l2a"] == 0.0 and f4["l2b"] == 0.0
    assert functionals(vecs["V3"])["l3"] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(functional_matrix(zero_ctx), np.eye(4), atol=1e-10)


def test_v2a_is_v2_shifted_along_v1():
    ctx = representative_context("I_{1,2}")
    vecs = kernel_vectors(ctx)
    diff = vecs["V2a"].theta - vecs["V2"].theta
    # V2a - V2 = (int_{-1}^0 e^a) V1
    coef = diff[ctx.mesh.center]
    np.testing.assert_allclose(diff, coef * vecs["V1"].theta, atol=1e-8 * abs(coef))
    m = ctx.mesh
    p = ctx.exponent_a(-1)
    assert p > -1.0
    # independent estimate: algebraic-weight quadrature of e^a = (1+s)^p h(s), h smooth
    neg = m.nodes <= 0
    h = CubicSpline(m.nodes[neg], (ctx.exp_a / m.gap_minus**p)[neg])
    ref = quad(lambda s: float(h(s)), -1.0, 0.0, weight="alg", wvar=(p, 0.0), limit=400, epsabs=1e-13)[0]
    assert coef == pytest.approx(ref, rel=1e-7)


def test_zero_inputs(landau_ctx):
    m = landau_ctx.mesh
    z = ProfilePair.zeros(m)
    u = ProfilePair(m, m.weight, m.nodes)
    assert op_A(landau_ctx, z).max_abs() == 0.0
    assert op_Q(landau_ctx, z, u).max_abs() == 0.0
    assert op_Q(landau_ctx, u, z).max_abs() == 0.0
    assert op_G(landau_ctx, z).max_abs() == 0.0
    assert right_inverse_W(landau_ctx, z).max_abs() == 0.0
    assert norm_X(landau_ctx, z).total == 0.0 and norm_Y(landau_ctx, z).total == 0.0


def test_linearization_at_zero_is_A(landau_ctx, rng):
    m = landau_ctx.mesh
    v = project(landau_ctx, right_inverse_W(landau_ctx, random_y(m, rng)))
    lin = op_L(landau_ctx, ProfilePair.zeros(m), v)
    a = op_A(landau_ctx, v)
    np.testing.assert_array_equal(lin.theta, a.theta)
    np.testing.assert_array_equal(lin.phi, a.phi)


@pytest.mark.parametrize("name", ["I_{1,1}", "I_{1,2}", "I_{1,3}", "I_{5,1}", "I_{2,1}"])
def test_right_inverse(name, rng):
    ctx = representative_context(name)
    for _ in range(3):
        xi = random_y(ctx.mesh, rng)
        r = op_A(ctx, right_inverse_W(ctx, xi)) - xi
        assert norm_Y(ctx, r).total <= 1e-5 * norm_Y(ctx, xi).total


def test_c_w_against_beta_weight_quadrature():
    # at cbar3 the profile is linear and e^a = (1+x)^r1 (1-x)^r2 exactly
    ctx = representative_context("I_{5,1}")
    m = ctx.mesh
    p = ctx.params
    r1, r2 = math.sqrt(1 + p.c1), math.sqrt(1 + p.c2)
    np.testing.assert_allclose(ctx.exp_a, m.gap_minus**r1 * m.gap_plus**r2, rtol=1e-12, atol=1e-14)
    poly = np.polynomial.Polynomial([0.4, -1.3, 0.4, 2.0, -0.7])
    xi = ProfilePair(m, m.weight * poly(m.nodes), np.zeros(m.n))
    num = quad(poly, -1.0, 1.0, weight="alg", wvar=(r1, r2), epsabs=1e-14)[0]
    den = quad(lambda s: 1.0, -1.0, 1.0, weight="alg", wvar=(r1, r2), epsabs=1e-14)[0]
    assert c_w(ctx, xi) == pytest.approx(num / den, rel=1e-8)


def test_projection_is_idempotent_and_kills_functionals(landau_ctx, rng):
    m = landau_ctx.mesh
    u = right_inverse_W(landau_ctx, random_y(m, rng)) + 0.3 * kernel_basis(landau_ctx)[2]
    p = project(landau_ctx, u)
    assert max(abs(v) for v in case_functionals(landau_ctx, p).values()) <= 1e-10
    pp = project(landau_ctx, p)
    assert norm_X(landau_ctx, pp - p).total <= 1e-10 * max(1.0, norm_X(landau_ctx, p).total)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.integers(0, 2**31))
def test_Q_is_bilinear(s, t, seed):
    ctx = representative_context("I_{1,1}")
    rng = np.random.default_rng(seed)
    m = ctx.mesh
    basis = kernel_basis(ctx)
    u = project(ctx, right_inverse_W(ctx, random_y(m, rng))) + basis[2]
    v = project(ctx, right_inverse_W(ctx, random_y(m, rng))) + basis[0]
    w = basis[3] * rng.normal()
    lhs = op_Q(ctx, u * s + w * t, v)
    rhs = op_Q(ctx, u, v) * s + op_Q(ctx, w, v) * t
    scale = 1.0 + norm_Y(ctx, op_Q(ctx, u, v)).total * (1 + abs(s) + abs(t))
    assert norm_Y(ctx, lhs - rhs).total <= 1e-8 * scale


@settings(max_examples=20, deadline=None)
@given(st.floats(-5.0, 5.0), st.integers(0, 2**31))
def test_norms_are_seminorms(t, seed):
    ctx = representative_context("I_{1,1}")
    rng = np.random.default_rng(seed)
    m = ctx.mesh
    u = project(ctx, right_inverse_W(ctx, random_y(m, rng)))
    v = project(ctx, right_inverse_W(ctx, random_y(m, rng)))
    for norm in (norm_X, norm_Y):
        nu, nv = norm(ctx, u).total, norm(ctx, v).total
        # stencil weights near the poles reach 1e30, so scaling is exact only to roundoff
        assert norm(ctx, u * t).total == pytest.approx(abs(t) * nu, rel=1e-9, abs=1e-300)
        assert norm(ctx, u + v).total <= nu + nv + 1e-12 * (nu + nv)


def test_epsilon_selection():
    assert side_kinds("Case2") == {-1: "log", 1: "power"}
    assert select_epsilon("Case1", 0.0, 0.0) == 0.25
    # U(-1) = 1 requires eps > 1/4, midpoint to 1/2
    assert select_epsilon("Case1", 1.0, 0.0) == pytest.approx(0.375)
    # log weight at -1 ignores U(-1)
    assert select_epsilon("Case2", 1.0, 0.0) == 0.25
    with pytest.raises(RegionError):
        select_epsilon("Case1", 6.0, -4.0)


def test_make_context_rejects_rigid_points(mesh):
    _, hi = gamma_bounds((0.0, 0.0, 0.0))
    prof = solve_profile(Params(0.0, 0.0, 0.0, hi), mesh)
    with pytest.raises(RegionError):
        make_context(prof)
    raw = solve_riccati((0.0, 0.0, 0.0), -1.0, mesh)
    with pytest.raises(ParameterError):
        make_context(raw)
    with pytest.raises(ParameterError):
        make_context(solve_profile(Params(0.0, 0.0, 0.0, -1.0), mesh), epsilon=0.7)


def test_profile_pair_shape_check(mesh):
    with pytest.raises(ParameterError):
        ProfilePair(mesh, np.zeros(3), np.zeros(mesh.n))
