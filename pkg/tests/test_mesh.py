from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from homax.errors import DivergenceError, ParameterError
from homax.mesh import (
    GridFunction,
    build_mesh,
    cumulative_integral,
    differentiate,
    endpoint_limit,
    fornberg_weights,
    log_singular_integral,
    tail_integral,
)


def roundoff_bound(mesh, order=1):
    """Values near a pole carry absolute error ~1e-16, amplified by gap^-order."""
    g = np.minimum(mesh.gap_plus, mesh.gap_minus)
    return 1e-12 + 1e-13 / g**order


def test_uniform_like_mesh_is_symmetric_and_contains_zero():
    m = build_mesh(65, 1.0)
    assert m.n == 65
    assert m.nodes[m.center] == 0.0
    np.testing.assert_array_equal(m.nodes, -m.nodes[::-1])
    assert np.all(np.diff(m.nodes) > 0)


def test_graded_mesh_reaches_close_to_the_poles():
    m = build_mesh(513, 4.0)
    assert min(m.gap_plus.min(), m.gap_minus.min()) < 1e-8
    assert m.gap_plus[-1] == pytest.approx((2.0 / 514) ** 4, rel=1e-12)


@pytest.mark.parametrize("n,p", [(3, 4.0), (64, 4.0), (128, 4.0), (65, 0.5), (65, math.nan)])
def test_invalid_mesh_parameters(n, p):
    with pytest.raises(ParameterError):
        build_mesh(n, p)


def test_gaps_and_weight_are_cancellation_free(mesh):
    x = mesh.nodes
    inner = np.abs(x) < 0.9
    np.testing.assert_allclose(mesh.gap_plus[inner], 1.0 - x[inner], rtol=1e-14)
    np.testing.assert_allclose(mesh.gap_minus, mesh.gap_plus[::-1], rtol=0, atol=0)
    # weight agrees with 1/cosh^2(sigma) even where 1 - x^2 underflows to rounding
    np.testing.assert_allclose(mesh.weight, 1.0 / np.cosh(mesh.sigma) ** 2, rtol=1e-13)


def test_fornberg_weights_match_textbook_stencils():
    w = fornberg_weights(np.array([-1.0, 0.0, 1.0]), 2)
    np.testing.assert_allclose(w[1], [-0.5, 0.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(w[2], [1.0, -2.0, 1.0], atol=1e-15)


def test_derivative_of_square(mesh):
    x = mesh.nodes
    err = np.abs(mesh.derivative(x**2, 1) - 2.0 * x)
    assert np.all(err <= roundoff_bound(mesh))
    coarse = build_mesh(65, 1.0)
    np.testing.assert_allclose(coarse.derivative(coarse.nodes**2, 1), 2.0 * coarse.nodes, atol=1e-12)


def test_third_derivative_of_cube(mesh):
    x = mesh.nodes
    d3 = differentiate(GridFunction(mesh, x**3), 3).values
    mid = np.abs(x) < 0.5
    np.testing.assert_allclose(d3[mid], 6.0, atol=1e-9)


def test_derivative_of_constant_is_exact(mesh):
    for order in (1, 2, 3):
        assert np.all(mesh.derivative(np.full(mesh.n, 3.7), order) == 0.0)


def test_unsupported_order(mesh):
    with pytest.raises(ParameterError):
        differentiate(GridFunction(mesh, mesh.nodes), 4)


def test_landau_derivative_at_zero(mesh):
    s = sp.symbols("x")
    exact = float(sp.diff(2 * (1 - s**2) / (s - 2), s).subs(s, 0))
    u = 2.0 * mesh.weight / (mesh.nodes - 2.0)
    assert abs(mesh.derivative_at(u, mesh.center, 1) - exact) <= 1e-8
    assert abs(mesh.derivative(u, 1)[mesh.center] - exact) <= 1e-8


def test_cumulative_integral_closed_forms(mesh):
    x = mesh.nodes
    one = cumulative_integral(GridFunction(mesh, np.ones(mesh.n))).values
    np.testing.assert_allclose(one, x, atol=1e-14)
    lin = cumulative_integral(GridFunction(mesh, x)).values
    np.testing.assert_allclose(lin, 0.5 * x**2, atol=1e-14)
    # 2x/(1-x^2) integrates to -ln(1-x^2); rel. error at interior nodes
    F = cumulative_integral(GridFunction(mesh, 2.0 * x / mesh.weight)).values
    exact = -np.log(mesh.weight)
    inner = slice(1, -1)
    nz = np.abs(exact[inner]) > 1e-12
    rel = np.abs(F[inner] - exact[inner])[nz] / np.abs(exact[inner][nz])
    assert rel.max() < 1e-6


def test_cumulative_integral_rejects_nan(mesh):
    v = np.zeros(mesh.n)
    v[10] = np.nan
    with pytest.raises(ParameterError):
        cumulative_integral(GridFunction(mesh, v))


def test_log_singular_integral(mesh):
    zero = GridFunction(mesh, np.zeros(mesh.n))
    assert log_singular_integral(zero, 1) == 0.0
    # g = 1 - s^2 gives integrand 1
    g = GridFunction(mesh, mesh.weight)
    assert log_singular_integral(g, 1) == pytest.approx(1.0, abs=1e-12)
    assert log_singular_integral(g, -1) == pytest.approx(-1.0, abs=1e-12)
    # (1 - s^2)^(1/2): integrable singularity, adaptive quadrature oracle
    ref, _ = quad(lambda s: 1.0 / math.sqrt(1.0 - s * s), 0.0, 1.0, epsabs=1e-13, limit=200)
    h = GridFunction(mesh, np.sqrt(mesh.weight))
    assert abs(log_singular_integral(h, 1) - ref) <= 1e-6


def test_log_singular_integral_divergent(mesh):
    with pytest.raises(DivergenceError):
        log_singular_integral(GridFunction(mesh, np.ones(mesh.n)), 1)
    with pytest.raises(ParameterError):
        log_singular_integral(GridFunction(mesh, mesh.weight), 0)


def test_endpoint_limits(mesh):
    L = np.log(mesh.gap_minus / 3.0)
    assert abs(endpoint_limit(GridFunction(mesh, mesh.weight), 1).value) <= 1e-12
    lim = endpoint_limit(GridFunction(mesh, 2.0 + 4.0 / L), -1, model="log")
    assert abs(lim.value - 2.0) <= 1e-3
    weighted = endpoint_limit(GridFunction(mesh, 4.0 / L), -1, weight="log")
    assert abs(weighted.value - 4.0) <= 1e-10
    # power-law approach: 3 + (1+x)^0.7
    lim = endpoint_limit(GridFunction(mesh, 3.0 + mesh.gap_minus**0.7), -1)
    assert lim.converged and abs(lim.value - 3.0) <= 1e-10
    assert lim.order == pytest.approx(0.7, abs=1e-3)


def test_endpoint_limit_flags_divergence(mesh):
    lim = endpoint_limit(GridFunction(mesh, np.log(mesh.gap_plus)), 1)
    assert not lim.converged
    with pytest.raises(DivergenceError):
        lim.require()


def test_tail_integral_power_model(mesh):
    # int_{x_last}^{1} (1-s)^(-1/2) ds = 2 sqrt(gap)
    f = mesh.gap_plus**-0.5
    assert tail_integral(mesh, f, 1) == pytest.approx(2.0 * math.sqrt(mesh.gap_plus[-1]), rel=1e-8)
    assert tail_integral(mesh, f, 1, alpha=-0.5) == pytest.approx(2.0 * math.sqrt(mesh.gap_plus[-1]), rel=1e-10)


def test_grid_function_round_trips(tmp_path, small_mesh):
    rng = np.random.default_rng(3)
    f = GridFunction(small_mesh, rng.normal(size=small_mesh.n))
    back = GridFunction.from_json(f.to_json())
    np.testing.assert_array_equal(back.values, f.values)
    path = tmp_path / "f.csv"
    f.write_csv(path)
    np.testing.assert_array_equal(GridFunction.read_csv(path).values, f.values)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=7))
def test_polynomial_exactness(coefs):
    m = build_mesh(129, 4.0)
    x = m.nodes
    p = np.polynomial.Polynomial(coefs)
    scale = 1.0 + float(np.sum(np.abs(coefs))) * 10
    err = np.abs(m.derivative(p(x), 1) - p.deriv()(x))
    assert np.all(err <= scale * roundoff_bound(m))
    anti = p.integ()
    np.testing.assert_allclose(m.cumint(p(x)), anti(x) - anti(0.0), atol=1e-13 * scale)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-2.0, 2.0))
def test_cumint_inverts_derivative(k, shift):
    m = build_mesh(1025, 4.0)
    f = np.sin(k * m.nodes + shift)
    back = m.cumint(m.derivative(f, 1)) + f[m.center]
    inner = np.abs(m.nodes) < 0.99
    np.testing.assert_allclose(back[inner], f[inner], atol=1e-10)
