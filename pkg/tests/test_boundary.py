import math

import numpy as np
import pytest

from slext.boundary import (_aitken, b_side_data, boundary_values_at, check_seed_wronskian,
                            distinguished_nonprincipal, eta_beta, extension_data_pack, gauge_shift,
                            generalized_boundary_values, lagrange_form, nonprincipal_from_principal,
                            nonprincipal_solution, principal_solution, vhat_norm_report, xi_boundary_check)
from slext.common import PI, arccot
from slext.errors import VanishingPrincipal
from slext.extensions import nonneg_range_fixed_beta
from slext.odecore import LEFT, RIGHT, ClosedFormSolution, l2r_inner


def test_principal_solutions(free01, bessel03):
    assert principal_solution(free01, LEFT).value(0.3) == pytest.approx(0.3)
    assert principal_solution(bessel03, LEFT).value(0.7) == pytest.approx(0.7 ** 0.8, abs=1e-8)
    # right principal solution of the regular problem is x - 1
    assert principal_solution(free01, RIGHT).value(0.25) == pytest.approx(-0.75)


def test_principal_solution_away_from_zero(free01):
    k = 2.0
    u = principal_solution(free01, LEFT, k * k)
    assert u(0.6) == pytest.approx((math.sin(k * 0.6) / k, math.cos(k * 0.6)), abs=1e-9)
    h = nonprincipal_solution(free01, LEFT, -k * k)
    assert h.value(0.6) == pytest.approx(math.cosh(k * 0.6), rel=1e-9)


def test_nonprincipal_from_principal(free01):
    u = principal_solution(free01, LEFT)
    uhat = nonprincipal_from_principal(free01, u, LEFT, 1.0)
    assert uhat(0.5) == pytest.approx((0.5, -1.0), abs=1e-9)
    assert check_seed_wronskian(free01, LEFT, 0.5) == pytest.approx(1.0)
    y, y1 = uhat(0.5)
    assert y * 1.0 - y1 * 0.5 == pytest.approx(1.0)


def test_vanishing_principal(free01):
    crossing = ClosedFormSolution(lambda x: (x - 0.5, np.ones_like(x)), (0.0, 1.0))
    with pytest.raises(VanishingPrincipal):
        nonprincipal_from_principal(free01, crossing, LEFT, 1.0)


def test_seed_normalization(free01, bessel03):
    for problem in (free01, bessel03):
        u = principal_solution(problem, LEFT)
        h = nonprincipal_solution(problem, LEFT)
        assert boundary_values_at(problem, LEFT, h) == pytest.approx((1.0, 0.0), abs=1e-9)
        assert boundary_values_at(problem, LEFT, u) == pytest.approx((0.0, 1.0), abs=1e-9)


def test_classical_values_at_regular_end(free01):
    g = principal_solution(free01, LEFT)
    bq = generalized_boundary_values(free01, g)
    assert (bq.g_b, bq.gp_b) == pytest.approx((1.0, 1.0), abs=1e-12)
    assert bq.at(LEFT) == pytest.approx((0.0, 1.0), abs=1e-12)


def test_generalized_values_for_nonzero_z(bessel03):
    g = principal_solution(bessel03, LEFT, 4.0)
    g_a, gp_a = boundary_values_at(bessel03, LEFT, g)
    assert g_a == pytest.approx(0.0, abs=1e-7)
    assert gp_a == pytest.approx(1.0, abs=1e-7)


def test_boundary_values_of_combination_at_zero(bessel03):
    g = 2.0 * principal_solution(bessel03, LEFT) + 3.0 * nonprincipal_solution(bessel03, LEFT)
    assert boundary_values_at(bessel03, LEFT, g) == pytest.approx((3.0, 2.0), abs=1e-9)


def test_aitken_recovers_geometric_limit():
    seq = [2.0 + 0.5 ** (0.8 * k) for k in range(4)]
    assert _aitken(seq) == pytest.approx(2.0, abs=1e-12)
    assert _aitken([1.0, 1.0, 1.0]) == 1.0


def test_lagrange_identity(bessel03):
    f = principal_solution(bessel03, LEFT, 3.0)
    g = nonprincipal_solution(bessel03, RIGHT, -2.0)
    bf = generalized_boundary_values(bessel03, f)
    bg = generalized_boundary_values(bessel03, g)
    lhs = (3.0 + 2.0) * l2r_inner(bessel03, f, g).value
    rhs = lagrange_form(bf, bg, RIGHT) - lagrange_form(bf, bg, LEFT)
    assert lhs == pytest.approx(rhs, abs=1e-8 * (1.0 + abs(rhs)))


def test_free_data_pack(free01):
    pack = extension_data_pack(free01)
    expected = (1.0, 1.0, -0.5, -1.5, -1.5, 1.0 / 3.0, 0.25)
    got = (pack.u_b, pack.up_b, pack.v_b, pack.vp_b, pack.vp_a, pack.norm2_u, pack.norm2_v)
    assert got == pytest.approx(expected, abs=1e-10)
    assert pack.uhat_b == pytest.approx(1.0)
    assert pack.uhatp_b == pytest.approx(0.0, abs=1e-10)
    assert pack.c_friedrichs == pytest.approx(0.5)
    assert extension_data_pack(free01) is pack


def test_distinguished_is_orthogonal(bessel03):
    u = principal_solution(bessel03, LEFT)
    vhat = distinguished_nonprincipal(bessel03)
    assert l2r_inner(bessel03, vhat, u).value == pytest.approx(0.0, abs=1e-9)


def test_vhat_norm_report(free01):
    report = vhat_norm_report(free01)
    assert report["quadrature"] == pytest.approx(0.25)
    assert report["projection"] == pytest.approx(0.25)
    assert report["printed_minus_projection"] == pytest.approx(-1.5)


def test_xi_residuals(free01, bessel03):
    assert xi_boundary_check(free01).max <= 1e-8
    assert xi_boundary_check(bessel03).max <= 1e-8


@pytest.mark.parametrize("C", [1.0, -1.0, 2.5])
def test_gauge_covariance(free01, bessel03, C):
    for problem in (free01, bessel03):
        g = principal_solution(problem, RIGHT, 5.0)
        g_a, gp_a = boundary_values_at(problem, LEFT, g)
        shifted_a, shifted_pa = boundary_values_at(gauge_shift(problem, C), LEFT, g)
        assert shifted_a == pytest.approx(g_a, abs=1e-8 * (1.0 + abs(g_a)))
        assert shifted_pa == pytest.approx(gp_a - C * g_a, abs=1e-8 * (1.0 + abs(gp_a)))


@pytest.mark.parametrize("C", [1.0, -1.0, 2.5])
def test_gauge_moves_the_floor(free01, C):
    pack = extension_data_pack(gauge_shift(free01, C))
    assert nonneg_range_fixed_beta(pack, PI) == pytest.approx(arccot(1.0 + C))


def test_eta_beta(free01):
    eta = eta_beta(free01, PI)
    assert (eta.eta_a, eta.etap_a) == pytest.approx((1.0, -1.0))
    assert eta.fn.value(0.25) == pytest.approx(0.75)
    assert eta.norm2 == pytest.approx(1.0 / 3.0)


def test_b_side_data(free01):
    data = b_side_data(free01)
    assert (data.u_a, data.up_a, data.uhat_a, data.uhatp_a) == pytest.approx((-1.0, 1.0, 1.0, 0.0), abs=1e-12)
    assert (data.norm2_u, data.cross, data.norm2_uhat) == pytest.approx((1.0 / 3.0, -0.5, 1.0))
