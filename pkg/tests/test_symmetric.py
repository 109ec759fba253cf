import math

import numpy as np
import pytest

from slext.bessel import symmetric_bessel_floors
from slext.common import HALF_PI, PI, arccot
from slext.errors import DetNotOne, NotNonnegative, NotReflectionInvariant, NotSymmetric, UnsupportedCoupling
from slext.extensions import Coupled, PartialOrderResult, Separated, coupled, friedrichs_spec, krein_matrix
from slext.spectra import characteristic_function, eigenvalues, fundamental_system, lowest_eigenpair
from slext.symmetric import (CoupledOuter, Fixed, LimitPointLike, check_symmetry, compare_coupled_symmetric,
                             compare_two_interval, cross_paired_specs, decompose, decompose_coupled,
                             decompose_separated, decomposition_report, factorization_residual,
                             factorized_characteristic, half_midpoint_data, krein_half_angles, match_spectra,
                             reflected_boundary_data, reflection_invariant_coupling, require_symmetric,
                             spec_is_reflection_invariant, symmetric_floors, two_interval_decompose,
                             verify_spectral_union)

ROTATION = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_symmetry_detection(free01, bessel03, symmetric_bessel):
    assert check_symmetry(symmetric_bessel(0.3))
    assert check_symmetry(free01)
    assert not check_symmetry(bessel03)
    with pytest.raises(NotSymmetric):
        require_symmetric(bessel03)


def test_reflection_invariance():
    assert spec_is_reflection_invariant(friedrichs_spec()).is_invariant
    assert spec_is_reflection_invariant(coupled(np.eye(2))).is_invariant
    assert not spec_is_reflection_invariant(coupled([[2.0, 1.0], [1.0, 1.0]])).is_invariant
    assert not spec_is_reflection_invariant(Separated(alpha=PI, beta=HALF_PI)).is_invariant
    assert not spec_is_reflection_invariant(coupled(np.eye(2), eta=0.3)).is_invariant


def test_decompose_separated():
    d = decompose_separated(PI)
    assert d.dirichlet_spec == Separated(alpha=PI, beta=PI)
    assert d.neumann_spec == Separated(alpha=PI, beta=HALF_PI)
    d = decompose(Separated(alpha=HALF_PI, beta=HALF_PI))
    assert (d.alpha, d.alpha_p) == (HALF_PI, HALF_PI)
    assert d.reconstruct() == Separated(alpha=HALF_PI, beta=HALF_PI)


@pytest.mark.parametrize("R, angles", [
    (np.eye(2), (PI, HALF_PI)),
    (-np.eye(2), (HALF_PI, PI)),
    (ROTATION, (PI / 4, 3 * PI / 4)),
    ([[1.0, 0.0], [-1.0, 1.0]], (PI, arccot(-0.5))),
    ([[-1.0, 0.0], [4.0, -1.0]], (arccot(-2.0), PI)),
])
def test_decompose_coupled(R, angles):
    assert decompose_coupled(R) == pytest.approx(angles)
    assert np.allclose(reflection_invariant_coupling(*angles), R)


def test_decompose_coupled_rejects():
    with pytest.raises(NotReflectionInvariant):
        decompose_coupled([[2.0, 1.0], [1.0, 1.0]])
    with pytest.raises(DetNotOne):
        decompose_coupled([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotReflectionInvariant):
        decompose_coupled(coupled(np.eye(2), eta=0.2))
    with pytest.raises(NotReflectionInvariant):
        decompose(Separated(alpha=PI, beta=2.0))


def test_inverse_map_rejects_separated_pairs():
    with pytest.raises(NotReflectionInvariant):
        reflection_invariant_coupling(PI, PI)
    with pytest.raises(NotReflectionInvariant):
        reflection_invariant_coupling(1.0, 1.0)


def test_cross_paired_specs():
    first, second = cross_paired_specs(PI / 3, 2.0)
    assert decompose_coupled(first) == pytest.approx((PI / 3, 2.0))
    assert decompose_coupled(second) == pytest.approx((2.0, PI / 3))
    assert isinstance(decompose(first).source, Coupled)


def test_floors_match_closed_form(symmetric_bessel):
    for gamma in (0.0, 0.3, 0.5):
        assert symmetric_floors(symmetric_bessel(gamma)) == pytest.approx(
            symmetric_bessel_floors(gamma, 0.0, 2.0), abs=1e-7)
    assert symmetric_floors(symmetric_bessel(0.5)) == pytest.approx((PI / 4, HALF_PI))


def test_compare_coupled_symmetric():
    floors = (0.1, 0.1)
    shear = np.array([[1.0, 0.0], [-1.0, 1.0]])
    assert compare_coupled_symmetric(np.eye(2), shear, floors) == PartialOrderResult.LESS_OR_EQUAL
    assert compare_coupled_symmetric(shear, np.eye(2), floors) == PartialOrderResult.GREATER_OR_EQUAL
    assert compare_coupled_symmetric(ROTATION, ROTATION, floors) == PartialOrderResult.EQUAL
    other = np.array([[0.0, 2.0], [-0.5, 0.0]])
    assert compare_coupled_symmetric(ROTATION, other, floors) == PartialOrderResult.INCOMPARABLE
    assert compare_coupled_symmetric(-np.eye(2), np.eye(2), floors) == PartialOrderResult.INCOMPARABLE
    with pytest.raises(NotNonnegative):
        compare_coupled_symmetric(np.eye(2), shear, (PI, PI))


@pytest.mark.parametrize("R, Rh", [
    (ROTATION, [[0.5, 1.0], [-0.75, 0.5]]),
    ([[0.5, 1.0], [-0.75, 0.5]], np.eye(2)),
    (-np.eye(2), [[-1.0, 0.0], [-1.0, -1.0]]),
    ([[2.0, 3.0], [1.0, 2.0]], [[1.0, 0.0], [0.5, 1.0]]),
])
def test_ordering_cases_agree_with_angles(R, Rh):
    a, b = decompose_coupled(R), decompose_coupled(Rh)
    le = a[0] <= b[0] + 1e-12 and a[1] <= b[1] + 1e-12
    ge = a[0] >= b[0] - 1e-12 and a[1] >= b[1] - 1e-12
    result = compare_coupled_symmetric(R, Rh, (1e-3, 1e-3))
    assert (result in (PartialOrderResult.LESS_OR_EQUAL, PartialOrderResult.EQUAL)) == le
    assert (result in (PartialOrderResult.GREATER_OR_EQUAL, PartialOrderResult.EQUAL)) == ge


def test_krein_half_angles(free02):
    alpha, alpha_p = krein_half_angles(free02)
    assert (alpha, alpha_p) == pytest.approx((PI / 4, HALF_PI), abs=1e-9)
    assert decompose_coupled(krein_matrix(free02)) == pytest.approx((alpha, alpha_p), abs=1e-9)


def test_krein_matrix_has_equal_diagonal(symmetric_bessel):
    R = krein_matrix(symmetric_bessel(0.3))
    assert R[0, 0] == pytest.approx(R[1, 1], rel=1e-8)


def test_reflected_boundary_data(free02):
    half_fd = half_midpoint_data(free02, 0.0)
    assert (half_fd.theta_b, half_fd.thetap_b, half_fd.phi_b, half_fd.phip_b) == pytest.approx(
        (1.0, 0.0, 1.0, 1.0), abs=1e-10)
    full = reflected_boundary_data(half_fd)
    assert (full.theta_b, full.thetap_b, full.phi_b, full.phip_b) == pytest.approx((1.0, 0.0, 2.0, 1.0), abs=1e-10)
    for z in (-4.0, 3.0, 17.0):
        direct = fundamental_system(free02, z)
        mirrored = reflected_boundary_data(half_midpoint_data(free02, z))
        assert (mirrored.theta_b, mirrored.thetap_b, mirrored.phi_b, mirrored.phip_b) == pytest.approx(
            (direct.theta_b, direct.thetap_b, direct.phi_b, direct.phip_b), rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("spec", [friedrichs_spec(), Separated(alpha=2.2, beta=2.2), coupled(np.eye(2)),
                                  coupled(-np.eye(2)), coupled(ROTATION), coupled([[1.0, 0.0], [-1.0, 1.0]])])
@pytest.mark.parametrize("z", [1.0, 5.0, 20.0])
def test_factorization(free02, spec, z):
    full = characteristic_function(free02, spec)(z)
    assert factorization_residual(free02, spec, z) <= 1e-8 * (1.0 + abs(full))


def test_factorization_vanishes_at_eigenvalue(free02):
    z = (PI / 2) ** 2
    half_fd = half_midpoint_data(free02, z)
    assert factorized_characteristic(friedrichs_spec(), half_fd) == pytest.approx(0.0, abs=1e-9)


def test_match_spectra():
    pairs, left, right = match_spectra([1.0, 2.0, 5.0], [2.0 + 1e-9, 1.0, 7.0])
    assert [x for x, _ in pairs] == [1.0, 2.0]
    assert left == [5.0]
    assert right == [7.0]


def test_union_periodic(symmetric_bessel):
    report = verify_spectral_union(symmetric_bessel(0.5), coupled(np.eye(2)), 7)
    assert report["passed"]
    assert report["full"][0] == pytest.approx(0.0, abs=1e-8)


def test_union_separated_singular(symmetric_bessel):
    report = verify_spectral_union(symmetric_bessel(0.3), Separated(alpha=2.0, beta=2.0), 6)
    assert report["passed"], report


def _merged(problem, specs, z_lo, z_hi):
    values = [v for spec in specs for v in eigenvalues(problem, spec, z_lo, z_hi).values()]
    return sorted(v for v in values if v < 100.0)


def test_cross_paired_spectra(free02):
    alpha, alpha_p = 2.0, 1.87
    separated = _merged(free02, [Separated(alpha=alpha, beta=alpha), Separated(alpha=alpha_p, beta=alpha_p)],
                        -5.0, 120.0)
    paired = _merged(free02, cross_paired_specs(alpha, alpha_p), -5.0, 120.0)
    assert len(separated) >= 8
    pairs, left, right = match_spectra(separated, paired, atol=1e-7)
    assert not left and not right
    assert len(pairs) == len(separated)


@pytest.mark.slow
def test_random_invariant_specs_nonnegativity(symmetric_bessel):
    problem = symmetric_bessel(0.3)
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 20:
        alpha, alpha_p = rng.uniform(0.6, PI, size=2)
        if rng.random() < 0.5:
            spec = Separated(alpha=alpha, beta=alpha)
        elif abs(alpha - alpha_p) < 1e-3:
            continue
        else:
            spec = coupled(reflection_invariant_coupling(alpha, alpha_p))
        checked += 1
        report = decomposition_report(problem, spec)
        expected = report["dirichlet_nonnegative"] and report["neumann_nonnegative"]
        low = lowest_eigenpair(problem, spec).value
        if abs(low) < 1e-6:
            continue
        assert (low > -1e-7) == expected, (spec, low, report["nu"], report["mu"])


def test_two_interval_decompose():
    d = two_interval_decompose(np.eye(2), Fixed(PI))
    assert d.odd_spec == Separated(alpha=PI, beta=PI)
    assert d.even_spec == Separated(alpha=HALF_PI, beta=PI)
    d = two_interval_decompose(-np.eye(2), Fixed(HALF_PI))
    assert d.odd_spec == Separated(alpha=HALF_PI, beta=HALF_PI)
    assert d.even_spec == Separated(alpha=PI, beta=HALF_PI)
    assert two_interval_decompose(np.eye(2), LimitPointLike()).angles() == pytest.approx((PI, HALF_PI, PI, PI))
    d = two_interval_decompose(np.eye(2), CoupledOuter(((-1.0, 0.0), (0.0, -1.0))))
    assert d.angles() == pytest.approx((PI, HALF_PI, HALF_PI, PI))
    with pytest.raises(UnsupportedCoupling):
        two_interval_decompose(np.eye(2), "free")


def test_compare_two_interval():
    lower = two_interval_decompose(-np.eye(2), Fixed(HALF_PI))
    upper = two_interval_decompose(-np.eye(2), Fixed(PI))
    assert compare_two_interval(lower, upper) == PartialOrderResult.LESS_OR_EQUAL
    swapped = two_interval_decompose(np.eye(2), Fixed(HALF_PI))
    assert compare_two_interval(lower, swapped) == PartialOrderResult.INCOMPARABLE
    with pytest.raises(NotNonnegative):
        compare_two_interval(lower, upper, odd_floors=(0.6 * PI, 0.0))
    assert compare_two_interval(lower, upper, even_floors=(HALF_PI, HALF_PI)) == PartialOrderResult.LESS_OR_EQUAL


def test_decomposition_report(symmetric_bessel):
    report = decomposition_report(symmetric_bessel(0.5), coupled(np.eye(2)))
    assert (report["alpha"], report["alpha_p"]) == pytest.approx((PI, HALF_PI))
    assert report["dirichlet_nonnegative"] and report["neumann_nonnegative"]
    assert report["neumann_piece"] == {"type": "separated", "alpha": HALF_PI, "beta": HALF_PI}
    assert math.isclose(report["nu"], PI / 4, abs_tol=1e-9)
    assert "union_check" not in report
