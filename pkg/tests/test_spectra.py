import csv
import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

from slext import spectra
from slext.common import HALF_PI, PI
from slext.config import NumericsConfig
from slext.errors import DetNotOne, ScanTooCoarse
from slext.extensions import Separated, coupled, friedrichs_spec
from slext.problem import Interval, builtin_bessel, builtin_regular
from slext.spectra import (Eigenvalue, Spectrum, char_coupled, char_separated, characteristic_function,
                           eigenvalues, find_roots, fundamental_system, lowest_eigenpair, lowest_eigenvalue,
                           write_spectrum_csv, write_spectrum_json)


def test_fundamental_system_free_at_zero(free01):
    fd = fundamental_system(free01, 0.0)
    assert (fd.theta_b, fd.thetap_b, fd.phi_b, fd.phip_b) == pytest.approx((1.0, 0.0, 1.0, 1.0), abs=1e-10)
    assert fd.det == pytest.approx(1.0)


def test_fundamental_system_singular_end(bessel03):
    for z in (-3.0, 0.0, 10.0):
        assert fundamental_system(bessel03, z).det == pytest.approx(1.0, abs=1e-8)


def test_char_separated(free01):
    assert char_separated(fundamental_system(free01, 1.0), PI, PI) == pytest.approx(math.sin(1.0), abs=1e-10)
    assert char_separated(fundamental_system(free01, 0.0), HALF_PI, PI) == pytest.approx(1.0, abs=1e-10)
    for k in (1, 2, 3):
        z = (k * PI) ** 2
        assert char_separated(fundamental_system(free01, z), PI, PI) == pytest.approx(0.0, abs=1e-9)


def test_char_coupled(free02):
    F = characteristic_function(free02, coupled(np.eye(2)))
    assert F(PI ** 2) == pytest.approx(0.0, abs=1e-9)
    assert F(1.0) != pytest.approx(0.0, abs=1e-3)
    fd = fundamental_system(free02, 1.0)
    assert char_coupled(fd, 0.0, np.eye(2)) == pytest.approx(F(1.0))
    with pytest.raises(DetNotOne):
        char_coupled(fd, 0.0, [[2.0, 0.0], [0.0, 1.0]])


def test_char_coupled_complex_phase(free02):
    fd = fundamental_system(free02, 2.0)
    value = char_coupled(fd, 0.5, np.eye(2))
    core = -fd.theta_b - fd.phip_b
    assert value == pytest.approx(np.exp(0.5j) * (core + 2.0 * math.cos(0.5)))


def test_dirichlet_spectrum(free01):
    values = eigenvalues(free01, friedrichs_spec(), -10.0, 300.0, 5).values()
    assert values == pytest.approx([(k * PI) ** 2 for k in range(1, 6)], rel=1e-8)


def test_mixed_spectrum(free01):
    values = eigenvalues(free01, Separated(alpha=PI, beta=HALF_PI), -10.0, 300.0, 3).values()
    assert values == pytest.approx([((2 * k - 1) * PI / 2) ** 2 for k in range(1, 4)], rel=1e-8)


def test_periodic_multiplicities(free02):
    spectrum = eigenvalues(free02, coupled(np.eye(2)), -5.0, 45.0)
    assert [e.multiplicity for e in spectrum.eigenvalues] == [1, 2, 2]
    expected = [0.0, PI ** 2, PI ** 2, (2 * PI) ** 2, (2 * PI) ** 2]
    assert spectrum.values() == pytest.approx(expected, abs=1e-7)


def test_regular_matches_bessel_half():
    regular = builtin_regular(Interval(0.0, 1.0))
    bessel = builtin_bessel(0.5, 0.0, 1.0)
    spec = Separated(alpha=PI, beta=PI)
    a = eigenvalues(regular, spec, -10.0, 200.0, 4).values()
    b = eigenvalues(bessel, spec, -10.0, 200.0, 4).values()
    assert a == pytest.approx(b, rel=1e-9)


def test_constant_potential_shift():
    base = builtin_regular(Interval(0.0, PI))
    shifted = builtin_regular(Interval(0.0, PI), q0=5.0)
    spec = friedrichs_spec()
    assert eigenvalues(base, spec, -10.0, 20.0, 4).values() == pytest.approx([1.0, 4.0, 9.0, 16.0], rel=1e-8)
    assert eigenvalues(shifted, spec, -10.0, 25.0, 4).values() == pytest.approx([6.0, 9.0, 14.0, 21.0], rel=1e-8)


def test_lowest_eigenvalue(free01):
    assert lowest_eigenvalue(free01, friedrichs_spec()) == pytest.approx(PI ** 2, rel=1e-8)
    assert lowest_eigenvalue(free01, Separated(alpha=PI / 4, beta=PI)) == pytest.approx(0.0, abs=1e-7)
    assert lowest_eigenvalue(free01, Separated(alpha=PI / 8, beta=PI)) < 0


def test_krein_double_root(free01):
    low = lowest_eigenpair(free01, coupled([[1.0, 1.0], [0.0, 1.0]]))
    assert low.multiplicity == 2
    assert low.value == pytest.approx(0.0, abs=1e-8)


def test_find_roots_simple_and_double():
    simple = find_roots(lambda z: z - 3.0, 0.0, 10.0, 1.0)
    assert [e.multiplicity for e in simple] == [1]
    assert simple[0].value == pytest.approx(3.0)
    double = find_roots(lambda z: (z - 3.0) ** 2, 0.0, 10.0, 1.0)
    assert [e.multiplicity for e in double] == [2]
    assert double[0].value == pytest.approx(3.0, abs=1e-5)


def test_empty_window(free01):
    with pytest.raises(ValueError):
        eigenvalues(free01, friedrichs_spec(), 5.0, 5.0)


def test_spectrum_output(tmp_path):
    spectrum = Spectrum([Eigenvalue(0.0, 1, 1e-12), Eigenvalue(9.87, 2, 3e-11)], (-1.0, 20.0))
    assert spectrum.values() == [0.0, 9.87, 9.87]
    assert spectrum.values(2) == [0.0, 9.87]
    csv_path = tmp_path / "spectrum.csv"
    write_spectrum_csv(spectrum, csv_path)
    with open(csv_path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [r["multiplicity"] for r in rows] == ["1", "2"]
    assert float(rows[1]["eigenvalue"]) == 9.87
    json_path = tmp_path / "spectrum.json"
    write_spectrum_json(spectrum, json_path)
    data = json.loads(json_path.read_text(encoding="utf-8"))
    assert data["scan_window"] == [-1.0, 20.0]
    assert [row["index"] for row in data["eigenvalues"]] == [1, 2]


def _gap_scanner(found_by_fraction):
    class GapScanner:
        def __init__(self, func, length, config):
            self.fraction = config.scan_step_fraction

        def scan(self, z_lo, z_hi, n_max=None, desc=None):
            return [Eigenvalue(v, 1, 0.0) for v in found_by_fraction[self.fraction]]

    return GapScanner


@pytest.mark.parametrize("finest, raises", [([16.0], False), ([16.0, 17.0], True)])
def test_gap_rescan(monkeypatch, finest, raises):
    cfg = NumericsConfig(num_threads=1)
    # sqrt spacing is pi except for a missing root at 4 pi
    found = [Eigenvalue((k * PI) ** 2, 1, 0.0) for k in (1, 2, 3, 5, 6)]
    scans = {cfg.scan_step_fraction / 4: [16.0 * PI ** 2],
             cfg.scan_step_fraction / 16: [v * PI ** 2 for v in finest]}
    monkeypatch.setattr(spectra, "RootScanner", _gap_scanner(scans))
    problem = SimpleNamespace(interval=SimpleNamespace(length=1.0))
    if raises:
        with pytest.raises(ScanTooCoarse):
            spectra._gap_rescan(problem, found, None, cfg)
    else:
        result = spectra._gap_rescan(problem, found, None, cfg)
        assert [e.value for e in result] == pytest.approx([(k * PI) ** 2 for k in range(1, 7)])
