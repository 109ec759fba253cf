import csv
import io
import json

import numpy as np
import pytest

from slext.cli import RunConfig, build_parser, build_run_config, main
from slext.common import PI
from slext.errors import SpecParseError

FRIEDRICHS = json.dumps({"type": "separated", "alpha": 3.14159265, "beta": 3.14159265})
PERIODIC = json.dumps({"type": "coupled", "eta": 0.0, "R": [[1, 0], [0, 1]]})


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _key_values(text):
    return {row["key"]: row["value"] for row in _rows(text)}


def test_spectrum_command(capsys):
    code = main(["spectrum", "--builtin", "bessel", "--gamma", "0.5", "--a", "0", "--b", "1",
                 "--spec", FRIEDRICHS, "--n", "5"])
    assert code == 0
    rows = _rows(capsys.readouterr().out)
    assert [float(r["eigenvalue"]) for r in rows] == pytest.approx([(k * PI) ** 2 for k in range(1, 6)], rel=1e-7)


def test_spectrum_degree_flags_and_json(capsys):
    code = main(["spectrum", "--alpha-deg", "180", "--beta-deg", "90", "--n", "2", "--format", "json"])
    assert code == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["eigenvalue"] for r in rows] == pytest.approx([(PI / 2) ** 2, (3 * PI / 2) ** 2], rel=1e-8)


def test_spectrum_to_file(tmp_path, capsys):
    out = tmp_path / "spectrum.csv"
    assert main(["spectrum", "--spec", FRIEDRICHS, "--n", "1", "--output", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert float(_rows(out.read_text(encoding="utf-8"))[0]["eigenvalue"]) == pytest.approx(PI ** 2, rel=1e-8)


def test_invalid_spec_json(capsys):
    assert main(["spectrum", "--spec", '{"type": "separated"']) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR SpecParseError:")
    assert err.count("\n") == 1


def test_det_not_one(capsys):
    spec = json.dumps({"type": "coupled", "eta": 0.0, "R": [[2, 0], [0, 1]]})
    assert main(["spectrum", "--spec", spec]) == 1
    assert capsys.readouterr().err.startswith("ERROR DetNotOne:")


def test_spectrum_needs_spec(capsys):
    assert main(["spectrum"]) == 1
    assert "SpecParseError" in capsys.readouterr().err


def test_classify_friedrichs(capsys):
    assert main(["classify", "--spec", FRIEDRICHS]) == 0
    values = _key_values(capsys.readouterr().out)
    assert values["verdict"] == "nonnegative (Friedrichs, dim W=0)"
    assert values["nonnegative"] == "True"


def test_classify_below_floor(capsys):
    assert main(["classify", "--alpha-deg", "22.5", "--beta-deg", "180"]) == 0
    values = _key_values(capsys.readouterr().out)
    assert values["verdict"].startswith("not nonnegative")
    assert float(values["lambda_min"]) < 0


def test_classify_parameters(capsys):
    assert main(["classify", "--B", "3", "-6", "9"]) == 0
    values = _key_values(capsys.readouterr().out)
    spec = json.loads(values["spec"])
    assert spec["type"] == "separated"
    assert (spec["alpha"], spec["beta"]) == pytest.approx((PI / 2, PI / 2))
    assert main(["classify", "--kappa", "0"]) == 0
    spec = json.loads(_key_values(capsys.readouterr().out)["spec"])
    assert spec["beta"] == pytest.approx(PI / 4)


def test_range_command(capsys):
    assert main(["range"]) == 0
    values = _key_values(capsys.readouterr().out)
    assert float(values["alpha_min"]) == pytest.approx(PI / 4, abs=1e-9)
    assert float(values["alpha_min_alt"]) == pytest.approx(PI / 4, abs=1e-8)
    assert float(values["difference"]) <= 1e-8
    assert main(["range", "--beta-p", str(PI / 2)]) == 0
    assert float(_key_values(capsys.readouterr().out)["alpha_min"]) == pytest.approx(PI / 2, abs=1e-9)


def test_decompose_periodic(capsys):
    code = main(["decompose", "--builtin", "symmetric_bessel", "--gamma", "0.5", "--spec", PERIODIC,
                 "--verify", "--n", "5"])
    assert code == 0
    values = _key_values(capsys.readouterr().out)
    assert float(values["alpha"]) == pytest.approx(PI)
    assert float(values["alpha_p"]) == pytest.approx(PI / 2)
    assert values["union_passed"] == "True"


def test_decompose_two_interval(capsys):
    code = main(["decompose", "--b", "1", "--r0", "[[1, 0], [0, 1]]", "--outer-beta", str(PI)])
    assert code == 0
    values = _key_values(capsys.readouterr().out)
    assert json.loads(values["odd_piece"])["alpha"] == pytest.approx(PI)
    assert json.loads(values["even_piece"])["alpha"] == pytest.approx(PI / 2)


def test_decompose_errors(capsys):
    assert main(["decompose", "--builtin", "bessel", "--gamma", "0.3", "--b", "1", "--spec", FRIEDRICHS]) == 1
    assert capsys.readouterr().err.startswith("ERROR NotSymmetric:")
    spec = json.dumps({"type": "coupled", "eta": 0.0, "R": [[2, 1], [1, 1]]})
    assert main(["decompose", "--builtin", "symmetric_bessel", "--spec", spec]) == 1
    assert capsys.readouterr().err.startswith("ERROR NotReflectionInvariant:")
    assert main(["decompose", "--r0", "[[1, 0]]"]) == 1
    assert "SpecParseError" in capsys.readouterr().err


def test_krein_command(capsys):
    assert main(["krein", "--b", "2", "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    values = {row["key"]: row["value"] for row in rows}
    assert values["det"] == pytest.approx(1.0)
    assert values["alpha"] == pytest.approx(PI / 4, abs=1e-9)
    assert values["alpha_p"] == pytest.approx(PI / 2, abs=1e-9)


def test_krein_free_matrix(capsys):
    assert main(["krein"]) == 0
    values = _key_values(capsys.readouterr().out)
    assert np.allclose(json.loads(values["R_K"]), [[1.0, 1.0], [0.0, 1.0]], atol=1e-9)


def test_hardy_command(capsys):
    assert main(["hardy", "--gammas", "0.5", "0.3", "--verify", "--trials", "10"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[0]["constant"]) == pytest.approx(PI ** 2)
    assert float(rows[0]["lamb_zero_1"]) == pytest.approx(PI / 2)
    assert [r["trials"] for r in rows] == ["10", "10"]
    assert all(float(r["min_margin"]) >= -1e-9 for r in rows)


def test_hardy_rejects_gamma(capsys):
    assert main(["hardy", "--gammas", "1.0"]) == 1
    assert capsys.readouterr().err.startswith("ERROR GammaOutOfRange:")


def test_bad_config_file(tmp_path, capsys):
    assert main(["range", "--config", str(tmp_path / "missing.json")]) == 1
    assert capsys.readouterr().err.startswith("ERROR ConfigError:")


def test_run_config_validation():
    args = build_parser().parse_args(["spectrum", "--z-lo", "5", "--z-hi", "1", "--spec", FRIEDRICHS])
    with pytest.raises(SpecParseError):
        build_run_config(args)
    args = build_parser().parse_args(["range", "--a", "1", "--b", "0"])
    with pytest.raises(SpecParseError):
        build_run_config(args)
    run = build_run_config(build_parser().parse_args(["krein", "--threads", "2"]))
    assert isinstance(run, RunConfig)
    assert run.numerics == {"num_threads": 2}
    assert run.problem == "free"


def test_problem_file_argument(problem_file, capsys):
    path = problem_file({"family": "regular", "interval": {"a": 0, "b": 1}, "q0": 5.0})
    assert main(["spectrum", "--problem", str(path), "--spec", FRIEDRICHS, "--n", "1"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[0]["eigenvalue"]) == pytest.approx(PI ** 2 + 5.0, rel=1e-8)


def test_reversed_interval_in_problem_file(problem_file, capsys):
    path = problem_file({"family": "regular", "interval": {"a": 1.0, "b": 0.0}})
    spec = json.dumps({"type": "separated", "alpha": PI / 2, "beta": PI / 2})
    assert main(["spectrum", "--problem", str(path), "--spec", spec, "--n", "1"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR InvalidInterval:")
    assert err.count("\n") == 1


@pytest.mark.parametrize("argv", [
    ["decompose", "--r0", "[[1, 0], [0, 1]]", "--outer-beta", "4"],
    ["range", "--beta-p", "4"],
])
def test_angle_arguments_out_of_range(argv, capsys):
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR SpecParseError:")
    assert err.count("\n") == 1


@pytest.mark.slow
def test_selftest_fast(capsys):
    assert main(["selftest", "--fast"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.rstrip().endswith("checks passed")
