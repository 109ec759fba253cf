import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from . import common
from .bessel import hardy_constant, lamb_zero, rayleigh_verify
from .boundary import extension_data_pack
from .common import PI, logger
from .config import load_numerics_config, set_config
from .errors import SlextError, SpecParseError
from .extensions import (AuxB1, AuxB2, classify_dim1, classify_dim2, is_nonnegative,
                         krein_matrix_from_pack, parse_spec, range_report, spec_to_wire)
from .problem import (Interval, builtin_bessel, builtin_free, builtin_regular, builtin_symmetric_bessel,
                      load_problem_file)
from .selftest import format_results, run_selftest
from .spectra import eigenvalues
from .symmetric import (CoupledOuter, Fixed, check_symmetry, decomposition_report, krein_half_angles,
                        two_interval_decompose, two_interval_oracle, two_interval_spectrum)

COMMANDS = ("spectrum", "classify", "range", "decompose", "krein", "hardy", "selftest")
BUILTINS = ("free", "bessel", "symmetric_bessel", "regular")


class RunConfig(BaseModel):
    """Validated command-line request; built before any computation starts."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
    command: Literal[COMMANDS]
    problem: str = "free"
    gamma: float = 0.5
    a: float = 0.0
    b: float = 1.0
    spec: Optional[object] = None
    z_window: tuple[float, float] = (-100.0, 1000.0)
    n_max: Optional[int] = None
    output: Optional[Path] = None
    format: Literal["csv", "json"] = "csv"
    numerics: dict = {}

    @field_validator("spec", mode="before")
    @classmethod
    def _parse(cls, value):
        return None if value is None else parse_spec(value)

    @model_validator(mode="after")
    def _window(self):
        lo, hi = self.z_window
        if not lo < hi:
            raise ValueError(f"empty window ({lo}, {hi})")
        if self.b <= self.a:
            raise ValueError(f"interval ({self.a}, {self.b}) is empty")
        return self


def _degrees(value):
    return None if value is None else math.radians(value)


def _spec_from_args(args):
    if getattr(args, "spec", None):
        return args.spec
    alpha = _degrees(getattr(args, "alpha_deg", None))
    beta = _degrees(getattr(args, "beta_deg", None))
    if alpha is None and beta is None:
        return None
    return {"type": "separated", "alpha": alpha if alpha is not None else PI, "beta": beta if beta is not None else PI}


def build_run_config(args):
    """
    RunConfig from parsed arguments.

    Raises:
        SpecParseError: the spec or another field fails validation
    """
    numerics = {"num_threads": args.threads, "show_progress": args.progress or None}
    try:
        return RunConfig(
            command=args.command,
            problem=getattr(args, "problem", None) or getattr(args, "builtin", None) or "free",
            gamma=getattr(args, "gamma", 0.5),
            a=getattr(args, "a", 0.0),
            b=getattr(args, "b", 1.0),
            spec=_spec_from_args(args),
            z_window=(getattr(args, "z_lo", -100.0), getattr(args, "z_hi", 1000.0)),
            n_max=getattr(args, "n", None),
            output=args.output,
            format=args.format,
            numerics={k: v for k, v in numerics.items() if v is not None},
        )
    except ValidationError as e:
        raise SpecParseError(f"invalid arguments: {e.errors()[0]['msg']}") from e


def make_problem_from(run, cfg):
    name = run.problem
    if name == "free":
        return builtin_free(run.a, run.b, cfg)
    if name == "bessel":
        return builtin_bessel(run.gamma, run.a, run.b, cfg)
    if name == "symmetric_bessel":
        return builtin_symmetric_bessel(run.gamma, run.a, run.b, cfg)
    if name == "regular":
        return builtin_regular(Interval(run.a, run.b), config=cfg)
    return load_problem_file(name, cfg)


def _rows_text(rows, fmt):
    if fmt == "json":
        return json.dumps(rows, indent=2, default=_jsonable)
    buffer = io.StringIO()
    if rows:
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return buffer.getvalue()


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, BaseModel):
        return spec_to_wire(value)
    return str(value)


def _cell(value):
    if isinstance(value, float):
        return f"{value:.15g}"
    if isinstance(value, (dict, list, tuple, np.ndarray)):
        return json.dumps(value, default=_jsonable)
    return value


def _key_values(mapping):
    return [{"key": k, "value": v} for k, v in mapping.items()]


def emit(rows, run):
    text = _rows_text(rows, run.format)
    if run.output:
        with open(run.output, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        logger.info(f"wrote {run.output}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_spectrum(run, cfg):
    if run.spec is None:
        raise SpecParseError("spectrum needs --spec or --alpha-deg/--beta-deg")
    problem = make_problem_from(run, cfg)
    z_lo, z_hi = run.z_window
    spectrum = eigenvalues(problem, run.spec, z_lo, z_hi, run.n_max, cfg)
    emit(spectrum.rows(), run)
    return 0


def cmd_classify(run, cfg, args):
    problem = make_problem_from(run, cfg)
    pack = extension_data_pack(problem, cfg)
    if args.B is not None:
        b11, b12, b22 = args.B
        spec = classify_dim2(pack, AuxB2(b11, b12, b22), cfg)
        rows = {"parameter": f"B=({b11:g}, {b12:g}, {b22:g})", "spec": spec_to_wire(spec), "description": spec.describe()}
    elif args.kappa is not None:
        B = AuxB1(args.kappa, math.inf if args.c is None else args.c)
        spec = classify_dim1(pack, B)
        rows = {"parameter": f"kappa={args.kappa:g}, c={B.c}", "spec": spec_to_wire(spec), "description": spec.describe()}
    else:
        if run.spec is None:
            raise SpecParseError("classify needs --spec, --B or --kappa")
        verdict = is_nonnegative(problem, run.spec, cfg)
        rows = {"spec": spec_to_wire(run.spec), "nonnegative": verdict.nonnegative,
                "lambda_min": verdict.lambda_min, "kernel_dim": verdict.kernel_dim,
                "witness": verdict.witness.params, "verdict": verdict.describe()}
    emit(_key_values(rows), run)
    return 0


def cmd_range(run, cfg, args):
    problem = make_problem_from(run, cfg)
    report = range_report(problem, args.beta_p, cfg)
    emit(_key_values(report), run)
    return 0


def _matrix(text, name):
    try:
        M = np.array(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError) as e:
        raise SpecParseError(f"{name} is not a 2x2 JSON matrix: {e}") from e
    if M.shape != (2, 2):
        raise SpecParseError(f"{name} must be 2x2, got shape {M.shape}")
    return M


def cmd_decompose(run, cfg, args):
    problem = make_problem_from(run, cfg)
    if args.r0 is not None:
        outer = CoupledOuter(tuple(map(tuple, _matrix(args.outer_r, "--outer-r")))) if args.outer_r \
            else Fixed(args.outer_beta)
        R0 = _matrix(args.r0, "--r0")
        d = two_interval_decompose(R0, outer)
        report = {"alpha": d.alpha, "alpha_p": d.alpha_p, "beta": d.beta, "beta_p": d.beta_p,
                  "odd_piece": spec_to_wire(d.odd_spec), "even_piece": spec_to_wire(d.even_spec)}
        if args.verify:
            z_lo, z_hi = run.z_window
            merged = two_interval_spectrum(problem, R0, outer, z_lo, z_hi, run.n_max, cfg).values()
            oracle = two_interval_oracle(problem, R0, outer, z_lo, z_hi, run.n_max, cfg).values()
            report["merged"] = merged
            report["oracle"] = oracle
        emit(_key_values(report), run)
        return 0
    if run.spec is None:
        raise SpecParseError("decompose needs --spec or --r0")
    report = decomposition_report(problem, run.spec, cfg, verify=args.verify, n=run.n_max or 8)
    union = report.pop("union_check", None)
    if union is not None:
        report["union_passed"] = union["passed"]
        report["union_max_deviation"] = union["max_deviation"]
    emit(_key_values(report), run)
    if union is not None and not union["passed"]:
        return 2
    return 0


def cmd_krein(run, cfg):
    problem = make_problem_from(run, cfg)
    pack = extension_data_pack(problem, cfg)
    R = krein_matrix_from_pack(pack)
    report = {"R_K": R.tolist(), "det": float(np.linalg.det(R))}
    if check_symmetry(problem, cfg):
        alpha, alpha_p = krein_half_angles(problem, cfg)
        report["alpha"] = alpha
        report["alpha_p"] = alpha_p
    emit(_key_values(report), run)
    return 0


def cmd_hardy(run, cfg, args):
    rows = []
    length = run.b - run.a
    for gamma in args.gammas:
        row = {"gamma": gamma, "lamb_zero_1": lamb_zero(gamma, 1).value,
               "constant": hardy_constant(gamma, run.a, run.b), "interval_length": length}
        if args.verify:
            report = rayleigh_verify(gamma, run.a, run.b, args.trials, args.seed)
            row["trials"] = report.trials
            row["min_margin"] = report.min_margin
        rows.append(row)
    ordered = sorted(rows, key=lambda r: r["gamma"])
    if any(hi["lamb_zero_1"] < lo["lamb_zero_1"] for lo, hi in zip(ordered, ordered[1:])):
        logger.warning("lambda_(gamma,1) is not monotone in gamma on the sampled orders")
    emit(rows, run)
    return 0


def cmd_selftest(run, cfg, args):
    results = run_selftest(cfg, fast=args.fast)
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 2


def _add_problem_args(parser, default_b=1.0):
    parser.add_argument('--builtin', choices=BUILTINS, default="free", help='Built-in problem family (default: free)')
    parser.add_argument('--problem', help='Path to a JSON problem definition file (overrides --builtin)')
    parser.add_argument('--gamma', type=float, default=0.5, help='Bessel order gamma in [0, 1)')
    parser.add_argument('--a', type=float, default=0.0, help='Left endpoint')
    parser.add_argument('--b', type=float, default=default_b, help='Right endpoint')


def _add_spec_args(parser):
    parser.add_argument('--spec', help='Extension spec as JSON, e.g. {"type":"separated","alpha":3.14159,"beta":3.14159}')
    parser.add_argument('--alpha-deg', type=float, help='Separated spec: alpha in degrees')
    parser.add_argument('--beta-deg', type=float, help='Separated spec: beta in degrees')


def build_parser():
    common_args = argparse.ArgumentParser(add_help=False)
    common_args.add_argument('--tol', type=float, help='Integrator relative tolerance (drives quadrature too)')
    common_args.add_argument('--seed', type=int, default=42, help='Seed for randomized checks (default: 42)')
    common_args.add_argument('--format', choices=("csv", "json"), default="csv", help='Output format (default: csv)')
    common_args.add_argument('--output', type=Path, help='Write results here instead of stdout')
    common_args.add_argument('--debug', action='store_true', help='Enable debug logging')
    common_args.add_argument('--config', help='Path to a JSON numerics config file')
    common_args.add_argument('--progress', action='store_true', help='Show tqdm progress bars during scans')
    common_args.add_argument('--threads', type=int, help='Worker threads for scans (default: SLEXT_NUM_THREADS or 1)')

    parser = argparse.ArgumentParser(prog="slext", description='Nonnegative self-adjoint extensions of Sturm-Liouville operators')
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common_args], help='Eigenvalues of an extension in a window')
    _add_problem_args(p)
    _add_spec_args(p)
    p.add_argument('--z-lo', type=float, default=-100.0, help='Lower end of the scan window')
    p.add_argument('--z-hi', type=float, default=1000.0, help='Upper end of the scan window')
    p.add_argument('--n', type=int, help='Maximum number of eigenvalues, counted with multiplicity')

    p = sub.add_parser("classify", parents=[common_args], help='Nonnegativity verdict or parameter-to-spec map')
    _add_problem_args(p)
    _add_spec_args(p)
    p.add_argument('--B', type=float, nargs=3, metavar=("B11", "B12", "B22"), help='dim W = 2 parameter')
    p.add_argument('--kappa', type=float, help='dim W = 1 parameter kappa')
    p.add_argument('--c', type=float, help='dim W = 1 direction c (omit for infinity)')

    p = sub.add_parser("range", parents=[common_args], help='alpha range for a fixed condition at b')
    _add_problem_args(p)
    p.add_argument('--beta-p', type=float, default=PI, help="Fixed angle beta' at b in radians (default: pi)")

    p = sub.add_parser("decompose", parents=[common_args], help='Half-interval decomposition of a symmetric problem')
    _add_problem_args(p, default_b=2.0)
    _add_spec_args(p)
    p.add_argument('--r0', help='Two-interval inner coupling as a JSON 2x2 matrix (the problem is the half problem)')
    p.add_argument('--outer-beta', type=float, default=PI, help="Two-interval outer angle beta' (default: pi)")
    p.add_argument('--outer-r', help='Two-interval outer coupling as a JSON 2x2 matrix')
    p.add_argument('--verify', action='store_true', help='Check the spectral union numerically')
    p.add_argument('--n', type=int, help='Eigenvalues compared by --verify (default: 8)')
    p.add_argument('--z-lo', type=float, default=-100.0, help='Two-interval scan window lower end')
    p.add_argument('--z-hi', type=float, default=200.0, help='Two-interval scan window upper end')

    p = sub.add_parser("krein", parents=[common_args], help='Krein-von Neumann coupling matrix')
    _add_problem_args(p)

    p = sub.add_parser("hardy", parents=[common_args], help='Lamb constants and the Hardy-type inequality')
    p.add_argument('--gammas', type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75], help='Bessel orders')
    p.add_argument('--a', type=float, default=0.0, help='Left endpoint')
    p.add_argument('--b', type=float, default=1.0, help='Right endpoint')
    p.add_argument('--verify', action='store_true', help='Run the randomized inequality check')
    p.add_argument('--trials', type=int, default=200, help='Random trials for --verify (default: 200)')

    p = sub.add_parser("selftest", parents=[common_args], help='Run the acceptance checks')
    p.add_argument('--fast', action='store_true', help='Skip the slow randomized blocks')
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.debug:
        common.set_debug_logging(True)
    try:
        run = build_run_config(args)
        cfg = load_numerics_config(args.config, **run.numerics)
        if args.tol is not None:
            cfg = cfg.with_tol(args.tol)
        set_config(cfg)
        if run.command == "spectrum":
            return cmd_spectrum(run, cfg)
        if run.command == "classify":
            return cmd_classify(run, cfg, args)
        if run.command == "range":
            return cmd_range(run, cfg, args)
        if run.command == "decompose":
            return cmd_decompose(run, cfg, args)
        if run.command == "krein":
            return cmd_krein(run, cfg)
        if run.command == "hardy":
            return cmd_hardy(run, cfg, args)
        return cmd_selftest(run, cfg, args)
    except SlextError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
