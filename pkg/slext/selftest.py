"""Acceptance checks run by `slext selftest`."""
import time
from dataclasses import dataclass

import numpy as np

from .bessel import lamb_zero, rayleigh_margin, rayleigh_verify
from .boundary import (boundary_values_at, extension_data_pack, gauge_shift, generalized_boundary_values,
                       lagrange_form, nonprincipal_solution, principal_solution, xi_boundary_check)
from .common import HALF_PI, PI, log_debug
from .config import resolve
from .errors import SlextError
from .extensions import AuxB2, Separated, classify_dim2, coupled, krein_matrix_from_pack, \
    nonneg_range_fixed_beta, range_report
from .odecore import LEFT, RIGHT, l2r_inner
from .problem import builtin_bessel, builtin_free, builtin_symmetric_bessel, half_problem
from .spectra import characteristic_function, eigenvalues, lowest_eigenpair, lowest_eigenvalue
from .symmetric import Fixed, factorization_residual, match_spectra, two_interval_oracle, two_interval_spectrum, \
    verify_spectral_union


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_closed_form_spectrum(cfg, fast=False):
    free = builtin_free(0.0, 1.0, cfg)
    worst = 0.0
    for beta, exact in ((PI, lambda k: (k * PI) ** 2), (HALF_PI, lambda k: ((2 * k - 1) * PI / 2) ** 2)):
        values = eigenvalues(free, Separated(alpha=PI, beta=beta), -10.0, 1100.0, 10, cfg).values(10)
        if len(values) < 10:
            return False, f"found {len(values)} eigenvalues for beta={beta:g}"
        worst = max(worst, max(abs(v - exact(k)) / exact(k) for k, v in enumerate(values, start=1)))
    return worst <= 1e-8, f"max relative error {worst:.2e}"


def check_symmetric_union(cfg, fast=False):
    gammas = (0.5,) if fast else (0.0, 0.3, 0.5, 0.7)
    worst = 0.0
    for gamma in gammas:
        problem = builtin_symmetric_bessel(gamma, 0.0, 2.0, cfg)
        for alpha in (PI, HALF_PI, 2.0):
            report = verify_spectral_union(problem, Separated(alpha=alpha, beta=alpha), 8, cfg)
            if not report["passed"]:
                return False, f"gamma={gamma:g}, alpha={alpha:g}: {report['full']} vs {report['halves']}"
            worst = max(worst, report["max_deviation"])
    return True, f"max deviation {worst:.2e}"


def check_periodic(cfg, fast=False):
    problem = builtin_symmetric_bessel(0.5, 0.0, 2.0, cfg)
    expected = [0.0] + [v for k in range(1, 4) for v in ((k * PI) ** 2,) * 2]
    values = eigenvalues(problem, coupled(np.eye(2)), -5.0, 100.0, 7, cfg).values(7)
    pairs, left, right = match_spectra(values, expected)
    if left or right:
        return False, f"periodic {values} vs {expected}"
    for R in (np.eye(2), -np.eye(2)):
        report = verify_spectral_union(problem, coupled(R), 7, cfg)
        if not report["passed"]:
            return False, f"union fails for R={R.tolist()}"
    return True, "periodic and antiperiodic spectra decompose"


def check_krein(cfg, fast=False):
    free = builtin_free(0.0, 1.0, cfg)
    pack = extension_data_pack(free, cfg)
    R_K = krein_matrix_from_pack(pack)
    if np.max(np.abs(R_K - np.array([[1.0, 1.0], [0.0, 1.0]]))) > 1e-9:
        return False, f"R_K = {R_K.tolist()}"
    low = lowest_eigenpair(free, coupled(R_K), cfg)
    if low.multiplicity != 2 or abs(low.value) > 1e-8:
        return False, f"lowest eigenvalue {low.value:.3e} with multiplicity {low.multiplicity}"
    spec = classify_dim2(pack, AuxB2(0.0, 0.0, 0.0), cfg)
    if np.max(np.abs(spec.matrix - R_K)) > 1e-9:
        return False, f"classify_dim2(0) = {spec.describe()}"
    return True, f"double root at {low.value:.2e}"


def check_range_floor(cfg, fast=False):
    free = builtin_free(0.0, 1.0, cfg)
    report = range_report(free, PI, cfg)
    alpha_min = report["alpha_min"]
    if abs(alpha_min - PI / 4) > 1e-9 or report["difference"] > 1e-8:
        return False, f"alpha_min {alpha_min:.12g}, routes differ by {report['difference']:.2e}"
    at_floor = lowest_eigenvalue(free, Separated(alpha=alpha_min, beta=PI), cfg)
    above = lowest_eigenvalue(free, Separated(alpha=alpha_min + 0.1, beta=PI), cfg)
    ok = abs(at_floor) <= 1e-7 and above > 0
    return ok, f"lambda_min at floor {at_floor:.2e}, above {above:.4g}"


def check_ordering(cfg, fast=False):
    free = builtin_free(0.0, 1.0, cfg)
    pack = extension_data_pack(free, cfg)
    alpha_min = nonneg_range_fixed_beta(pack, PI)
    lows = [lowest_eigenvalue(free, Separated(alpha=a, beta=PI), cfg) for a in np.linspace(alpha_min, PI, 5)]
    drops = [b - a for a, b in zip(lows, lows[1:]) if b < a - 1e-9]
    return not drops, f"lambda_min along alpha: {', '.join(f'{v:.6g}' for v in lows)}"


def check_factorization(cfg, fast=False):
    free = builtin_free(0.0, 2.0, cfg)
    zs = np.linspace(-5.0, 60.0, 9 if fast else 25)
    specs = [Separated(alpha=a, beta=a) for a in (PI, HALF_PI, 2.2)]
    specs += [coupled(-np.eye(2)), coupled([[0.0, 1.0], [-1.0, 0.0]]), coupled(np.eye(2))]
    worst = 0.0
    for spec in specs:
        F = characteristic_function(free, spec, cfg)
        for z in zs:
            res = factorization_residual(free, spec, z, cfg)
            worst = max(worst, res / (1.0 + abs(F(z))))
    return worst <= 1e-8, f"max scaled residual {worst:.2e}"


def check_lamb_zeros(cfg, fast=False):
    for k in range(1, 6):
        if abs(lamb_zero(0.5, k).value - (2 * k - 1) * PI / 2) > 1e-9 * k * PI:
            return False, f"lambda_(1/2,{k}) off"
    worst = 0.0
    for gamma in (0.0, 0.3, 0.7):
        half = builtin_bessel(gamma, 0.0, 1.0, cfg)
        low = lowest_eigenvalue(half, Separated(alpha=PI, beta=HALF_PI), cfg)
        expected = 4.0 * lamb_zero(gamma, 1).value ** 2 / 4.0
        worst = max(worst, abs(low - expected))
    return worst <= 1e-7, f"max deviation from 4 lambda^2 / L^2: {worst:.2e}"


def check_hardy(cfg, fast=False):
    margin, scale = rayleigh_margin(0.5, 0.0, 1.0, [1.0], PI ** 2)
    if abs(margin) > 1e-9 * scale:
        return False, f"sin(pi x) margin {margin:.2e}"
    if not rayleigh_verify(0.5, 0.0, 1.0, trial_count=20, seed=42, inflate=1.01,
                          raise_on_violation=False).violations:
        return False, "inflated constant produced no violation"
    if fast:
        return True, "extremal trial and sharpness checked; random trials skipped"
    for gamma in (0.0, 0.5):
        report = rayleigh_verify(gamma, 0.0, 1.0, trial_count=200, seed=42, raise_on_violation=False)
        if not report.passed:
            return False, f"gamma={gamma:g}: {len(report.violations)} violations"
    return True, "200 trials pass for gamma in {0, 0.5}"


def check_two_interval(cfg, fast=False):
    half = half_problem(builtin_symmetric_bessel(0.3, 0.0, 2.0, cfg), cfg)
    worst = 0.0
    for R0 in (np.eye(2), -np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]])):
        z_lo, z_hi = -50.0, 120.0
        merged = two_interval_spectrum(half, R0, Fixed(PI), z_lo, z_hi, config=cfg).values()
        oracle = two_interval_oracle(half, R0, Fixed(PI), z_lo, z_hi, config=cfg).values()
        pairs, left, right = match_spectra(merged, oracle, atol=1e-6)
        if left or right:
            return False, f"R0={R0.tolist()}: {merged} vs {oracle}"
        worst = max([worst] + [abs(x - y) for x, y in pairs])
    return True, f"max deviation {worst:.2e}"


def _lagrange_residual(problem, cfg, z1, z2):
    f = principal_solution(problem, LEFT, z1, cfg)
    g = nonprincipal_solution(problem, RIGHT, z2, cfg)
    bf = generalized_boundary_values(problem, f, cfg)
    bg = generalized_boundary_values(problem, g, cfg)
    lhs = (z1 - z2) * l2r_inner(problem, f, g, cfg).value
    rhs = lagrange_form(bf, bg, RIGHT) - lagrange_form(bf, bg, LEFT)
    return abs(lhs - rhs) / (1.0 + abs(rhs))


def check_boundary_infrastructure(cfg, fast=False):
    worst = 0.0
    for problem in (builtin_free(0.0, 1.0, cfg), builtin_bessel(0.3, 0.0, 1.0, cfg)):
        worst = max(worst, _lagrange_residual(problem, cfg, 3.0, -2.0))
        g = principal_solution(problem, RIGHT, 5.0, cfg)
        ga, gpa = boundary_values_at(problem, LEFT, g, cfg)
        C = 0.7
        _, shifted = boundary_values_at(gauge_shift(problem, C), LEFT, g, cfg)
        worst = max(worst, abs(shifted - (gpa - C * ga)) / (1.0 + abs(gpa)))
        worst = max(worst, xi_boundary_check(problem, config=cfg).max)
    return worst <= 1e-8, f"max residual {worst:.2e}"


CHECKS = [
    ("closed-form spectrum", check_closed_form_spectrum),
    ("symmetric union", check_symmetric_union),
    ("coupled decomposition", check_periodic),
    ("krein extension", check_krein),
    ("range floor", check_range_floor),
    ("ordering", check_ordering),
    ("factorization", check_factorization),
    ("lamb zeros", check_lamb_zeros),
    ("hardy inequality", check_hardy),
    ("two-interval", check_two_interval),
    ("boundary values", check_boundary_infrastructure),
]


def run_selftest(config=None, fast=False):
    """Run every check; failures and library errors are reported, never raised."""
    cfg = resolve(config)
    results = []
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            passed, detail = check(cfg, fast)
        except SlextError as e:
            passed, detail = False, e.one_line()
        elapsed = time.perf_counter() - start
        log_debug(f"selftest {name}: {'pass' if passed else 'FAIL'} in {elapsed:.1f}s")
        results.append(CheckResult(name, bool(passed), detail, elapsed))
    return results


def format_results(results):
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.seconds:6.1f}s  {r.detail}" for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
