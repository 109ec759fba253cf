"""Sturm-Liouville problems: interval, coefficients, endpoint seeds and built-in examples."""
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from scipy.integrate import quad
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .common import Side, log_debug
from .config import resolve
from .errors import (GammaOutOfRange, InvalidInterval, NonPositiveCoefficient, ProblemFileError,
                     WronskianNotNormalized)
from .odecore import LEFT, RIGHT, ClosedFormSolution, SolutionFn, extend_seed_pair


class EndpointKind(str, Enum):
    REGULAR = "Regular"
    LIMIT_CIRCLE_NONOSC = "LimitCircleNonOsc"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Interval:
    left: float
    right: float

    def __post_init__(self):
        if not self.left < self.right:
            raise InvalidInterval(f"interval needs left < right, got ({self.left}, {self.right})")

    @property
    def length(self):
        return self.right - self.left

    @property
    def midpoint(self):
        return 0.5 * (self.left + self.right)

    @property
    def is_finite(self):
        return math.isfinite(self.left) and math.isfinite(self.right)

    def distance(self, x):
        """Distance to the nearer endpoint."""
        x = np.asarray(x, dtype=float)
        return np.minimum(x - self.left, self.right - x)

    def mirror(self, x):
        return self.left + self.right - np.asarray(x, dtype=float)


@dataclass(frozen=True)
class CoefficientSet:
    p: Callable
    q: Callable
    r: Callable

    def __call__(self, x):
        return self.p(x), self.q(x), self.r(x)


@dataclass(frozen=True)
class EndpointSeed:
    """
    Principal / nonprincipal solutions of tau u = 0 near one endpoint.

    reach is how far from the endpoint the closed forms solve the equation;
    seed_offset is where integration starts at a singular endpoint.
    """

    kind: EndpointKind
    principal_seed: SolutionFn
    nonprincipal_seed: SolutionFn
    seed_offset: float
    reach: float

    @property
    def is_regular(self):
        return self.kind == EndpointKind.REGULAR

    @property
    def start_offset(self):
        return 0.0 if self.is_regular else self.seed_offset


@dataclass(frozen=True)
class Problem:
    interval: Interval
    coeffs: CoefficientSet
    seed_a: EndpointSeed
    seed_b: EndpointSeed
    label: str = ""
    family: str = "custom"
    gamma: Optional[float] = None
    breakpoints: tuple = ()
    _cache: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def seed(self, side):
        return self.seed_a if Side(side) == Side.LEFT else self.seed_b

    def endpoint(self, side):
        return self.interval.left if Side(side) == Side.LEFT else self.interval.right

    @property
    def matching_point(self):
        return self.interval.midpoint


def _const(value):
    value = float(value)

    def fn(x):
        return value + 0.0 * np.asarray(x, dtype=float)

    return fn


def _probe_points(interval, count):
    return interval.left + interval.length * (np.arange(count) + 0.5) / count


def _seed_probe_points(problem, side, count=10):
    seed = problem.seed(side)
    e = problem.endpoint(side)
    lo = max(seed.seed_offset, 1e-300)
    hi = min(seed.reach, problem.interval.length)
    s = np.geomspace(lo, hi, count + 2)[1:-1]
    return e + s if side == LEFT else e - s


def seed_wronskian_error(problem, side, count=10):
    """max |W(uhat, u) - 1| over probe points inside the seed reach."""
    seed = problem.seed(side)
    xs = _seed_probe_points(problem, side, count)
    u, u1 = seed.principal_seed(xs)
    h, h1 = seed.nonprincipal_seed(xs)
    return float(np.max(np.abs(h * u1 - h1 * u - 1.0)))


def make_problem(interval, coeffs, seed_a, seed_b, label="", config=None, **extra):
    """
    Validate coefficients and seeds and build a Problem.

    Raises:
        InvalidInterval: an endpoint is infinite
        NonPositiveCoefficient: p or r not positive at a probe point
        WronskianNotNormalized: W(uhat, u) differs from 1 by more than wronskian_tol
    """
    cfg = resolve(config)
    if not interval.is_finite:
        raise InvalidInterval(f"only finite intervals are implemented, got ({interval.left}, {interval.right})")
    xs = _probe_points(interval, cfg.probe_count)
    for name in ("p", "r"):
        values = np.broadcast_to(getattr(coeffs, name)(xs), xs.shape)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = xs[np.argmin(values)]
            raise NonPositiveCoefficient(f"{name}(x) <= 0 at x={bad:g}")
    problem = Problem(interval, coeffs, seed_a, seed_b, label=label, **extra)
    for side in (LEFT, RIGHT):
        error = seed_wronskian_error(problem, side)
        if not error <= cfg.wronskian_tol:
            raise WronskianNotNormalized(f"{side.value} seeds: |W(uhat, u) - 1| = {error:.3g}")
    return problem


def make_seed(kind, principal, nonprincipal, interval, side, reach=None, seed_offset=None, config=None):
    """Wrap (y, y1) callables as an EndpointSeed valid on the given reach."""
    cfg = resolve(config)
    reach = interval.length if reach is None else reach
    e = interval.left if side == LEFT else interval.right
    valid = (e, e + reach) if side == LEFT else (e - reach, e)
    offset = cfg.seed_offset_factor * interval.length if seed_offset is None else seed_offset

    def as_solution(fn, name):
        if isinstance(fn, SolutionFn):
            return fn
        return ClosedFormSolution(fn, valid, label=f"{name}_{side.value}")

    return EndpointSeed(EndpointKind(kind), as_solution(principal, "u"), as_solution(nonprincipal, "uhat"),
                        offset, reach)


def _bessel_pair(gamma, e, side):
    """u = s^(1/2+g), uhat = (2g)^-1 s^(1/2-g) (or s^(1/2) ln(1/s)) with s = |x - e|."""
    if gamma == 0.5:
        def principal(x):
            s = np.abs(x - e)
            return s, np.ones_like(s)

        def nonprincipal(x):
            s = np.abs(x - e)
            return np.ones_like(s), np.zeros_like(s)
    elif gamma == 0.0:
        def principal(x):
            s = np.abs(x - e)
            return np.sqrt(s), 0.5 / np.sqrt(s)

        def nonprincipal(x):
            s = np.abs(x - e)
            log_inv = np.log(1.0 / s)
            root = np.sqrt(s)
            return root * log_inv, 0.5 * log_inv / root - 1.0 / root
    else:
        def principal(x):
            s = np.abs(x - e)
            return s ** (0.5 + gamma), (0.5 + gamma) * s ** (gamma - 0.5)

        def nonprincipal(x):
            s = np.abs(x - e)
            c = 0.5 / gamma
            return c * s ** (0.5 - gamma), c * (0.5 - gamma) * s ** (-0.5 - gamma)
    if side == LEFT:
        return principal, nonprincipal

    # reflected: u_b(x) = -u(x'), uhat_b(x) = uhat(x'), with quasi-derivatives picking up signs
    def principal_b(x):
        y, y1 = principal(x)
        return -y, y1

    def nonprincipal_b(x):
        y, y1 = nonprincipal(x)
        return y, -y1

    return principal_b, nonprincipal_b


def _check_gamma(gamma):
    if not (0.0 <= gamma < 1.0):
        raise GammaOutOfRange(f"gamma={gamma!r} outside [0, 1)")


def _regular_end_from(seed_pair, point, valid, offset, reach):
    """Seeds at a regular endpoint with u(e)=0, u1(e)=1, uhat(e)=1, uhat1(e)=0."""
    u, h = seed_pair
    um, um1 = u(point)
    hm, hm1 = h(point)
    u_b = -um * h + hm * u
    h_b = um1 * h - hm1 * u
    u_b.label, h_b.label = "u_b", "uhat_b"
    return EndpointSeed(EndpointKind.REGULAR, u_b, h_b, offset, reach)


def builtin_bessel(gamma, a=0.0, d=1.0, config=None):
    """
    -y'' + (gamma^2 - 1/4)(x - a)^-2 y on (a, d): limit circle at a, regular at d.
    """
    _check_gamma(gamma)
    cfg = resolve(config)
    interval = Interval(a, d)
    length = interval.length
    c = gamma * gamma - 0.25
    q = _const(0.0) if c == 0 else (lambda x: c / (np.asarray(x, dtype=float) - a) ** 2)
    coeffs = CoefficientSet(_const(1.0), q, _const(1.0))
    offset = cfg.seed_offset_factor * length
    principal, nonprincipal = _bessel_pair(gamma, a, LEFT)
    kind = EndpointKind.REGULAR if gamma == 0.5 else EndpointKind.LIMIT_CIRCLE_NONOSC
    valid = (a, d)
    seed_a = EndpointSeed(kind,
                          ClosedFormSolution(principal, valid, label="u_a"),
                          ClosedFormSolution(nonprincipal, valid, label="uhat_a"),
                          offset, length)
    seed_b = _regular_end_from((seed_a.principal_seed, seed_a.nonprincipal_seed), d, valid, offset, length)
    return Problem(interval, coeffs, seed_a, seed_b, label=f"bessel(gamma={gamma:g})",
                   family="bessel", gamma=gamma)


def builtin_symmetric_bessel(gamma, a=0.0, b=2.0, config=None):
    """
    -y'' + (gamma^2 - 1/4) d(x)^-2 y with d the distance to the nearer endpoint.
    """
    _check_gamma(gamma)
    cfg = resolve(config)
    interval = Interval(a, b)
    mid = interval.midpoint
    length = interval.length
    c = gamma * gamma - 0.25
    if c == 0:
        q = _const(0.0)
    else:
        def q(x):
            return c / interval.distance(x) ** 2
    coeffs = CoefficientSet(_const(1.0), q, _const(1.0))
    offset = cfg.seed_offset_factor * length
    kind = EndpointKind.REGULAR if gamma == 0.5 else EndpointKind.LIMIT_CIRCLE_NONOSC
    seeds = []
    for side, e, valid in ((LEFT, a, (a, mid)), (RIGHT, b, (mid, b))):
        principal, nonprincipal = _bessel_pair(gamma, e, side)
        seeds.append(EndpointSeed(kind,
                                  ClosedFormSolution(principal, valid, label=f"u_{side.value}"),
                                  ClosedFormSolution(nonprincipal, valid, label=f"uhat_{side.value}"),
                                  offset, 0.5 * length))
    return Problem(interval, coeffs, seeds[0], seeds[1], label=f"symmetric_bessel(gamma={gamma:g})",
                   family="symmetric_bessel", gamma=gamma, breakpoints=(mid,))


def _constant_coefficient_pair(p0, q0, e):
    """Seeds of -(p0 y')' + q0 y = 0 with u(e)=0, u1(e)=1, uhat(e)=1, uhat1(e)=0."""
    if q0 == 0:
        def principal(x):
            s = np.asarray(x, dtype=float) - e
            return s / p0, np.ones_like(s)

        def nonprincipal(x):
            s = np.asarray(x, dtype=float) - e
            return np.ones_like(s), np.zeros_like(s)
    elif q0 > 0:
        k = math.sqrt(q0 / p0)

        def principal(x):
            s = np.asarray(x, dtype=float) - e
            return np.sinh(k * s) / (k * p0), np.cosh(k * s)

        def nonprincipal(x):
            s = np.asarray(x, dtype=float) - e
            return np.cosh(k * s), p0 * k * np.sinh(k * s)
    else:
        k = math.sqrt(-q0 / p0)

        def principal(x):
            s = np.asarray(x, dtype=float) - e
            return np.sin(k * s) / (k * p0), np.cos(k * s)

        def nonprincipal(x):
            s = np.asarray(x, dtype=float) - e
            return np.cos(k * s), -p0 * k * np.sin(k * s)
    return principal, nonprincipal


def builtin_regular(interval, p0=1.0, q0=0.0, r0=1.0, config=None):
    """Constant coefficients; boundary values are the classical g(e) and (p g')(e)."""
    if isinstance(interval, (tuple, list)):
        interval = Interval(*interval)
    if not p0 > 0 or not r0 > 0:
        raise NonPositiveCoefficient(f"p0={p0!r} and r0={r0!r} must be positive")
    cfg = resolve(config)
    coeffs = CoefficientSet(_const(p0), _const(q0), _const(r0))
    offset = cfg.seed_offset_factor * interval.length
    valid = (interval.left, interval.right)
    seeds = []
    for side, e in ((LEFT, interval.left), (RIGHT, interval.right)):
        principal, nonprincipal = _constant_coefficient_pair(p0, q0, e)
        seeds.append(EndpointSeed(EndpointKind.REGULAR,
                                  ClosedFormSolution(principal, valid, label=f"u_{side.value}"),
                                  ClosedFormSolution(nonprincipal, valid, label=f"uhat_{side.value}"),
                                  offset, interval.length))
    label = f"regular(p0={p0:g}, q0={q0:g}, r0={r0:g})"
    return Problem(interval, coeffs, seeds[0], seeds[1], label=label, family="regular")


def builtin_free(a=0.0, b=1.0, config=None):
    return builtin_regular(Interval(a, b), 1.0, 0.0, 1.0, config=config)


def bessel_seed_norms(gamma, length):
    """
    Closed-form (||u||^2, <uhat, u>, ||uhat||^2) for the Bessel seeds on an interval of the given length.
    """
    _check_gamma(gamma)
    L = float(length)
    norm2_u = L ** (2 + 2 * gamma) / (2 + 2 * gamma)
    if gamma == 0:
        log_l = math.log(L)
        cross = 0.25 * L * L * (1.0 - 2.0 * log_l)
        norm2_h = 0.5 * L * L * log_l * log_l - 0.5 * L * L * log_l + 0.25 * L * L
    else:
        cross = L * L / (4 * gamma)
        norm2_h = L ** (2 - 2 * gamma) / ((2 * gamma) ** 2 * (2 - 2 * gamma))
    return norm2_u, cross, norm2_h


def half_problem(problem, config=None):
    """
    Restriction to (a, (a+b)/2) with a regular right end at the midpoint, where
    generalized values are g(mid) and g^[1](mid).
    """
    cfg = resolve(config)
    mid = problem.interval.midpoint
    a = problem.interval.left
    interval = Interval(a, mid)
    u, h = extend_seed_pair(problem, LEFT, cfg)
    reach = min(problem.seed_a.reach, interval.length)
    seed_a = EndpointSeed(problem.seed_a.kind, problem.seed_a.principal_seed, problem.seed_a.nonprincipal_seed,
                          problem.seed_a.seed_offset, reach)
    seed_b = _regular_end_from((u, h), mid, (a, mid), problem.seed_a.seed_offset, interval.length)
    return Problem(interval, problem.coeffs, seed_a, seed_b, label=f"{problem.label} half",
                   family=f"{problem.family}_half", gamma=problem.gamma,
                   breakpoints=tuple(c for c in problem.breakpoints if a < c < mid))


def _shell_integrals(func, e, side, start, levels):
    shells = []
    s = start
    for _ in range(levels):
        lo, hi = (e + 0.5 * s, e + s) if side == LEFT else (e - s, e - 0.5 * s)
        val, _ = quad(lambda x: abs(func(x)), lo, hi, limit=100)
        shells.append(val)
        s *= 0.5
    return np.array(shells)


def _shells_converge(shells, threshold=-0.01):
    """Geometric decay of dyadic shell integrals, judged on the innermost dozen."""
    if np.max(shells) <= 1e-300:
        return True
    tail = np.log2(shells[-12:] + 1e-300)
    slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
    return slope < threshold


def classify_endpoint(problem, which, config=None, levels=36):
    """
    Advisory probe of an endpoint: Regular, LimitCircleNonOsc or Unknown.

    Regular when 1/p, q and r have convergent dyadic shell integrals; limit circle
    nonoscillatory when r u^2 and r uhat^2 do and neither seed changes sign on the probes.
    """
    side = Side(which)
    e = problem.endpoint(side)
    seed = problem.seed(side)
    start = 0.5 * min(seed.reach, problem.interval.length)
    p, q, r = problem.coeffs.p, problem.coeffs.q, problem.coeffs.r
    coefficient_fns = (lambda x: 1.0 / p(x), q, r)
    if all(_shells_converge(_shell_integrals(fn, e, side, start, levels)) for fn in coefficient_fns):
        return EndpointKind.REGULAR
    s = start * 0.5 ** np.arange(levels)
    xs = e + s if side == LEFT else e - s
    for fn in (seed.principal_seed, seed.nonprincipal_seed):
        values = np.asarray(fn.value(xs))
        if not np.all(np.isfinite(values)) or np.any(np.diff(np.sign(values)) != 0):
            log_debug(f"classify_endpoint: {fn.label} changes sign or blows up near {e:g}")
            return EndpointKind.UNKNOWN

        def weighted(x, fn=fn):
            return r(x) * fn.value(x) ** 2

        if not _shells_converge(_shell_integrals(weighted, e, side, start, levels)):
            return EndpointKind.UNKNOWN
    return EndpointKind.LIMIT_CIRCLE_NONOSC


# problem definition files

_X = sympy.Symbol("x", real=True)
_TRANSFORMS = standard_transformations + (convert_xor,)
_NAMES = {"x": _X, "ln": sympy.log, "log": sympy.log, "exp": sympy.exp, "sqrt": sympy.sqrt,
          "pi": sympy.pi, "abs": sympy.Abs}


def parse_expression(text):
    """Parse a coefficient or seed formula in x (+ - * / ^ ln, parentheses, constants)."""
    try:
        expr = parse_expr(str(text), local_dict=dict(_NAMES), transformations=_TRANSFORMS, evaluate=True)
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as e:
        raise ProblemFileError(f"cannot parse expression {text!r}: {e}") from e
    unknown = expr.free_symbols - {_X}
    if unknown:
        raise ProblemFileError(f"expression {text!r} uses unknown names {sorted(map(str, unknown))}")
    return expr


def _numeric(expr):
    fn = sympy.lambdify(_X, expr, modules="numpy")

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(x), dtype=float) + 0.0 * x

    return evaluate


class IntervalModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    a: float
    b: float


class CoefficientsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    p: str = "1"
    q: str = "0"
    r: str = "1"


class SeedModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: EndpointKind = EndpointKind.LIMIT_CIRCLE_NONOSC
    principal: str
    nonprincipal: str
    reach: Optional[float] = None
    seed_offset: Optional[float] = None


class ProblemFile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    label: str = ""
    interval: IntervalModel
    family: Literal["bessel", "symmetric_bessel", "regular", "custom"]
    gamma: Optional[float] = None
    p0: float = 1.0
    q0: float = 0.0
    r0: float = 1.0
    coefficients: Optional[CoefficientsModel] = None
    seeds: Optional[dict[Literal["a", "b"], SeedModel]] = None

    @model_validator(mode="after")
    def _family_fields(self):
        if self.family in ("bessel", "symmetric_bessel") and self.gamma is None:
            raise ValueError(f"family {self.family} needs gamma")
        if self.family == "custom":
            if self.coefficients is None or not self.seeds or set(self.seeds) != {"a", "b"}:
                raise ValueError("family custom needs coefficients and seeds for both a and b")
        return self


def problem_from_definition(data, config=None):
    """Build a Problem from the parsed JSON mapping of a problem definition file."""
    try:
        spec = ProblemFile.model_validate(data)
    except ValidationError as e:
        raise ProblemFileError(str(e)) from e
    a, b = spec.interval.a, spec.interval.b
    if spec.family == "bessel":
        problem = builtin_bessel(spec.gamma, a, b, config)
    elif spec.family == "symmetric_bessel":
        problem = builtin_symmetric_bessel(spec.gamma, a, b, config)
    elif spec.family == "regular":
        problem = builtin_regular(Interval(a, b), spec.p0, spec.q0, spec.r0, config)
    else:
        interval = Interval(a, b)
        exprs = {name: parse_expression(getattr(spec.coefficients, name)) for name in ("p", "q", "r")}
        coeffs = CoefficientSet(*(_numeric(exprs[name]) for name in ("p", "q", "r")))
        seeds = {}
        for key, side in (("a", LEFT), ("b", RIGHT)):
            model = spec.seeds[key]
            pair = []
            for text in (model.principal, model.nonprincipal):
                y = parse_expression(text)
                y1 = sympy.simplify(exprs["p"] * sympy.diff(y, _X))
                fy, fy1 = _numeric(y), _numeric(y1)
                pair.append(lambda x, fy=fy, fy1=fy1: (fy(x), fy1(x)))
            seeds[key] = make_seed(model.kind, pair[0], pair[1], interval, side,
                                   reach=model.reach, seed_offset=model.seed_offset, config=config)
        problem = make_problem(interval, coeffs, seeds["a"], seeds["b"], label=spec.label, config=config)
    if spec.label and spec.family != "custom":
        problem = Problem(problem.interval, problem.coeffs, problem.seed_a, problem.seed_b, label=spec.label,
                          family=problem.family, gamma=problem.gamma, breakpoints=problem.breakpoints)
    return problem


def load_problem_file(path, config=None):
    """Read a JSON problem definition file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ProblemFileError(f"cannot read {path}: {e}") from e
    return problem_from_definition(data, config)
