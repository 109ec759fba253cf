"""Quasi-derivative integration of tau u = z u, Wronskians and L^2_r quadrature."""
import math
import numbers
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp

from .common import Side, log_debug
from .config import resolve
from .errors import QuadratureNoConvergence, RangeMismatch, StepUnderflow

LEFT, RIGHT = Side.LEFT, Side.RIGHT


def _scalar_or_array(x, y, y1):
    if np.ndim(x) == 0:
        return float(np.squeeze(y)), float(np.squeeze(y1))
    return np.asarray(y, dtype=float), np.asarray(y1, dtype=float)


class SolutionFn:
    """
    A solution of tau u = z u evaluated as (y, y1) with y1 = p * y'.

    Subclasses implement __call__. Linear combinations are built with the usual
    arithmetic operators and stay SolutionFn instances.
    """

    z = 0.0
    valid_range = (-math.inf, math.inf)
    label = ""

    def __call__(self, x):
        raise NotImplementedError

    def value(self, x):
        return self(x)[0]

    def quasi(self, x):
        return self(x)[1]

    def covers(self, x, slack=0.0):
        lo, hi = self.valid_range
        return lo - slack <= x <= hi + slack

    def __add__(self, other):
        return CombinedSolution([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return CombinedSolution([(1.0, self), (-1.0, other)])

    def __neg__(self):
        return CombinedSolution([(-1.0, self)])

    def __mul__(self, coef):
        if not isinstance(coef, numbers.Real):
            return NotImplemented
        return CombinedSolution([(float(coef), self)])

    __rmul__ = __mul__

    def __repr__(self):
        lo, hi = self.valid_range
        return f"{type(self).__name__}({self.label or '?'}, z={self.z}, range=({lo:g}, {hi:g}))"


class ClosedFormSolution(SolutionFn):
    """Wraps func(x) -> (y, y1); used for endpoint seeds and explicit formulas."""

    def __init__(self, func, valid_range, z=0.0, label=""):
        self._func = func
        self.valid_range = (float(valid_range[0]), float(valid_range[1]))
        self.z = float(z)
        self.label = label

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        y, y1 = self._func(xs)
        return _scalar_or_array(x, np.broadcast_to(y, xs.shape), np.broadcast_to(y1, xs.shape))


class IntegratedSolution(SolutionFn):
    """Dense output of one (y, y1) pair inside a stacked solve_ivp run."""

    def __init__(self, pieces, index=0, z=0.0, label=""):
        ordered = sorted(pieces, key=lambda sol: min(sol.t_min, sol.t_max))
        self._pieces = ordered
        self._lows = np.array([min(s.t_min, s.t_max) for s in ordered])
        self._index = index
        self.valid_range = (float(self._lows[0]), float(max(max(s.t_min, s.t_max) for s in ordered)))
        self.z = float(z)
        self.label = label

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((2, xs.size))
        which = np.clip(np.searchsorted(self._lows, xs, side="right") - 1, 0, len(self._pieces) - 1)
        for k in np.unique(which):
            mask = which == k
            vals = self._pieces[k](xs[mask])
            out[:, mask] = vals[2 * self._index: 2 * self._index + 2]
        return _scalar_or_array(x, out[0], out[1])


class CombinedSolution(SolutionFn):
    def __init__(self, terms, label=""):
        flat = []
        for coef, fn in terms:
            if isinstance(fn, CombinedSolution):
                flat.extend((coef * c, f) for c, f in fn.terms)
            else:
                flat.append((coef, fn))
        zs = {f.z for _, f in flat}
        if len(zs) > 1:
            raise ValueError(f"cannot combine solutions for different z: {sorted(zs)}")
        self.terms = flat
        self.z = zs.pop()
        self.valid_range = (max(f.valid_range[0] for _, f in flat), min(f.valid_range[1] for _, f in flat))
        self.label = label or " + ".join(f"{c:g}*{f.label or '?'}" for c, f in flat)

    def __call__(self, x):
        y = 0.0
        y1 = 0.0
        for coef, fn in self.terms:
            fy, fy1 = fn(x)
            y = y + coef * np.asarray(fy)
            y1 = y1 + coef * np.asarray(fy1)
        return _scalar_or_array(x, y, y1)


class PiecewiseSolution(SolutionFn):
    """Adjacent pieces of one solution, e.g. a closed-form seed continued by integration."""

    def __init__(self, pieces, label=""):
        self._pieces = sorted(pieces, key=lambda f: f.valid_range[0])
        zs = {f.z for f in self._pieces}
        if len(zs) > 1:
            raise ValueError("pieces solve for different z")
        self.z = zs.pop()
        self.valid_range = (self._pieces[0].valid_range[0], max(f.valid_range[1] for f in self._pieces))
        self._uppers = np.array([f.valid_range[1] for f in self._pieces])
        self.label = label

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty((2, xs.size))
        which = np.clip(np.searchsorted(self._uppers, xs, side="left"), 0, len(self._pieces) - 1)
        for k in np.unique(which):
            mask = which == k
            y, y1 = self._pieces[k](xs[mask])
            out[0, mask] = y
            out[1, mask] = y1
        return _scalar_or_array(x, out[0], out[1])


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float

    def __post_init__(self):
        if self.abs_error_estimate < 0:
            object.__setattr__(self, "abs_error_estimate", abs(self.abs_error_estimate))


def wronskian(f, g, x):
    """W(f, g)(x) = f * g1 - f1 * g."""
    for fn in (f, g):
        if not np.all([fn.covers(xi, slack=1e-12) for xi in np.atleast_1d(x)]):
            raise RangeMismatch(f"x={x} outside the valid range of {fn!r}")
    fy, fy1 = f(x)
    gy, gy1 = g(x)
    return fy * gy1 - fy1 * gy


def _tau_rhs(problem, z, count):
    p, q, r = problem.coeffs.p, problem.coeffs.q, problem.coeffs.r

    def rhs(x, state):
        pairs = state.reshape(count, 2)
        out = np.empty_like(pairs)
        out[:, 0] = pairs[:, 1] / p(x)
        out[:, 1] = (q(x) - z * r(x)) * pairs[:, 0]
        return out.ravel()

    return rhs


def _check_inside(problem, x):
    a, b = problem.interval.left, problem.interval.right
    lo = a + problem.seed(LEFT).start_offset
    hi = b - problem.seed(RIGHT).start_offset
    span = b - a
    if not (lo - 1e-12 * span <= x <= hi + 1e-12 * span):
        raise RangeMismatch(f"integration point {x!r} outside [{lo!r}, {hi!r}]")


def _segments(problem, x0, x1):
    lo, hi = min(x0, x1), max(x0, x1)
    cuts = [c for c in problem.breakpoints if lo < c < hi]
    points = [x0] + (cuts if x1 > x0 else cuts[::-1]) + [x1]
    return list(zip(points[:-1], points[1:]))


def _solve(problem, z, x0, x1, inits, config, dense):
    cfg = resolve(config)
    _check_inside(problem, x0)
    _check_inside(problem, x1)
    state = np.asarray(inits, dtype=float).reshape(-1)
    count = state.size // 2
    rhs = _tau_rhs(problem, z, count)
    pieces = []
    for s0, s1 in _segments(problem, x0, x1):
        if s0 == s1:
            continue
        sol = solve_ivp(rhs, (s0, s1), state, method=cfg.ode_method, rtol=cfg.ode_rtol,
                        atol=cfg.ode_atol, dense_output=dense)
        if not sol.success:
            raise StepUnderflow(f"integration of tau u = {z:g} u stopped on [{s0:g}, {s1:g}]: {sol.message}")
        state = sol.y[:, -1]
        if dense:
            pieces.append(sol.sol)
    return state.reshape(count, 2), pieces


def integrate_system(problem, z, x0, x1, inits, config=None, labels=None):
    """
    Integrate several (y, y1) initial values from x0 to x1 in one stacked run.

    Args:
        problem (Problem): coefficients and interval
        z (float): spectral parameter
        x0, x1 (float): start and end points; x1 may lie left of x0
        inits (sequence): (y, y1) pairs at x0
        config (NumericsConfig | None): tolerances and integrator

    Returns:
        list[IntegratedSolution]: one dense solution per initial pair
    """
    _, pieces = _solve(problem, z, x0, x1, inits, config, dense=True)
    if not pieces:
        raise RangeMismatch("empty integration range")
    labels = labels or [""] * len(inits)
    return [IntegratedSolution(pieces, index=k, z=z, label=labels[k]) for k in range(len(inits))]


def integrate_tau(problem, z, x0, x1, init, config=None):
    """Solve y' = y1/p, y1' = (q - z r) y from (x0, init) to x1 with dense output."""
    return integrate_system(problem, z, x0, x1, [init], config)[0]


def shoot(problem, z, x0, x1, inits, config=None):
    """End values only: array of shape (len(inits), 2) at x1."""
    inits = np.asarray(inits, dtype=float).reshape(-1, 2)
    if x0 == x1:
        return inits.copy()
    final, _ = _solve(problem, z, x0, x1, inits, config, dense=False)
    return final


def _quad(func, lo, hi, cfg, epsabs=None):
    epsabs = cfg.quad_abs_tol if epsabs is None else epsabs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        res = quad(func, lo, hi, epsabs=epsabs, epsrel=cfg.quad_rel_tol, limit=cfg.quad_limit, full_output=1)
    value, err = res[0], res[1]
    if len(res) > 3 and err > max(1e3 * epsabs, 1e-6 * abs(value)):
        raise QuadratureNoConvergence(f"quad on [{lo:g}, {hi:g}] reports error {err:.3g}: {res[3][:80]}")
    return value, err


def seed_moments(problem, side, s, config=None):
    """
    Moments of the endpoint seeds over the tail of width s.

    Returns:
        tuple: (int r u^2, int r u uhat, int r uhat^2) over [e, e + s] (or [e - s, e])
    """
    if s <= 0:
        return 0.0, 0.0, 0.0
    key = ("moments", side, float(s))
    cache = problem._cache
    if key in cache:
        return cache[key]
    cfg = resolve(config)
    seed = problem.seed(side)
    e = problem.endpoint(side)
    lo, hi = (e, e + s) if side == LEFT else (e - s, e)
    r = problem.coeffs.r

    def weighted(i, j):
        def integrand(x):
            u, _ = seed.principal_seed(x)
            h, _ = seed.nonprincipal_seed(x)
            vals = (u, h)
            return r(x) * vals[i] * vals[j]
        return integrand

    moments = tuple(_quad(weighted(i, j), lo, hi, cfg, epsabs=cfg.quad_abs_tol * 1e-3)[0]
                    for i, j in ((0, 0), (0, 1), (1, 1)))
    cache[key] = moments
    return moments


def seed_coordinates(problem, side, g, x):
    """
    Coordinates of g in the seed basis at x: (-W(u_e, g)(x), W(uhat_e, g)(x)).

    Their limits at the endpoint are the generalized boundary values.
    """
    seed = problem.seed(side)
    gy, gy1 = g(x)
    u, u1 = seed.principal_seed(x)
    h, h1 = seed.nonprincipal_seed(x)
    return -(u * gy1 - u1 * gy), h * gy1 - h1 * gy


def endpoint_start(problem, side, z, config=None):
    """
    Starting point and data for the two solutions anchored at an endpoint.

    At the left end these are theta, phi with generalized values (1, 0) and (0, 1);
    at the right end the analogous pair for b. Data at the seed offset carry the
    first-order correction from the tail moments.

    Returns:
        tuple: (x0, (y, y1) of the nonprincipal-like solution, (y, y1) of the principal-like one)
    """
    seed = problem.seed(side)
    off = seed.start_offset
    e = problem.endpoint(side)
    x0 = e + off if side == LEFT else e - off
    u, u1 = seed.principal_seed(x0)
    h, h1 = seed.nonprincipal_seed(x0)
    muu, muh, mhh = seed_moments(problem, side, off, config)
    sz = z if side == LEFT else -z
    theta = (h + sz * (h * muh - u * mhh), h1 + sz * (h1 * muh - u1 * mhh))
    phi = (u + sz * (h * muu - u * muh), u1 + sz * (h1 * muu - u1 * muh))
    return x0, theta, phi


def _graded_nodes(problem, lo, hi, cfg, extra=()):
    a, b = problem.interval.left, problem.interval.right
    nodes = {lo, hi}
    nodes.update(c for c in problem.breakpoints if lo < c < hi)
    nodes.update(c for c in extra if lo < c < hi)
    for side, e in ((LEFT, a), (RIGHT, b)):
        seed = problem.seed(side)
        if seed.is_regular:
            continue
        gap = lo - a if side == LEFT else b - hi
        if gap > seed.seed_offset * (1 + 1e-9):
            continue
        floor = max(gap, seed.seed_offset)
        s = 0.5 * (hi - lo)
        while s > floor:
            nodes.add(e + s if side == LEFT else e - s)
            s *= 0.5
        nodes.add(e + floor if side == LEFT else e - floor)
    return sorted(n for n in nodes if lo <= n <= hi)


def l2r_integral(problem, func, lo=None, hi=None, config=None, extra_nodes=()):
    """
    Integral of func over [lo, hi] on a mesh graded geometrically (ratio 1/2)
    toward singular endpoints.

    Returns:
        QuadResult: value and summed error estimate
    """
    cfg = resolve(config)
    a, b = problem.interval.left, problem.interval.right
    lo = a if lo is None else lo
    hi = b if hi is None else hi
    nodes = _graded_nodes(problem, lo, hi, cfg, extra_nodes)
    total = 0.0
    err = 0.0
    share = cfg.quad_abs_tol / max(1, len(nodes) - 1)
    for x0, x1 in zip(nodes[:-1], nodes[1:]):
        val, e = _quad(func, x0, x1, cfg, epsabs=share)
        total += val
        err += e
    return QuadResult(total, err)


def _tail_product(problem, side, f, g, config):
    """Tail of int r f g below the seed offset, from the seed coordinates of f and g."""
    seed = problem.seed(side)
    off = seed.seed_offset
    e = problem.endpoint(side)
    x = e + off if side == LEFT else e - off
    fa, fb = seed_coordinates(problem, side, f, x)
    ga, gb = seed_coordinates(problem, side, g, x)
    muu, muh, mhh = seed_moments(problem, side, off, config)
    return fa * ga * mhh + (fa * gb + fb * ga) * muh + fb * gb * muu


def l2r_inner(problem, f, g, config=None, lo=None, hi=None):
    """
    <f, g> in L^2((lo, hi); r dx), default the whole interval.

    Functions that stop short of a singular endpoint (integrated solutions) get the
    tail below the seed offset from the closed-form seed moments.
    """
    cfg = resolve(config)
    a, b = problem.interval.left, problem.interval.right
    lo = a if lo is None else lo
    hi = b if hi is None else hi
    r = problem.coeffs.r
    tail = 0.0
    inner_lo, inner_hi = lo, hi
    for side, e in ((LEFT, a), (RIGHT, b)):
        seed = problem.seed(side)
        if seed.is_regular or e not in (lo, hi):
            continue
        if f.covers(e) and g.covers(e):
            continue
        tail += _tail_product(problem, side, f, g, cfg)
        if side == LEFT:
            inner_lo = a + seed.seed_offset
        else:
            inner_hi = b - seed.seed_offset

    def integrand(x):
        return r(x) * f.value(x) * g.value(x)

    body = l2r_integral(problem, integrand, inner_lo, inner_hi, cfg)
    if tail:
        log_debug(f"l2r_inner tail contribution {tail:.3e}")
    return QuadResult(body.value + tail, body.abs_error_estimate)


def extend_seed_pair(problem, side, config=None):
    """
    The endpoint seeds as z = 0 solutions on the whole interval.

    Seeds that reach the far end are returned as they are; shorter seeds are
    continued by integration from the edge of their reach.

    Returns:
        tuple: (principal, nonprincipal) SolutionFn pair
    """
    cfg = resolve(config)
    key = ("extended", side, cfg)
    cache = problem._cache
    if key in cache:
        return cache[key]
    seed = problem.seed(side)
    a, b = problem.interval.left, problem.interval.right
    if seed.reach >= b - a:
        pair = (seed.principal_seed, seed.nonprincipal_seed)
    else:
        far = side.other
        edge = a + seed.reach if side == LEFT else b - seed.reach
        stop = problem.endpoint(far) + (problem.seed(far).start_offset * (1 if far == LEFT else -1))
        inits = [seed.principal_seed(edge), seed.nonprincipal_seed(edge)]
        cont_u, cont_h = integrate_system(problem, 0.0, edge, stop, inits, cfg, labels=["u", "uhat"])
        pair = (
            PiecewiseSolution([seed.principal_seed, cont_u], label=f"u_{side.value}"),
            PiecewiseSolution([seed.nonprincipal_seed, cont_h], label=f"uhat_{side.value}"),
        )
        log_debug(f"extended {side.value} seeds by integration from {edge:g} to {stop:g}")
    cache[key] = pair
    return pair
