"""Principal / nonprincipal solutions, generalized boundary values and the extension data pack."""
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .common import Side, log_debug, logger
from .config import resolve
from .errors import (DenominatorZero, ExtrapolationDivergence, RangeMismatch, VanishingPrincipal,
                     ZeroFriedrichsEigenvalue)
from .odecore import (LEFT, RIGHT, ClosedFormSolution, _quad, endpoint_start, extend_seed_pair,
                      integrate_system, l2r_inner, seed_coordinates, seed_moments, wronskian)


@dataclass(frozen=True)
class BoundaryQuadruple:
    g_a: float
    gp_a: float
    g_b: float
    gp_b: float

    def at(self, side):
        return (self.g_a, self.gp_a) if Side(side) == LEFT else (self.g_b, self.gp_b)


@dataclass(frozen=True)
class DataPack:
    """
    The seven scalars that parameterize every nonnegative extension.

    u_b, up_b: generalized values of u_a at b; v_b, vp_b: those of vhat_a at b;
    vp_a: vhat_a'(a); norm2_u, norm2_v: squared L^2_r norms.
    """

    u_b: float
    up_b: float
    v_b: float
    vp_b: float
    vp_a: float
    norm2_u: float
    norm2_v: float

    @property
    def uhat_b(self):
        """Generalized value of uhat_a at b."""
        return self.v_b - self.vp_a * self.u_b

    @property
    def uhatp_b(self):
        return self.vp_b - self.vp_a * self.up_b

    @property
    def c_friedrichs(self):
        return -self.v_b / self.u_b

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EtaSolution:
    fn: object
    norm2: float
    eta_a: float
    etap_a: float


@dataclass(frozen=True)
class XiResiduals:
    xi_a: float
    xi_b: float
    xihat_a: float
    xihat_b: float

    @property
    def max(self):
        return max(self.xi_a, self.xi_b, self.xihat_a, self.xihat_b)


@dataclass(frozen=True)
class BSideData:
    """Values at a of the b-side seeds, plus their Gram entries."""

    u_a: float
    up_a: float
    uhat_a: float
    uhatp_a: float
    norm2_u: float
    cross: float
    norm2_uhat: float


def _far_stop(problem, side):
    far = side.other
    sign = 1.0 if far == LEFT else -1.0
    return problem.endpoint(far) + sign * problem.seed(far).start_offset


def principal_solution(problem, endpoint, lam=0.0, config=None):
    """
    Principal solution at an endpoint, continued across the interval.

    For lam = 0 this is the closed-form seed (extended by integration when its
    reach is short); otherwise it is integrated from the seed offset with
    first-order corrected starting data.
    """
    side = Side(endpoint)
    cfg = resolve(config)
    if lam == 0:
        return extend_seed_pair(problem, side, cfg)[0]
    x0, _, phi = endpoint_start(problem, side, lam, cfg)
    return integrate_system(problem, lam, x0, _far_stop(problem, side), [phi], cfg,
                            labels=[f"u_{side.value}({lam:g})"])[0]


def nonprincipal_solution(problem, endpoint, lam=0.0, config=None):
    side = Side(endpoint)
    cfg = resolve(config)
    if lam == 0:
        return extend_seed_pair(problem, side, cfg)[1]
    x0, theta, _ = endpoint_start(problem, side, lam, cfg)
    return integrate_system(problem, lam, x0, _far_stop(problem, side), [theta], cfg,
                            labels=[f"uhat_{side.value}({lam:g})"])[0]


def nonprincipal_from_principal(problem, u, endpoint, c_ref, config=None):
    """
    uhat(x) = u(x) * int_x^c_ref dt / (p u^2), normalized so W(uhat, u) = 1.

    The formula is the same at both ends; to the right of c_ref the integral
    changes sign and the Wronskian stays 1.

    Raises:
        VanishingPrincipal: u has a zero between the endpoint and c_ref
    """
    side = Side(endpoint)
    cfg = resolve(config)
    e = problem.endpoint(side)
    lo_u, hi_u = u.valid_range
    if side == LEFT:
        start = max(lo_u, e + problem.seed(side).seed_offset)
        window = (max(lo_u, e), c_ref)
    else:
        start = min(hi_u, e - problem.seed(side).seed_offset)
        window = (c_ref, min(hi_u, e))
    probes = np.linspace(start, c_ref, 257)
    values = np.asarray(u.value(probes))
    if np.any(values == 0) or np.any(np.sign(values) != np.sign(values[-1])):
        raise VanishingPrincipal(f"{u.label or 'u'} vanishes between {start:g} and {c_ref:g}")
    p = problem.coeffs.p

    def integrand(t):
        return 1.0 / (p(t) * u.value(t) ** 2)

    def evaluate(xs):
        xs = np.atleast_1d(xs)
        ys = np.empty_like(xs)
        y1s = np.empty_like(xs)
        for i, x in enumerate(xs):
            integral, _ = _quad(integrand, x, c_ref, cfg)
            uy, uy1 = u(x)
            ys[i] = uy * integral
            y1s[i] = uy1 * integral - 1.0 / uy
        return ys, y1s

    return ClosedFormSolution(evaluate, window, z=u.z, label=f"uhat_from_{u.label or 'u'}")


def _sample_window(problem, side, g, cfg):
    """Largest and smallest distances from the endpoint at which g and the seeds are both usable."""
    seed = problem.seed(side)
    e = problem.endpoint(side)
    lo, hi = g.valid_range
    gap = (lo - e) if side == LEFT else (e - hi)
    s_min = max(gap, seed.seed_offset if not seed.is_regular else 0.0, 0.0)
    s_max = 0.5 * min(seed.reach, problem.interval.length)
    span = (hi - e) if side == LEFT else (e - lo)
    s_max = min(s_max, span)
    if s_max <= s_min:
        raise RangeMismatch(f"{g!r} does not reach the seed region at {e:g}")
    return s_min, s_max


def _corrected_coordinates(problem, side, g, s, cfg):
    """Seed coordinates at distance s, corrected to first order in z by the tail moments."""
    e = problem.endpoint(side)
    x = e + s if side == LEFT else e - s
    cu, ch = seed_coordinates(problem, side, g, x)
    if g.z == 0:
        return cu, ch
    muu, muh, mhh = seed_moments(problem, side, s, cfg)
    sz = g.z if side == LEFT else -g.z
    m = np.array([[1.0 + sz * muh, sz * muu], [-sz * mhh, 1.0 - sz * muh]])
    return tuple(np.linalg.solve(m, np.array([cu, ch])))


def _aitken(seq):
    x0, x1, x2 = seq[-3:]
    den = x2 - 2 * x1 + x0
    if den == 0:
        return x2
    return x2 - (x2 - x1) ** 2 / den


def boundary_values_at(problem, side, g, config=None):
    """
    (g~(e), g~'(e)) at one endpoint; see generalized_boundary_values.

    At z = 0 the Wronskians against the seeds are constant, so one sample at s_max is exact.
    Otherwise the corrected coordinates are sampled at s_max 2^-k until two successive values
    agree. When they do not, Aitken delta-squared on the last three samples is used: the
    Richardson step for a geometric error whose order is read off the samples, since the
    order near a singular end depends on gamma and carries log factors at gamma = 0.

    Raises:
        ExtrapolationDivergence: the accelerated limits do not settle either
    """
    side = Side(side)
    cfg = resolve(config)
    seed = problem.seed(side)
    e = problem.endpoint(side)
    if seed.is_regular and g.covers(e) and seed.principal_seed.covers(e):
        return tuple(float(v) for v in seed_coordinates(problem, side, g, e))
    s_min, s_max = _sample_window(problem, side, g, cfg)
    if g.z == 0:
        return tuple(float(v) for v in _corrected_coordinates(problem, side, g, s_max, cfg))
    tol = cfg.extrapolation_tol
    distances = [s_max * 0.5 ** k for k in range(cfg.extrapolation_levels + 1) if s_max * 0.5 ** k > s_min]
    if s_min > 0 and (not distances or distances[-1] > s_min):
        distances.append(s_min)
    estimates = []
    for s in distances:
        estimates.append(np.asarray(_corrected_coordinates(problem, side, g, s, cfg)))
        if len(estimates) >= 2:
            diff = np.max(np.abs(estimates[-1] - estimates[-2]))
            if diff <= tol * (1.0 + np.max(np.abs(estimates[-1]))):
                return tuple(float(v) for v in estimates[-1])
    if len(estimates) >= 4:
        arr = np.array(estimates)
        last = np.array([_aitken(arr[:, k]) for k in range(2)])
        prev = np.array([_aitken(arr[:-1, k]) for k in range(2)])
        if np.max(np.abs(last - prev)) <= 10 * tol * (1.0 + np.max(np.abs(last))):
            log_debug(f"boundary values at {e:g} settled after Aitken acceleration")
            return tuple(float(v) for v in last)
    if len(estimates) >= 2 and distances[-1] == s_min > 0:
        # sampled down to where g starts; the corrected coordinates there are the best available
        diff = np.max(np.abs(estimates[-1] - estimates[-2]))
        if diff <= 1e3 * tol * (1.0 + np.max(np.abs(estimates[-1]))):
            return tuple(float(v) for v in estimates[-1])
    raise ExtrapolationDivergence(f"Wronskian limits of {g.label or 'g'} at {e:g} did not settle")


def generalized_boundary_values(problem, g, config=None):
    """
    g~(a) = -lim W(u_a, g), g~'(a) = lim W(uhat_a, g), and the same at b with the b seeds.

    Limits are taken on x_k = e +- h 2^-k. For g solving tau g = z g with z != 0,
    each sample is corrected to first order by the seed moments over (e, x_k), so the
    sequence settles long before the seed offset.

    Returns:
        BoundaryQuadruple: generalized values at a and b
    """
    cfg = resolve(config)
    g_a, gp_a = boundary_values_at(problem, LEFT, g, cfg)
    g_b, gp_b = boundary_values_at(problem, RIGHT, g, cfg)
    return BoundaryQuadruple(g_a, gp_a, g_b, gp_b)


def lagrange_form(bq_g, bq_h, side):
    """g~ h~' - g~' h~ at an endpoint; equals W(g, h) there."""
    g, gp = bq_g.at(side)
    h, hp = bq_h.at(side)
    return g * hp - gp * h


def distinguished_nonprincipal(problem, config=None):
    """vhat_a = uhat_a - (<uhat_a, u_a> / ||u_a||^2) u_a, orthogonal to u_a."""
    return _distinguished(problem, resolve(config))[0]


def _distinguished(problem, cfg):
    key = ("vhat", cfg)
    if key in problem._cache:
        return problem._cache[key]
    u, h = extend_seed_pair(problem, LEFT, cfg)
    norm2_u = l2r_inner(problem, u, u, cfg).value
    cross = l2r_inner(problem, h, u, cfg).value
    norm2_h = l2r_inner(problem, h, h, cfg).value
    vp_a = -cross / norm2_u
    vhat = h + vp_a * u
    vhat.label = "vhat_a"
    residual = l2r_inner(problem, vhat, u, cfg).value
    if abs(residual) > 1e-9 * math.sqrt(norm2_u * norm2_h):
        logger.warning(f"<vhat_a, u_a> = {residual:.3e}; quadrature may be under-resolved")
    result = (vhat, norm2_u, cross, norm2_h, vp_a)
    problem._cache[key] = result
    return result


def extension_data_pack(problem, config=None):
    """
    Assemble (u_b, up_b, v_b, vp_b, vp_a, ||u||^2, ||vhat||^2).

    Raises:
        ZeroFriedrichsEigenvalue: u~_a(b) vanishes, so 0 is a Friedrichs eigenvalue
    """
    cfg = resolve(config)
    key = ("pack", cfg)
    if key in problem._cache:
        return problem._cache[key]
    u, h = extend_seed_pair(problem, LEFT, cfg)
    vhat, norm2_u, cross, norm2_h, vp_a = _distinguished(problem, cfg)
    u_b, up_b = boundary_values_at(problem, RIGHT, u, cfg)
    if abs(u_b) < 1e-12:
        raise ZeroFriedrichsEigenvalue(f"u~_a(b) = {u_b:.3e}")
    h_b, hp_b = boundary_values_at(problem, RIGHT, h, cfg)
    norm2_v = l2r_inner(problem, vhat, vhat, cfg).value
    pack = DataPack(u_b=u_b, up_b=up_b, v_b=h_b + vp_a * u_b, vp_b=hp_b + vp_a * up_b, vp_a=vp_a,
                    norm2_u=norm2_u, norm2_v=norm2_v)
    log_debug(f"data pack for {problem.label}: {pack}")
    problem._cache[key] = pack
    return pack


def _eta_ratio(pack, beta_p):
    cb, sb = math.cos(beta_p), math.sin(beta_p)
    num = cb * pack.uhat_b - sb * pack.uhatp_b
    den = cb * pack.u_b - sb * pack.up_b
    if abs(den) <= 1e-12 * (abs(num) + 1.0):
        raise DenominatorZero(f"0 is an eigenvalue of T_(pi, beta'={beta_p:g})")
    return num / den


def eta_beta(problem, beta_p, config=None):
    """
    eta_beta'(x) = uhat_a(x) - ratio * u_a(x), the solution with eta~(a) = 1 that
    satisfies the beta' condition at b.
    """
    cfg = resolve(config)
    pack = extension_data_pack(problem, cfg)
    ratio = _eta_ratio(pack, beta_p)
    u, h = extend_seed_pair(problem, LEFT, cfg)
    eta = h - ratio * u
    eta.label = f"eta({beta_p:g})"
    norm2 = l2r_inner(problem, eta, eta, cfg).value
    return EtaSolution(eta, norm2, 1.0, -ratio)


def xi_boundary_check(problem, pack=None, config=None):
    """
    Residuals of the boundary identities for xi = T_F^-1 u_a and xihat = T_F^-1 vhat_a.

    xi = vhat(x) int_a^x r u f + u(x) [int_x^b r vhat f - (v_b/u_b) int_a^b r u f]
    solves tau xi = f with Friedrichs conditions; its quasi-derivative values at the
    endpoints follow from W(s, xi)' = -r s f evaluated from the midpoint.
    """
    cfg = resolve(config)
    pack = pack or extension_data_pack(problem, cfg)
    a, b = problem.interval.left, problem.interval.right
    m = problem.interval.midpoint
    u, h = extend_seed_pair(problem, LEFT, cfg)
    _, hb = extend_seed_pair(problem, RIGHT, cfg)
    vhat = _distinguished(problem, cfg)[0]
    ratio = pack.v_b / pack.u_b

    def quasi_values(f):
        left_u = l2r_inner(problem, u, f, cfg, lo=a, hi=m).value
        right_u = l2r_inner(problem, u, f, cfg, lo=m, hi=b).value
        right_v = l2r_inner(problem, vhat, f, cfg, lo=m, hi=b).value
        coef_v = left_u
        coef_u = right_v - ratio * (left_u + right_u)
        vy, vy1 = vhat(m)
        uy, uy1 = u(m)
        xi_m = (vy * coef_v + uy * coef_u, vy1 * coef_v + uy1 * coef_u)
        hy, hy1 = h(m)
        hby, hby1 = hb(m)
        at_a = hy * xi_m[1] - hy1 * xi_m[0] + l2r_inner(problem, h, f, cfg, lo=a, hi=m).value
        at_b = hby * xi_m[1] - hby1 * xi_m[0] - l2r_inner(problem, hb, f, cfg, lo=m, hi=b).value
        return at_a, at_b

    xi_a, xi_b = quasi_values(u)
    xh_a, xh_b = quasi_values(vhat)
    return XiResiduals(
        xi_a=abs(xi_a + ratio * pack.norm2_u),
        xi_b=abs(xi_b + pack.norm2_u / pack.u_b),
        xihat_a=abs(xh_a - pack.norm2_v),
        xihat_b=abs(xh_b),
    )


def vhat_norm_report(problem, config=None):
    """||vhat_a||^2 by quadrature and by projection, next to the printed general formula."""
    cfg = resolve(config)
    vhat, norm2_u, cross, norm2_h, _ = _distinguished(problem, cfg)
    quadrature = l2r_inner(problem, vhat, vhat, cfg).value
    projection = norm2_h - cross * cross / norm2_u
    printed = norm2_h + (cross - 2.0) * cross / norm2_u
    return {"quadrature": quadrature, "projection": projection, "printed_formula": printed,
            "printed_minus_projection": printed - projection}


def gauge_shift(problem, C):
    """The same problem with the nonprincipal seed at a replaced by uhat_a + C u_a."""
    seed = problem.seed_a
    shifted = seed.nonprincipal_seed + C * seed.principal_seed
    shifted.label = f"uhat_a{C:+g}u_a"
    new_seed = dataclasses.replace(seed, nonprincipal_seed=shifted)
    return dataclasses.replace(problem, seed_a=new_seed, label=f"{problem.label} gauge{C:+g}")


def b_side_data(problem, config=None):
    """Generalized values at a of the b seeds, and their L^2_r Gram entries."""
    cfg = resolve(config)
    key = ("bside", cfg)
    if key in problem._cache:
        return problem._cache[key]
    ub, hb = extend_seed_pair(problem, RIGHT, cfg)
    u_a, up_a = boundary_values_at(problem, LEFT, ub, cfg)
    h_a, hp_a = boundary_values_at(problem, LEFT, hb, cfg)
    data = BSideData(u_a, up_a, h_a, hp_a,
                     l2r_inner(problem, ub, ub, cfg).value,
                     l2r_inner(problem, hb, ub, cfg).value,
                     l2r_inner(problem, hb, hb, cfg).value)
    problem._cache[key] = data
    return data


def check_seed_wronskian(problem, side, x, config=None):
    """W(uhat, u) at x for the (extended) seeds of one endpoint."""
    u, h = extend_seed_pair(problem, Side(side), resolve(config))
    return wronskian(h, u, x)
