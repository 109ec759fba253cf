"""
Problems symmetric about the midpoint: half-interval decompositions, the reflected
fundamental system, factorized characteristic functions and two-interval problems.
"""
import math
from dataclasses import dataclass

import numpy as np

from .common import HALF_PI, PI, arccot, as_matrix, check_angle, cot, is_pi, log_debug, logger, parallel_map
from .config import resolve
from .errors import DetNotOne, MidpointValueZero, NotNonnegative, NotReflectionInvariant, NotSymmetric, \
    UnsupportedCoupling
from .extensions import (Coupled, PartialOrderResult, Separated, _order, compare_separated, coupled, parse_spec,
                         spec_to_wire)
from .odecore import LEFT, extend_seed_pair
from .problem import half_problem
from .spectra import FundamentalData, Spectrum, char_separated, characteristic_function, eigenvalues, \
    find_roots, fundamental_system, lowest_eigenvalue

INVARIANCE_TOL = 1e-12
J = np.diag([1.0, -1.0])


def check_symmetry(problem, config=None):
    """True iff p, q, r agree at mirrored probe pairs to symmetry_rtol."""
    cfg = resolve(config)
    interval = problem.interval
    if not interval.is_finite:
        return False
    half = 0.5 * interval.length
    xs = interval.left + half * (np.arange(cfg.probe_count) + 0.5) / cfg.probe_count
    for x in xs:
        m = interval.mirror(x)
        for name, coef in zip("pqr", (problem.coeffs.p, problem.coeffs.q, problem.coeffs.r)):
            f0, f1 = float(coef(x)), float(coef(m))
            if abs(f0 - f1) > cfg.symmetry_rtol * max(abs(f0), abs(f1), 1e-300):
                log_debug(f"{name}({x:.6g}) = {f0:.12g} but {name}({m:.6g}) = {f1:.12g}")
                return False
    return True


def require_symmetric(problem, config=None):
    if not check_symmetry(problem, config):
        raise NotSymmetric(f"{problem.label or 'problem'} is not symmetric about its midpoint")


@dataclass(frozen=True)
class SymmetricInvariance:
    is_invariant: bool
    reason: str


def spec_is_reflection_invariant(spec):
    spec = parse_spec(spec)
    if isinstance(spec, Separated):
        if abs(spec.alpha - spec.beta) <= INVARIANCE_TOL:
            return SymmetricInvariance(True, "alpha = beta")
        return SymmetricInvariance(False, f"alpha={spec.alpha:.12g} differs from beta={spec.beta:.12g}")
    if spec.eta != 0:
        return SymmetricInvariance(False, f"eta={spec.eta:.12g} is nonzero")
    (r11, _), (_, r22) = spec.R
    if abs(r11 - r22) > INVARIANCE_TOL:
        return SymmetricInvariance(False, f"R11={r11:.12g} differs from R22={r22:.12g}")
    return SymmetricInvariance(True, "eta = 0 and R11 = R22")


@dataclass(frozen=True)
class HalfDecomposition:
    """
    T_source on the full interval is unitarily equivalent to the direct sum of the
    two half-interval operators: Dirichlet (odd part) and Neumann (even part) at the midpoint.
    """

    dirichlet_spec: Separated
    neumann_spec: Separated
    source: object

    @property
    def alpha(self):
        return self.dirichlet_spec.alpha

    @property
    def alpha_p(self):
        return self.neumann_spec.alpha

    def reconstruct(self):
        if isinstance(self.source, Separated):
            return Separated(alpha=self.alpha, beta=self.alpha)
        return coupled(reflection_invariant_coupling(self.alpha, self.alpha_p))


def decompose_separated(alpha):
    source = Separated(alpha=alpha, beta=alpha)
    return HalfDecomposition(Separated(alpha=source.alpha, beta=PI), Separated(alpha=source.alpha, beta=HALF_PI),
                             source)


def _invariant_matrix(R):
    if isinstance(R, Coupled):
        if R.eta != 0:
            raise NotReflectionInvariant(f"eta={R.eta:.12g} is nonzero")
        R = R.matrix
    R = as_matrix(R)
    det = R[0, 0] * R[1, 1] - R[0, 1] * R[1, 0]
    if abs(det - 1.0) > 1e-9:
        raise DetNotOne(f"det R = {det:.12g}, expected 1")
    if abs(R[0, 0] - R[1, 1]) > INVARIANCE_TOL * (1.0 + abs(R[0, 0])):
        raise NotReflectionInvariant(f"R11={R[0, 0]:.12g} differs from R22={R[1, 1]:.12g}")
    return R


def decompose_coupled(R):
    """
    (alpha, alpha') of the half-interval pieces for a reflection-invariant coupling.

    Raises:
        NotReflectionInvariant: eta != 0 or R11 != R22
        DetNotOne: det R != 1
    """
    R = _invariant_matrix(R)
    r11, r12, r21 = R[0, 0], R[0, 1], R[1, 0]
    if r12 != 0:
        return arccot((r11 + 1.0) / r12), arccot((r11 - 1.0) / r12)
    # det R = 1 with R12 = 0 and R11 = R22 leaves R11 = +-1
    if r11 < 0:
        return arccot(-r21 / 2.0), PI
    return PI, arccot(r21 / 2.0)


def decompose(spec):
    """HalfDecomposition of a reflection-invariant spec."""
    spec = parse_spec(spec)
    invariance = spec_is_reflection_invariant(spec)
    if not invariance.is_invariant:
        raise NotReflectionInvariant(f"{spec.describe()}: {invariance.reason}")
    if isinstance(spec, Separated):
        return decompose_separated(spec.alpha)
    alpha, alpha_p = decompose_coupled(spec)
    return HalfDecomposition(Separated(alpha=alpha, beta=PI), Separated(alpha=alpha_p, beta=HALF_PI), spec)


def reflection_invariant_coupling(alpha, alpha_p):
    """
    R with R11 = R22 and det R = 1 whose half pieces are (alpha, alpha').

    Raises:
        NotReflectionInvariant: alpha = alpha' (including both pi), which no coupling produces
    """
    if is_pi(alpha) and is_pi(alpha_p):
        raise NotReflectionInvariant("(pi, pi) is the separated Friedrichs pair, not a coupling")
    if is_pi(alpha_p):
        return np.array([[-1.0, 0.0], [-2.0 * cot(alpha), -1.0]])
    if is_pi(alpha):
        return np.array([[1.0, 0.0], [2.0 * cot(alpha_p), 1.0]])
    gap = cot(alpha) - cot(alpha_p)
    if abs(gap) <= 1e-12:
        raise NotReflectionInvariant(f"alpha = alpha' = {alpha:.12g} is a separated pair")
    r12 = 2.0 / gap
    r11 = r12 * cot(alpha) - 1.0
    return np.array([[r11, r12], [(r11 * r11 - 1.0) / r12, r11]])


def cross_paired_specs(alpha, alpha_p):
    """The two couplings whose merged spectra equal those of T_(alpha,alpha) + T_(alpha',alpha')."""
    first = reflection_invariant_coupling(alpha, alpha_p)
    second = reflection_invariant_coupling(alpha_p, alpha)
    return coupled(first), coupled(second)


def _half(problem, cfg):
    key = ("half", cfg)
    if key not in problem._cache:
        problem._cache[key] = half_problem(problem, cfg)
    return problem._cache[key]


def nu_mu(half, config=None):
    """
    Floors of the half pieces: nu = arccot(uhat/u) and mu = arccot(uhat1/u1) at the midpoint.

    T_(alpha, pi) on the half interval is nonnegative iff alpha >= nu, T_(alpha', pi/2) iff alpha' >= mu.

    Raises:
        MidpointValueZero: u or u1 vanishes at the midpoint
    """
    cfg = resolve(config)
    u, h = extend_seed_pair(half, LEFT, cfg)
    mid = half.interval.right
    u_m, u1_m = u(mid)
    h_m, h1_m = h(mid)
    if u_m == 0 or u1_m == 0:
        raise MidpointValueZero(f"u({mid:g}) = {u_m:.6g}, u1({mid:g}) = {u1_m:.6g}")
    return arccot(h_m / u_m), arccot(h1_m / u1_m)


def symmetric_floors(problem, config=None):
    """nu_mu of the half problem of a symmetric problem."""
    cfg = resolve(config)
    require_symmetric(problem, cfg)
    return nu_mu(_half(problem, cfg), cfg)


def _le_by_cases(R, Rh, tol):
    """T_R <= T_Rh for nonnegative reflection-invariant couplings."""
    r11, r12, r21 = R[0, 0], R[0, 1], R[1, 0]
    h11, h12, h21 = Rh[0, 0], Rh[0, 1], Rh[1, 0]
    if r12 != 0 and h12 != 0:
        return (h11 - 1) / h12 <= (r11 - 1) / r12 + tol and (h11 + 1) / h12 <= (r11 + 1) / r12 + tol
    if r12 != 0 and h12 == 0:
        if h11 > 0:
            return h21 / 2 <= (r11 - 1) / r12 + tol
        return -h21 / 2 <= (r11 + 1) / r12 + tol
    if r12 == 0 and h12 == 0:
        if r11 > 0 and h11 > 0:
            return h21 <= r21 + tol
        if r11 < 0 and h11 < 0:
            return r21 <= h21 + tol
    return False


def compare_coupled_symmetric(R, Rh, floors, tol=1e-12):
    """
    Order of two nonnegative reflection-invariant couplings.

    Raises:
        NotNonnegative: a half piece lies below its floor
    """
    nu, mu = floors
    mats = []
    for M in (R, Rh):
        M = _invariant_matrix(M)
        alpha, alpha_p = decompose_coupled(M)
        if alpha < nu - tol or alpha_p < mu - tol:
            raise NotNonnegative(f"half angles ({alpha:.6g}, {alpha_p:.6g}) below floors ({nu:.6g}, {mu:.6g})")
        mats.append(M)
    R, Rh = mats
    return _order(_le_by_cases(R, Rh, tol), _le_by_cases(Rh, R, tol))


def krein_half_angles(problem, config=None):
    """(alpha, alpha') of the Krein coupling: arccot(theta/phi), arccot(theta1/phi1) at the midpoint for z = 0."""
    cfg = resolve(config)
    require_symmetric(problem, cfg)
    fd = fundamental_system(_half(problem, cfg), 0.0, cfg)
    if fd.phi_b == 0 or fd.phip_b == 0:
        raise MidpointValueZero(f"phi = {fd.phi_b:.6g}, phi1 = {fd.phip_b:.6g} at the midpoint")
    return arccot(fd.theta_b / fd.phi_b), arccot(fd.thetap_b / fd.phip_b)


def half_midpoint_data(problem, z, config=None):
    """(theta, theta1, phi, phi1) at the midpoint of the half problem, packed as FundamentalData."""
    cfg = resolve(config)
    return fundamental_system(_half(problem, cfg), z, cfg)


def reflected_boundary_data(half_fd, z=None):
    """
    Full-interval theta~, theta~', phi~, phi~' at b from midpoint values on the half interval.

    theta~(b) and phi~'(b) are both returned as theta phi1 + theta1 phi.
    """
    th, th1 = half_fd.theta_b, half_fd.thetap_b
    ph, ph1 = half_fd.phi_b, half_fd.phip_b
    diag = th * ph1 + th1 * ph
    return FundamentalData(
        z=half_fd.z if z is None else float(z),
        theta_b=diag,
        thetap_b=2.0 * th * th1,
        phi_b=2.0 * ph * ph1,
        phip_b=diag,
    )


def factorized_characteristic(spec, half_fd):
    """Characteristic function of an invariant spec as a product of the half-piece ones."""
    d = decompose(spec)
    alpha, alpha_p = d.alpha, d.alpha_p
    dirichlet = char_separated(half_fd, alpha, PI)
    if isinstance(d.source, Separated):
        return 2.0 * dirichlet * char_separated(half_fd, alpha, HALF_PI)
    R = d.source.matrix
    if R[0, 1] != 0:
        return 2.0 * R[0, 1] / (math.sin(alpha) * math.sin(alpha_p)) * dirichlet * \
            char_separated(half_fd, alpha_p, HALF_PI)
    if R[0, 0] < 0:
        return 4.0 / math.sin(alpha) * dirichlet * char_separated(half_fd, PI, HALF_PI)
    return -4.0 / math.sin(alpha_p) * char_separated(half_fd, PI, PI) * char_separated(half_fd, alpha_p, HALF_PI)


def factorization_residual(problem, spec, z, config=None):
    """|F_full(z) - product of half-piece characteristic functions|, both sides integrated independently."""
    cfg = resolve(config)
    full = characteristic_function(problem, spec, cfg)(z)
    half_fd = half_midpoint_data(problem, z, cfg)
    product = factorized_characteristic(spec, half_fd)
    log_debug(f"factorization at z={z:g}: full {full:.12g}, product {product:.12g}")
    return abs(full - product)


def match_spectra(left, right, atol=1e-7, rtol=1e-9):
    """
    Greedy nearest matching of two eigenvalue multisets.

    Returns:
        tuple: (matched pairs, unmatched from left, unmatched from right)
    """
    pool = sorted(right)
    pairs = []
    unmatched = []
    for x in sorted(left):
        if not pool:
            unmatched.append(x)
            continue
        k = int(np.argmin([abs(x - y) for y in pool]))
        y = pool[k]
        if abs(x - y) <= max(atol, rtol * abs(x)):
            pairs.append((x, y))
            pool.pop(k)
        else:
            unmatched.append(x)
    return pairs, unmatched, pool


def _merge_spectra(spectra, n_max, window):
    merged = sorted((e for s in spectra for e in s.eigenvalues), key=lambda e: e.value)
    kept, total = [], 0
    for e in merged:
        if n_max is not None and total >= n_max:
            break
        kept.append(e)
        total += e.multiplicity
    return Spectrum(kept, window)


def half_spectra(problem, spec, z_lo, z_hi, n_max=None, config=None):
    """Spectra of the Dirichlet and Neumann half pieces, computed concurrently."""
    cfg = resolve(config)
    require_symmetric(problem, cfg)
    d = decompose(spec)
    half = _half(problem, cfg)
    return parallel_map(lambda s: eigenvalues(half, s, z_lo, z_hi, n_max, cfg),
                        [d.dirichlet_spec, d.neumann_spec], cfg)


def decomposed_spectrum(problem, spec, z_lo, z_hi, n_max=None, config=None):
    """Merged spectrum of the two half pieces."""
    return _merge_spectra(half_spectra(problem, spec, z_lo, z_hi, n_max, config), n_max, (z_lo, z_hi))


def decomposed_nonnegative(problem, spec, config=None):
    """Both half pieces above their floors."""
    cfg = resolve(config)
    d = decompose(spec)
    nu, mu = symmetric_floors(problem, cfg)
    tol = cfg.nonneg_tol
    return d.alpha >= nu - tol and d.alpha_p >= mu - tol


def _scan_window(problem, spec, n, cfg):
    base = (PI / problem.interval.length) ** 2
    lowest = lowest_eigenvalue(problem, spec, cfg)
    return min(-16.0 * base, lowest - base), max((n + 3.0) ** 2 * base, lowest + (n + 3.0) ** 2 * base)


def verify_spectral_union(problem, spec, n=8, config=None, atol=1e-7):
    """
    First n eigenvalues of T_spec against the merged half-piece spectra.

    Returns:
        dict: both lists, the largest deviation and whether every entry matched
    """
    cfg = resolve(config)
    z_lo, z_hi = _scan_window(problem, spec, n, cfg)
    full = eigenvalues(problem, spec, z_lo, z_hi, n, cfg).values(n)
    pieces = decomposed_spectrum(problem, spec, z_lo, z_hi, n, cfg).values(n)
    pairs, left, right = match_spectra(full, pieces, atol=atol)
    worst = max((abs(x - y) for x, y in pairs), default=0.0)
    ok = not left and not right and len(full) == n
    if not ok:
        logger.warning(f"spectral union mismatch for {parse_spec(spec).describe()}: unmatched {left} / {right}")
    return {"full": full, "halves": pieces, "max_deviation": worst, "passed": ok}


@dataclass(frozen=True)
class LimitPointLike:
    """Outer ends left free; handled as the Dirichlet-type condition of the seed."""


@dataclass(frozen=True)
class Fixed:
    beta_p: float

    def __post_init__(self):
        check_angle(self.beta_p, "beta'")


@dataclass(frozen=True)
class CoupledOuter:
    Ra: tuple


@dataclass(frozen=True)
class TwoIntervalDecomposition:
    """
    Half pieces of a two-interval operator on (-l, 0) u (0, l); odd functions give
    the first, even functions the second.
    """

    odd_spec: Separated
    even_spec: Separated
    alpha: float
    alpha_p: float
    beta: float
    beta_p: float

    def angles(self):
        return self.alpha, self.alpha_p, self.beta, self.beta_p


def _outer(outer):
    if isinstance(outer, LimitPointLike):
        return Fixed(PI)
    if isinstance(outer, (Fixed, CoupledOuter)):
        return outer
    raise UnsupportedCoupling(f"outer condition {outer!r} is not supported")


def _require_regular_outer(half):
    if not half.seed_b.is_regular:
        raise UnsupportedCoupling("the outer end of the half problem must be regular")


def two_interval_decompose(R0, outer):
    """
    Inner coupling (g~(0-), g~'(0-)) = R0 (g~(0+), g~'(0+)) and an outer condition
    decompose into separated specs on the right half.

    Raises:
        NotReflectionInvariant: R0 or Ra without equal diagonal entries
        UnsupportedCoupling: an outer condition other than LimitPointLike, Fixed or CoupledOuter
    """
    outer = _outer(outer)
    alpha, alpha_p = decompose_coupled(R0)
    if isinstance(outer, Fixed):
        beta = beta_p = outer.beta_p
    else:
        beta, beta_p = decompose_coupled(outer.Ra)
    return TwoIntervalDecomposition(Separated(alpha=alpha, beta=beta), Separated(alpha=alpha_p, beta=beta_p),
                                    alpha, alpha_p, beta, beta_p)


def compare_two_interval(d1, d2, odd_floors=(0.0, 0.0), even_floors=(0.0, 0.0), tol=1e-12):
    """
    Order of two two-interval operators: both half pieces compared with compare_separated.

    Raises:
        NotNonnegative: a half angle lies below its floor
    """
    odd = compare_separated(d1.odd_spec, d2.odd_spec, *odd_floors, tol=tol)
    even = compare_separated(d1.even_spec, d2.even_spec, *even_floors, tol=tol)
    below = (PartialOrderResult.LESS_OR_EQUAL, PartialOrderResult.EQUAL)
    above = (PartialOrderResult.GREATER_OR_EQUAL, PartialOrderResult.EQUAL)
    return _order(odd in below and even in below, odd in above and even in above)


def two_interval_spectrum(half, R0, outer, z_lo, z_hi, n_max=None, config=None):
    """Merged spectra of the odd and even pieces on the half problem."""
    cfg = resolve(config)
    _require_regular_outer(half)
    d = two_interval_decompose(R0, outer)
    spectra = parallel_map(lambda s: eigenvalues(half, s, z_lo, z_hi, n_max, cfg), [d.odd_spec, d.even_spec], cfg)
    return _merge_spectra(spectra, n_max, (z_lo, z_hi))


def two_interval_oracle(half, R0, outer, z_lo, z_hi, n_max=None, config=None):
    """
    Eigenvalues of the glued two-interval problem from a 2x2 matching determinant.

    Solutions are c1 theta + c2 phi on (0, l) and, reflected, d1 theta + d2 phi on (-l, 0);
    the inner coupling gives d = J R0 c and the outer condition closes the system.
    """
    cfg = resolve(config)
    _require_regular_outer(half)
    outer = _outer(outer)
    R0 = _invariant_matrix(R0)
    JR0 = J @ R0
    if isinstance(outer, Fixed):
        cb, sb = math.cos(outer.beta_p), math.sin(outer.beta_p)

        def F(z):
            fd = fundamental_system(half, z, cfg)
            v = np.array([fd.theta_b * cb - fd.thetap_b * sb, fd.phi_b * cb - fd.phip_b * sb])
            return float(np.linalg.det(np.vstack([v, v @ JR0])))
    else:
        Ra = _invariant_matrix(outer.Ra)

        def F(z):
            fd = fundamental_system(half, z, cfg)
            M = np.array([[fd.theta_b, fd.phi_b], [fd.thetap_b, fd.phip_b]])
            return float(np.linalg.det(M - Ra @ J @ M @ JR0))

    found = find_roots(F, z_lo, z_hi, 2.0 * half.interval.length, n_max, cfg)
    return Spectrum(found, (z_lo, z_hi))


def decomposition_report(problem, spec, config=None, verify=False, n=8):
    """JSON-ready summary: source spec, half angles, floors, verdicts and optionally the union check."""
    cfg = resolve(config)
    require_symmetric(problem, cfg)
    spec = parse_spec(spec)
    d = decompose(spec)
    nu, mu = symmetric_floors(problem, cfg)
    tol = cfg.nonneg_tol
    report = {
        "problem": problem.label,
        "source": spec_to_wire(spec),
        "alpha": d.alpha,
        "alpha_p": d.alpha_p,
        "dirichlet_piece": spec_to_wire(d.dirichlet_spec),
        "neumann_piece": spec_to_wire(d.neumann_spec),
        "nu": nu,
        "mu": mu,
        "dirichlet_nonnegative": d.alpha >= nu - tol,
        "neumann_nonnegative": d.alpha_p >= mu - tol,
    }
    if verify:
        report["union_check"] = verify_spectral_union(problem, spec, n, cfg)
    return report
