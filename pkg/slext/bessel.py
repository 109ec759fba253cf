"""
Bessel functions and zeros for the symmetric Bessel-type example, and the Hardy-type
inequality it yields.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.optimize import brentq

from .common import arccot, log_debug, logger
from .errors import BracketFailure, GammaOutOfRange, InequalityViolated
from .odecore import LEFT
from .problem import _bessel_pair, bessel_seed_norms
from .spectra import Eigenvalue, Spectrum

LAMB_SCAN_STEP = 0.05
TRIAL_MODES = 12


def _check_order(gamma):
    if not (0.0 <= gamma < 1.0):
        raise GammaOutOfRange(f"gamma={gamma!r} outside [0, 1)")


def bessel_j(gamma, y):
    return float(special.jv(gamma, y))


def bessel_j_zero(gamma, k):
    """
    k-th positive zero of J_gamma, bracketed around (k + gamma/2 - 1/4) pi.

    Raises:
        BracketFailure: J_gamma does not change sign on the bracket
    """
    _check_order(gamma)
    if k < 1:
        raise ValueError(f"k={k!r} must be >= 1")
    guess = (k + 0.5 * gamma - 0.25) * math.pi
    lo, hi = max(guess - 0.5 * math.pi, 1e-12), guess + 0.5 * math.pi
    f_lo, f_hi = bessel_j(gamma, lo), bessel_j(gamma, hi)
    if f_lo * f_hi > 0:
        raise BracketFailure(f"J_{gamma:g} keeps its sign on [{lo:.6g}, {hi:.6g}] (k={k})")
    return brentq(lambda y: special.jv(gamma, y), lo, hi, xtol=1e-15, rtol=1e-14)


def lamb_G(gamma, y):
    """G(y) = y^-gamma [(1 - 2 gamma) J_gamma(y) + 2 y J_(gamma-1)(y)]."""
    return float(y ** (-gamma) * ((1.0 - 2.0 * gamma) * special.jv(gamma, y) + 2.0 * y * special.jv(gamma - 1.0, y)))


def lamb_G_derivative_form(gamma, y):
    """The same function as y^-gamma (J_gamma(y) + 2 y J_gamma'(y))."""
    return float(y ** (-gamma) * (special.jv(gamma, y) + 2.0 * y * special.jvp(gamma, y)))


@dataclass(frozen=True)
class LambZero:
    gamma: float
    k: int
    value: float
    residual: float


def lamb_zero(gamma, k):
    """
    k-th positive zero of G_gamma by a fixed-step scan and brentq.

    Raises:
        BracketFailure: fewer than k sign changes before (k + 2) pi + 10
    """
    _check_order(gamma)
    if k < 1:
        raise ValueError(f"k={k!r} must be >= 1")
    y_max = (k + 2) * math.pi + 10.0
    y0, g0 = LAMB_SCAN_STEP, lamb_G(gamma, LAMB_SCAN_STEP)
    found = 0
    while y0 < y_max:
        y1 = y0 + LAMB_SCAN_STEP
        g1 = lamb_G(gamma, y1)
        if g0 * g1 <= 0:
            found += 1
            if found == k:
                root = y1 if g1 == 0 else brentq(lambda y: lamb_G(gamma, y), y0, y1, xtol=1e-15, rtol=1e-14)
                return LambZero(gamma, k, root, abs(lamb_G(gamma, root)))
            if g1 == 0:
                # skip past an exact grid hit
                y1 += LAMB_SCAN_STEP
                g1 = lamb_G(gamma, y1)
        y0, g0 = y1, g1
    raise BracketFailure(f"G_{gamma:g} has fewer than {k} zeros below {y_max:.6g}")


def symmetric_bessel_friedrichs_spectrum(gamma, a, b, k_max):
    """
    Friedrichs spectrum of the symmetric Bessel problem on (a, b):
    {4 j_k^2 / L^2} from the Dirichlet half and {4 lambda_k^2 / L^2} from the Neumann half.
    """
    L = b - a
    scale = 4.0 / (L * L)
    entries = []
    for k in range(1, k_max + 1):
        j = bessel_j_zero(gamma, k)
        entries.append(Eigenvalue(scale * j * j, 1, abs(bessel_j(gamma, j))))
        lz = lamb_zero(gamma, k)
        entries.append(Eigenvalue(scale * lz.value ** 2, 1, lz.residual))
    entries.sort(key=lambda e: e.value)
    return Spectrum(entries, (0.0, entries[-1].value if entries else 0.0))


def hardy_constant(gamma, a, b):
    """4 lambda_1^2 / (b - a)^2: the lowest eigenvalue of the Friedrichs extension."""
    lam = lamb_zero(gamma, 1).value
    return 4.0 * lam * lam / (b - a) ** 2


def symmetric_bessel_floors(gamma, a, b):
    """(nu, mu): closed-form floors of the Dirichlet and Neumann half pieces."""
    _check_order(gamma)
    L = b - a
    if gamma == 0:
        log_ratio = math.log(2.0 / L)
        return arccot(log_ratio), arccot(log_ratio - 2.0)
    power = (2.0 / L) ** (2.0 * gamma) / (2.0 * gamma)
    return arccot(power), arccot(power * (1.0 - 2.0 * gamma) / (1.0 + 2.0 * gamma))


def bessel_vhat_closed_form(gamma, length, x):
    """vhat = uhat - (<uhat, u> / ||u||^2) u for the Bessel seeds on (0, length); returns (y, y1)."""
    norm2_u, cross, _ = bessel_seed_norms(gamma, length)
    principal, nonprincipal = _bessel_pair(gamma, 0.0, LEFT)
    u, u1 = principal(np.asarray(x, dtype=float))
    h, h1 = nonprincipal(np.asarray(x, dtype=float))
    c = cross / norm2_u
    return float(h - c * u), float(h1 - c * u1)


def bessel_phi(gamma, z, x, a=0.0):
    """
    The solution with phi~(a) = 0, phi~'(a) = 1:
    2^g Gamma(1+g) z^(-g/2) s^(1/2) J_g(sqrt(z) s), s = x - a, with I_g for z < 0.

    Returns:
        tuple: (y, y1)
    """
    s = float(x) - a
    c = 2.0 ** gamma * special.gamma(1.0 + gamma)
    if z == 0:
        return s ** (0.5 + gamma), (0.5 + gamma) * s ** (gamma - 0.5)
    k = math.sqrt(abs(z))
    if z > 0:
        f, fp = special.jv(gamma, k * s), special.jvp(gamma, k * s)
    else:
        f, fp = special.iv(gamma, k * s), special.ivp(gamma, k * s)
    c *= k ** (-gamma)
    root = math.sqrt(s)
    return float(c * root * f), float(c * (0.5 * f / root + root * k * fp))


@dataclass
class RayleighReport:
    gamma: float
    constant: float
    trials: int
    min_margin: float
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def _sine_sum(coefs, a, L):
    ks = np.arange(1, len(coefs) + 1)

    def f(x):
        return float(np.dot(coefs, np.sin(ks * math.pi * (x - a) / L)))

    return f


def rayleigh_margin(gamma, a, b, coefs, constant):
    """
    int |f'|^2 - (1/4 - gamma^2) int |f|^2 / d^2 - C int |f|^2 for a sine sum f, with the
    scale it is compared against.
    """
    L = b - a
    coefs = np.asarray(coefs, dtype=float)
    ks = np.arange(1, len(coefs) + 1)
    grad = float(np.sum(coefs ** 2 * (ks * math.pi / L) ** 2) * L / 2)
    mass = float(np.sum(coefs ** 2) * L / 2)
    weight = 0.25 - gamma * gamma
    singular = 0.0
    if weight != 0:
        f = _sine_sum(coefs, a, L)
        mid = 0.5 * (a + b)
        left, _ = quad(lambda x: f(x) ** 2 / (x - a) ** 2, a, mid, limit=200, epsabs=1e-13, epsrel=1e-12)
        right, _ = quad(lambda x: f(x) ** 2 / (b - x) ** 2, mid, b, limit=200, epsabs=1e-13, epsrel=1e-12)
        singular = left + right
    margin = grad - weight * singular - constant * mass
    scale = grad + abs(weight) * singular + abs(constant) * mass
    return margin, scale


def rayleigh_verify(gamma, a, b, trial_count=200, seed=42, constant=None, inflate=1.0, raise_on_violation=True):
    """
    Check the Hardy-type inequality on random sine sums; the first trial is sin(pi (x - a)/L).
    Pass raise_on_violation=False to get the violations back in the report instead.

    Raises:
        InequalityViolated: some trial fails (the default)
    """
    _check_order(gamma)
    C = (hardy_constant(gamma, a, b) if constant is None else constant) * inflate
    rng = np.random.default_rng(seed)
    trials = [np.eye(TRIAL_MODES)[0]]
    trials += [rng.uniform(-1.0, 1.0, TRIAL_MODES) for _ in range(max(0, trial_count - 1))]
    report = RayleighReport(gamma, C, len(trials), math.inf)
    for coefs in trials:
        margin, scale = rayleigh_margin(gamma, a, b, coefs, C)
        report.min_margin = min(report.min_margin, margin / scale)
        if margin < -1e-9 * scale:
            report.violations.append(coefs.tolist())
    log_debug(f"rayleigh gamma={gamma:g}: {len(report.violations)} violations, min relative margin {report.min_margin:.3e}")
    if report.violations:
        logger.warning(f"{len(report.violations)} of {report.trials} trials violate the inequality with C={C:.12g}")
        if raise_on_violation:
            raise InequalityViolated(f"C={C:.12g} fails for c={report.violations[0]}", coefficients=report.violations[0])
    return report
