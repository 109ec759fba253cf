"""Fundamental system, characteristic functions and eigenvalue scans."""
import cmath
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .common import PI, log_debug, logger, parallel_map
from .config import resolve
from .errors import DetNotOne, ScanExhausted, ScanTooCoarse
from .extensions import Separated, parse_spec
from .odecore import LEFT, RIGHT, endpoint_start, shoot


@dataclass(frozen=True)
class FundamentalData:
    """Generalized values at b of theta, phi with (theta~, theta~', phi~, phi~')(a) = (1, 0, 0, 1)."""

    z: float
    theta_b: float
    thetap_b: float
    phi_b: float
    phip_b: float

    @property
    def det(self):
        return self.theta_b * self.phip_b - self.thetap_b * self.phi_b


@dataclass(frozen=True)
class Eigenvalue:
    value: float
    multiplicity: int
    residual: float


@dataclass
class Spectrum:
    eigenvalues: list = field(default_factory=list)
    scan_window: tuple = (0.0, 0.0)

    def values(self, n_max=None):
        """Eigenvalues repeated by multiplicity."""
        flat = [e.value for e in self.eigenvalues for _ in range(e.multiplicity)]
        return flat if n_max is None else flat[:n_max]

    def rows(self):
        return [{"index": i, "eigenvalue": e.value, "multiplicity": e.multiplicity, "residual": e.residual}
                for i, e in enumerate(self.eigenvalues, start=1)]

    def to_json(self):
        return {"scan_window": list(self.scan_window), "eigenvalues": self.rows()}


def write_spectrum_csv(spectrum, path):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "eigenvalue", "multiplicity", "residual"])
        for row in spectrum.rows():
            writer.writerow([row["index"], f"{row['eigenvalue']:.15g}", row["multiplicity"], f"{row['residual']:.3e}"])


def write_spectrum_json(spectrum, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spectrum.to_json(), f, indent=2)


def fundamental_system(problem, z, config=None):
    """
    theta, phi anchored at a, evaluated at b.

    Both ends start at their seed offsets with first-order corrected data; the
    a-anchored pair and the b-anchored pair (chi, psi with chi~(b)=1, psi~'(b)=1)
    meet at the matching point, where theta~(b) = W(theta, psi) and
    theta~'(b) = W(chi, theta), and likewise for phi.
    """
    cfg = resolve(config)
    z = float(z)
    xm = problem.matching_point
    xa, theta0, phi0 = endpoint_start(problem, LEFT, z, cfg)
    xb, chi0, psi0 = endpoint_start(problem, RIGHT, z, cfg)
    (th, th1), (ph, ph1) = shoot(problem, z, xa, xm, [theta0, phi0], cfg)
    (ch, ch1), (ps, ps1) = shoot(problem, z, xb, xm, [chi0, psi0], cfg)
    return FundamentalData(
        z=z,
        theta_b=th * ps1 - th1 * ps,
        thetap_b=ch * th1 - ch1 * th,
        phi_b=ph * ps1 - ph1 * ps,
        phip_b=ch * ph1 - ch1 * ph,
    )


def char_separated(fd, alpha, beta):
    """F = cos(a)[-sin(b) phi~' + cos(b) phi~] - sin(a)[-sin(b) theta~' + cos(b) theta~] at b."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    return ca * (-sb * fd.phip_b + cb * fd.phi_b) - sa * (-sb * fd.thetap_b + cb * fd.theta_b)


def char_coupled(fd, eta, R):
    """
    F = exp(i eta)(R12 theta~' - R22 theta~ + R21 phi~ - R11 phi~') + exp(2 i eta) + 1; real for eta = 0.
    """
    R = np.asarray(R, dtype=float)
    det = R[0, 0] * R[1, 1] - R[0, 1] * R[1, 0]
    if abs(det - 1.0) > 1e-9:
        raise DetNotOne(f"det R = {det:.12g}")
    core = R[0, 1] * fd.thetap_b - R[1, 1] * fd.theta_b + R[1, 0] * fd.phi_b - R[0, 0] * fd.phip_b
    if eta == 0:
        return float(core + 2.0)
    return cmath.exp(1j * eta) * core + cmath.exp(2j * eta) + 1.0


def characteristic_function(problem, spec, config=None):
    """Real function of z whose zeros, with multiplicity, are the eigenvalues of T_spec."""
    cfg = resolve(config)
    spec = parse_spec(spec)
    if isinstance(spec, Separated):
        def F(z):
            return char_separated(fundamental_system(problem, z, cfg), spec.alpha, spec.beta)
    else:
        R = spec.matrix
        shift = 2.0 * math.cos(spec.eta)

        def F(z):
            fd = fundamental_system(problem, z, cfg)
            core = R[0, 1] * fd.thetap_b - R[1, 1] * fd.theta_b + R[1, 0] * fd.phi_b - R[0, 0] * fd.phip_b
            return float(core + shift)
    return F


class RootScanner:
    """
    Zeros of a real function of z on an adaptive grid.

    Steps follow the local eigenvalue spacing of a problem of length L; without a
    sign change a step is halved while |F| changes by more than half across it.
    Sign changes are bracketed and refined with brentq; local minima of |F| that
    do not change sign are tested for a double root.
    """

    batch_size = 32

    def __init__(self, func, length, config=None):
        self.func = func
        self.cfg = resolve(config)
        self.length = length
        self.base = (PI / length) ** 2
        self.evaluations = 0
        self._zs = []
        self._fs = []

    def _f(self, z):
        self.evaluations += 1
        return self.func(z)

    def step(self, z):
        return self.base * self.cfg.scan_step_fraction * (1.0 + 2.0 * math.sqrt(max(z, 0.0)) * self.length / PI)

    def min_step(self, z):
        return self.step(z) * self.cfg.scan_min_step_fraction / self.cfg.scan_step_fraction

    def _negative_grid(self, z_lo, z_hi):
        """Points in [z_lo, min(0, z_hi)) spaced evenly in sqrt(-z)."""
        if z_lo >= 0:
            return []
        t_max = math.sqrt(-z_lo)
        dt = 4.0 * self.cfg.scan_step_fraction * PI / self.length
        count = max(2, int(math.ceil(t_max / dt)))
        ts = np.linspace(t_max, 0.0, count + 1)[:-1]
        return [-t * t for t in ts if -t * t < z_hi]

    def _scale(self, z):
        """Amplitude of F around z, from the four grid points on either side."""
        k = int(np.searchsorted(self._zs, z))
        window = self._fs[max(0, k - 4):k + 4]
        return max(1.0, max((abs(f) for f in window), default=0.0))

    def _refine(self, z0, f0, z1, f1):
        """Points strictly between z0 and z1 added by halving."""
        if f0 * f1 <= 0 or z0 < -self.base:
            return []
        if abs(f1 - f0) <= 0.5 * max(abs(f0), abs(f1)) or (z1 - z0) <= self.min_step(z0):
            return []
        zm = 0.5 * (z0 + z1)
        fm = self._f(zm)
        return self._refine(z0, f0, zm, fm) + [(zm, fm)] + self._refine(zm, fm, z1, f1)

    def _brent(self, z0, z1):
        tol = self.cfg.root_rtol
        return brentq(self.func, z0, z1, xtol=tol * self.base * 1e-3, rtol=max(tol, 4.5e-16), maxiter=200)

    def _double_root(self, z0, zc, z1, fc):
        """Roots hidden in a local minimum of |F| on [z0, z1]: none, two simple, or one double."""
        s = 1.0 if fc > 0 else -1.0
        res = minimize_scalar(lambda z: s * self.func(z), bounds=(z0, z1), method="bounded",
                              options={"xatol": 1e-6 * (z1 - z0)})
        zmin, fmin = float(res.x), s * float(res.fun)
        threshold = self.cfg.double_root_threshold * self._scale(zc)
        if s * fmin < -threshold:
            # dipped through zero between grid points
            return [(self._brent(z0, zmin), 1), (self._brent(zmin, z1), 1)]
        if abs(fmin) > threshold:
            return []
        width = z1 - z0
        h = max(1e-3 * width, 1e-12 * (1.0 + abs(zmin)))

        def slope(z):
            return (self.func(z + h) - self.func(z - h)) / (2.0 * h)

        lo, hi = max(z0 + h, zmin - 0.25 * width), min(z1 - h, zmin + 0.25 * width)
        root = zmin
        if lo < hi and slope(lo) * slope(hi) < 0:
            root = brentq(slope, lo, hi, xtol=self.cfg.root_rtol * self.base * 1e-3)
        self._confirm_quadratic(root, 0.2 * width, s)
        return [(root, 2)]

    def _confirm_quadratic(self, root, h, s):
        ts = np.linspace(-2.0, 2.0, 5) * h
        values = np.array([self.func(root + t) for t in ts])
        a2, a1, _ = np.polyfit(ts, values, 2)
        if s * a2 <= 0 or abs(a1) > 4.0 * abs(a2) * h:
            raise ScanTooCoarse(f"|F| has a flat minimum near z={root:.10g} that is not a clean double root")

    def _merge(self, roots):
        """Adjacent simple roots with |F| at noise level between them form one double root."""
        merged = []
        for z, mult in sorted(roots):
            if merged and merged[-1][1] == 1 and mult == 1 and abs(z - merged[-1][0]) <= 1e-3 * self.step(z):
                prev = merged[-1][0]
                mid = 0.5 * (z + prev)
                if abs(self.func(mid)) <= self.cfg.double_root_threshold * self._scale(mid):
                    merged[-1] = (mid, 2)
                    continue
            if merged and abs(z - merged[-1][0]) <= 1e-9 * (1.0 + abs(z)):
                merged[-1] = (merged[-1][0], max(merged[-1][1], mult))
                continue
            merged.append((z, mult))
        return merged

    def _analyze(self, start):
        """Roots on intervals [z_i, z_i+1] and at local |F| minima centred at z_i, for i >= start."""
        zs, fs = self._zs, self._fs
        roots = []
        for i in range(start, len(zs) - 1):
            f0, f1 = fs[i], fs[i + 1]
            if f0 == 0.0:
                prev = fs[i - 1] if i > 0 else -f1
                roots.append((zs[i], 2 if prev * f1 > 0 else 1))
            elif f0 * f1 < 0:
                roots.append((self._brent(zs[i], zs[i + 1]), 1))
        for i in range(max(start, 1), len(zs) - 1):
            f_prev, fc, f_next = fs[i - 1], fs[i], fs[i + 1]
            if f_prev * fc <= 0 or fc * f_next <= 0:
                continue
            if abs(fc) < abs(f_prev) and abs(fc) < abs(f_next):
                roots.extend(self._double_root(zs[i - 1], zs[i], zs[i + 1], fc))
        return roots

    def scan(self, z_lo, z_hi, n_max=None, desc=None):
        """
        Eigenvalue entries for the roots in (z_lo, z_hi), at most n_max counted with multiplicity.
        """
        n_max = n_max if n_max is not None else 10 ** 9
        self._zs, self._fs = [], []
        roots = []
        pending = self._negative_grid(z_lo, z_hi)
        z = max(z_lo, 0.0)
        closed = False
        start = 0
        while not closed:
            batch, pending = list(pending), []
            while len(batch) < self.batch_size and z < z_hi:
                batch.append(z)
                z += self.step(z)
            if z >= z_hi:
                batch.append(z_hi)
                closed = True
            values = parallel_map(self._f, batch, self.cfg, desc=desc)
            for zb, fb in zip(batch, values):
                if self._zs:
                    for ze, fe in self._refine(self._zs[-1], self._fs[-1], zb, fb):
                        self._zs.append(ze)
                        self._fs.append(fe)
                self._zs.append(zb)
                self._fs.append(fb)
            roots.extend(self._analyze(start))
            start = len(self._zs) - 1
            if sum(m for r, m in self._merge(roots) if z_lo < r < z_hi) >= n_max:
                break
        out = []
        total = 0
        for r, m in self._merge(roots):
            if not z_lo < r < z_hi:
                continue
            if total >= n_max:
                break
            out.append(Eigenvalue(float(r), m, float(abs(self.func(r)))))
            total += m
        log_debug(f"scan ({z_lo:g}, {z_hi:g}): {len(out)} roots, {self.evaluations} evaluations")
        return out


def _dedupe(found):
    """Collapse repeated detections of the same root from overlapping analysis windows."""
    unique = []
    for e in sorted(found, key=lambda e: e.value):
        if unique and abs(e.value - unique[-1].value) <= 1e-9 * (1.0 + abs(e.value)):
            if e.multiplicity > unique[-1].multiplicity:
                unique[-1] = e
            continue
        unique.append(e)
    return unique


def _count(found):
    return sum(e.multiplicity for e in found)


def _gap_rescan(problem, spectrum, func, cfg):
    """
    Rescan positive gaps whose sqrt-spacing is anomalous with a four times finer step.

    Raises:
        ScanTooCoarse: the rescan found roots and a sixteen times finer step finds still more
    """
    positives = [e for e in spectrum if e.value > 0]
    if len(positives) < 4:
        return spectrum
    roots = np.sqrt([e.value for e in positives])
    gaps = np.diff(roots)
    median = float(np.median(gaps))
    extra = []
    for k, gap in enumerate(gaps):
        if gap > 1.8 * median:
            fine = cfg.model_copy(update={"scan_step_fraction": cfg.scan_step_fraction / 4})
            scanner = RootScanner(func, problem.interval.length, fine)
            lo, hi = positives[k].value, positives[k + 1].value
            new = [e for e in scanner.scan(lo, hi) if lo < e.value < hi]
            if new:
                logger.warning(f"rescan found {len(new)} eigenvalue(s) in ({lo:.6g}, {hi:.6g})")
                finest = cfg.model_copy(update={"scan_step_fraction": cfg.scan_step_fraction / 16})
                confirm = _dedupe(e for e in RootScanner(func, problem.interval.length, finest).scan(lo, hi)
                                  if lo < e.value < hi)
                if _count(confirm) > _count(_dedupe(new)):
                    raise ScanTooCoarse(f"({lo:.6g}, {hi:.6g}) holds {_count(confirm)} eigenvalues at the finest "
                                        f"step but {_count(new)} at the rescan step")
                extra.extend(new)
    return _dedupe(list(spectrum) + extra)


def eigenvalues(problem, spec, z_lo, z_hi, n_max=None, config=None):
    """
    Eigenvalues of T_spec in (z_lo, z_hi), at most n_max counted with multiplicity.

    Raises:
        ScanTooCoarse: a flat minimum of |F| is neither a sign change nor a clean double root
            or a gap rescan keeps finding roots as the step shrinks
    """
    cfg = resolve(config)
    if not z_lo < z_hi:
        raise ValueError(f"empty scan window ({z_lo}, {z_hi})")
    spec = parse_spec(spec)
    func = characteristic_function(problem, spec, cfg)
    scanner = RootScanner(func, problem.interval.length, cfg)
    found = _dedupe(scanner.scan(z_lo, z_hi, n_max, desc=spec.describe()))
    found = _gap_rescan(problem, found, func, cfg)
    if n_max is not None:
        kept, total = [], 0
        for e in found:
            if total >= n_max:
                break
            kept.append(e)
            total += e.multiplicity
        found = kept
    return Spectrum(found, (z_lo, z_hi))


def lowest_eigenpair(problem, spec, config=None):
    """
    Lowest eigenvalue with its multiplicity: the negative half-line down to
    -negative_scan_depth (pi/L)^2 first, then upward windows.

    Raises:
        ScanExhausted: nothing found below 4096 (pi/L)^2
    """
    cfg = resolve(config)
    spec = parse_spec(spec)
    func = characteristic_function(problem, spec, cfg)
    length = problem.interval.length
    base = (PI / length) ** 2
    scanner = RootScanner(func, length, cfg)
    lo = -cfg.negative_scan_depth * base
    hi = 4.0 * base
    while hi <= 4096.0 * base:
        found = scanner.scan(lo, hi, n_max=1)
        if found:
            return found[0]
        lo, hi = hi * (1 - 1e-12), hi * 4.0
    raise ScanExhausted(f"no eigenvalue of {spec.describe()} below {4096 * base:.6g}")


def lowest_eigenvalue(problem, spec, config=None):
    return lowest_eigenpair(problem, spec, config).value


def find_roots(func, z_lo, z_hi, length, n_max=None, config=None):
    """Zeros of an arbitrary real characteristic function with the same scan policy."""
    return _dedupe(RootScanner(func, length, config).scan(z_lo, z_hi, n_max))


