"""Extension specifications, the nonnegativity classification and the partial order."""
import cmath
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .boundary import b_side_data, extension_data_pack
from .common import PI, arccot, check_angle, cot, is_pi, log_debug, logger
from .config import resolve
from .errors import (ComplexCWithNonrealBoundary, DenominatorZero, DetNotOne, NonnegativityViolated,
                     NotNonnegative, PathDisagreement, SpecParseError)

DET_TOL = 1e-9


class Separated(BaseModel):
    """g~(a) cos(alpha) + g~'(a) sin(alpha) = 0 and g~(b) cos(beta) - g~'(b) sin(beta) = 0."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    type: Literal["separated"] = "separated"
    alpha: float
    beta: float

    @field_validator("alpha", "beta")
    @classmethod
    def _angle(cls, value):
        if not (0.0 < value <= PI + 1e-12):
            raise ValueError(f"angle {value!r} outside (0, pi]")
        return min(value, PI)

    def describe(self):
        return f"Separated(alpha={self.alpha:.12g}, beta={self.beta:.12g})"


class Coupled(BaseModel):
    """(g~(b), g~'(b)) = exp(i eta) R (g~(a), g~'(a)) with R in SL(2, R)."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    type: Literal["coupled"] = "coupled"
    eta: float = 0.0
    R: tuple[tuple[float, float], tuple[float, float]]

    @field_validator("eta")
    @classmethod
    def _eta_range(cls, value):
        if not (0.0 <= value < PI):
            raise ValueError(f"eta {value!r} outside [0, pi)")
        return value

    @model_validator(mode="after")
    def _unimodular(self):
        det = self.R[0][0] * self.R[1][1] - self.R[0][1] * self.R[1][0]
        if abs(det - 1.0) > DET_TOL:
            raise DetNotOne(f"det R = {det:.12g}, expected 1")
        return self

    @property
    def matrix(self):
        return np.array(self.R, dtype=float)

    def describe(self):
        (r11, r12), (r21, r22) = self.R
        return f"Coupled(eta={self.eta:.12g}, R=[[{r11:.12g}, {r12:.12g}], [{r21:.12g}, {r22:.12g}]])"


ExtensionSpec = Annotated[Union[Separated, Coupled], Field(discriminator="type")]
_SPEC_ADAPTER = TypeAdapter(ExtensionSpec)


def coupled(R, eta=0.0):
    R = np.asarray(R, dtype=float)
    return Coupled(eta=eta, R=((R[0, 0], R[0, 1]), (R[1, 0], R[1, 1])))


def parse_spec(data):
    """
    ExtensionSpec from its wire form (JSON text or mapping).

    Raises:
        SpecParseError: malformed JSON, unknown type or out-of-range angles
        DetNotOne: coupled matrix not unimodular
    """
    if isinstance(data, (Separated, Coupled)):
        return data
    try:
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        return _SPEC_ADAPTER.validate_python(data)
    except json.JSONDecodeError as e:
        raise SpecParseError(f"spec is not valid JSON: {e}") from e
    except ValidationError as e:
        raise SpecParseError(f"invalid spec: {e.errors()[0]['msg']}") from e


def spec_to_wire(spec):
    return spec.model_dump(mode="json")


class PartialOrderResult(str, Enum):
    LESS_OR_EQUAL = "LessOrEqual"
    GREATER_OR_EQUAL = "GreaterOrEqual"
    EQUAL = "Equal"
    INCOMPARABLE = "Incomparable"


@dataclass(frozen=True)
class AuxB2:
    """Nonnegative 2x2 parameter [[b11, b12], [conj(b12), b22]] for dim W = 2."""

    b11: float
    b12: complex
    b22: float

    def __post_init__(self):
        if self.b11 < 0 or self.b22 < 0:
            raise NonnegativityViolated(f"b11={self.b11!r} and b22={self.b22!r} must be >= 0")

    def constraint(self, pack):
        return self.b11 * self.b22 * pack.norm2_u - abs(self.b12) ** 2 * pack.norm2_v

    def check(self, pack, tol=1e-12):
        value = self.constraint(pack)
        scale = self.b11 * self.b22 * pack.norm2_u + abs(self.b12) ** 2 * pack.norm2_v
        if value < -tol * (1.0 + scale):
            raise NonnegativityViolated(f"b11 b22 ||u||^2 - |b12|^2 ||vhat||^2 = {value:.6g} < 0")
        return value


INFINITY = math.inf


@dataclass(frozen=True)
class AuxB1:
    """Scalar parameter kappa and the direction c (math.inf for c = infinity) for dim W = 1."""

    kappa: float
    c: complex = INFINITY

    def __post_init__(self):
        if self.kappa < 0:
            raise NonnegativityViolated(f"kappa={self.kappa!r} must be >= 0")

    @property
    def c_is_infinite(self):
        return isinstance(self.c, float) and math.isinf(self.c)


def friedrichs_spec():
    return Separated(alpha=PI, beta=PI)


def krein_matrix(problem, config=None):
    """R_K = [[uhat~_a(b), u~_a(b)], [uhat~_a'(b), u~_a'(b)]]."""
    pack = extension_data_pack(problem, config)
    return krein_matrix_from_pack(pack)


def krein_matrix_from_pack(pack):
    R = np.array([[pack.uhat_b, pack.u_b], [pack.uhatp_b, pack.up_b]])
    det = np.linalg.det(R)
    if abs(det - 1.0) > 1e-8:
        raise DetNotOne(f"det R_K = {det:.12g}")
    return R


def separation_value(pack, b11):
    """The b12 at which a dim W = 2 parameter yields separated conditions."""
    return (b11 * (pack.v_b / pack.u_b) * pack.norm2_u - 1.0) / pack.norm2_v


def _strip_phase(M):
    """Write a complex matrix as exp(i eta) R with R real, eta in [0, pi)."""
    M = np.asarray(M, dtype=complex)
    k = np.unravel_index(np.argmax(np.abs(M)), M.shape)
    eta = cmath.phase(M[k]) % PI
    if eta > PI - 1e-14:
        eta = 0.0
    R = M * cmath.exp(-1j * eta)
    if np.max(np.abs(R.imag)) > 1e-9 * (1.0 + np.max(np.abs(R))):
        raise DetNotOne("coupling matrix is not a phase times a real matrix")
    R = R.real
    det = np.linalg.det(R)
    if abs(det - 1.0) > 1e-8:
        raise DetNotOne(f"det R = {det:.12g} after removing the phase exp(i {eta:.6g})")
    return eta, R


def classify_dim2(pack, B, config=None):
    """
    Boundary conditions of the extension with a dim W = 2 parameter B.

    Separated when b12 equals the separation value, otherwise coupled with R read off the
    coefficients of g~(a), g~'(a).

    Raises:
        NonnegativityViolated: B violates b11 b22 ||u||^2 >= |b12|^2 ||vhat||^2
    """
    cfg = resolve(config)
    B.check(pack)
    ratio = pack.v_b / pack.u_b
    s = separation_value(pack, B.b11)
    b12 = complex(B.b12)
    gap = abs(b12 - s)
    if gap <= cfg.separation_rtol * (1.0 + abs(s)):
        cot_alpha = (B.b11 * ratio * ratio * pack.norm2_u - B.b22 * pack.norm2_v - pack.vp_a - ratio)
        cot_beta = (pack.up_b - B.b11 * pack.norm2_u / pack.u_b) / pack.u_b
        return Separated(alpha=arccot(cot_alpha), beta=arccot(cot_beta))
    if gap <= 1e3 * cfg.separation_rtol * (1.0 + abs(s)):
        logger.warning(f"b12={B.b12} is within {gap:.2e} of the separation value {s:.12g}; treating as coupled")
    D = pack.norm2_v * (b12 - s)
    E = pack.norm2_v * B.b22 * pack.u_b - b12.conjugate() * pack.norm2_v * pack.v_b + pack.u_b * pack.vp_a
    tail = (pack.up_b - B.b11 * pack.norm2_u / pack.u_b)
    M = np.array([
        [pack.v_b - E / D, pack.u_b / D],
        [pack.vp_b - b12.conjugate() * pack.norm2_v / pack.u_b - tail * E / (pack.u_b * D), tail / D],
    ], dtype=complex)
    if b12.imag == 0:
        R = M.real
        det = np.linalg.det(R)
        if abs(det - 1.0) > 1e-8:
            raise DetNotOne(f"det R = {det:.12g}")
        return coupled(R)
    eta, R = _strip_phase(M)
    return coupled(R, eta)


def classify_dim1(pack, B):
    """
    Boundary conditions of the extension with a dim W = 1 parameter (kappa, c).

    Raises:
        ComplexCWithNonrealBoundary: c is not real
    """
    kappa = B.kappa
    ratio = pack.v_b / pack.u_b
    if B.c_is_infinite:
        cot_beta = (pack.up_b - kappa * pack.norm2_u / pack.u_b) / pack.u_b
        return Separated(alpha=PI, beta=arccot(cot_beta))
    c = complex(B.c)
    if c.imag != 0:
        raise ComplexCWithNonrealBoundary(f"c={B.c!r} is not real; the coupled condition would mix c and conj(c)")
    c = c.real
    r11 = pack.v_b + c * pack.u_b
    if abs(r11) <= 1e-12 * (abs(pack.v_b) + 1.0):
        cot_alpha = ratio - pack.vp_a - kappa * (pack.norm2_v + ratio * ratio * pack.norm2_u)
        return Separated(alpha=arccot(cot_alpha), beta=PI)
    r21 = (pack.vp_b + c * pack.up_b - kappa * c * pack.norm2_u / pack.u_b
           - (kappa * (pack.norm2_v - c * ratio * pack.norm2_u) + c + pack.vp_a) / r11)
    return coupled([[r11, 0.0], [r21, 1.0 / r11]])


def separated_admissible_ranges(pack):
    """(alpha_floor, beta_floor): lower ends of the nonnegative alpha (beta = pi) and beta (alpha = pi) ranges."""
    return arccot(pack.v_b / pack.u_b - pack.vp_a), arccot(pack.up_b / pack.u_b)


def nonneg_range_fixed_beta(pack, beta_p, uhat_b=None, uhatp_b=None):
    """
    alpha_min for a fixed condition beta' at b: T_(alpha, beta') >= 0 exactly for alpha in [alpha_min, pi].

    Raises:
        SpecParseError: beta' outside (0, pi]
        DenominatorZero: 0 is an eigenvalue of T_(pi, beta')
    """
    beta_p = check_angle(beta_p, "beta'")
    uhat_b = pack.uhat_b if uhat_b is None else uhat_b
    uhatp_b = pack.uhatp_b if uhatp_b is None else uhatp_b
    cb, sb = math.cos(beta_p), math.sin(beta_p)
    num = cb * uhat_b - sb * uhatp_b
    den = cb * pack.u_b - sb * pack.up_b
    if abs(den) <= 1e-12 * (abs(num) + 1.0):
        raise DenominatorZero(f"0 is an eigenvalue of T_(pi, beta'={beta_p:g})")
    return arccot(num / den)


def nonneg_range_fixed_beta_alt(b_side, beta_p, B=0.0):
    """
    The same floor from b-side data: eta = sin(beta') uhat_b + cos(beta') u_b, with B >= 0
    adding -B ||eta||^2 / eta~(a)^2 to the cotangent.
    """
    beta_p = check_angle(beta_p, "beta'")
    if B < 0:
        raise NonnegativityViolated(f"B={B!r} must be >= 0")
    cb, sb = math.cos(beta_p), math.sin(beta_p)
    den = cb * b_side.u_a + sb * b_side.uhat_a
    num = cb * b_side.up_a + sb * b_side.uhatp_a
    if abs(den) <= 1e-12 * (abs(num) + 1.0):
        raise DenominatorZero(f"eta~(a) vanishes for beta'={beta_p:g}")
    norm2_eta = sb * sb * b_side.norm2_uhat + 2 * sb * cb * b_side.cross + cb * cb * b_side.norm2_u
    return arccot(-num / den - B * norm2_eta / (den * den))


def nonneg_range_fixed_alpha(pack, alpha_p):
    """
    beta_min for a fixed condition alpha' at a, from y = sin(alpha') uhat_a - cos(alpha') u_a.

    Raises:
        DenominatorZero: y~(b) = 0
    """
    alpha_p = check_angle(alpha_p, "alpha'")
    sa, ca = math.sin(alpha_p), math.cos(alpha_p)
    y_b = sa * pack.uhat_b - ca * pack.u_b
    yp_b = sa * pack.uhatp_b - ca * pack.up_b
    if abs(y_b) <= 1e-12 * (abs(yp_b) + 1.0):
        raise DenominatorZero(f"0 is an eigenvalue of T_(alpha'={alpha_p:g}, pi)")
    return arccot(yp_b / y_b)


def range_report(problem, beta_p, config=None):
    """alpha_min for beta' by the a-side and b-side routes."""
    pack = extension_data_pack(problem, config)
    primary = nonneg_range_fixed_beta(pack, beta_p)
    alternate = nonneg_range_fixed_beta_alt(b_side_data(problem, config), beta_p)
    return {"beta_p": beta_p, "alpha_min": primary, "alpha_min_alt": alternate,
            "difference": abs(primary - alternate)}


def _order(le, ge):
    if le and ge:
        return PartialOrderResult.EQUAL
    if le:
        return PartialOrderResult.LESS_OR_EQUAL
    if ge:
        return PartialOrderResult.GREATER_OR_EQUAL
    return PartialOrderResult.INCOMPARABLE


def compare_separated(s1, s2, alpha_floor, beta_floor, tol=1e-12):
    """
    Order of two separated extensions: componentwise comparison of the angles.

    Raises:
        NotNonnegative: an angle lies below its floor
    """
    for spec in (s1, s2):
        if spec.alpha < alpha_floor - tol or spec.beta < beta_floor - tol:
            raise NotNonnegative(f"{spec.describe()} lies below the floors ({alpha_floor:.6g}, {beta_floor:.6g})")
    le = s1.alpha <= s2.alpha + tol and s1.beta <= s2.beta + tol
    ge = s1.alpha >= s2.alpha - tol and s1.beta >= s2.beta - tol
    return _order(le, ge)


def compare_dim2(B, Bh, pack, tol=1e-12):
    """
    T_B <= T_Bh iff bh11 >= b11, bh22 >= b22 and Bh - B is nonnegative.
    """
    B.check(pack)
    Bh.check(pack)

    def dominated(lo, hi):
        d11, d22 = hi.b11 - lo.b11, hi.b22 - lo.b22
        d12 = complex(hi.b12) - complex(lo.b12)
        det = d11 * d22 * pack.norm2_u - abs(d12) ** 2 * pack.norm2_v
        scale = tol * (1.0 + abs(d11 * d22) * pack.norm2_u + abs(d12) ** 2 * pack.norm2_v)
        return d11 >= -tol and d22 >= -tol and det >= -scale

    return _order(dominated(B, Bh), dominated(Bh, B))


def compare_dim1(B, Bh, tol=1e-12):
    """Comparable only along the same direction c; then ordered by kappa."""
    if B.c_is_infinite != Bh.c_is_infinite:
        return PartialOrderResult.INCOMPARABLE
    if not B.c_is_infinite and abs(complex(B.c) - complex(Bh.c)) > tol * (1.0 + abs(B.c)):
        return PartialOrderResult.INCOMPARABLE
    return _order(B.kappa <= Bh.kappa + tol, B.kappa >= Bh.kappa - tol)


@dataclass(frozen=True)
class AuxWitness:
    """Parameters realizing a spec: dim W = 0 (Friedrichs), 1 (kappa, c) or 2 (b11, b12, b22)."""

    dim_w: int
    params: dict
    nonnegative: bool

    def describe(self):
        if self.dim_w == 0:
            return "Friedrichs, dim W=0"
        body = ", ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.params.items())
        return f"dim W={self.dim_w}, {body}"


def _dim1_kappa(pack, c, r21, r11):
    ratio = pack.v_b / pack.u_b
    k0 = pack.vp_b + c * pack.up_b - (c + pack.vp_a) / r11
    k1 = c * pack.norm2_u / pack.u_b + (pack.norm2_v - c * ratio * pack.norm2_u) / r11
    if abs(k1) <= 1e-14:
        raise DenominatorZero("kappa is undetermined for this coupling")
    return (k0 - r21) / k1


def spec_to_aux(pack, spec, tol=1e-9):
    """
    Invert the classification maps: the (kappa, c) or (b11, b12, b22) producing spec.

    The witness is nonnegative when the recovered parameters are admissible.
    """
    ratio = pack.v_b / pack.u_b
    if isinstance(spec, Separated):
        a_pi, b_pi = is_pi(spec.alpha), is_pi(spec.beta)
        if a_pi and b_pi:
            return AuxWitness(0, {}, True)
        if a_pi:
            kappa = (pack.up_b - pack.u_b * cot(spec.beta)) * pack.u_b / pack.norm2_u
            return AuxWitness(1, {"kappa": kappa, "c": "infinity"}, kappa >= -tol * (1.0 + abs(kappa)))
        if b_pi:
            kappa = (ratio - pack.vp_a - cot(spec.alpha)) / (pack.norm2_v + ratio * ratio * pack.norm2_u)
            return AuxWitness(1, {"kappa": kappa, "c": pack.c_friedrichs}, kappa >= -tol * (1.0 + abs(kappa)))
        b11 = (pack.up_b - pack.u_b * cot(spec.beta)) * pack.u_b / pack.norm2_u
        b22 = (b11 * ratio * ratio * pack.norm2_u - pack.vp_a - ratio - cot(spec.alpha)) / pack.norm2_v
        b12 = separation_value(pack, b11)
        return _dim2_witness(pack, b11, b12, b22, tol)
    M = np.array(spec.R, dtype=complex) * cmath.exp(1j * spec.eta)
    if abs(M[0, 1]) <= 1e-14:
        if spec.eta != 0:
            raise ComplexCWithNonrealBoundary("R12 = 0 with eta != 0 corresponds to a non-real c")
        r11, r21 = spec.R[0][0], spec.R[1][0]
        c = (r11 - pack.v_b) / pack.u_b
        kappa = _dim1_kappa(pack, c, r21, r11)
        return AuxWitness(1, {"kappa": kappa, "c": c}, kappa >= -tol * (1.0 + abs(kappa)))
    D = pack.u_b / M[0, 1]
    b11 = (pack.up_b - M[1, 1] * D) * pack.u_b / pack.norm2_u
    b12 = D / pack.norm2_v + separation_value(pack, b11.real)
    E = (pack.v_b - M[0, 0]) * D
    b22 = (E + b12.conjugate() * pack.norm2_v * pack.v_b - pack.u_b * pack.vp_a) / (pack.norm2_v * pack.u_b)
    if abs(b11.imag) > 1e-9 * (1 + abs(b11)) or abs(b22.imag) > 1e-9 * (1 + abs(b22)):
        log_debug(f"spec_to_aux: non-real diagonal ({b11}, {b22})")
        return AuxWitness(2, {"b11": b11, "b12": b12, "b22": b22}, False)
    b12 = b12.real if abs(b12.imag) <= 1e-14 * (1 + abs(b12)) else b12
    return _dim2_witness(pack, b11.real, b12, b22.real, tol)


def _dim2_witness(pack, b11, b12, b22, tol):
    constraint = b11 * b22 * pack.norm2_u - abs(b12) ** 2 * pack.norm2_v
    scale = 1.0 + abs(b11 * b22) * pack.norm2_u + abs(b12) ** 2 * pack.norm2_v
    ok = b11 >= -tol * (1 + abs(b11)) and b22 >= -tol * (1 + abs(b22)) and constraint >= -tol * scale
    return AuxWitness(2, {"b11": b11, "b12": b12, "b22": b22}, ok)


@dataclass(frozen=True)
class NonnegativityVerdict:
    nonnegative: bool
    witness: AuxWitness
    lambda_min: float
    kernel_dim: int

    def describe(self):
        if not self.nonnegative:
            return f"not nonnegative, lambda_min={self.lambda_min:.10g} < 0 witness ({self.witness.describe()})"
        kernel = f", kernel dim {self.kernel_dim}" if self.kernel_dim else ""
        return f"nonnegative ({self.witness.describe()}){kernel}"


def is_nonnegative(problem, spec, config=None):
    """
    Nonnegativity of T_spec by two independent routes: inverting the classification maps
    and the sign of the lowest eigenvalue.

    Raises:
        PathDisagreement: the two verdicts differ away from the borderline lambda_min = 0
    """
    from .spectra import lowest_eigenpair

    cfg = resolve(config)
    spec = parse_spec(spec)
    pack = extension_data_pack(problem, cfg)
    witness = spec_to_aux(pack, spec, tol=cfg.nonneg_tol)
    low = lowest_eigenpair(problem, spec, cfg)
    scale = (PI / problem.interval.length) ** 2
    spectral = low.value >= -cfg.nonneg_tol * scale
    if spectral != witness.nonnegative:
        if abs(low.value) <= 1e-6 * scale:
            logger.warning(f"{spec.describe()}: lambda_min={low.value:.3e} is borderline; "
                           f"keeping the algebraic verdict")
            spectral = witness.nonnegative
        else:
            raise PathDisagreement(f"{spec.describe()}: algebraic says {witness.nonnegative}, "
                                   f"lambda_min={low.value:.6g}")
    kernel_dim = low.multiplicity if abs(low.value) <= max(1e-7, cfg.residual_tol) * scale else 0
    return NonnegativityVerdict(spectral, witness, low.value, kernel_dim)


