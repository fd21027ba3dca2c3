"""PU(2,1)-character variety of the turnover group G(n1, n2, n3).

Conjugacy classes are held as integer exponents of roots of unity:
alpha_j = exp(2 pi i a_j / (3 n1)), beta_j likewise with n2, gamma_j with n3.
I1 is diagonal in the canonical frame and I2 is determined by the point (s, t)
and the branch sign; I3 closes the relation I3 I2 I1 = 1.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.config import DEFAULT_TOL
from app.errors import (
    ConditionC1Violated,
    CPlaneRepresentation,
    DegenerateClass,
    DegenerateInput,
    DeltaNegative,
    EigenvalueTypeMismatch,
    EmptyEnumeration,
    Infeasible,
    InvalidSelection,
    InvalidSignature,
    NonGenericBoundary,
    ResidualTooLarge,
)
from app.geometry.chgeom import (
    CVec3,
    PointSign,
    classify_point,
    herm_cross,
    normalize,
    project_orthogonal,
    vec,
)
from app.geometry.isom import (
    Isometry,
    SpectralData,
    eigenvector_for,
    elliptic_from_axes,
    goldman_discriminant,
    rotation_about_geodesic,
    rotation_about_point,
)

logger = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-8


class Case(str, Enum):
    REGULAR = "regular"
    SPECIAL_POINT = "special-point"
    SPECIAL_LINE = "special-line"


class Branch(str, Enum):
    PLUS = "plus"
    MINUS = "minus"

    @property
    def sign(self) -> int:
        return 1 if self is Branch.PLUS else -1


@dataclass(frozen=True, order=True)
class TurnoverSignature:
    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        if any(not isinstance(n, int) or n < 2 for n in self.orders):
            raise InvalidSignature(f"orders must be integers >= 2, got {self.label}")
        if sum(Fraction(1, n) for n in self.orders) >= 1:
            raise InvalidSignature(f"signature {self.label} is not hyperbolic (sum of 1/n_j >= 1)")

    @classmethod
    def parse(cls, text: str) -> "TurnoverSignature":
        try:
            n1, n2, n3 = (int(part) for part in text.split(","))
        except ValueError:
            raise InvalidSignature(f"expected three comma separated integers, got '{text}'")
        return cls(n1, n2, n3)

    @property
    def orders(self) -> Tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def chi(self) -> Fraction:
        """Orbifold Euler characteristic -1 + 1/n1 + 1/n2 + 1/n3"""
        return -1 + sum(Fraction(1, n) for n in self.orders)

    @property
    def label(self) -> str:
        return f"{self.n1},{self.n2},{self.n3}"


def _root(k: int, m: int) -> complex:
    return cmath.exp(2j * math.pi * (k % m) / m)


def _is_special(exponents: Sequence[int], modulus: int) -> bool:
    reduced = {k % modulus for k in exponents}
    return len(reduced) < 3


@dataclass(frozen=True)
class EigenvalueSelection:
    """Conjugacy-class data of (I1, I2, I3) as exponents of roots of unity.

    a, b, g are reduced mod 3*n1, 3*n2, 3*n3. gamma is the spectrum of I2 I1, so I3
    has eigenvalues conj(gamma_j) and l3 is the rotation number of I3 itself:
    conj(gamma3) / conj(gamma1) = exp(2 pi i l3 / n3). lift rotates gamma by exp(2 pi i lift / 3).
    """
    signature: TurnoverSignature
    case: Case
    l1: int
    l2: int
    l3: int
    lift: int
    a: Tuple[int, int, int]
    b: Tuple[int, int, int]
    g: Tuple[int, int, int]

    @property
    def rotation_numbers(self) -> Tuple[int, int, int]:
        return (self.l1, self.l2, self.l3)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([_root(k, 3 * self.signature.n1) for k in self.a])

    @property
    def beta(self) -> np.ndarray:
        return np.array([_root(k, 3 * self.signature.n2) for k in self.b])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([_root(k, 3 * self.signature.n3) for k in self.g])

    @property
    def label(self) -> str:
        return f"{self.l1},{self.l2},{self.l3}"

    def q4_holds(self) -> bool:
        """alpha2/alpha1 = e^{-2 pi i/n1}, beta2/beta1 = e^{-2 pi i/n2}, gamma2/gamma1 = e^{2 pi i/n3}"""
        n1, n2, n3 = self.signature.orders
        return ((self.a[1] - self.a[0]) % (3 * n1) == (-3) % (3 * n1)
                and (self.b[1] - self.b[0]) % (3 * n2) == (-3) % (3 * n2)
                and (self.g[1] - self.g[0]) % (3 * n3) == 3 % (3 * n3))


def _exponents(n: int, l: int) -> Tuple[int, int, int]:
    first = (1 - l) % n
    m = 3 * n
    return (first % m, (first - 3) % m, (first + 3 * l) % m)


def _gamma_exponents(n: int, l: int, lift: int) -> Tuple[int, int, int]:
    # gamma3 / gamma1 = exp(-2 pi i l / n); I3 carries conj(gamma)
    first = (l - 1) % n + lift * n
    m = 3 * n
    return (first % m, (first + 3) % m, (first - 3 * l) % m)


def l_ranges(sig: TurnoverSignature, case: Case) -> Tuple[range, range, range]:
    """Admissible rotation numbers; I1 and I3 are always regular."""
    n1, n2, n3 = sig.orders
    r1 = range(1, n1 - 1)
    r3 = range(1, n3 - 1)
    if case is Case.REGULAR:
        r2 = range(1, n2 - 1)
    elif case is Case.SPECIAL_POINT:
        r2 = range(n2 - 1, n2)
    else:
        r2 = range(0, 1)
    return r1, r2, r3


def make_selection(sig: TurnoverSignature, case: Case, l: Tuple[int, int, int],
                   lift: int = 0) -> EigenvalueSelection:
    l1, l2, l3 = l
    if lift not in (0, 1, 2):
        raise InvalidSelection(f"lift must be 0, 1 or 2, got {lift}")
    n1, n2, n3 = sig.orders
    if not all(0 <= l_j < n for l_j, n in zip(l, sig.orders)):
        raise InvalidSelection(f"rotation numbers must satisfy 0 <= l_j < n_j, got {l1},{l2},{l3}")
    a = _exponents(n1, l1)
    b = _exponents(n2, l2)
    g = _gamma_exponents(n3, l3, lift)

    special = [_is_special(a, 3 * n1), _is_special(b, 3 * n2), _is_special(g, 3 * n3)]
    if sum(special) >= 2:
        raise CPlaneRepresentation(
            f"selection {l1},{l2},{l3} of ({sig.label}) has two special classes; "
            "such representations preserve a complex geodesic",
            {"special": special})
    if special[0] or special[2]:
        raise InvalidSelection(f"I1 and I3 must be regular elliptic (l1={l1}, l3={l3})")

    if case is Case.REGULAR and special[1]:
        raise InvalidSelection(f"l2={l2} makes I2 special in the regular case")
    if case is Case.SPECIAL_POINT and b[1] != b[2]:
        raise InvalidSelection("a rotation about a point needs beta2 = beta3 (l2 = n2 - 1)")
    if case is Case.SPECIAL_LINE and b[0] != b[2]:
        raise InvalidSelection("a rotation about a complex geodesic needs beta1 = beta3 (l2 = 0)")

    return EigenvalueSelection(signature=sig, case=case, l1=l1, l2=l2, l3=l3, lift=lift,
                               a=a, b=b, g=g)


def enumerate_selections(sig: TurnoverSignature, case: Case,
                         lifts: Iterable[int] = (0,)) -> List[EigenvalueSelection]:
    """All selections of a case, ordered by (l1, l2, l3, lift)."""
    r1, r2, r3 = l_ranges(sig, case)
    lifts = tuple(lifts)
    selections = []
    for l1 in r1:
        for l2 in r2:
            for l3 in r3:
                for lift in lifts:
                    selections.append(make_selection(sig, case, (l1, l2, l3), lift))
    if not selections:
        raise EmptyEnumeration(f"no {case.value} selection exists for ({sig.label})")
    return selections


@dataclass(frozen=True)
class CharVarPoint:
    s: float
    t: float
    branch: Branch = Branch.PLUS


@dataclass(frozen=True)
class C1Margins:
    """|v2|^2, |v3|^2 and v1^2 = |v2|^2 + |v3|^2 - 1 as affine functions of (s, t)"""
    v2_sq: float
    v3_sq: float
    v1_sq: float

    @property
    def minimum(self) -> float:
        return min(self.v2_sq, self.v3_sq, self.v1_sq)

    @property
    def holds(self) -> bool:
        return self.minimum > 0

    def as_dict(self) -> Dict[str, float]:
        return {"v2_sq": self.v2_sq, "v3_sq": self.v3_sq, "v1_sq": self.v1_sq}


@dataclass(frozen=True, eq=False)
class RepresentationTriple:
    selection: EigenvalueSelection
    point: CharVarPoint
    I1: Isometry
    I2: Isometry
    I3: Isometry
    u: CVec3
    v: Optional[CVec3]
    trace_residual: float
    relation_residual: float

    def commutator_trace(self) -> complex:
        return (self.I1 @ self.I2 @ self.I1.inverse() @ self.I2.inverse()).trace()

    def goldman(self) -> float:
        return goldman_discriminant(self.commutator_trace())


def _require(sel: EigenvalueSelection, case: Case) -> None:
    if sel.case is not case:
        raise InvalidSelection(f"expected a {case.value} selection, got {sel.case.value}")


def _trace_coefficients(sel: EigenvalueSelection) -> Tuple[complex, complex, float]:
    al = sel.alpha
    a21 = al[1] - al[0]
    a31 = al[2] - al[0]
    det_m = (np.conj(a21) * a31).imag
    if abs(det_m) < 1e-12:
        raise DegenerateClass("trace equation has a singular coefficient matrix",
                              {"det_m": det_m})
    return a21, a31, det_m


def c1_margins(sel: EigenvalueSelection, s: float, t: float) -> C1Margins:
    _require(sel, Case.REGULAR)
    al, be, ga = sel.alpha, sel.beta, sel.gamma
    a21, a31, det_m = _trace_coefficients(sel)
    b23 = be[1] - be[2]
    r = (be[0] - be[2]) / b23
    k = (ga.sum() - al[0] * (be[0] + be[1] - be[2]) - be[2] * (al[1] + al[2])) / b23

    v2_sq = ((a31 * np.conj(k)).imag
             + s * (a31 * np.conj(a21) * np.conj(r)).imag
             + t * abs(a31) ** 2 * np.conj(r).imag) / det_m
    v3_sq = ((np.conj(a21) * k).imag
             + s * abs(a21) ** 2 * r.imag
             + t * (np.conj(a21) * a31 * r).imag) / det_m
    return C1Margins(v2_sq=float(v2_sq), v3_sq=float(v3_sq), v1_sq=float(v2_sq + v3_sq - 1))


def delta(sel: EigenvalueSelection, s: float, t: float, margins: Optional[C1Margins] = None) -> float:
    m = margins or c1_margins(sel, s, t)
    w = 1 + s + t
    x = -t * m.v3_sq + w * m.v1_sq + s * m.v2_sq
    return 4 * m.v1_sq * m.v2_sq * s * w - x * x


def _finish(sel: EigenvalueSelection, point: CharVarPoint, I1: Isometry, I2: Isometry,
            u: CVec3, v: Optional[CVec3]) -> RepresentationTriple:
    product = I2 @ I1
    I3 = product.inverse()
    trace_residual = abs(product.trace() - sel.gamma.sum())
    relation_residual = (I3 @ I2 @ I1).distance_to(Isometry.identity())
    if trace_residual > RESIDUAL_LIMIT or relation_residual > RESIDUAL_LIMIT:
        raise ResidualTooLarge("constructed triple misses the trace equation",
                               {"trace_residual": trace_residual,
                                "relation_residual": relation_residual})

    c3 = eigenvector_for(I3, np.conj(sel.gamma[0]))
    if classify_point(c3).sign is not PointSign.NEGATIVE:
        raise EigenvalueTypeMismatch("the fixed point of I3 for conj(gamma1) is not negative",
                                     {"norm": classify_point(c3).value})

    return RepresentationTriple(selection=sel, point=point, I1=I1, I2=I2, I3=I3, u=u, v=v,
                                trace_residual=trace_residual,
                                relation_residual=relation_residual)


def solve_regular(sel: EigenvalueSelection, pt: CharVarPoint) -> RepresentationTriple:
    _require(sel, Case.REGULAR)
    s, t = pt.s, pt.t
    if s < 0 or t < 0:
        raise DegenerateInput(f"s and t must be nonnegative, got ({s}, {t})")
    if s == 0 or t == 0:
        raise NonGenericBoundary("the boundary of the (s, t) quadrant is not parameterized",
                                 {"s": s, "t": t})

    m = c1_margins(sel, s, t)
    if not m.holds:
        raise ConditionC1Violated(m.as_dict())
    w = 1 + s + t
    x = -t * m.v3_sq + w * m.v1_sq + s * m.v2_sq
    d = 4 * m.v1_sq * m.v2_sq * s * w - x * x
    if d < 0:
        raise DeltaNegative(d)

    v1 = math.sqrt(m.v1_sq)
    root = pt.branch.sign * 1j * math.sqrt(d)
    v2 = (x + root) / (2 * v1 * math.sqrt(s * w))
    v3 = (-s * m.v2_sq + w * m.v1_sq + t * m.v3_sq - root) / (2 * v1 * math.sqrt(t * w))

    u = vec(math.sqrt(w), math.sqrt(s), math.sqrt(t))
    v = vec(v1, v2, v3)
    be = sel.beta
    I1 = Isometry.diagonal(sel.alpha)
    I2 = elliptic_from_axes(SpectralData(c=u, p=v, q=herm_cross(u, v),
                                         eps1=be[0], eps2=be[1], eps3=be[2]))
    return _finish(sel, pt, I1, I2, u, v)


def _special_squares(sel: EigenvalueSelection, k: complex) -> Tuple[float, float]:
    """Real x, y with (alpha1 - alpha2) x + (alpha1 - alpha3) y = k"""
    al = sel.alpha
    a21, a31, det_m = _trace_coefficients(sel)
    a13 = al[0] - al[2]
    x = (a13 * np.conj(k)).imag / det_m
    y = (a21 * np.conj(k)).imag / det_m
    return float(x), float(y)


def _nonnegative(value: float, name: str, tol: float) -> float:
    if value < -tol:
        raise Infeasible(f"{name} = {value:.6g} is negative", {name: value})
    return max(value, 0.0)


def solve_special_point(sel: EigenvalueSelection, tol: float = DEFAULT_TOL) -> RepresentationTriple:
    """The unique triple with I2 a rotation about the point u = (u1, u2, u3)."""
    _require(sel, Case.SPECIAL_POINT)
    al, be, ga = sel.alpha, sel.beta, sel.gamma
    k = (ga.sum() - al[0] * be[0] - be[1] * (al[1] + al[2])) / (be[0] - be[1])
    u2_sq, u3_sq = _special_squares(sel, k)
    u2_sq = _nonnegative(u2_sq, "u2_sq", tol)
    u3_sq = _nonnegative(u3_sq, "u3_sq", tol)

    u = vec(math.sqrt(1 + u2_sq + u3_sq), math.sqrt(u2_sq), math.sqrt(u3_sq))
    I1 = Isometry.diagonal(al)
    I2 = rotation_about_point(u, be[0], be[1])
    return _finish(sel, CharVarPoint(u2_sq, u3_sq), I1, I2, u, None)


def solve_special_line(sel: EigenvalueSelection, tol: float = DEFAULT_TOL) -> RepresentationTriple:
    """The unique triple with I2 a rotation about the complex geodesic with polar v."""
    _require(sel, Case.SPECIAL_LINE)
    al, be, ga = sel.alpha, sel.beta, sel.gamma
    k = (ga.sum() - al[0] * be[1] - be[0] * (al[1] + al[2])) / (be[0] - be[1])
    v2_sq, v3_sq = _special_squares(sel, k)
    v2_sq = _nonnegative(v2_sq, "v2_sq", tol)
    v3_sq = _nonnegative(v3_sq, "v3_sq", tol)
    v1_sq = _nonnegative(v2_sq + v3_sq - 1, "v1_sq", tol)

    v = vec(math.sqrt(v1_sq), math.sqrt(v2_sq), math.sqrt(v3_sq))
    # center of I2 on its axis: the projection of e1
    u = normalize(project_orthogonal(vec(1, 0, 0), v))
    I1 = Isometry.diagonal(al)
    I2 = rotation_about_geodesic(v, be[1], be[0])
    return _finish(sel, CharVarPoint(v2_sq, v3_sq), I1, I2, u, v)


def solve(sel: EigenvalueSelection, pt: Optional[CharVarPoint] = None) -> RepresentationTriple:
    if sel.case is Case.REGULAR:
        if pt is None:
            raise InvalidSelection("the regular case needs a point (s, t)")
        return solve_regular(sel, pt)
    if sel.case is Case.SPECIAL_POINT:
        return solve_special_point(sel)
    return solve_special_line(sel)
