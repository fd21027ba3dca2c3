"""Hermitian geometry of signature (-,+,+) and the projective model of the complex hyperbolic plane.

Points are complex 3-vectors (numpy arrays of shape (3,)) in the frame where the
Hermitian form is diag(-1, 1, 1). The form is linear in its first argument.
Negative vectors are points of the ball, positive vectors are polars of complex
geodesics and isotropic vectors are boundary points.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Tuple

import numpy as np

from app.config import DEFAULT_TOL
from app.errors import DegenerateInput, IndeterminateOrder, NotOnSlice, NotUltraparallel

logger = logging.getLogger(__name__)

CVec3 = np.ndarray

FORM = np.array([-1.0, 1.0, 1.0])

# Relative tolerance for "lies on this circle / slice" checks
BOUNDARY_TOL = 1e-7

# Two boundary points closer than this are neither distinct nor coincident
ORDER_GUARD = 1e-8


def vec(x1: complex, x2: complex, x3: complex) -> CVec3:
    return np.array([x1, x2, x3], dtype=complex)


def herm(x: CVec3, y: CVec3) -> complex:
    """<x, y> = -x1*conj(y1) + x2*conj(y2) + x3*conj(y3)"""
    return complex(np.sum(FORM * x * np.conj(y)))


def norm_sq(x: CVec3) -> float:
    return herm(x, x).real


def _euclid_sq(x: CVec3) -> float:
    return float(np.vdot(x, x).real)


def _is_null(value: float, x: CVec3, tol: float) -> bool:
    return abs(value) <= tol * _euclid_sq(x)


class PointSign(str, Enum):
    NEGATIVE = "negative"
    ISOTROPIC = "isotropic"
    POSITIVE = "positive"


@dataclass(frozen=True)
class SignClass:
    sign: PointSign
    value: float
    tol: float


def classify_point(p: CVec3, tol: float = DEFAULT_TOL) -> SignClass:
    """Classify a projective point; the threshold is relative to the Euclidean size of p"""
    scale = _euclid_sq(p)
    if scale == 0.0:
        raise DegenerateInput("the zero vector is not a projective point")
    value = norm_sq(p)
    if value < -tol * scale:
        sign = PointSign.NEGATIVE
    elif value > tol * scale:
        sign = PointSign.POSITIVE
    else:
        sign = PointSign.ISOTROPIC
    return SignClass(sign=sign, value=value, tol=tol)


def tance(p: CVec3, q: CVec3, tol: float = DEFAULT_TOL) -> float:
    """ta(p, q) = <p,q><q,p> / (<p,p><q,q>)"""
    pp = norm_sq(p)
    qq = norm_sq(q)
    if _is_null(pp, p, tol) or _is_null(qq, q, tol):
        raise DegenerateInput("tance is undefined for isotropic points")
    pq = herm(p, q)
    return (pq.real ** 2 + pq.imag ** 2) / (pp * qq)


def herm_cross(a: CVec3, b: CVec3, tol: float = DEFAULT_TOL) -> CVec3:
    """A nonzero w with <w, a> = <w, b> = 0"""
    w = np.cross(np.conj(FORM * a), np.conj(FORM * b))
    if np.linalg.norm(w) <= tol * np.linalg.norm(a) * np.linalg.norm(b):
        raise DegenerateInput("vectors are projectively equal")
    return w


def normalize(x: CVec3, tol: float = DEFAULT_TOL) -> CVec3:
    """Rescale so that <x, x> = +1 or -1"""
    value = norm_sq(x)
    if _is_null(value, x, tol):
        raise DegenerateInput("cannot normalize an isotropic vector")
    return x / math.sqrt(abs(value))


def projectively_equal(x: CVec3, y: CVec3, tol: float = 1e-9) -> bool:
    return bool(np.linalg.norm(np.cross(x, y)) <= tol * np.linalg.norm(x) * np.linalg.norm(y))


def project_orthogonal(x: CVec3, polar: CVec3) -> CVec3:
    """Component of x orthogonal to the non-isotropic vector polar"""
    return x - herm(x, polar) / norm_sq(polar) * polar


def orthonormal_complement(u: CVec3, tol: float = DEFAULT_TOL) -> Tuple[CVec3, CVec3]:
    """Two orthogonal unit positive vectors spanning the orthogonal complement of a negative u"""
    if classify_point(u, tol).sign is not PointSign.NEGATIVE:
        raise DegenerateInput("orthonormal_complement expects a negative vector")
    a = project_orthogonal(vec(0, 1, 0), u)
    if np.linalg.norm(a) <= tol:
        a = project_orthogonal(vec(0, 0, 1), u)
    a = normalize(a, tol)
    b = normalize(herm_cross(u, a, tol), tol)
    return a, b


@dataclass(frozen=True, eq=False)
class Slice:
    """A complex geodesic with a chosen center and boundary direction.

    Boundary points are [center + theta * direction] with |theta| = 1.
    """
    center: CVec3
    polar: CVec3
    direction: CVec3

    @classmethod
    def through(cls, center: CVec3, polar: CVec3, tol: float = DEFAULT_TOL) -> "Slice":
        c = normalize(center, tol)
        q = normalize(polar, tol)
        if classify_point(c, tol).sign is not PointSign.NEGATIVE:
            raise DegenerateInput("slice center must be a negative point")
        if abs(herm(c, q)) > BOUNDARY_TOL * np.linalg.norm(c) * np.linalg.norm(q):
            raise DegenerateInput("slice center does not lie on the complex geodesic")
        d = normalize(herm_cross(c, q, tol), tol)
        return cls(center=c, polar=q, direction=d)

    def boundary_point(self, theta: complex) -> CVec3:
        return self.center + theta * self.direction


def _require_on_boundary(z: CVec3, polar: CVec3, what: str) -> None:
    scale = math.sqrt(_euclid_sq(z))
    if scale == 0.0:
        raise NotOnSlice("the zero vector is not a boundary point")
    if abs(norm_sq(z)) > BOUNDARY_TOL * scale * scale:
        raise NotOnSlice(f"point is not isotropic, so it is not on the {what} boundary",
                         {"norm": norm_sq(z)})
    if abs(herm(z, polar)) > BOUNDARY_TOL * scale * np.linalg.norm(polar):
        raise NotOnSlice(f"point does not lie on the {what}", {"offset": abs(herm(z, polar))})


def theta_coordinate(S: Slice, z: CVec3) -> complex:
    """theta = -<z, d> / <z, c>, the boundary coordinate of z on S"""
    _require_on_boundary(z, S.polar, "slice")
    return -herm(z, S.direction) / herm(z, S.center)


def cyclic_order_o(t1: complex, t2: complex, t3: complex, guard: float = ORDER_GUARD) -> int:
    """1 if the three unit numbers are pairwise distinct and clockwise, else 0"""
    for a, b in ((t1, t2), (t1, t3), (t2, t3)):
        gap = abs(a - b)
        if gap == 0.0:
            return 0
        if gap < guard:
            raise IndeterminateOrder(f"boundary points {gap:.3g} apart", {"gap": gap})
    base = cmath.phase(t1)
    d2 = (cmath.phase(t2) - base) % (2 * math.pi)
    d3 = (cmath.phase(t3) - base) % (2 * math.pi)
    return 0 if d2 < d3 else 1


class SegmentEnd(IntEnum):
    FIRST = 1
    SECOND = 2


@dataclass(frozen=True, eq=False)
class BisectorSegment:
    """Segment of the bisector between two ultraparallel complex geodesics.

    foot1/foot2 are the ends of the real spine on the two vertex geodesics,
    normalized to -1 with <foot1, foot2> real negative. The middle slice passes
    through the midpoint of the spine segment.
    """
    q1: CVec3
    q2: CVec3
    spine_polar: CVec3
    foot1: CVec3
    foot2: CVec3
    midpoint: CVec3
    middle_polar: CVec3

    def foot(self, end: SegmentEnd) -> CVec3:
        return self.foot1 if end == SegmentEnd.FIRST else self.foot2

    def vertex_polar(self, end: SegmentEnd) -> CVec3:
        return self.q1 if end == SegmentEnd.FIRST else self.q2

    def vertex_slice(self, end: SegmentEnd) -> Slice:
        return Slice(center=self.foot(end), polar=normalize(self.vertex_polar(end)),
                     direction=self.spine_polar)

    def middle_slice(self) -> Slice:
        return Slice(center=self.midpoint, polar=self.middle_polar, direction=self.spine_polar)


def bisector_between(q1: CVec3, q2: CVec3, tol: float = DEFAULT_TOL) -> BisectorSegment:
    for q in (q1, q2):
        if classify_point(q, tol).sign is not PointSign.POSITIVE:
            raise DegenerateInput("vertex polars must be positive")
    spine = herm_cross(q1, q2, tol)
    ta = tance(q1, q2, tol)
    if ta <= 1 + tol:
        raise NotUltraparallel(ta)

    p = normalize(spine, tol)
    c1 = normalize(herm_cross(q1, p, tol), tol)
    c2 = normalize(herm_cross(q2, p, tol), tol)
    h = herm(c1, c2)
    c2 = c2 * (-h / abs(h))

    m = normalize(c1 + c2, tol)
    m_pol = normalize(herm_cross(m, p, tol), tol)
    return BisectorSegment(q1=q1, q2=q2, spine_polar=p, foot1=c1, foot2=c2,
                           midpoint=m, middle_polar=m_pol)


def _slide(B: BisectorSegment, z: CVec3, source: SegmentEnd, target: SegmentEnd) -> CVec3:
    c_src = B.foot(source)
    ratio = -herm(z, B.spine_polar) / herm(z, c_src)
    return B.foot(target) + ratio * B.spine_polar


def meridional_transport(B: BisectorSegment, z: CVec3, source: SegmentEnd,
                         target: SegmentEnd) -> CVec3:
    """Move a boundary point of one end slice along its meridian to the other end slice"""
    _require_on_boundary(z, B.vertex_polar(source), "bisector end slice")
    return _slide(B, z, source, target)


def meridional_companion(B: BisectorSegment, x: CVec3, source: SegmentEnd,
                         target: SegmentEnd, tol: float = DEFAULT_TOL) -> CVec3:
    """Other end of the meridional curve through an interior point x of an end slice.

    The curve keeps a constant distance from the spine inside one meridian:
    cosh(delta) * x_hat + sinh(delta) * eps * p as x_hat runs along the spine.
    """
    if classify_point(x, tol).sign is not PointSign.NEGATIVE:
        raise DegenerateInput("meridional companion needs an interior point")
    q = B.vertex_polar(source)
    if abs(herm(x, q)) > BOUNDARY_TOL * np.linalg.norm(x) * np.linalg.norm(q):
        raise NotOnSlice("point does not lie on the bisector end slice")
    return normalize(_slide(B, x, source, target), tol)
