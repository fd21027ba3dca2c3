"""Discrete invariants of the disc orbibundles: chi, the integer f, e and the Toledo invariant.

chi, e and tau are exact fractions. Floating point only enters through the
integer f, which is assembled from guarded cyclic-order predicates.
"""
import cmath
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple, Union

import numpy as np

from app.config import DEFAULT_TOL
from app.errors import IndeterminateOrder, NonEllipticHolonomy, NumericalInstability, QuadrangleFailed
from app.geometry.chgeom import (
    CVec3,
    SegmentEnd,
    Slice,
    bisector_between,
    cyclic_order_o,
    herm,
    meridional_companion,
    meridional_transport,
    theta_coordinate,
)
from app.geometry.isom import Isometry, Restriction, RestrictionKind, classify_restriction, reflection_in
from app.services.charvar import CharVarPoint, EigenvalueSelection, RepresentationTriple, solve
from app.services.quadrangle import QuadrangleData, QuadrangleReport, find_quadrangle

logger = logging.getLogger(__name__)

FIRST, SECOND = SegmentEnd.FIRST, SegmentEnd.SECOND

BASE_POINT_STEP = math.pi / 7
MAX_BASE_POINTS = 12
MOD2_AGREEMENT = 1e-6

Number = Union[float, Fraction]


def reduce_mod2(x: Number) -> Number:
    """Representative of x mod 2 in (-1, 1]"""
    return x - 2 * math.ceil((x - 1) / 2)


def circular_distance(a: float, b: float) -> float:
    return abs(float(reduce_mod2(a - b)))


@dataclass(frozen=True, eq=False)
class HolonomyData:
    isometry: Isometry
    base_slice: Slice
    restriction: Restriction

    @property
    def kind(self) -> RestrictionKind:
        return self.restriction.kind

    @property
    def rotation_angle(self) -> Optional[float]:
        return self.restriction.rotation_angle


@dataclass(frozen=True)
class InvariantReport:
    chi: Fraction
    l1: int
    l2: int
    l3: int
    f: int
    e: Fraction
    e_over_chi: Fraction
    tau: Fraction
    tau_mod2_closed: Fraction
    tau_mod2_numeric: float
    consistency: bool
    numeric_agrees: bool
    e_cor: Fraction
    holonomy_i_angle: Optional[float] = None
    holonomy_j_angle: Optional[float] = None

    @property
    def relation_residual(self) -> Fraction:
        """tau - tau_mod2_closed reduced mod 2; zero when 3 tau = 2 (e + chi) is consistent"""
        return reduce_mod2(self.tau - self.tau_mod2_closed)


def rotation_numbers(sel: EigenvalueSelection) -> Tuple[int, int, int]:
    """l_j from the eigenvalue ratios of I1, I2 and I3 on the exponents.

    I3 = (I2 I1)^-1 has eigenvalues conj(gamma_j), so its ratio is gamma1/gamma3.
    """
    numbers = []
    n1, n2, n3 = sel.signature.orders
    for first, third, n in ((sel.a[0], sel.a[2], n1), (sel.b[0], sel.b[2], n2), (sel.g[2], sel.g[0], n3)):
        gap = (third - first) % (3 * n)
        assert gap % 3 == 0, "eigenvalue ratios must be n-th roots of unity"
        numbers.append((gap // 3) % n)
    return tuple(numbers)


def triangle_holonomy(qa: CVec3, qb: CVec3, qc: CVec3, tol: float = DEFAULT_TOL) -> HolonomyData:
    """Reflections in the three middle slices, the first one applied first."""
    b_ab = bisector_between(qa, qb, tol)
    b_bc = bisector_between(qb, qc, tol)
    b_ca = bisector_between(qc, qa, tol)
    holonomy = (reflection_in(b_ca.middle_polar)
                @ reflection_in(b_bc.middle_polar)
                @ reflection_in(b_ab.middle_polar))
    base = b_ab.vertex_slice(FIRST)
    return HolonomyData(isometry=holonomy, base_slice=base,
                        restriction=classify_restriction(holonomy, base, tol))


def quadrangle_holonomies(qd: QuadrangleData,
                          tol: float = DEFAULT_TOL) -> Tuple[HolonomyData, HolonomyData]:
    """Holonomies I of triangle (C1, C2, C4) and J of triangle (C3, C4, C2)"""
    return (triangle_holonomy(qd.p1, qd.p2, qd.p4, tol),
            triangle_holonomy(qd.p3, qd.p4, qd.p2, tol))


def compute_f(qd: QuadrangleData, rep: RepresentationTriple, base_angle: float = 0.0,
              holonomies: Optional[Tuple[HolonomyData, HolonomyData]] = None,
              max_attempts: int = MAX_BASE_POINTS, tol: float = DEFAULT_TOL) -> int:
    hol_i, hol_j = holonomies or quadrangle_holonomies(qd, tol)
    for name, hol in (("I", hol_i), ("J", hol_j)):
        if hol.kind is not RestrictionKind.ELLIPTIC:
            raise NonEllipticHolonomy(f"holonomy {name} is {hol.kind.value}",
                                      {"holonomy": name, "kind": hol.kind.value,
                                       "trace": hol.restriction.trace})

    b12 = qd.side("12")
    b23 = qd.side("23")
    s1 = b12.vertex_slice(FIRST)
    s3 = b23.vertex_slice(SECOND)
    I = hol_i.isometry
    J_inv = hol_j.isometry.inverse()
    I1_inv = rep.I1.inverse()
    I3 = rep.I3

    def on_c1(z: CVec3) -> complex:
        return theta_coordinate(s1, z)

    def on_c3(z: CVec3) -> complex:
        return theta_coordinate(s3, z)

    for attempt in range(max_attempts):
        z1 = s1.boundary_point(cmath.exp(1j * (base_angle + BASE_POINT_STEP * attempt)))
        z2 = meridional_transport(b12, z1, FIRST, SECOND)
        z3 = meridional_transport(b23, rep.I2.apply(z2), FIRST, SECOND)
        z3_prime = meridional_transport(b23, z2, FIRST, SECOND)
        try:
            return (cyclic_order_o(on_c3(z3_prime), on_c3(z3), on_c3(I3.apply(z3)))
                    + cyclic_order_o(on_c3(z3_prime), on_c3(I3.apply(z3)), on_c3(J_inv.apply(z3_prime)))
                    - cyclic_order_o(on_c1(z1), on_c1(I1_inv.apply(z1)), on_c1(I.apply(z1))))
        except IndeterminateOrder as e:
            logger.debug(f"base point {attempt} rejected: {e}")
    raise IndeterminateOrder(f"no admissible base point after {max_attempts} attempts")


def euler_number(sel: EigenvalueSelection, f: int) -> Fraction:
    l1, l2, l3 = rotation_numbers(sel)
    n1, n2, n3 = sel.signature.orders
    return f - Fraction(l1, n1) - Fraction(l2, n2) - Fraction(l3, n3)


def tau_mod2_closed(sel: EigenvalueSelection) -> Fraction:
    """Arg(alpha1 beta1 / gamma1) / pi in (-1, 1], exactly"""
    n1, n2, n3 = sel.signature.orders
    turns = Fraction(sel.a[0], 3 * n1) + Fraction(sel.b[0], 3 * n2) - Fraction(sel.g[0], 3 * n3)
    return reduce_mod2(2 * turns)


def toledo_mod2_numeric(qd: QuadrangleData, rep: RepresentationTriple,
                        tol: float = 1e-12) -> float:
    """Toledo invariant mod 2 from base-point changes of the Kaehler primitive along the quadrangle"""
    sel = rep.selection
    alpha1, beta1, gamma1 = sel.alpha[0], sel.beta[0], sel.gamma[0]
    c1, c2, c3 = qd.c1, qd.c2, qd.c3
    c1p = meridional_companion(qd.side("12"), c2, SECOND, FIRST)
    c3p = meridional_companion(qd.side("23"), c2, FIRST, SECOND)
    I1_inv = rep.I1.inverse()
    I3_c3p = rep.I3.apply(c3p)
    back_c2 = I1_inv.apply(c2)
    back_c1p = I1_inv.apply(c1p)

    terms = (
        (herm(c2, c3) * herm(c3, c3p), herm(c2, c3p)),
        (np.conj(gamma1) * herm(c2, I3_c3p) * herm(c3p, c3), herm(c2, c3)),
        (beta1 * herm(c2, back_c2) * herm(c2, c3p), herm(c2, I3_c3p)),
        (herm(c2, back_c1p) * herm(c1p, c2), herm(c2, back_c2)),
        (alpha1 * herm(c2, c1) * herm(c1, c1p), herm(c2, back_c1p)),
        (herm(c2, c1p) * herm(c1p, c1), herm(c2, c1)),
    )
    total = 0.0
    for index, (numerator, denominator) in enumerate(terms, start=1):
        if abs(numerator) < tol or abs(denominator) < tol:
            raise NumericalInstability(f"term {index} of the Toledo sum is degenerate",
                                       {"term": index, "numerator": abs(numerator),
                                        "denominator": abs(denominator)})
        total += cmath.phase(numerator / denominator)
    return float(reduce_mod2(total / math.pi))


def invariant_report(sel: EigenvalueSelection, qd: QuadrangleData, rep: RepresentationTriple,
                     base_angle: float = 0.0, tol: float = DEFAULT_TOL) -> InvariantReport:
    chi = sel.signature.chi
    l1, l2, l3 = rotation_numbers(sel)
    hol_i, hol_j = quadrangle_holonomies(qd, tol)
    f = compute_f(qd, rep, base_angle=base_angle, holonomies=(hol_i, hol_j), tol=tol)
    e = euler_number(sel, f)
    tau = 2 * (e + chi) / 3

    closed = tau_mod2_closed(sel)
    numeric = toledo_mod2_numeric(qd, rep)
    consistency = reduce_mod2(tau - closed) == 0
    numeric_agrees = circular_distance(numeric, float(closed)) < MOD2_AGREEMENT
    if not numeric_agrees:
        logger.warning(f"({sel.signature.label}) {sel.label}: numeric Toledo {numeric:.9f} "
                       f"disagrees with the closed form {closed}")

    tau_cor = closed + 2 * round((tau - closed) / 2)
    return InvariantReport(
        chi=chi, l1=l1, l2=l2, l3=l3, f=f, e=e, e_over_chi=e / chi, tau=tau,
        tau_mod2_closed=closed, tau_mod2_numeric=numeric,
        consistency=consistency, numeric_agrees=numeric_agrees,
        e_cor=Fraction(3, 2) * tau_cor - chi,
        holonomy_i_angle=hol_i.rotation_angle, holonomy_j_angle=hol_j.rotation_angle,
    )


@dataclass(frozen=True, eq=False)
class PointQuery:
    representation: RepresentationTriple
    quadrangle: QuadrangleData
    certificate: QuadrangleReport
    report: InvariantReport


def query_point(sel: EigenvalueSelection, pt: Optional[CharVarPoint] = None,
                tol: float = DEFAULT_TOL) -> PointQuery:
    """Solve, certify and compute invariants at a single point; raises on any failed stage."""
    rep = solve(sel, pt)
    qd, certificate = find_quadrangle(rep, tol)
    if not certificate.passed:
        raise QuadrangleFailed(certificate.failed, certificate.margins())
    report = invariant_report(sel, qd, rep, tol=tol)
    return PointQuery(representation=rep, quadrangle=qd, certificate=certificate, report=report)
