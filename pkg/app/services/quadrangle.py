"""Quadrangle of bisectors C1 C2 C3 C4 and the discreteness certificate Q1-Q4."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from app.config import DEFAULT_TOL
from app.errors import DegenerateInput, NotUltraparallel, QuadrangleFailed, TurnoverError
from app.geometry.chgeom import (
    BisectorSegment,
    CVec3,
    bisector_between,
    herm,
    normalize,
    orthonormal_complement,
    tance,
    vec,
)
from app.geometry.isom import eigenvector_for
from app.services.charvar import Case, EigenvalueSelection, RepresentationTriple

logger = logging.getLogger(__name__)

Q1_PAIRS = (("p1", "p2"), ("p2", "p3"), ("p1", "p3"), ("p1", "p4"), ("p2", "p4"), ("p3", "p4"))
SIDES = {"12": ("p1", "p2"), "23": ("p2", "p3"), "34": ("p3", "p4"),
         "41": ("p4", "p1"), "24": ("p2", "p4")}

# Polar candidates for C2 when I2 is a rotation about a point
POLAR_PSI_STEPS = 9
POLAR_PHI_STEPS = 16


@dataclass(frozen=True, eq=False)
class QuadrangleData:
    p1: CVec3
    p2: CVec3
    p3: CVec3
    p4: CVec3
    c1: CVec3
    c2: CVec3
    c3: CVec3
    c4: CVec3
    sides: Dict[str, BisectorSegment] = field(default_factory=dict)

    def polar(self, name: str) -> CVec3:
        return getattr(self, name)

    def side(self, key: str) -> BisectorSegment:
        try:
            return self.sides[key]
        except KeyError:
            a, b = SIDES[key]
            raise NotUltraparallel(tance(self.polar(a), self.polar(b)))


@dataclass
class QuadrangleReport:
    q1: Dict[str, float]
    q2: Optional[Dict[str, float]] = None
    q31: Optional[float] = None
    q32: Optional[float] = None
    q33: Optional[Tuple[float, float]] = None
    q33_borderline: bool = False
    q4: bool = False
    passed: bool = False
    min_margin: float = -math.inf
    failed: List[str] = field(default_factory=list)

    @property
    def q1_holds(self) -> bool:
        return all(m > 0 for m in self.q1.values())

    def margins(self) -> Dict[str, float]:
        """Flat name -> margin view used by the CSV writers"""
        flat = {f"q1_{k}": v for k, v in self.q1.items()}
        if self.q2 is not None:
            flat.update({f"q2_{k}": v for k, v in self.q2.items()})
        if self.q31 is not None:
            flat["q31"] = self.q31
            flat["q32"] = self.q32
            flat["q33_a"], flat["q33_b"] = self.q33
        return flat


def build_quadrangle(rep: RepresentationTriple, p2: Optional[CVec3] = None,
                     tol: float = DEFAULT_TOL) -> QuadrangleData:
    """Vertex geodesics: C1 from I1, C2 from I2, C3 from I3 and C4 = I1^-1 C2."""
    sel = rep.selection
    c1 = vec(1, 0, 0)
    p1 = vec(0, 1, 0)
    c2 = normalize(rep.u)
    if p2 is None:
        if rep.v is None:
            raise DegenerateInput("a rotation about a point needs an explicit polar for C2")
        p2 = rep.v
    p2 = normalize(p2)

    c3 = normalize(eigenvector_for(rep.I3, np.conj(sel.gamma[0])))
    p3 = normalize(eigenvector_for(rep.I3, np.conj(sel.gamma[1])))
    back = rep.I1.inverse()
    c4 = normalize(back.apply(c2))
    p4 = normalize(back.apply(p2))

    polars = {"p1": p1, "p2": p2, "p3": p3, "p4": p4}
    sides = {}
    for key, (a, b) in SIDES.items():
        if tance(polars[a], polars[b]) > 1 + tol:
            sides[key] = bisector_between(polars[a], polars[b], tol)
    return QuadrangleData(p1=p1, p2=p2, p3=p3, p4=p4, c1=c1, c2=c2, c3=c3, c4=c4, sides=sides)


def _unit(z: complex) -> complex:
    return z / abs(z)


def _q2_slacks(t: float, s: float, eps: complex) -> Tuple[float, float, float]:
    e0, e1 = eps.real, eps.imag
    first = 1 + 2 * t * t * s * e0 - (e0 * e0 * t * t + s * s + t * t)
    second = 1 + 2 * t * t * s * e0 - (e0 * e0 * s * s + 2 * t * t)
    return first, second, -e1


def _symmetric_transversal(t_ij: float, t_jk: float, t_ki: float, eps0: float) -> bool:
    product = 2 * t_ij * t_jk * t_ki * eps0
    return all(eps0 * eps0 * a * a + b * b + c * c < 1 + product
               for a, b, c in ((t_ij, t_jk, t_ki), (t_jk, t_ki, t_ij), (t_ki, t_ij, t_jk)))


def _transversality_slack(pa: CVec3, pc: CVec3, hinge: CVec3, name: str) -> float:
    """RHS - LHS of |Re(<pa,pc><h,h> / (<pa,h><h,pc>)) - 1| < sqrt(1-1/ta(h,pa)) sqrt(1-1/ta(h,pc))"""
    ratio = herm(pa, pc) * herm(hinge, hinge) / (herm(pa, hinge) * herm(hinge, pc))
    lhs = abs(ratio.real - 1)
    radicands = (1 - 1 / tance(hinge, pa), 1 - 1 / tance(hinge, pc))
    if min(radicands) <= 0:
        raise QuadrangleFailed([name], {f"{name}_radicand": min(radicands)})
    rhs = math.sqrt(radicands[0]) * math.sqrt(radicands[1])
    return rhs - lhs


def check_quadrangle(qd: QuadrangleData, sel: EigenvalueSelection,
                     tol: float = DEFAULT_TOL) -> QuadrangleReport:
    p1, p2, p3, p4, c3 = qd.p1, qd.p2, qd.p3, qd.p4, qd.c3
    # ultraparallel beyond the tolerance, as bisector_between requires
    q1 = {a + b: tance(qd.polar(a), qd.polar(b)) - 1 - tol for a, b in Q1_PAIRS}
    report = QuadrangleReport(q1=q1, q4=sel.q4_holds())
    if not report.q4:
        report.failed.append("Q4")
    if not report.q1_holds:
        report.failed.append("Q1")
        report.min_margin = min(q1.values())
        return report

    t = math.sqrt(tance(p1, p2))
    s = math.sqrt(tance(p2, p4))
    t_prime = math.sqrt(tance(p2, p3))
    eps = _unit(herm(p1, p2) * herm(p2, p4) * herm(p4, p1))
    eps_prime = _unit(herm(p2, p3) * herm(p3, p4) * herm(p4, p2))
    a, b, c = _q2_slacks(t, s, eps)
    a2, b2, c2 = _q2_slacks(t_prime, s, eps_prime)
    report.q2 = {"a": a, "b": b, "c": c, "a_prime": a2, "b_prime": b2, "c_prime": c2}

    for name, (x, y, z), e, slacks in (("124", (p1, p2, p4), eps, (a, b, c)),
                                       ("342", (p3, p4, p2), eps_prime, (a2, b2, c2))):
        symmetric = _symmetric_transversal(math.sqrt(tance(x, y)), math.sqrt(tance(y, z)),
                                           math.sqrt(tance(z, x)), e.real) and e.imag < 0
        if symmetric != all(m > 0 for m in slacks):
            logger.warning(f"triangle {name}: printed Q2 and the side-symmetric criterion disagree")

    report.q31 = _transversality_slack(p3, p1, hinge=p2, name="Q3.1")
    report.q32 = _transversality_slack(p1, p3, hinge=p4, name="Q3.2")

    first = (herm(p1, c3) * herm(c3, p2) / herm(p1, p2)).imag
    second = (herm(p4, c3) * herm(c3, p1) / herm(p4, p1)).imag
    report.q33 = (first, second)
    q33_min = min(first, second)
    report.q33_borderline = abs(q33_min) <= tol

    if min(report.q2.values()) <= 0:
        report.failed.append("Q2")
    if report.q31 <= 0:
        report.failed.append("Q3.1")
    if report.q32 <= 0:
        report.failed.append("Q3.2")
    if q33_min < -tol:
        report.failed.append("Q3.3")

    report.min_margin = min([*q1.values(), *report.q2.values(), report.q31, report.q32,
                             0.0 if report.q33_borderline else q33_min])
    report.passed = not report.failed
    return report


def polar_candidates(u: CVec3) -> Iterator[CVec3]:
    """Deterministic unit polars in the orthogonal complement of u"""
    a, b = orthonormal_complement(u)
    for i in range(POLAR_PSI_STEPS):
        psi = i * (math.pi / 2) / (POLAR_PSI_STEPS - 1)
        for j in range(POLAR_PHI_STEPS if 0 < i else 1):
            phi = 2 * math.pi * j / POLAR_PHI_STEPS
            yield math.cos(psi) * a + math.sin(psi) * np.exp(1j * phi) * b


def find_quadrangle(rep: RepresentationTriple,
                    tol: float = DEFAULT_TOL) -> Tuple[QuadrangleData, QuadrangleReport]:
    """Build and certify the quadrangle; a rotation about a point tries every candidate C2."""
    sel = rep.selection
    if sel.case is not Case.SPECIAL_POINT:
        qd = build_quadrangle(rep, tol=tol)
        return qd, check_quadrangle(qd, sel, tol)

    best = None
    for candidate in polar_candidates(rep.u):
        try:
            qd = build_quadrangle(rep, p2=candidate, tol=tol)
            report = check_quadrangle(qd, sel, tol)
        except TurnoverError as e:
            logger.debug(f"polar candidate rejected: {e}")
            continue
        if report.passed:
            return qd, report
        if best is None or report.min_margin > best[1].min_margin:
            best = (qd, report)
    if best is None:
        raise DegenerateInput("no admissible polar for the second vertex geodesic")
    return best
