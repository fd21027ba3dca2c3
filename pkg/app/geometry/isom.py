"""SU(2,1) representatives of holomorphic isometries of the complex hyperbolic plane."""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from app.config import DEFAULT_TOL
from app.errors import DegenerateInput, NotAnEigenvalue, NotStable, RepeatedEigenvalueAmbiguity
from app.geometry.chgeom import (
    FORM,
    CVec3,
    Slice,
    herm,
    norm_sq,
    projectively_equal,
)

logger = logging.getLogger(__name__)

J = np.diag(FORM).astype(complex)

# Relative size below which all row cross products count as zero
RANK_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class Isometry:
    matrix: np.ndarray

    @classmethod
    def identity(cls) -> "Isometry":
        return cls(np.eye(3, dtype=complex))

    @classmethod
    def diagonal(cls, values: Sequence[complex]) -> "Isometry":
        return cls(np.diag(np.asarray(values, dtype=complex)))

    def apply(self, x: CVec3) -> CVec3:
        return self.matrix @ x

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return Isometry(self.matrix @ other.matrix)

    def inverse(self) -> "Isometry":
        # M* J M = J  =>  M^-1 = J M* J
        return Isometry(J @ self.matrix.conj().T @ J)

    def power(self, n: int) -> "Isometry":
        if n < 0:
            return self.inverse().power(-n)
        return Isometry(np.linalg.matrix_power(self.matrix, n))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def det(self) -> complex:
        return complex(np.linalg.det(self.matrix))

    def form_defect(self) -> float:
        """max |M* J M - J|"""
        return float(np.max(np.abs(self.matrix.conj().T @ J @ self.matrix - J)))

    def distance_to(self, other: "Isometry") -> float:
        return float(np.max(np.abs(self.matrix - other.matrix)))

    def scalar_cube_root(self, tol: float = 1e-8) -> Optional[int]:
        """k if M = exp(2 pi i k / 3) * Id within tol, else None"""
        for k in range(3):
            omega = np.exp(2j * np.pi * k / 3)
            if np.max(np.abs(self.matrix - omega * np.eye(3))) <= tol:
                return k
        return None


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Pairwise orthogonal fixed points c (negative), p, q with eigenvalues eps1, eps2, eps3."""
    c: CVec3
    p: CVec3
    q: CVec3
    eps1: complex
    eps2: complex
    eps3: complex


def _projector(x: CVec3) -> np.ndarray:
    """Matrix of y -> <y, x> / <x, x> * x"""
    return np.outer(x, np.conj(x) * FORM) / norm_sq(x)


def elliptic_from_axes(d: SpectralData, tol: float = DEFAULT_TOL) -> Isometry:
    eps = (d.eps1, d.eps2, d.eps3)
    if any(abs(abs(e) - 1) > 1e-12 for e in eps) or abs(d.eps1 * d.eps2 * d.eps3 - 1) > 1e-12:
        raise DegenerateInput("eigenvalues must be unit numbers with product 1")
    axes = (d.c, d.p, d.q)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = axes[i], axes[j]
            if abs(herm(a, b)) > 1e-7 * np.linalg.norm(a) * np.linalg.norm(b):
                raise DegenerateInput("fixed points of an elliptic isometry must be orthogonal",
                                      {"pair": [i, j], "product": abs(herm(a, b))})
    if norm_sq(d.c) >= -tol * np.linalg.norm(d.c) ** 2:
        raise DegenerateInput("the center of an elliptic isometry must be negative")

    matrix = ((d.eps1 - d.eps3) * _projector(d.c)
              + (d.eps2 - d.eps3) * _projector(d.p)
              + d.eps3 * np.eye(3, dtype=complex))
    return Isometry(matrix)


def rotation_about_point(center: CVec3, eps_center: complex, eps_rest: complex) -> Isometry:
    """x -> (eps_center - eps_rest) <x,u>/<u,u> u + eps_rest x"""
    return Isometry((eps_center - eps_rest) * _projector(center) + eps_rest * np.eye(3, dtype=complex))


def rotation_about_geodesic(polar: CVec3, eps_polar: complex, eps_axis: complex) -> Isometry:
    """x -> (eps_polar - eps_axis) <x,v>/<v,v> v + eps_axis x"""
    return Isometry((eps_polar - eps_axis) * _projector(polar) + eps_axis * np.eye(3, dtype=complex))


def reflection_in(polar: CVec3) -> Isometry:
    """x -> -x + 2 <x,p>/<p,p> p, the involution fixing the complex geodesic with this polar"""
    return Isometry(2 * _projector(polar) - np.eye(3, dtype=complex))


def eigenvector_for(M: Isometry, lam: complex, tol: float = 1e-8) -> CVec3:
    """Kernel vector of M - lam*Id from cross products of its rows."""
    A = M.matrix - lam * np.eye(3)
    scale = float(np.linalg.norm(A))
    if scale == 0.0:
        raise RepeatedEigenvalueAmbiguity("matrix is scalar; every vector is an eigenvector")

    candidates = [np.cross(A[0], A[1]), np.cross(A[0], A[2]), np.cross(A[1], A[2])]
    best = max(candidates, key=lambda w: float(np.linalg.norm(w)))
    size = float(np.linalg.norm(best))
    if size <= RANK_TOL * scale * scale:
        raise RepeatedEigenvalueAmbiguity(f"eigenvalue {lam:.6g} has a two-dimensional eigenspace")

    residual = float(np.linalg.norm(A @ best)) / size
    if residual > tol * scale:
        raise NotAnEigenvalue(f"{lam:.6g} is not an eigenvalue", {"residual": residual})
    return best / size


def goldman_discriminant(z: complex) -> float:
    a = abs(z) ** 2
    return a * a - 8 * (z ** 3).real + 18 * a - 27


class RestrictionKind(str, Enum):
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class Restriction:
    kind: RestrictionKind
    trace: float
    margin: float
    rotation_angle: Optional[float] = None


def classify_restriction(M: Isometry, S: Slice, tol: float = DEFAULT_TOL) -> Restriction:
    """Classify M acting on the complex geodesic of S by the normalized trace of the 2x2 block."""
    if not projectively_equal(M.apply(S.polar), S.polar, 1e-7):
        raise NotStable("isometry does not preserve the complex geodesic of the slice")

    basis = (S.center, S.direction)
    block = np.empty((2, 2), dtype=complex)
    for j, b_j in enumerate(basis):
        image = M.apply(b_j)
        for i, b_i in enumerate(basis):
            block[i, j] = herm(image, b_i) / norm_sq(b_i)

    det = complex(np.linalg.det(block))
    trace = abs(complex(np.trace(block))) / math.sqrt(abs(det))
    margin = 2.0 - trace
    if trace < 2 - tol:
        angle = 2 * math.acos(min(1.0, trace / 2))
        return Restriction(RestrictionKind.ELLIPTIC, trace, margin, angle)
    if trace > 2 + tol:
        return Restriction(RestrictionKind.HYPERBOLIC, trace, margin)
    return Restriction(RestrictionKind.PARABOLIC, trace, 0.0)
