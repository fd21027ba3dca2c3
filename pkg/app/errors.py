"""Exception hierarchy shared by the geometry, solver and census layers."""
from typing import Any, Dict, List, Optional


class TurnoverError(Exception):
    """Base class for every domain error"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class DegenerateInput(TurnoverError):
    pass


class NotUltraparallel(TurnoverError):
    def __init__(self, tance: float):
        super().__init__(
            f"complex geodesics are not ultraparallel (ta={tance:.6g})",
            {"tance": tance},
        )
        self.tance = tance


class NotOnSlice(TurnoverError):
    pass


class IndeterminateOrder(TurnoverError):
    pass


class NotAnEigenvalue(TurnoverError):
    pass


class RepeatedEigenvalueAmbiguity(TurnoverError):
    pass


class NotStable(TurnoverError):
    pass


class InvalidSignature(TurnoverError):
    pass


class InvalidSelection(TurnoverError):
    pass


class EmptyEnumeration(TurnoverError):
    pass


class DegenerateClass(TurnoverError):
    pass


class CPlaneRepresentation(TurnoverError):
    pass


class InfeasiblePoint(TurnoverError):
    """The queried point is not on the character variety component"""


class ConditionC1Violated(InfeasiblePoint):
    def __init__(self, margins: Dict[str, float]):
        super().__init__("condition C1 fails at this point", {"margins": margins})
        self.margins = margins


class DeltaNegative(InfeasiblePoint):
    def __init__(self, delta: float):
        super().__init__(f"condition C2 fails (delta={delta:.6g})", {"delta": delta})
        self.delta = delta


class NonGenericBoundary(InfeasiblePoint):
    pass


class Infeasible(InfeasiblePoint):
    pass


class EigenvalueTypeMismatch(InfeasiblePoint):
    pass


class ResidualTooLarge(TurnoverError):
    pass


class NonEllipticHolonomy(TurnoverError):
    pass


class NumericalInstability(TurnoverError):
    pass


class BudgetExceeded(TurnoverError):
    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class QuadrangleFailed(TurnoverError):
    def __init__(self, failed: List[str], margins: Dict[str, float]):
        super().__init__(f"quadrangle conditions fail: {', '.join(failed)}",
                         {"failed": failed, "margins": margins})
        self.failed = failed
