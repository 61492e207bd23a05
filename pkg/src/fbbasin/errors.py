"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FBError(Exception):
    """Base class for every error raised by :mod:`fbbasin`."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DimensionError(FBError, ValueError):
    kind = "dimension_mismatch"


class NotAttractingError(FBError, ValueError):
    kind = "not_attracting"


class ConvergenceError(FBError, RuntimeError):
    kind = "no_convergence"


class NearResonanceError(FBError, ArithmeticError):
    """A non-special divisor ``lambda_j - lambda**alpha`` is too close to zero."""

    kind = "near_resonant_divisor"

    def __init__(self, component: int, alpha: tuple, divisor: complex):
        self.component = component
        self.alpha = tuple(alpha)
        self.divisor = divisor
        super().__init__(
            f"near-resonant divisor |lambda_{component + 1} - lambda^{self.alpha}| "
            f"= {abs(divisor):.3e}; raise the resonance tolerance or abort"
        )

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(component=self.component + 1, exponents=list(self.alpha), divisor=abs(self.divisor))
        return d


class BoundOverflowError(FBError, OverflowError):
    kind = "bound_overflow"


class ScenarioError(FBError, ValueError):
    """Invalid scenario input; ``field`` is a dotted path to the culprit.

    Messages name the field themselves, e.g. ``attraction.s must be < attraction.r``.
    """

    kind = "invalid_scenario"

    def __init__(self, field: str, message: str):
        self.field = field
        if field and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["field"] = self.field
        return d


class DivergedError(FBError, ArithmeticError):
    """An orbit left the finite range; ``last`` is the last finite iterate."""

    kind = "diverged"

    def __init__(self, step: int, last):
        self.step = step
        self.last = last
        super().__init__(f"orbit overflowed at step {step}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["step"] = self.step
        return d
