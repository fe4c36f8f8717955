"""Certificate records: a computed quantity checked against a bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


def _clean(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


@dataclass(frozen=True)
class Certificate:
    """``lhs <= rhs + tol`` (or ``|lhs - rhs| <= tol`` when ``kind == "eq"``)."""

    name: str
    lhs: float
    rhs: float
    holds: bool
    tol: float = 0.0
    kind: str = "le"
    extra: dict = field(default_factory=dict)

    @classmethod
    def le(cls, name, lhs, rhs, tol, **extra):
        lhs, rhs = float(lhs), float(rhs)
        return cls(name, lhs, rhs, bool(lhs <= rhs + tol), tol, "le", extra)

    @classmethod
    def eq(cls, name, lhs, rhs, tol, **extra):
        lhs, rhs = float(lhs), float(rhs)
        return cls(name, lhs, rhs, bool(abs(lhs - rhs) <= tol), tol, "eq", extra)

    def to_dict(self):
        return _clean(asdict(self))


@dataclass(frozen=True)
class StabilityCertificate:
    """A theoretical bound together with the measured quantity it must dominate."""

    theorem: str
    bound: float
    measured: float
    holds: bool
    constants: dict = field(default_factory=dict)
    tol: float = 1e-7

    @classmethod
    def check(cls, theorem, bound, measured, constants=None, tol=1e-7):
        bound, measured = float(bound), float(measured)
        return cls(theorem, bound, measured, bool(measured <= bound + tol), dict(constants or {}), tol)

    @property
    def looseness(self) -> float:
        """bound / measured; diagnostic only (inf when nothing was measured)."""
        if self.measured <= 0:
            return math.inf if self.bound > 0 else 1.0
        return self.bound / self.measured

    def to_dict(self):
        return _clean(
            {
                "theorem": self.theorem,
                "constants": self.constants,
                "bound": self.bound,
                "measured": self.measured,
                "holds": self.holds,
                "looseness": self.looseness,
            }
        )
