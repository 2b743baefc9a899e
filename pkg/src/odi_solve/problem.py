"""Problem instances and their JSON form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .expr import ExprError, parse
from .setvalued import (
    MID,
    IntervalMap,
    PiecewiseScalar,
    SelectionKind,
    filippov_envelope,
)

__all__ = ["Number", "ProblemSpec", "GrowthBound", "ProblemError"]


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class Number:
    """A real with its exact rational value when the input was rational."""

    value: float
    exact: Fraction | None = None

    @classmethod
    def of(cls, raw) -> "Number":
        if isinstance(raw, Number):
            return raw
        if isinstance(raw, bool):
            raise ProblemError(f"expected a number, got {raw!r}")
        if isinstance(raw, Fraction):
            return cls(float(raw), raw)
        if isinstance(raw, int):
            return cls(float(raw), Fraction(raw))
        if isinstance(raw, float):
            if not math.isfinite(raw):
                return cls(raw, None)
            return cls(raw, Fraction(repr(raw)))
        if isinstance(raw, str):
            try:
                return cls(float(Fraction(raw.strip())), Fraction(raw.strip()))
            except (ValueError, ZeroDivisionError):
                pass
            try:
                e = parse(raw)
            except ExprError as exc:
                raise ProblemError(str(exc)) from None
            v = float(e(0.0))
            if not math.isfinite(v):
                raise ProblemError(f"{raw!r} is not a finite number")
            return cls(v, e.exact(Fraction(0)))
        raise ProblemError(f"expected a number, got {raw!r}")

    def __float__(self):
        return self.value

    def best(self):
        """Exact value when known, float otherwise."""
        return self.exact if self.exact is not None else self.value


@dataclass(frozen=True)
class GrowthBound:
    """|f(t)| <= alpha (1 + |t|^(s-1)) with 1 < s < 2."""

    alpha: float
    s: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ProblemError("growth bound needs alpha > 0")
        if not 1.0 < self.s < 2.0:
            raise ProblemError("growth bound needs 1 < s < 2")

    @property
    def s_conj(self) -> float:
        return self.s / (self.s - 1.0)

    def __call__(self, t):
        return self.alpha * (1.0 + np.abs(t) ** (self.s - 1.0))

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "s": self.s, "s_conj": self.s_conj}


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """-(p u')' + q u in lambda F(u) on (a, b), u(a) = u'(b) = 0.

    When ``g`` is set the instance is the discontinuous-ODE front-end:
    ``F`` is the Filippov envelope of ``g`` and the selection is MID.
    """

    a: Number
    b: Number
    p: PiecewiseScalar
    q: PiecewiseScalar
    F: IntervalMap
    selection: SelectionKind
    c: Number
    d: Number
    growth: GrowthBound | None = None
    g: PiecewiseScalar | None = None
    lam: float | None = None
    name: str = "problem"
    extra: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return self.b.value - self.a.value

    @property
    def mode(self) -> str:
        return "ode" if self.g is not None else "inclusion"

    @classmethod
    def from_dict(cls, prob: dict, lam=None, name: str = "problem") -> "ProblemSpec":
        a, b = Number.of(prob["a"]), Number.of(prob["b"])
        if not a.value < b.value:
            raise ProblemError("requires a < b")
        p = PiecewiseScalar.from_json(prob.get("p", 1))
        q = PiecewiseScalar.from_json(prob.get("q", 0))
        g = None
        if "g" in prob:
            g = PiecewiseScalar.from_json(prob["g"])
            F = filippov_envelope(g)
            selection = MID
            if "selection" in prob and str(prob["selection"]).upper() != "MID":
                raise ProblemError("the g front-end always uses the MID selection")
        elif "F" in prob:
            F = IntervalMap(PiecewiseScalar.from_json(prob["F"]["lo"]),
                            PiecewiseScalar.from_json(prob["F"]["hi"]))
            selection = SelectionKind.parse(prob.get("selection", "MIN"))
        else:
            raise ProblemError("problem needs either F or g")
        c, d = Number.of(prob["c"]), Number.of(prob["d"])
        if not 0 < c.value < d.value:
            raise ProblemError("requires 0 < c < d")
        growth = None
        if "growth" in prob:
            gr = prob["growth"]
            growth = GrowthBound(Number.of(gr["alpha"]).value, Number.of(gr["s"]).value)
        return cls(a, b, p, q, F, selection, c, d, growth, g,
                   None if lam is None else float(lam), name)
