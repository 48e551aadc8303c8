"""Time curves: arrival-rate functions and time-varying model parameters.

A single :class:`Curve` type covers the four supported shapes. Constants are
degenerate curves, so every time-indexed parameter in the model goes through
the same evaluation path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ModelError

KINDS = ("constant", "piecewise-constant", "piecewise-linear", "sinusoidal")


@dataclass(frozen=True)
class Curve:
    """A real function of time t >= 0.

    ``params`` layout by kind:

    * constant: ``(value,)``
    * piecewise-constant: ``(breakpoints, values)``; value ``values[i]`` on
      ``[breakpoints[i], breakpoints[i+1])``, the last value extends forever.
    * piecewise-linear: ``(breakpoints, values)``; linear interpolation between
      knots, held constant after the last knot.
    * sinusoidal: ``(a, b, omega, phi)`` for ``a + b*sin(omega*t + phi)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown curve kind {self.kind!r}", "kind")
        if self.kind in ("piecewise-constant", "piecewise-linear"):
            bp, vals = self.params
            if len(bp) != len(vals) or len(bp) == 0:
                raise ModelError("breakpoints and values must have equal nonzero length", "breakpoints")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "Curve":
        return cls("constant", (float(value),))

    @classmethod
    def piecewise_constant(cls, breakpoints, values) -> "Curve":
        return cls("piecewise-constant", (tuple(map(float, breakpoints)), tuple(map(float, values))))

    @classmethod
    def piecewise_linear(cls, breakpoints, values) -> "Curve":
        return cls("piecewise-linear", (tuple(map(float, breakpoints)), tuple(map(float, values))))

    @classmethod
    def sinusoidal(cls, a: float, b: float, omega: float, phi: float = 0.0) -> "Curve":
        return cls("sinusoidal", (float(a), float(b), float(omega), float(phi)))

    # -- evaluation -------------------------------------------------------
    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "sinusoidal":
            return self.params[1] == 0.0 or self.params[2] == 0.0
        return len(set(self.params[1])) == 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.params[0]) if t.ndim else self.params[0]
        if self.kind == "sinusoidal":
            a, b, w, phi = self.params
            out = a + b * np.sin(w * t + phi)
        elif self.kind == "piecewise-constant":
            bp, vals = (np.asarray(p) for p in self.params)
            idx = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(bp) - 1)
            out = vals[idx]
        else:
            bp, vals = self.params
            out = np.interp(t, bp, vals)
        return out if t.ndim else float(out)

    def breakpoints(self) -> Tuple[float, ...]:
        """Points where the curve or its derivative may jump."""
        if self.kind in ("piecewise-constant", "piecewise-linear"):
            return tuple(self.params[0])
        return ()

    def integral(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]``."""
        if b < a:
            return -self.integral(b, a)
        if self.kind == "constant":
            return self.params[0] * (b - a)
        if self.kind == "sinusoidal":
            c, amp, w, phi = self.params
            if w == 0.0:
                return (c + amp * math.sin(phi)) * (b - a)
            return c * (b - a) + amp * (math.cos(w * a + phi) - math.cos(w * b + phi)) / w
        bp, vals = self.params
        knots = [a] + [x for x in bp if a < x < b] + [b]
        total = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            if self.kind == "piecewise-constant":
                total += float(self(lo)) * (hi - lo)
            else:
                total += 0.5 * (float(self(lo)) + float(self(hi))) * (hi - lo)
        return total

    def bounds(self, a: float, b: float) -> Tuple[float, float]:
        """Exact (min, max) of the curve over ``[a, b]``."""
        if self.kind == "constant":
            return self.params[0], self.params[0]
        if self.kind == "piecewise-constant":
            bp, vals = self.params
            lo_i = max(int(np.searchsorted(bp, a, side="right")) - 1, 0)
            hi_i = max(int(np.searchsorted(bp, b, side="right")) - 1, lo_i)
            seg = vals[lo_i:hi_i + 1]
            return min(seg), max(seg)
        pts = [a, b]
        if self.kind == "sinusoidal":
            _, amp, w, phi = self.params
            if w != 0.0 and amp != 0.0:
                # extrema where w*t + phi = pi/2 + k*pi
                lo_arg, hi_arg = sorted((w * a + phi, w * b + phi))
                k = math.ceil((lo_arg - math.pi / 2) / math.pi)
                while math.pi / 2 + k * math.pi <= hi_arg:
                    pts.append((math.pi / 2 + k * math.pi - phi) / w)
                    k += 1
        else:
            pts += [x for x in self.params[0] if a < x < b]
        v = np.asarray(self(np.asarray(pts)))
        return float(v.min()), float(v.max())

    # -- serialization ----------------------------------------------------
    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "value": self.params[0]}
        if self.kind == "sinusoidal":
            a, b, w, phi = self.params
            return {"kind": "sinusoidal", "a": a, "b": b, "omega": w, "phi": phi}
        return {"kind": self.kind, "breakpoints": list(self.params[0]), "values": list(self.params[1])}

    def to_param(self):
        """Compact form for model parameters: constants collapse to a number."""
        return self.params[0] if self.kind == "constant" else self.to_dict()

    @classmethod
    def from_config(cls, obj, field: str = "curve") -> "Curve":
        if isinstance(obj, bool):
            raise ModelError("expected a number or curve object", field)
        if isinstance(obj, (int, float)):
            return cls.constant(obj)
        if not isinstance(obj, dict):
            raise ModelError("expected a number or curve object", field)
        kind = obj.get("kind")
        try:
            if kind == "constant":
                return cls.constant(obj["value"])
            if kind == "sinusoidal":
                return cls.sinusoidal(obj["a"], obj["b"], obj["omega"], obj.get("phi", 0.0))
            if kind in ("piecewise-constant", "piecewise-linear"):
                bp, vals = obj["breakpoints"], obj["values"]
                return cls(kind, (tuple(map(float, bp)), tuple(map(float, vals))))
        except KeyError as exc:
            raise ModelError(f"missing key {exc.args[0]!r}", field) from None
        except (TypeError, ValueError):
            raise ModelError("non-numeric curve parameter", field) from None
        raise ModelError(f"unknown curve kind {kind!r}", f"{field}.kind")


def curve_violations(curve: Curve, horizon: float, field: str, positive: bool = False):
    """List invariant violations of a curve over ``[0, horizon]``."""
    out = []
    if curve.kind in ("piecewise-constant", "piecewise-linear"):
        bp = curve.params[0]
        if bp[0] != 0.0:
            out.append(f"{field}.breakpoints: first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(bp[:-1], bp[1:])):
            out.append(f"{field}.breakpoints: must be strictly increasing")
    if curve.kind == "sinusoidal":
        a, b = curve.params[:2]
        if not (a >= b >= 0.0):
            out.append(f"{field}: sinusoidal curve requires a >= b >= 0")
    grid = np.linspace(0.0, horizon, 4097)
    vals = np.asarray(curve(grid))
    if not np.all(np.isfinite(vals)):
        out.append(f"{field}: non-finite values")
    elif positive and np.any(vals <= 0.0):
        out.append(f"{field}: must be strictly positive on [0, horizon]")
    elif np.any(vals < 0.0):
        out.append(f"{field}: negative values on [0, horizon]")
    return out
