"""Queue model: arrival rate, time-indexed service laws and batch laws.

All objects are frozen; evaluation methods are vectorized over arrival epochs
``s`` and durations ``x`` with ordinary numpy broadcasting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .curves import Curve, curve_violations
from .errors import DomainError, ModelError

SUPPORT_EPS = 1e-12

SERVICE_KINDS = ("exponential", "deterministic", "uniform", "hyperexponential", "empirical")
BATCH_KINDS = ("deterministic", "geometric", "zeta", "table", "piecewise")
MARK_KINDS = ("point", "uniform", "exponential", "quantile")


def _as_curve(v) -> Curve:
    return v if isinstance(v, Curve) else Curve.constant(v)


def _neg_expm1(x):
    """``1 - exp(-x)`` without cancellation."""
    return -np.expm1(-x)


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ServiceFamily:
    """Service-time law ``F_s`` of a customer arriving at time ``s``.

    Parameters are curves of the arrival epoch; pass plain numbers for
    stationary service. ``params`` by kind:

    exponential ``(rate,)``; deterministic ``(value,)``; uniform
    ``(low, high)``; hyperexponential ``(weights, rates)``; empirical
    ``(sorted_sample,)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise ModelError(f"unknown service kind {self.kind!r}", "service.kind")

    @classmethod
    def exponential(cls, rate) -> "ServiceFamily":
        return cls("exponential", (_as_curve(rate),))

    @classmethod
    def deterministic(cls, value) -> "ServiceFamily":
        return cls("deterministic", (_as_curve(value),))

    @classmethod
    def uniform(cls, low, high) -> "ServiceFamily":
        return cls("uniform", (_as_curve(low), _as_curve(high)))

    @classmethod
    def hyperexponential(cls, weights, rates) -> "ServiceFamily":
        if len(weights) != len(rates):
            raise ModelError("weights and rates differ in length", "service.weights")
        return cls("hyperexponential", (tuple(map(float, weights)), tuple(_as_curve(r) for r in rates)))

    @classmethod
    def empirical(cls, sample) -> "ServiceFamily":
        return cls("empirical", (tuple(sorted(map(float, sample))),))

    # -- distribution -----------------------------------------------------
    def tail(self, s, x):
        """``P(S > x)`` for a customer arriving at ``s``."""
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "exponential":
            mu = self.params[0](s)
            out = np.exp(-mu * np.maximum(x, 0.0))
        elif k == "deterministic":
            out = np.where(x < self.params[0](s), 1.0, 0.0)
        elif k == "uniform":
            lo, hi = self.params[0](s), self.params[1](s)
            out = np.clip((hi - x) / (hi - lo), 0.0, 1.0)
        elif k == "hyperexponential":
            w, rates = self.params
            xx = np.maximum(x, 0.0)
            out = sum(wi * np.exp(-r(s) * xx) for wi, r in zip(w, rates))
        else:
            sample = np.asarray(self.params[0])
            out = 1.0 - np.searchsorted(sample, x, side="right") / sample.size
        out = np.broadcast_to(out, np.broadcast(s, x).shape).astype(float)
        return out if out.ndim else float(out)

    def cdf(self, s, x):
        """``P(S <= x)``; the exact complement of :meth:`tail`."""
        return 1.0 - self.tail(s, x)

    def mean(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k == "exponential":
            out = 1.0 / self.params[0](s)
        elif k == "deterministic":
            out = self.params[0](s)
        elif k == "uniform":
            out = 0.5 * (self.params[0](s) + self.params[1](s))
        elif k == "hyperexponential":
            w, rates = self.params
            out = sum(wi / r(s) for wi, r in zip(w, rates))
        else:
            out = np.full(s.shape, float(np.mean(self.params[0])))
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    def partial_expectation(self, s, u):
        """``E[(S - u)^+]`` for a customer arriving at ``s``."""
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "exponential":
            mu = self.params[0](s)
            out = np.where(u >= 0, np.exp(-mu * np.maximum(u, 0.0)) / mu, 1.0 / mu - u)
        elif k == "deterministic":
            out = np.maximum(self.params[0](s) - u, 0.0)
        elif k == "uniform":
            lo, hi = self.params[0](s), self.params[1](s)
            inside = (hi - u) ** 2 / (2.0 * (hi - lo))
            out = np.where(u <= lo, 0.5 * (lo + hi) - u, np.where(u >= hi, 0.0, inside))
        elif k == "hyperexponential":
            w, rates = self.params
            out = 0.0
            for wi, r in zip(w, rates):
                mu = r(s)
                out = out + wi * np.where(u >= 0, np.exp(-mu * np.maximum(u, 0.0)) / mu, 1.0 / mu - u)
        else:
            sample = np.asarray(self.params[0])
            suffix = np.concatenate([np.cumsum(sample[::-1])[::-1], [0.0]])
            idx = np.searchsorted(sample, u, side="right")
            out = (suffix[idx] - (sample.size - idx) * u) / sample.size
        out = np.broadcast_to(out, np.broadcast(s, u).shape).astype(float)
        return out if out.ndim else float(out)

    def excess_tail(self, s, x):
        """Stationary-excess tail ``(1/E[S]) * int_x^inf P(S > u) du``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("excess tail is defined for x >= 0")
        mean = self.mean(s)
        if np.any(~np.isfinite(mean)) or np.any(np.asarray(mean) <= 0):
            raise DomainError("excess distribution needs a finite positive mean")
        out = np.clip(self.partial_expectation(s, x) / mean, 0.0, 1.0)
        return out if np.ndim(out) else float(out)

    def one_minus_phi(self, s, u, alpha):
        """``1 - E[exp(-alpha (S - u)) | S > u]``; zero where ``P(S > u) = 0``."""
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        a = float(alpha)
        shape = np.broadcast(s, u).shape
        if a == 0.0:
            return np.zeros(shape) if shape else 0.0
        k = self.kind
        if k == "exponential":
            mu = self.params[0](s)
            out = a / (mu + a)
        elif k == "deterministic":
            out = np.where(u < self.params[0](s), _neg_expm1(a * np.maximum(self.params[0](s) - u, 0.0)), 0.0)
        elif k == "uniform":
            lo, hi = self.params[0](s), self.params[1](s)
            c = np.maximum(lo - u, 0.0)
            w = np.maximum(hi - u - c, 0.0)
            aw = a * w
            safe = np.where(aw > 0, aw, 1.0)
            # 1 - LST of uniform(c, c+w) = (1 - e^{-ac}) + e^{-ac} (1 - (1 - e^{-aw})/(aw))
            one_minus_r = np.where(aw < 1e-4, aw / 2 - aw ** 2 / 6 + aw ** 3 / 24,
                                   (safe + np.expm1(-safe)) / safe)
            out = np.where(u < hi, _neg_expm1(a * c) + np.exp(-a * c) * one_minus_r, 0.0)
        elif k == "hyperexponential":
            w, rates = self.params
            uu = np.maximum(u, 0.0)
            num = 0.0
            den = 0.0
            for wi, r in zip(w, rates):
                mu = r(s)
                pi = wi * np.exp(-mu * uu)
                num = num + pi * a / (mu + a)
                den = den + pi
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        else:
            sample = np.asarray(self.params[0])
            ub = np.broadcast_to(u, shape).ravel()
            out = np.empty(ub.shape)
            for i in range(0, ub.size, 512):
                chunk = ub[i:i + 512]
                diff = sample[:, None] - chunk[None, :]
                alive = diff > 0
                cnt = alive.sum(axis=0)
                tot = np.where(alive, _neg_expm1(a * np.where(alive, diff, 0.0)), 0.0).sum(axis=0)
                out[i:i + 512] = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
            out = out.reshape(shape)
        out = np.broadcast_to(out, shape).astype(float)
        return out if out.ndim else float(out)

    def sample(self, s, rng: np.random.Generator):
        """One service time per arrival epoch in ``s``."""
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k == "exponential":
            return rng.exponential(size=s.shape) / self.params[0](s)
        if k == "deterministic":
            return np.broadcast_to(self.params[0](s), s.shape).astype(float)
        if k == "uniform":
            lo, hi = self.params[0](s), self.params[1](s)
            return lo + (hi - lo) * rng.random(s.shape)
        if k == "hyperexponential":
            w, rates = self.params
            comp = np.searchsorted(np.cumsum(w), rng.random(s.shape) * sum(w), side="right")
            comp = np.minimum(comp, len(w) - 1)
            mu = np.choose(comp, [np.broadcast_to(r(s), s.shape) for r in rates])
            return rng.exponential(size=s.shape) / mu
        sample = np.asarray(self.params[0])
        return sample[rng.integers(0, sample.size, size=s.shape)]

    # -- structure ----------------------------------------------------------
    def curves(self):
        if self.kind == "hyperexponential":
            return self.params[1]
        if self.kind == "empirical":
            return ()
        return self.params

    def is_stationary(self) -> bool:
        return all(c.is_constant for c in self.curves())

    def kinks(self) -> Tuple[float, ...]:
        """Durations where the CDF is not smooth (stationary parameters only)."""
        if not self.is_stationary():
            return ()
        if self.kind == "deterministic":
            return (self.params[0].params[0] if self.params[0].kind == "constant" else float(self.params[0](0.0)),)
        if self.kind == "uniform":
            return (float(self.params[0](0.0)), float(self.params[1](0.0)))
        if self.kind == "empirical" and len(self.params[0]) <= 256:
            return tuple(sorted(set(self.params[0])))
        return ()

    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(sorted({b for c in self.curves() for b in c.breakpoints()}))

    def to_dict(self):
        k = self.kind
        if k == "exponential":
            return {"kind": k, "rate": self.params[0].to_param()}
        if k == "deterministic":
            return {"kind": k, "value": self.params[0].to_param()}
        if k == "uniform":
            return {"kind": k, "low": self.params[0].to_param(), "high": self.params[1].to_param()}
        if k == "hyperexponential":
            return {"kind": k, "weights": list(self.params[0]), "rates": [r.to_param() for r in self.params[1]]}
        return {"kind": k, "sample": list(self.params[0])}

    def violations(self, horizon: float):
        out = []
        k = self.kind
        names = {"exponential": ("rate",), "deterministic": ("value",), "uniform": ("low", "high")}
        if k in names:
            for name, c in zip(names[k], self.params):
                out += curve_violations(c, horizon, f"service.{name}", positive=(name != "low"))
            if k == "uniform":
                grid = np.linspace(0.0, horizon, 4097)
                if np.any(self.params[1](grid) <= self.params[0](grid)):
                    out.append("service.high: must exceed service.low")
        elif k == "hyperexponential":
            w, rates = self.params
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
                out.append("service.weights: must be nonnegative and sum to 1")
            for i, r in enumerate(rates):
                out += curve_violations(r, horizon, f"service.rates[{i}]", positive=True)
        else:
            sample = self.params[0]
            if not sample:
                out.append("service.sample: must be nonempty")
            elif min(sample) < 0 or not np.mean(sample) > 0:
                out.append("service.sample: values must be >= 0 with positive mean")
        return out


# ---------------------------------------------------------------------------
# batch marks (continuous batch scale used by the shot-noise limits)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkLaw:
    """Nonnegative jump-size law ``B`` of the limiting shot-noise process.

    ``params``: point ``(value,)``; uniform ``(low, high)``; exponential
    ``(rate,)``; quantile ``(probs, values)`` describing a piecewise-linear
    quantile function with ``probs[0] = 0`` and ``probs[-1] = 1``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in MARK_KINDS:
            raise ModelError(f"unknown mark kind {self.kind!r}", "batch.mark.kind")

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "point":
            out = np.where(y >= self.params[0], 1.0, 0.0)
        elif k == "uniform":
            lo, hi = self.params
            out = np.clip((y - lo) / (hi - lo), 0.0, 1.0)
        elif k == "exponential":
            out = np.where(y > 0, _neg_expm1(self.params[0] * np.maximum(y, 0.0)), 0.0)
        else:
            probs, vals = (np.asarray(p, dtype=float) for p in self.params)
            i = np.searchsorted(vals, y, side="right")
            inner = np.clip(i, 1, len(vals) - 1)
            v0, v1 = vals[inner - 1], vals[inner]
            p0, p1 = probs[inner - 1], probs[inner]
            frac = np.where(v1 > v0, (y - v0) / np.where(v1 > v0, v1 - v0, 1.0), 1.0)
            out = np.where(i == 0, 0.0, np.where(i >= len(vals), 1.0, p0 + frac * (p1 - p0)))
        return out if out.ndim else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "point":
            out = np.full(u.shape, self.params[0])
        elif k == "uniform":
            lo, hi = self.params
            out = lo + (hi - lo) * u
        elif k == "exponential":
            out = -np.log1p(-u) / self.params[0]
        else:
            out = np.interp(u, *self.params)
        return out if out.ndim else float(out)

    def upper(self, eps: float = 1e-10) -> float:
        """Largest value kept when the mark is truncated at quantile ``1 - eps``."""
        if self.kind == "exponential":
            return float(self.quantile(1.0 - eps))
        return float(self.quantile(1.0))

    def mean(self) -> float:
        k = self.kind
        if k == "point":
            return self.params[0]
        if k == "uniform":
            return 0.5 * sum(self.params)
        if k == "exponential":
            return 1.0 / self.params[0]
        probs, vals = self.params
        return float(sum(0.5 * (v0 + v1) * (p1 - p0)
                         for p0, p1, v0, v1 in zip(probs[:-1], probs[1:], vals[:-1], vals[1:])))

    def laplace_exponent(self, theta):
        """``E[1 - exp(-theta B)]`` for ``theta >= 0`` (vectorized)."""
        th = np.asarray(theta, dtype=float)
        k = self.kind
        if k == "point":
            out = _neg_expm1(th * self.params[0])
        elif k == "exponential":
            out = th / (self.params[0] + th)
        elif k == "uniform":
            out = self._segment(th, self.params[0], self.params[1])
        else:
            probs, vals = self.params
            out = 0.0
            for p0, p1, v0, v1 in zip(probs[:-1], probs[1:], vals[:-1], vals[1:]):
                if p1 > p0:
                    out = out + (p1 - p0) * self._segment(th, v0, v1)
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    @staticmethod
    def _segment(th, v0, v1):
        # 1 - mean of exp(-th*y) over y uniform on [v0, v1]
        w = th * (v1 - v0)
        safe = np.where(w > 0, w, 1.0)
        avg_tail = np.where(w < 1e-6, 1.0 - w / 2 + w ** 2 / 6, -np.expm1(-safe) / safe)
        return _neg_expm1(th * v0) + np.exp(-th * v0) * (1.0 - avg_tail)

    def sample(self, size, rng: np.random.Generator):
        if self.kind == "point":
            return np.full(size, float(self.params[0]))
        return self.quantile(rng.random(size))

    def to_dict(self):
        k = self.kind
        if k == "point":
            return {"kind": k, "value": self.params[0]}
        if k == "uniform":
            return {"kind": k, "low": self.params[0], "high": self.params[1]}
        if k == "exponential":
            return {"kind": k, "rate": self.params[0]}
        return {"kind": k, "probs": list(self.params[0]), "values": list(self.params[1])}

    def violations(self):
        k = self.kind
        p = self.params
        if k == "point" and not p[0] >= 0:
            return ["batch.mark.value: must be >= 0"]
        if k == "uniform" and not (0 <= p[0] < p[1]):
            return ["batch.mark: uniform requires 0 <= low < high"]
        if k == "exponential" and not p[0] > 0:
            return ["batch.mark.rate: must be > 0"]
        if k == "quantile":
            probs, vals = p
            if len(probs) != len(vals) or len(probs) < 2 or probs[0] != 0 or probs[-1] != 1:
                return ["batch.mark.probs: must run from 0 to 1 alongside values"]
            if any(b < a for a, b in zip(probs[:-1], probs[1:])) or any(b < a for a, b in zip(vals[:-1], vals[1:])):
                return ["batch.mark: quantile table must be nondecreasing"]
            if vals[0] < 0:
                return ["batch.mark.values: must be >= 0"]
        return []


# ---------------------------------------------------------------------------
# batch sizes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchLaw:
    """Law of the batch size ``B_s`` (integers >= 1), plus an optional mark.

    ``params`` by kind: deterministic ``(size,)``; geometric ``(p,)`` with
    ``P(n) = p (1-p)^(n-1)``; zeta ``(exponent, max_size)`` with
    ``P(n) ~ n^-exponent`` on ``1..max_size``; table ``(sizes, probs)``;
    piecewise ``(breakpoints, laws)`` switching law at each breakpoint.
    """

    kind: str
    params: tuple
    mark: Optional[MarkLaw] = None

    def __post_init__(self):
        if self.kind not in BATCH_KINDS:
            raise ModelError(f"unknown batch kind {self.kind!r}", "batch.kind")

    @classmethod
    def deterministic(cls, size: int, mark=None) -> "BatchLaw":
        return cls("deterministic", (int(size),), mark)

    @classmethod
    def geometric(cls, p, mark=None) -> "BatchLaw":
        return cls("geometric", (_as_curve(p),), mark)

    @classmethod
    def zeta(cls, exponent: float, max_size: int, mark=None) -> "BatchLaw":
        return cls("zeta", (float(exponent), int(max_size)), mark)

    @classmethod
    def table(cls, pmf: dict, mark=None) -> "BatchLaw":
        items = sorted((int(n), float(p)) for n, p in pmf.items())
        return cls("table", (tuple(n for n, _ in items), tuple(p for _, p in items)), mark)

    @classmethod
    def piecewise(cls, breakpoints, laws, mark=None) -> "BatchLaw":
        return cls("piecewise", (tuple(map(float, breakpoints)), tuple(laws)), mark)

    def with_mark(self, mark) -> "BatchLaw":
        return BatchLaw(self.kind, self.params, mark)

    # -- helpers ------------------------------------------------------------
    def _zeta_table(self):
        a, nmax = self.params
        n = np.arange(1, nmax + 1, dtype=float)
        w = n ** -a
        return np.arange(1, nmax + 1), w / w.sum()

    def _piece_index(self, s):
        bp = np.asarray(self.params[0])
        return np.clip(np.searchsorted(bp, s, side="right") - 1, 0, len(bp) - 1)

    def fixed_size(self) -> Optional[int]:
        """Batch size if it is deterministic and time-invariant, else None."""
        if self.kind == "deterministic":
            return self.params[0]
        if self.kind == "table" and len(self.params[0]) == 1:
            return self.params[0][0]
        if self.kind == "piecewise":
            sizes = {law.fixed_size() for law in self.params[1]}
            if len(sizes) == 1:
                return sizes.pop()
        return None

    def breakpoints(self) -> Tuple[float, ...]:
        if self.kind == "geometric":
            return self.params[0].breakpoints()
        if self.kind == "piecewise":
            pts = set(self.params[0])
            for law in self.params[1]:
                pts.update(law.breakpoints())
            return tuple(sorted(pts))
        return ()

    # -- distribution -------------------------------------------------------
    def pmf_matrix(self, s, nmax: int):
        """``P_s(B = n)`` for ``n = 1..nmax``; shape ``(nmax, len(s))``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        n = np.arange(1, nmax + 1)[:, None]
        k = self.kind
        if k == "deterministic":
            return np.broadcast_to((n == self.params[0]).astype(float), (nmax, s.size)).copy()
        if k == "geometric":
            p = np.broadcast_to(self.params[0](s), s.shape)[None, :]
            return np.exp(np.log(p) + (n - 1) * np.log1p(-p))
        if k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            col = np.zeros(nmax)
            for size, prob in zip(sizes, probs):
                if size <= nmax:
                    col[size - 1] = prob
            return np.repeat(col[:, None], s.size, axis=1)
        idx = self._piece_index(s)
        out = np.zeros((nmax, s.size))
        for i, law in enumerate(self.params[1]):
            m = idx == i
            if np.any(m):
                out[:, m] = law.pmf_matrix(s[m], nmax)
        return out

    def pmf(self, s, n: int) -> float:
        if n < 1:
            return 0.0
        return float(self.pmf_matrix([s], n)[n - 1, 0])

    def tail_mass(self, nmax: int, t_hi: float = math.inf) -> float:
        """Supremum over ``s in [0, t_hi]`` of ``P_s(B > nmax)``."""
        k = self.kind
        if k == "deterministic":
            return 0.0 if self.params[0] <= nmax else 1.0
        if k == "geometric":
            hi = t_hi if math.isfinite(t_hi) else max(self.params[0].breakpoints() or (0.0,)) + 1.0
            p_min, _ = self.params[0].bounds(0.0, hi)
            return float((1.0 - p_min) ** nmax)
        if k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            return float(sum(p for n, p in zip(sizes, probs) if n > nmax))
        bp, laws = self.params
        return max(law.tail_mass(nmax, t_hi) for b, law in zip(bp, laws) if b <= t_hi or b == bp[0])

    def support_max(self, eps: float = SUPPORT_EPS, t_hi: float = math.inf) -> int:
        """Smallest N whose tail mass ``P(B > N)`` is at most ``eps``."""
        k = self.kind
        if k == "deterministic":
            return self.params[0]
        if k == "geometric":
            hi = t_hi if math.isfinite(t_hi) else max(self.params[0].breakpoints() or (0.0,)) + 1.0
            p_min, _ = self.params[0].bounds(0.0, hi)
            if p_min >= 1.0:
                return 1
            n = max(1, math.ceil(math.log(eps) / math.log1p(-p_min)))
            while n > 1 and (1.0 - p_min) ** (n - 1) <= eps:
                n -= 1
            while (1.0 - p_min) ** n > eps:
                n += 1
            return n
        if k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            tail = 0.0
            for n, p in sorted(zip(sizes, probs), reverse=True):
                if tail + p > eps:
                    return int(n)
                tail += p
            return 1
        bp, laws = self.params
        return max(law.support_max(eps, t_hi) for b, law in zip(bp, laws) if b <= t_hi or b == bp[0])

    def mean(self, s):
        s = np.asarray(s, dtype=float)
        return self._moment(s, 1)

    def second_moment(self, s):
        return self._moment(np.asarray(s, dtype=float), 2)

    def _moment(self, s, power):
        k = self.kind
        if k == "deterministic":
            out = np.full(s.shape, float(self.params[0]) ** power)
        elif k == "geometric":
            p = self.params[0](s)
            out = 1.0 / p if power == 1 else (2.0 - p) / p ** 2
        elif k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            out = np.full(s.shape, float(sum(p * n ** power for n, p in zip(sizes, probs))))
        else:
            idx = self._piece_index(s)
            out = np.zeros(s.shape)
            for i, law in enumerate(self.params[1]):
                out = np.where(idx == i, law._moment(s, power), out)
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    def one_minus_pgf(self, s, h):
        """``E[1 - (1 - h)^B]`` for per-customer probabilities ``h`` in [0, 1]."""
        s = np.asarray(s, dtype=float)
        h = np.asarray(h, dtype=float)
        shape = np.broadcast(s, h).shape
        k = self.kind
        with np.errstate(divide="ignore"):
            lg = np.log1p(-np.minimum(h, 1.0))       # -inf where h == 1, handled below
        if k == "deterministic":
            out = _neg_expm1(-self.params[0] * lg)
            out = np.where(h >= 1.0, 1.0, out)
        elif k == "geometric":
            p = self.params[0](s)
            out = h / (p + h - p * h)
        elif k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            out = 0.0
            for n, p in zip(sizes, probs):
                if p > 0:
                    out = out + p * _neg_expm1(-n * lg)
            out = np.where(h >= 1.0, float(sum(probs)), out)
        else:
            idx = np.broadcast_to(self._piece_index(s), shape)
            out = np.zeros(shape)
            for i, law in enumerate(self.params[1]):
                out = np.where(idx == i, law.one_minus_pgf(s, h), out)
        out = np.broadcast_to(out, shape).astype(float)
        return out if out.ndim else float(out)

    def sample(self, s, rng: np.random.Generator):
        """One batch size per arrival epoch in ``s``."""
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k == "deterministic":
            return np.full(s.shape, self.params[0], dtype=np.int64)
        if k == "geometric":
            return rng.geometric(np.broadcast_to(self.params[0](s), s.shape)).astype(np.int64)
        if k in ("zeta", "table"):
            sizes, probs = self._zeta_table() if k == "zeta" else self.params
            cum = np.cumsum(probs)
            idx = np.searchsorted(cum, rng.random(s.shape) * cum[-1], side="right")
            return np.asarray(sizes, dtype=np.int64)[np.minimum(idx, len(sizes) - 1)]
        idx = self._piece_index(s)
        out = np.empty(s.shape, dtype=np.int64)
        for i, law in enumerate(self.params[1]):
            m = idx == i
            out[m] = law.sample(s[m], rng)
        return out

    def to_dict(self):
        k = self.kind
        if k == "deterministic":
            d = {"kind": k, "size": self.params[0]}
        elif k == "geometric":
            d = {"kind": k, "p": self.params[0].to_param()}
        elif k == "zeta":
            d = {"kind": k, "exponent": self.params[0], "max_size": self.params[1]}
        elif k == "table":
            d = {"kind": k, "pmf": {str(n): p for n, p in zip(*self.params)}}
        else:
            d = {"kind": k, "breakpoints": list(self.params[0]), "laws": [law.to_dict() for law in self.params[1]]}
        if self.mark is not None:
            d["mark"] = self.mark.to_dict()
        return d

    def violations(self, horizon: float, prefix: str = "batch"):
        out = []
        k = self.kind
        if k == "deterministic" and self.params[0] < 1:
            out.append(f"{prefix}.size: must be >= 1")
        elif k == "geometric":
            c = self.params[0]
            grid = np.linspace(0.0, horizon, 4097)
            v = np.asarray(c(grid))
            if np.any(v <= 0) or np.any(v > 1):
                out.append(f"{prefix}.p: must lie in (0, 1]")
        elif k == "zeta":
            a, nmax = self.params
            if nmax < 1:
                out.append(f"{prefix}.max_size: must be >= 1")
            if not math.isfinite(a):
                out.append(f"{prefix}.exponent: must be finite")
        elif k == "table":
            sizes, probs = self.params
            if not sizes:
                out.append(f"{prefix}.pmf: must be nonempty")
            if any(n < 1 for n in sizes):
                out.append(f"{prefix}.pmf: sizes must be >= 1")
            if any(p < 0 for p in probs):
                out.append(f"{prefix}.pmf: masses must be >= 0")
            if abs(math.fsum(probs) - 1.0) > 1e-12:
                out.append(f"{prefix}.pmf: masses sum to {math.fsum(probs):.12g}, not 1")
        elif k == "piecewise":
            bp, laws = self.params
            if len(bp) != len(laws) or not bp:
                out.append(f"{prefix}.laws: one law per breakpoint required")
            elif bp[0] != 0.0 or any(b2 <= b1 for b1, b2 in zip(bp[:-1], bp[1:])):
                out.append(f"{prefix}.breakpoints: must start at 0 and strictly increase")
            for i, law in enumerate(laws):
                out += law.violations(horizon, f"{prefix}.laws[{i}]")
        if self.mark is not None:
            out += self.mark.violations()
        return out


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------

BatchSampler = Callable[[float, int, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """M_t^{B_t}/G_t/inf queue description.

    ``within_batch`` is ``"iid"`` (services in a batch i.i.d. with ``F_s``),
    ``"identical"`` (one draw from ``F_s`` shared by the whole batch), or a
    callable ``(s, n, rng) -> array of n service times`` for arbitrary
    dependence. Only the ``"iid"`` case has closed-form transforms.
    """

    rate: Curve
    service: ServiceFamily
    batch: BatchLaw = field(default_factory=lambda: BatchLaw.deterministic(1))
    horizon: float = 10.0
    within_batch: Union[str, BatchSampler] = "iid"

    @property
    def is_iid(self) -> bool:
        return self.within_batch == "iid"

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace
        return replace(self, **changes)

    def batch_services(self, s: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Service times for one batch of size ``n`` arriving at ``s``."""
        if self.within_batch == "iid":
            return self.service.sample(np.full(n, s), rng)
        if self.within_batch == "identical":
            return np.repeat(self.service.sample(np.array([s]), rng), n)
        return np.asarray(self.within_batch(s, n, rng), dtype=float)

    def sample_customers(self, epochs, rng: np.random.Generator, sizes=None):
        """Draw batches at the given epochs.

        Returns ``(sizes, owner, services)``: the batch sizes, and for every
        customer the index of its batch and its service time. Customers of one
        batch are contiguous.
        """
        epochs = np.asarray(epochs, dtype=float)
        if sizes is None:
            sizes = self.batch.sample(epochs, rng)
        sizes = np.asarray(sizes, dtype=np.int64)
        owner = np.repeat(np.arange(epochs.size), sizes)
        if self.within_batch == "iid":
            services = self.service.sample(epochs[owner], rng)
        elif self.within_batch == "identical":
            services = self.service.sample(epochs, rng)[owner]
        else:
            parts = [np.asarray(self.within_batch(float(s), int(n), rng), dtype=float)
                     for s, n in zip(epochs, sizes)]
            services = np.concatenate(parts) if parts else np.empty(0)
            if services.size != owner.size:
                raise ModelError("custom batch sampler returned the wrong number of services", "within_batch")
        return sizes, owner, services

    def breakpoints(self) -> Tuple[float, ...]:
        """Time points where any model curve may be non-smooth."""
        return tuple(sorted(set(self.rate.breakpoints()) | set(self.service.breakpoints())
                            | set(self.batch.breakpoints())))


def mean_measure(model: ModelSpec, t: float) -> float:
    """Expected number of batch arrivals in ``(0, t]``."""
    if not 0.0 <= t <= model.horizon:
        raise DomainError(f"t={t} outside [0, {model.horizon}]")
    return model.rate.integral(0.0, t)


def validate(model: ModelSpec):
    """Return the list of violated invariants (empty when the model is valid)."""
    out = []
    if not (model.horizon > 0 and math.isfinite(model.horizon)):
        out.append("horizon: must be a positive finite number")
        return out
    out += curve_violations(model.rate, model.horizon, "rate")
    out += model.service.violations(model.horizon)
    out += model.batch.violations(model.horizon)
    wb = model.within_batch
    if not (callable(wb) or wb in ("iid", "identical")):
        out.append("within_batch: must be 'iid', 'identical' or a callable")
    if not out:
        grid = np.linspace(0.0, model.horizon, 257)
        m = np.asarray(model.service.mean(grid))
        if not (np.all(np.isfinite(m)) and np.all(m > 0)):
            out.append("service: mean must be finite and positive")
    return out
