"""Adaptive quadrature and certified Poisson lattice arithmetic.

``integrate`` is a globally adaptive Gauss-Kronrod (7, 15) scheme whose
integrand is evaluated on whole arrays of nodes at once, and may be
vector-valued: every analytic formula in the package integrates many
label/batch-size components over the same arrival-epoch axis in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConvergenceError, ResourceError

DEFAULT_TOL = 1e-10
DEFAULT_EPS = 1e-12
DEFAULT_CAP = 10 ** 6

# Kronrod 15-point abscissae on [-1, 1] (nonnegative half) and weights.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
# Gauss 7-point weights at the odd-indexed Kronrod nodes (1, 3, 5, 7).
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])            # 15 nodes, ascending
_WEIGHTS_K = np.concatenate([_WK[:-1], _WK[::-1]])
_WEIGHTS_G = np.zeros(15)
_WEIGHTS_G[[1, 3, 5]] = _WG[:3]
_WEIGHTS_G[7] = _WG[3]
_WEIGHTS_G[[9, 11, 13]] = _WG[2::-1]


def _gk_panels(f, lo, hi):
    """Apply the (7, 15) pair to every panel ``[lo_i, hi_i]``.

    Returns (kronrod, error) with shapes ``(..., P)`` and ``(P,)``.
    """
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    y = np.asarray(f(x), dtype=float)
    y = y.reshape(y.shape[:-1] + (lo.size, 15))
    k = (y @ _WEIGHTS_K) * half
    g = (y @ _WEIGHTS_G) * half
    diff = np.abs(k - g)
    err = diff.reshape(-1, lo.size).max(axis=0) if diff.ndim > 1 else diff
    return k, err


def integrate(f, a, b, tol=DEFAULT_TOL, points=(), limit=20000, full_output=False):
    """Integrate ``f`` over ``[a, b]``.

    ``f`` maps a 1-D array of nodes to an array of shape ``(len(x),)`` or
    ``(k, len(x))``. The rule first splits at ``points`` lying inside the
    interval (rate breakpoints, service kinks), then bisects the panels with
    the largest error estimates until the summed estimate falls below
    ``tol * max(1, |result|)``.

    Raises :class:`ConvergenceError` carrying the best estimate when more than
    ``limit`` panels would be needed.
    """
    a, b = float(a), float(b)
    if a > b:
        raise ValueError("integrate requires a <= b")
    if a == b:
        probe = np.asarray(f(np.array([a])), dtype=float)
        zero = np.zeros(probe.shape[:-1])
        out = zero if zero.ndim else 0.0
        return (out, 0.0) if full_output else out
    cuts = sorted({a, b, *(float(p) for p in points if a < p < b)})
    lo = np.array(cuts[:-1])
    hi = np.array(cuts[1:])
    vals, errs = _gk_panels(f, lo, hi)
    while True:
        total = vals.sum(axis=-1)
        total_err = errs.sum()
        target = tol * max(1.0, float(np.max(np.abs(total))))
        if total_err <= target:
            break
        if lo.size >= limit:
            raise ConvergenceError(
                f"quadrature did not converge in {limit} panels (error {total_err:.3g})",
                estimate=total, error=total_err)
        split = errs > target / lo.size
        split[np.argmax(errs)] = True
        keep = ~split
        mids = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mids])
        new_hi = np.concatenate([mids, hi[split]])
        if np.any(new_hi <= new_lo):
            raise ConvergenceError("panel width underflow", estimate=total, error=total_err)
        new_vals, new_errs = _gk_panels(f, new_lo, new_hi)
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[..., keep], new_vals], axis=-1)
        errs = np.concatenate([errs[keep], new_errs])
    order = np.argsort(lo, kind="stable")
    total = vals[..., order].sum(axis=-1)
    out = total if total.ndim else float(total)
    return (out, float(errs.sum())) if full_output else out


@dataclass(frozen=True, eq=False)
class LatticePmf:
    """Probability masses on ``offset, offset+1, ...``.

    ``truncation_error`` bounds the probability mass that lies outside the
    stored support.
    """

    offset: int
    masses: np.ndarray
    truncation_error: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.masses)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.masses))

    def pmf(self, k):
        k = np.asarray(k)
        idx = k - self.offset
        ok = (idx >= 0) & (idx < len(self.masses))
        out = np.where(ok, self.masses[np.clip(idx, 0, len(self.masses) - 1)], 0.0)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        return float(self.support @ self.masses)

    def variance(self) -> float:
        k = self.support
        m = self.mean()
        return float(((k - m) ** 2) @ self.masses)

    def lst(self, alpha: float) -> float:
        """Sum of ``exp(-alpha*k) * p(k)`` over the stored support."""
        return float(np.exp(-alpha * self.support) @ self.masses)


def poisson_pmf(mean: float, eps: float = DEFAULT_EPS) -> LatticePmf:
    """Poisson masses truncated at the smallest K with ``P(N > K) <= eps``.

    Masses are generated by the ratio recurrence outward from the mode, so no
    factorials are formed.
    """
    if mean < 0:
        raise ValueError("Poisson mean must be nonnegative")
    if mean == 0:
        return LatticePmf(0, np.array([1.0]), 0.0)
    # upper truncation point: smallest K with survival <= eps
    k_hi = int(mean + 10 * np.sqrt(mean) + 20)
    while special.pdtrc(k_hi, mean) > eps:
        k_hi *= 2
    lo_k, hi_k = 0, k_hi
    while lo_k < hi_k:
        mid = (lo_k + hi_k) // 2
        if special.pdtrc(mid, mean) <= eps:
            hi_k = mid
        else:
            lo_k = mid + 1
    k_max = lo_k
    mode = min(int(np.floor(mean)), k_max)
    masses = np.empty(k_max + 1)
    masses[mode] = np.exp(special.xlogy(mode, mean) - mean - special.gammaln(mode + 1))
    for k in range(mode + 1, k_max + 1):
        masses[k] = masses[k - 1] * mean / k
    for k in range(mode - 1, -1, -1):
        masses[k] = masses[k + 1] * (k + 1) / mean
    return LatticePmf(0, masses, float(special.pdtrc(k_max, mean)))


def _convolve(x, y):
    if len(x) * len(y) <= 4_000_000 or min(len(x), len(y)) < 64:
        return np.convolve(x, y)
    from scipy.signal import fftconvolve
    return np.clip(fftconvolve(x, y), 0.0, None)


def convolve_scaled(terms, eps: float = DEFAULT_EPS, cap: int = DEFAULT_CAP) -> LatticePmf:
    """Distribution of ``sum(c_i * N_i)`` with independent ``N_i ~ Poisson(m_i)``.

    ``terms`` is an iterable of ``(scale, mean)`` pairs with integer scale >= 1.
    Each term is truncated with budget ``eps / len(terms)``; the result's
    ``truncation_error`` is the sum of the per-term tails.
    """
    terms = [(int(c), float(m)) for c, m in terms if m > 0]
    for c, _ in terms:
        if c < 1:
            raise ValueError("scales must be positive integers")
    if not terms:
        return LatticePmf(0, np.array([1.0]), 0.0)
    budget = eps / len(terms)
    out = np.array([1.0])
    err = 0.0
    for c, m in sorted(terms):
        p = poisson_pmf(m, budget)
        err += p.truncation_error
        if (len(p.masses) - 1) * c + len(out) > cap:
            raise ResourceError(f"lattice support exceeds cap of {cap} points")
        spread = np.zeros((len(p.masses) - 1) * c + 1)
        spread[::c] = p.masses
        out = _convolve(out, spread)
    return LatticePmf(0, out, err)
