"""Order-statistic event probabilities that drive the thinning constructions.

A batch of size ``n`` arriving at ``s`` carries label ``(j; n)`` at time ``t``
when exactly ``j - 1`` of its customers have departed by ``t``. Across several
observation times the labels form a nondecreasing chain ``j_k <= ... <= j_m``.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedAnalyticError
from .model import ModelSpec, ServiceFamily
from .quadrature import integrate
from .rng import as_generator
from .stats import Estimate


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def label_prob(service: ServiceFamily, s, t: float, j: int, n: int):
    """``P(S_{j-1:n} <= t-s < S_{j:n})`` for i.i.d. services.

    Equals ``C(n, j-1) F^(j-1) Fbar^(n-j+1)`` evaluated at ``t - s``; computed in
    the log domain so large ``n`` stays stable.
    """
    if not 1 <= j <= n + 1:
        raise DomainError(f"label j={j} outside 1..{n + 1}")
    s = np.asarray(s, dtype=float)
    if np.any(s > t):
        raise DomainError("arrival epoch s must not exceed t")
    tail = service.tail(s, t - s)
    cdf = 1.0 - tail
    out = np.exp(_log_binom(n, j - 1) + special.xlogy(j - 1, cdf) + special.xlogy(n - j + 1, tail))
    return out if np.ndim(out) else float(out)


def label_probs(service: ServiceFamily, s, t: float, n: int) -> np.ndarray:
    """All labels at once: array of shape ``(n + 1, len(s))`` indexed by ``j - 1``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    tail = np.broadcast_to(service.tail(s, t - s), s.shape)
    cdf = 1.0 - tail
    k = np.arange(n + 1)[:, None]
    return np.exp(_log_binom(n, k) + special.xlogy(k, cdf[None, :]) + special.xlogy(n - k, tail[None, :]))


@lru_cache(maxsize=256)
def label_chains(n: int, length: int) -> np.ndarray:
    """Every nondecreasing label chain of the given length over ``1..n+1``."""
    chains = list(combinations_with_replacement(range(1, n + 2), length))
    return np.array(chains, dtype=np.int64).reshape(len(chains), length)


def _check_grid(grid, labels=None):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("observation times must be strictly increasing")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != grid.shape or np.any(np.diff(labels) < 0):
            raise DomainError("labels must be nondecreasing, one per observation time")
    return grid


def chain_probs(service: ServiceFamily, s, grid, n: int, chains=None) -> np.ndarray:
    """Multinomial chain probabilities, shape ``(len(chains), len(s))``.

    For chain ``(j_1..j_m)`` this is ``n!/((j_1-1)! (j_2-j_1)! ... (n-j_m+1)!)``
    times ``F(t_1-s)^(j_1-1) * prod F(t_{l-1}-s, t_l-s]^(j_l-j_{l-1}) *
    Fbar(t_m-s)^(n-j_m+1)``.
    """
    grid = np.asarray(grid, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if chains is None:
        chains = label_chains(n, grid.size)
    chains = np.asarray(chains)
    # tails at each observation time; increments come from the same evaluation
    tails = np.stack([np.broadcast_to(service.tail(s, t - s), s.shape) for t in grid])
    bounds = np.vstack([np.ones((1, s.size)), tails, np.zeros((1, s.size))])
    incr = np.clip(bounds[:-1] - bounds[1:], 0.0, None)      # (m + 1, S)
    counts = np.diff(np.hstack([np.ones((len(chains), 1), dtype=np.int64), chains,
                                np.full((len(chains), 1), n + 1, dtype=np.int64)]), axis=1)
    logc = special.gammaln(n + 1) - special.gammaln(counts + 1).sum(axis=1)
    logp = logc[:, None] + sum(special.xlogy(counts[:, i:i + 1], incr[i][None, :])
                               for i in range(counts.shape[1]))
    return np.exp(logp)


def joint_label_prob(service: ServiceFamily, s, grid, labels, n: int):
    """Probability that a batch from ``s`` follows the label chain ``labels`` on ``grid``."""
    grid = _check_grid(grid, labels)
    if np.any(np.asarray(s) > grid[0]):
        raise DomainError("arrival epoch must precede the first observation time")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 1 or labels.max() > n + 1:
        raise DomainError(f"labels must lie in 1..{n + 1}")
    out = chain_probs(service, s, grid, n, labels[None, :])[0]
    return out if np.ndim(s) else float(out[0])


def excess_tail(service: ServiceFamily, s, x):
    """Tail of the stationary-excess law: ``(1/E[S]) int_x^inf P(S > u) du``."""
    return service.excess_tail(s, x)


def _split_points(model: ModelSpec, a: float, b: float, times=()):
    """Arrival epochs in ``(a, b)`` where some integrand in ``s`` may kink."""
    pts = set(model.breakpoints())
    for t in times:
        for k in model.service.kinks():
            pts.add(t - k)
    return sorted(p for p in pts if a < p < b)


def residual_service(model: ModelSpec, t: float, x, tol: float = 1e-10):
    """``(nu_t, Hbar_t(x))`` for the residual service of customers present at ``t``.

    ``nu_t = int_0^t Fbar_s(t-s) c(s) ds`` and ``Hbar_t(x) = (1/nu_t) int_0^t
    Fbar_s(t+x-s) c(s) ds`` where ``c(s) = lambda(s) E[B_s]`` is the customer
    arrival intensity (``lambda`` itself for single arrivals).
    """
    if t <= 0:
        raise DomainError("residual service needs t > 0")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("residual tail is defined for x >= 0")
    svc, rate, batch = model.service, model.rate, model.batch
    xs = np.atleast_1d(x)

    def f(s):
        intensity = rate(s) * batch.mean(s)
        alive = svc.tail(s[None, :], t + xs[:, None] - s[None, :])
        return np.vstack([svc.tail(s, t - s) * intensity, alive * intensity])

    kinks = [t + xi for xi in xs] + [t]
    vals = integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, kinks))
    nu = float(vals[0])
    if nu <= 0:
        raise DomainError("no customers can be present at t (nu_t = 0); conditional law undefined")
    hbar = np.clip(vals[1:] / nu, 0.0, 1.0)
    return nu, (hbar if x.ndim else float(hbar[0]))


# ---------------------------------------------------------------------------
# Monte Carlo fallbacks for dependent within-batch services
# ---------------------------------------------------------------------------

def _labels_of(services, s, grid):
    return np.array([1 + int(np.sum(services <= t - s)) for t in grid])


def label_prob_mc(model: ModelSpec, s: float, t: float, j: int, n: int, reps: int, rng) -> Estimate:
    """Estimate a label probability by sampling whole batches from the model's sampler."""
    return joint_label_prob_mc(model, s, [t], [j], n, reps, rng)


def joint_label_prob_mc(model: ModelSpec, s: float, grid, labels, n: int, reps: int, rng) -> Estimate:
    grid = _check_grid(grid, labels)
    if s > grid[0]:
        raise DomainError("arrival epoch must precede the first observation time")
    if reps < 2:
        raise ValueError("reps must be >= 2")
    gen = as_generator(rng)
    labels = np.asarray(labels)
    hits = np.empty(reps)
    for r in range(reps):
        hits[r] = np.array_equal(_labels_of(model.batch_services(s, n, gen), s, grid), labels)
    p = hits.mean()
    return Estimate(float(p), float(np.sqrt(p * (1 - p) / reps)))


def require_iid(model: ModelSpec, what: str):
    if not model.is_iid:
        raise UnsupportedAnalyticError(
            f"{what} has no closed form for dependent within-batch services; "
            "use the Monte Carlo route or the simulation oracle")
