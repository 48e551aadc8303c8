"""Closed-form results for the M_t^{B_t}/G_t/inf queue.

Everything here rests on one thinning argument: batches arriving at ``s`` are
classified by how many of their customers have left by each observation time,
and every class count is an independent Poisson variable. Queue length and
departures are then integer-weighted sums of those counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import DomainError, ResourceError, UnsupportedAnalyticError
from .model import ModelSpec, mean_measure
from .orderstat import _split_points, chain_probs, label_chains, label_probs, require_iid, residual_service
from .quadrature import DEFAULT_EPS, DEFAULT_TOL, LatticePmf, convolve_scaled, integrate
from .rng import as_generator
from .stats import Estimate

MAX_CHAIN_LENGTH = 4
MAX_CHAIN_BATCH = 50
MAX_CHAINS = 400_000

TARGETS = ("queue", "departure")


class Term(NamedTuple):
    n: int
    j: int
    scale: int
    mean: float


@dataclass(frozen=True)
class ScaledPoissonDecomposition:
    """``X = sum(scale * Poisson(mean))`` over independent terms.

    ``tail_bound`` bounds the probability that a batch larger than the
    enumerated sizes arrived (so the decomposition is exact off that event).
    """

    target: str
    t: float
    terms: Tuple[Term, ...]
    tail_bound: float = 0.0

    def mean(self) -> float:
        return float(sum(tm.scale * tm.mean for tm in self.terms))

    def variance(self) -> float:
        return float(sum(tm.scale ** 2 * tm.mean for tm in self.terms))

    def pmf(self, eps: float = DEFAULT_EPS) -> LatticePmf:
        lat = convolve_scaled([(tm.scale, tm.mean) for tm in self.terms if tm.scale > 0], eps)
        return LatticePmf(lat.offset, lat.masses, lat.truncation_error + self.tail_bound,
                          {"target": self.target, "t": self.t})


@dataclass(frozen=True)
class TransformQuery:
    """Arguments of a joint transform.

    ``times``/``alpha``/``beta`` drive the (Q, D) transform; ``workload`` and
    ``gamma`` are only used by single-time (W, Q, D) queries, where ``beta``
    is the queue argument and ``gamma`` the departure argument.
    """

    times: Tuple[float, ...]
    alpha: Tuple[float, ...]
    beta: Tuple[float, ...] = ()
    workload: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        times = tuple(float(t) for t in np.atleast_1d(self.times))
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        beta = tuple(float(b) for b in np.atleast_1d(self.beta)) if len(np.atleast_1d(self.beta)) else (0.0,) * len(times)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if not times or times[0] <= 0 or any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise DomainError("times must be positive and strictly increasing")
        if len(alpha) != len(times) or len(beta) != len(times):
            raise DomainError("one alpha and one beta per time point")
        extra = [x for x in (self.workload, self.gamma) if x is not None]
        if any(a < 0 for a in alpha + beta + tuple(extra)):
            raise DomainError("transform arguments must be nonnegative")
        if extra and len(times) != 1:
            raise DomainError("workload/departure-weighted queries are single-time")

    def scaled(self, factor: float) -> "TransformQuery":
        div = lambda v: None if v is None else v / factor  # noqa: E731
        return TransformQuery(self.times, tuple(a / factor for a in self.alpha),
                              tuple(b / factor for b in self.beta), div(self.workload), div(self.gamma))

    @property
    def is_wqd(self) -> bool:
        return self.workload is not None or self.gamma is not None


# ---------------------------------------------------------------------------
# marginal decomposition
# ---------------------------------------------------------------------------

def batch_sizes(model: ModelSpec, nmax: int):
    """Batch sizes ``1..nmax`` that carry positive probability somewhere."""
    b = model.batch
    fixed = b.fixed_size()
    if fixed is not None:
        return [fixed] if fixed <= nmax else []
    if b.kind == "table":
        return [n for n, p in zip(*b.params) if p > 0 and n <= nmax]
    return list(range(1, nmax + 1))


def _truncation(model: ModelSpec, t: float, eps: float):
    nmax = model.batch.support_max(eps, t)
    if nmax > 10_000:
        raise ResourceError(f"batch support {nmax} too large to enumerate")
    return nmax, mean_measure(model, t) * model.batch.tail_mass(nmax, t)


@lru_cache(maxsize=512)
def _label_means(model: ModelSpec, t: float, eps: float, tol: float):
    """``{n: means over j = 1..n+1}`` of the label counts on ``(0, t]``."""
    nmax, tail_bound = _truncation(model, t, eps)
    sizes = batch_sizes(model, nmax)
    if t == 0 or not sizes:
        return {}, tail_bound
    svc, rate, batch = model.service, model.rate, model.batch

    def f(s):
        pm = batch.pmf_matrix(s, nmax)
        lam = rate(s)
        rows = [label_probs(svc, s, t, n) * (pm[n - 1] * lam)[None, :] for n in sizes]
        return np.vstack(rows)

    vals = integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, [t]))
    out, pos = {}, 0
    for n in sizes:
        out[n] = tuple(np.maximum(vals[pos:pos + n + 1], 0.0))
        pos += n + 1
    return out, tail_bound


def decompose(model: ModelSpec, t: float, target: str = "queue", eps: float = DEFAULT_EPS,
              tol: float = DEFAULT_TOL) -> ScaledPoissonDecomposition:
    """Scaled-Poisson decomposition of ``Q(t)`` or ``D(t)``.

    Terms with zero scale (all departed for the queue, none departed for
    departures) are dropped.
    """
    require_iid(model, "decompose")
    if target not in TARGETS:
        raise DomainError(f"target must be one of {TARGETS}")
    if t < 0:
        raise DomainError("t must be >= 0")
    mean_measure(model, t)
    means, tail_bound = _label_means(model, float(t), eps, tol)
    terms = []
    for n, row in means.items():
        for j, m in enumerate(row, start=1):
            scale = n - j + 1 if target == "queue" else j - 1
            if scale > 0:
                terms.append(Term(n, j, scale, float(m)))
    return ScaledPoissonDecomposition(target, float(t), tuple(terms), tail_bound)


def queue_pmf(model: ModelSpec, t: float, eps: float = DEFAULT_EPS) -> LatticePmf:
    return decompose(model, t, "queue", eps).pmf(eps)


def departure_pmf(model: ModelSpec, t: float, eps: float = DEFAULT_EPS) -> LatticePmf:
    return decompose(model, t, "departure", eps).pmf(eps)


def moments(model: ModelSpec, t: float, eps: float = DEFAULT_EPS):
    """``(E[Q(t)], Var[Q(t)], E[D(t)], Var[D(t)])``."""
    q = decompose(model, t, "queue", eps)
    d = decompose(model, t, "departure", eps)
    return q.mean(), q.variance(), d.mean(), d.variance()


def cov_qd(model: ModelSpec, t: float, eps: float = DEFAULT_EPS) -> float:
    """``Cov(Q(t), D(t))``: only labels with both present and departed customers count."""
    require_iid(model, "cov_qd")
    means, _ = _label_means(model, float(t), eps, DEFAULT_TOL)
    return float(sum((n - j + 1) * (j - 1) * m
                     for n, row in means.items() for j, m in enumerate(row, start=1)))


# ---------------------------------------------------------------------------
# two-time and finite-dimensional results
# ---------------------------------------------------------------------------

def _weights(target, n, labels):
    return n - labels + 1 if target == "queue" else labels - 1


def autocov(model: ModelSpec, target: str, t1: float, t2: float, eps: float = DEFAULT_EPS,
            tol: float = DEFAULT_TOL) -> float:
    """``Cov(X(t1), X(t2))`` for ``X`` the queue or departure process, ``t1 <= t2``.

    Sums weight(j1) * weight(j2) times the mean number of batches arriving in
    ``(0, t1]`` that carry label ``j1`` at ``t1`` and ``j2`` at ``t2``.
    """
    require_iid(model, "autocov")
    if target not in TARGETS:
        raise DomainError(f"target must be one of {TARGETS}")
    if not 0 < t1 <= t2:
        raise DomainError("need 0 < t1 <= t2")
    mean_measure(model, t2)
    if t1 == t2:
        d = decompose(model, t1, target, eps, tol)
        return d.variance()
    nmax, _ = _truncation(model, t1, eps)
    sizes = batch_sizes(model, nmax)
    grid = np.array([t1, t2])
    svc, rate, batch = model.service, model.rate, model.batch
    weighted = []
    for n in sizes:
        chains = label_chains(n, 2)
        weighted.append((n, chains, _weights(target, n, chains[:, 0]) * _weights(target, n, chains[:, 1])))

    def f(s):
        pm = batch.pmf_matrix(s, nmax)
        total = np.zeros(s.size)
        for n, chains, w in weighted:
            total += (w @ chain_probs(svc, s, grid, n, chains)) * pm[n - 1]
        return total * rate(s)

    return float(integrate(f, 0.0, t1, tol=tol, points=_split_points(model, 0.0, t1, grid)))


def autocov_exponential(model: ModelSpec, t: float, delta: float, eps: float = DEFAULT_EPS) -> float:
    """``Var[Q(t)] * exp(-mu * delta)`` for exponential service with constant rate ``mu``."""
    svc = model.service
    if svc.kind != "exponential" or not svc.params[0].is_constant:
        raise UnsupportedAnalyticError("closed form needs exponential service with a constant rate")
    if delta < 0:
        raise DomainError("delta must be >= 0")
    mu = float(svc.params[0](0.0))
    return decompose(model, t, "queue", eps).variance() * float(np.exp(-mu * delta))


def autocov_deterministic(model: ModelSpec, t: float, delta: float) -> float:
    """Queue auto-covariance for constant service ``D`` and fixed batch size ``n``.

    ``Q(t) = n (A(t) - A(t - D))``, so the two windows share arrivals on
    ``(t + delta - D, t]``: the covariance is ``n^2`` times the mean measure
    of that overlap, and zero once ``delta >= D``.
    """
    svc = model.service
    n = model.batch.fixed_size()
    if svc.kind != "deterministic" or not svc.params[0].is_constant or n is None:
        raise UnsupportedAnalyticError("closed form needs constant deterministic service and a fixed batch size")
    if delta < 0 or t < 0:
        raise DomainError("t and delta must be >= 0")
    mean_measure(model, t + delta)
    dur = float(svc.params[0](0.0))
    if delta >= dur:
        return 0.0
    lo = max(t - dur + delta, 0.0)
    return float(n * n * model.rate.integral(lo, t)) if t > lo else 0.0


def _chain_costs(n, chains, alpha, beta):
    """Cost ``sum_l alpha_l (n - j_l + 1) + beta_l (j_l - 1)`` of each label chain."""
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    return (n - chains + 1) @ alpha + (chains - 1) @ beta


def _per_customer_h(svc, s, times, k, alpha, beta):
    """``1 - E[exp(-cost)]`` for one customer arriving in window ``k``.

    The customer is classified by the window in which it departs: before
    ``t_k``, in ``(t_{l-1}, t_l]`` for ``l > k``, or after ``t_m``.
    """
    m = len(times)
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    tails = [np.broadcast_to(svc.tail(s, times[i] - s), s.shape) for i in range(k, m)]
    h = (1.0 - tails[0]) * -np.expm1(-beta[k:].sum())
    for idx, ell in enumerate(range(k + 1, m)):
        prob = np.clip(tails[idx] - tails[idx + 1], 0.0, None)
        cost = alpha[k:ell].sum() + beta[ell:].sum()
        h = h + prob * -np.expm1(-cost)
    h = h + tails[-1] * -np.expm1(-alpha[k:].sum())
    return np.clip(h, 0.0, 1.0)


def _qd_exponent_gamma(model: ModelSpec, q: TransformQuery, tol: float) -> float:
    svc, rate, batch = model.service, model.rate, model.batch
    times = q.times
    edges = (0.0,) + times
    total = 0.0
    for k in range(len(times)):
        def f(s, k=k):
            h = _per_customer_h(svc, s, times, k, q.alpha, q.beta)
            return batch.one_minus_pgf(s, h) * rate(s)
        a, b = edges[k], edges[k + 1]
        total += integrate(f, a, b, tol=tol, points=_split_points(model, a, b, times[k:]))
    return total


def _qd_exponent_chains(model: ModelSpec, q: TransformQuery, eps: float, tol: float) -> float:
    svc, rate, batch = model.service, model.rate, model.batch
    times = q.times
    m = len(times)
    if m > MAX_CHAIN_LENGTH:
        raise ResourceError(f"label-chain product is capped at {MAX_CHAIN_LENGTH} time points")
    nmax, _ = _truncation(model, times[-1], eps)
    if nmax > MAX_CHAIN_BATCH:
        raise ResourceError(f"label-chain product is capped at batch size {MAX_CHAIN_BATCH}")
    sizes = batch_sizes(model, nmax)
    edges = (0.0,) + times
    total = 0.0
    for k in range(m):
        sub = np.array(times[k:])
        prepared = []
        count = 0
        for n in sizes:
            chains = label_chains(n, m - k)
            count += len(chains)
            w = -np.expm1(-_chain_costs(n, chains, q.alpha[k:], q.beta[k:]))
            prepared.append((n, chains, w))
        if count > MAX_CHAINS:
            raise ResourceError(f"{count} label chains exceed the cap of {MAX_CHAINS}")

        def f(s, prepared=prepared, sub=sub):
            pm = batch.pmf_matrix(s, nmax)
            acc = np.zeros(s.size)
            for n, chains, w in prepared:
                acc += (w @ chain_probs(svc, s, sub, n, chains)) * pm[n - 1]
            return acc * rate(s)

        a, b = edges[k], edges[k + 1]
        total += integrate(f, a, b, tol=tol, points=_split_points(model, a, b, times[k:]))
    return total


def _stratified_exponent(model: ModelSpec, windows, cost_fn, reps: int, rng):
    """Stratified MC estimate of ``sum_k int_{window k} lambda(s) E_s[1 - e^{-cost}] ds``.

    ``cost_fn(k, s, sizes, owner, services)`` returns one cost per batch.
    """
    gen = as_generator(rng)
    value = 0.0
    var = 0.0
    for k, (a, b) in enumerate(windows):
        if b <= a:
            continue
        s = a + (b - a) * (np.arange(reps) + gen.random(reps)) / reps
        sizes, owner, services = model.sample_customers(s, gen)
        cost = cost_fn(k, s, sizes, owner, services)
        y = (b - a) * model.rate(s) * -np.expm1(-cost)
        value += float(y.mean())
        var += float(y.var(ddof=1) / reps)
    return value, float(np.sqrt(var))


def _qd_exponent_mc(model: ModelSpec, q: TransformQuery, reps: int, rng):
    times = np.array(q.times)
    alpha = np.array(q.alpha)
    beta = np.array(q.beta)
    edges = (0.0,) + q.times

    def cost(k, s, sizes, owner, services):
        total = np.zeros(s.size)
        for ell in range(k, len(times)):
            alive = np.bincount(owner, weights=(services > times[ell] - s[owner]), minlength=s.size)
            total += alpha[ell] * alive + beta[ell] * (sizes - alive)
        return total

    return _stratified_exponent(model, list(zip(edges[:-1], edges[1:])), cost, reps, rng)


def joint_lst_qd(model: ModelSpec, query: TransformQuery, method: str = "auto", eps: float = DEFAULT_EPS,
                 tol: float = DEFAULT_TOL, reps: int = 100_000, rng=None):
    """``E[exp(-sum_k alpha_k Q(t_k) + beta_k D(t_k))]``.

    Methods: ``"gamma"`` (i.i.d. services, per-customer factorization),
    ``"chains"`` (explicit product over label chains; capped), ``"mc"``
    (stratified Monte Carlo over arriving batches; works for any within-batch
    dependence and returns an :class:`Estimate`). ``"auto"`` picks ``gamma``
    for i.i.d. models and ``mc`` otherwise.
    """
    if not isinstance(query, TransformQuery):
        raise DomainError("query must be a TransformQuery")
    mean_measure(model, query.times[-1])
    if method == "auto":
        method = "gamma" if model.is_iid else "mc"
    if method == "mc":
        expo, se = _qd_exponent_mc(model, query, reps, rng)
        val = float(np.exp(-expo))
        return Estimate(val, val * se)
    require_iid(model, f"joint_lst_qd[{method}]")
    if method == "gamma":
        expo = _qd_exponent_gamma(model, query, tol)
    elif method == "chains":
        expo = _qd_exponent_chains(model, query, eps, tol)
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(np.exp(-expo))


# ---------------------------------------------------------------------------
# workload
# ---------------------------------------------------------------------------

def _wqd_exponent_iid(model: ModelSpec, t, alpha, beta, gamma, tol):
    svc, rate, batch = model.service, model.rate, model.batch

    def f(s):
        u = t - s
        tail = np.broadcast_to(svc.tail(s, u), s.shape)
        omphi = svc.one_minus_phi(s, u, alpha)
        h = (1.0 - tail) * -np.expm1(-gamma) + tail * (-np.expm1(-beta) + np.exp(-beta) * omphi)
        return batch.one_minus_pgf(s, np.clip(h, 0.0, 1.0)) * rate(s)

    return integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, [t]))


def joint_lst_wqd(model: ModelSpec, t: float, alpha: float, beta: float = 0.0, gamma: float = 0.0,
                  method: str = "auto", tol: float = DEFAULT_TOL, reps: int = 100_000, rng=None):
    """``E[exp(-alpha W(t) - beta Q(t) - gamma D(t))]``.

    ``"iid"`` uses the conditional residual transform of each customer's
    service; ``"mc"`` estimates the per-batch expectation by stratified Monte
    Carlo and returns an :class:`Estimate`.
    """
    if min(alpha, beta, gamma) < 0:
        raise DomainError("transform arguments must be nonnegative")
    if t <= 0:
        if t == 0:
            return 1.0
        raise DomainError("t must be >= 0")
    mean_measure(model, t)
    if method == "auto":
        method = "iid" if model.is_iid else "mc"
    if method == "mc":
        def cost(k, s, sizes, owner, services):
            u = t - s[owner]
            c = np.where(services > u, beta + alpha * (services - u), gamma)
            return np.bincount(owner, weights=c, minlength=s.size)
        expo, se = _stratified_exponent(model, [(0.0, t)], cost, reps, rng)
        val = float(np.exp(-expo))
        return Estimate(val, val * se)
    if method != "iid":
        raise DomainError(f"unknown method {method!r}")
    require_iid(model, "joint_lst_wqd")
    return float(np.exp(-_wqd_exponent_iid(model, t, alpha, beta, gamma, tol)))


def residual_lst(model: ModelSpec, t: float, alpha: float, tol: float = 1e-12) -> float:
    """LST of the residual-service law ``H_t`` of customers present at ``t``.

    Computed as ``1 - int_0^1 Hbar_t(-ln(v)/alpha) dv`` (the substitution
    ``v = exp(-alpha x)`` in ``1 - alpha int e^{-alpha x} Hbar_t(x) dx``).
    """
    if alpha == 0:
        return 1.0

    def f(v):
        _, hbar = residual_service(model, t, -np.log(v) / alpha, tol=tol)
        return hbar

    return 1.0 - integrate(f, 0.0, 1.0, tol=tol)


def workload_lst(model: ModelSpec, t: float, alpha: float, method: str = "auto", tol: float = DEFAULT_TOL,
                 reps: int = 100_000, rng=None):
    """``E[exp(-alpha W(t))]``.

    ``"residual"`` (single arrivals only): ``exp(-(1 - phi_t(alpha)) nu_t)``
    with ``phi_t`` the transform of the residual-service law of the customers
    present. ``"joint"``: the (W, Q, D) transform at ``beta = gamma = 0``.
    """
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    if method == "auto":
        method = "joint"
    if method == "residual":
        if model.batch.fixed_size() != 1:
            raise UnsupportedAnalyticError("the residual-service route needs single arrivals")
        require_iid(model, "workload_lst")
        if t <= 0 or alpha == 0:
            return 1.0
        nu, _ = residual_service(model, t, 0.0, tol=min(tol, 1e-12))
        phi = residual_lst(model, t, alpha, tol=min(tol, 1e-12))
        return float(np.exp(-(1.0 - phi) * nu))
    if method == "joint":
        return joint_lst_wqd(model, t, alpha, 0.0, 0.0, tol=tol, reps=reps, rng=rng)
    raise DomainError(f"unknown method {method!r}")


def last_departure_cdf(model: ModelSpec, t: float, x: float, tol: float = DEFAULT_TOL) -> float:
    """``P(T_t <= x)``: no customer arriving in ``(0, t]`` is still present at ``t + x``.

    For single arrivals this is ``exp(-nu_t * Hbar_t(x))``; with batches each
    arriving batch must be fully gone, giving ``E[1 - F(t+x-s)^B]`` inside the
    exponent.
    """
    if x < 0:
        raise DomainError("x must be >= 0")
    if t <= 0:
        raise DomainError("t must be > 0")
    mean_measure(model, t)
    if np.isinf(x):
        return 1.0
    svc, rate, batch = model.service, model.rate, model.batch
    if model.within_batch == "iid":
        def f(s):
            return batch.one_minus_pgf(s, svc.tail(s, t + x - s)) * rate(s)
    elif model.within_batch == "identical":
        def f(s):
            return svc.tail(s, t + x - s) * rate(s)
    else:
        raise UnsupportedAnalyticError("last departure needs i.i.d. or identical services in a batch")
    expo = integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, [t + x]))
    return float(np.exp(-expo))
