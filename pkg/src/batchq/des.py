"""Discrete-event oracle: simulate arrivals and services, then read off Q, D, W.

Two evaluation paths share one path generator. ``sweep`` walks a single path
chronologically with a heap of pending departures (and can dump the event
trajectory); ``observe`` evaluates many replications at once straight from the
per-customer definitions. Tests check that both agree on the same path.
"""

from __future__ import annotations

import csv
import heapq
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import Curve
from .errors import DomainError
from .model import ModelSpec
from .rng import RngStream, as_generator
from .stats import Estimate, covariance_estimate, mean_estimate, variance_estimate

CHUNK = 10_000
_SINE_PIECES = 32


def worker_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("BATCHQ_THREADS", "1") or 1)
    return max(1, int(threads))


def _pieces(rate: Curve, horizon: float):
    cuts = {0.0, float(horizon)}
    cuts.update(b for b in rate.breakpoints() if 0 < b < horizon)
    if rate.kind == "sinusoidal":
        cuts.update(np.linspace(0.0, horizon, _SINE_PIECES + 1)[1:-1].tolist())
    cuts = sorted(cuts)
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        _, hi = rate.bounds(a, b)
        if not np.isfinite(hi):
            raise DomainError(f"rate is unbounded on [{a}, {b}]")
        out.append((a, b, hi))
    return out


def generate_nhpp_many(rate: Curve, horizon: float, reps: int, rng):
    """Epochs of ``reps`` independent NHPP paths on ``(0, horizon]``.

    Lewis-Shedler thinning against the maximum of the rate on each piece.
    Returns ``(epochs, rep)`` sorted by replication, then by time.
    """
    gen = as_generator(rng)
    if horizon < 0:
        raise DomainError("horizon must be >= 0")
    epochs, owner = [], []
    for a, b, hi in _pieces(rate, horizon):
        if hi <= 0:
            continue
        counts = gen.poisson(hi * (b - a), size=reps)
        total = int(counts.sum())
        x = a + (b - a) * gen.random(total)
        x = np.where(x == a, b, x)      # keep the half-open convention (a, b]
        keep = gen.random(total) * hi < rate(x)
        epochs.append(x[keep])
        owner.append(np.repeat(np.arange(reps), counts)[keep])
    if not epochs:
        return np.empty(0), np.empty(0, dtype=np.int64)
    epochs = np.concatenate(epochs)
    owner = np.concatenate(owner)
    order = np.lexsort((epochs, owner))
    return epochs[order], owner[order]


def generate_nhpp(rate: Curve, horizon: float, rng) -> np.ndarray:
    """Sorted epochs of one NHPP path on ``(0, horizon]``."""
    return generate_nhpp_many(rate, horizon, 1, rng)[0]


@dataclass(frozen=True, eq=False)
class PathSample:
    """One trajectory plus its observables at the query times.

    ``services`` and ``owner`` are per customer (``owner`` indexes
    ``epochs``). ``last`` holds, per query time ``t``, the largest
    ``departure - t`` among customers arrived by ``t`` (``-inf`` if none).
    """

    epochs: np.ndarray
    sizes: np.ndarray
    owner: np.ndarray
    services: np.ndarray
    times: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    W: np.ndarray
    last: np.ndarray

    @property
    def departures(self) -> np.ndarray:
        return self.epochs[self.owner] + self.services

    def events(self):
        """Chronological ``(time, type, Q, D, W)`` records, including query times."""
        return list(_sweep(self.epochs, self.sizes, self.services, self.times, record=True)[1])

    def write_events(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "type", "Q", "D", "W"])
        for t, kind, q, d, wl in self.events():
            w.writerow([repr(float(t)), kind, q, d, repr(float(wl))])


def _sweep(epochs, sizes, services, times, record=False):
    """Heap-driven chronological sweep; returns per-query (Q, D, W, last) and events."""
    pending = []                       # departure times of customers in system
    q = d = 0
    latest = -np.inf
    out = np.zeros((4, len(times)))
    log = []
    arrivals = iter(zip(epochs, np.split(services, np.cumsum(sizes)[:-1]) if len(sizes) else []))
    nxt = next(arrivals, None)
    qi = 0

    def workload(now):
        return float(sum(dep - now for dep in pending)) if pending else 0.0

    while True:
        t_arr = nxt[0] if nxt is not None else np.inf
        t_dep = pending[0] if pending else np.inf
        t_q = times[qi] if qi < len(times) else np.inf
        now = min(t_arr, t_dep, t_q)
        if now == np.inf:
            break
        if t_dep == now and t_dep <= t_arr and t_dep <= t_q:
            heapq.heappop(pending)
            q -= 1
            d += 1
            if record:
                log.append((now, "departure", q, d, workload(now)))
        elif t_arr == now and t_arr <= t_q:
            # arrival at s counts at s; a zero service departs immediately
            for srv in nxt[1]:
                dep = now + srv
                latest = max(latest, dep)
                heapq.heappush(pending, dep)
                q += 1
            if record:
                log.append((now, "arrival", q, d, workload(now)))
            nxt = next(arrivals, None)
        else:
            # departures exactly at t count as departed, matching D(t) = #{dep <= t}
            while pending and pending[0] <= now:
                heapq.heappop(pending)
                q -= 1
                d += 1
            out[:, qi] = (q, d, workload(now), latest - now)
            if record:
                log.append((now, "query", q, d, out[2, qi]))
            qi += 1
    return out, log


def sweep(epochs, sizes, services, times) -> PathSample:
    """Observables at ``times`` of an already drawn path (heap sweep)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise DomainError("query times must be nondecreasing")
    epochs = np.asarray(epochs, dtype=float)
    sizes = np.asarray(sizes, dtype=np.int64)
    services = np.asarray(services, dtype=float)
    out, _ = _sweep(epochs, sizes, services, times)
    owner = np.repeat(np.arange(epochs.size), sizes)
    return PathSample(epochs, sizes, owner, services, times,
                      out[0].astype(np.int64), out[1].astype(np.int64), out[2], out[3])


def simulate(model: ModelSpec, times, rng, horizon: Optional[float] = None) -> PathSample:
    """Simulate one path up to ``horizon`` (default: last query time)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    horizon = float(times.max()) if horizon is None else float(horizon)
    if horizon > model.horizon or times.max() > horizon or times.min() < 0:
        raise DomainError("query times must lie in [0, horizon] and horizon <= model horizon")
    gen = as_generator(rng)
    epochs = generate_nhpp(model.rate, horizon, gen)
    sizes, _, services = model.sample_customers(epochs, gen)
    return sweep(epochs, sizes, services, times)


@dataclass(frozen=True, eq=False)
class Observables:
    """Per-replication observables, arrays of shape ``(reps, len(times))``."""

    times: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    W: np.ndarray
    last: np.ndarray

    def get(self, name: str, index: int = 0) -> np.ndarray:
        return getattr(self, name)[:, index]


def evaluate(epochs, owner_rep, sizes, services, times, reps: int) -> Observables:
    """Vectorized observables from the per-customer definitions.

    ``Q(t) = #{s <= t < s + S}``, ``D(t) = #{s + S <= t}``,
    ``W(t) = sum over present customers of (s + S - t)``.
    """
    times = np.asarray(times, dtype=float)
    cust_rep = np.repeat(owner_rep, sizes)
    arr = np.repeat(epochs, sizes)
    dep = arr + services
    m = times.size
    Q = np.zeros((reps, m), dtype=np.int64)
    D = np.zeros((reps, m), dtype=np.int64)
    W = np.zeros((reps, m))
    last = np.full((reps, m), -np.inf)
    for i, t in enumerate(times):
        came = arr <= t
        alive = came & (dep > t)
        Q[:, i] = np.bincount(cust_rep[alive], minlength=reps)
        D[:, i] = np.bincount(cust_rep[came & ~alive], minlength=reps)
        W[:, i] = np.bincount(cust_rep[alive], weights=dep[alive] - t, minlength=reps)
        np.maximum.at(last[:, i], cust_rep[came], dep[came] - t)
    return Observables(times, Q, D, W, last)


def _chunk(model: ModelSpec, times, horizon, reps, stream: RngStream, index: int) -> Observables:
    gen = stream.generator(index)
    epochs, rep = generate_nhpp_many(model.rate, horizon, reps, gen)
    sizes, _, services = model.sample_customers(epochs, gen)
    return evaluate(epochs, rep, sizes, services, times, reps)


def simulate_observables(model: ModelSpec, times, reps: int, seed: int = 0, stream: int = 0,
                         threads: Optional[int] = None, chunk: int = CHUNK) -> Observables:
    """Observables over ``reps`` independent replications.

    Replications are drawn in fixed-size chunks, chunk ``c`` from the
    sub-stream ``(seed, stream, c)``; chunks are merged in index order, so the
    result does not depend on the number of worker threads.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if times.min() < 0 or times.max() > model.horizon:
        raise DomainError("query times must lie in [0, model horizon]")
    horizon = float(times.max())
    rs = RngStream(int(seed), int(stream))
    sizes = [min(chunk, reps - c) for c in range(0, reps, chunk)]
    work = lambda i: _chunk(model, times, horizon, sizes[i], rs, i)  # noqa: E731
    nthreads = worker_count(threads)
    if nthreads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    return Observables(times, *(np.concatenate([getattr(p, f) for p in parts])
                                for f in ("Q", "D", "W", "last")))


def _parse(name: str):
    """``"Q"`` or ``"Q[1]"`` -> (field, time index)."""
    name = name.strip()
    if "[" in name:
        field, idx = name[:-1].split("[")
        return field, int(idx)
    return name, 0


ESTIMATORS = ("mean", "variance", "covariance", "pmf", "lst", "cdf")


def monte_carlo(model: ModelSpec, estimator: str, times, reps: int, seed: int = 0, *,
                observables=("Q",), args=None, x: float = 0.0, threads=None, data: Observables = None):
    """Oracle estimate with a standard error.

    ``observables`` name fields ``Q``, ``D``, ``W`` or ``last`` with an
    optional time index, e.g. ``"D[1]"``. ``lst`` returns the empirical
    ``E[exp(-sum args_i obs_i)]``; ``cdf`` returns ``P(obs <= x)``; ``pmf``
    returns ``{k: Estimate}``.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if estimator not in ESTIMATORS:
        raise DomainError(f"estimator must be one of {ESTIMATORS}")
    obs = data if data is not None else simulate_observables(model, times, reps, seed, threads=threads)
    cols = [obs.get(*_parse(o)).astype(float) for o in observables]
    if estimator == "mean":
        return mean_estimate(cols[0])
    if estimator == "variance":
        return variance_estimate(cols[0])
    if estimator == "covariance":
        return covariance_estimate(cols[0], cols[1] if len(cols) > 1 else cols[0])
    if estimator == "cdf":
        return mean_estimate((cols[0] <= x).astype(float))
    if estimator == "lst":
        args = np.zeros(len(cols)) if args is None else np.asarray(args, dtype=float)
        if args.size != len(cols) or np.any(args < 0):
            raise DomainError("one nonnegative argument per observable")
        expo = sum(a * c for a, c in zip(args, cols)) if np.any(args) else np.zeros(len(cols[0]))
        return mean_estimate(np.exp(-expo))
    k = cols[0].astype(np.int64)
    n = k.size
    counts = np.bincount(k)
    p = counts / n
    return {int(i): Estimate(float(pi), float(np.sqrt(pi * (1 - pi) / n))) for i, pi in enumerate(p)}
