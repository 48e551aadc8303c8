"""Batch scaling ``B -> ceil(n B)`` and the shot-noise limits of the rescaled queue.

Dividing queue, departures and workload by ``n`` and letting ``n`` grow, the
processes converge to shot noise driven by the arrival process with jump
sizes from the batch mark law. ``convergence_report`` tabulates the gap
between finite-``n`` transforms and their limits.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .analytics import TransformQuery, joint_lst_qd, joint_lst_wqd
from .des import worker_count
from .errors import DomainError, UnsupportedAnalyticError
from .model import BatchLaw, ModelSpec, mean_measure
from .orderstat import _split_points
from .quadrature import DEFAULT_TOL, integrate

MARK_EPS = 1e-10


def scaled_batch(mark, n: int) -> BatchLaw:
    """Law of ``ceil(n B)`` as an explicit table (the mark is kept attached).

    Unbounded marks are cut at the ``1 - 1e-10`` quantile and the remaining
    mass is folded into the largest size; an atom of ``B`` at 0 would give
    size 0 and is folded into size 1.
    """
    if mark is None:
        raise UnsupportedAnalyticError("scaling needs a continuous mark law on the batch")
    if n < 1:
        raise DomainError("scaling index must be >= 1")
    if mark.kind == "point":
        return BatchLaw.deterministic(max(1, math.ceil(n * mark.params[0])), mark=mark)
    top = max(1, math.ceil(n * mark.upper(MARK_EPS)))
    b = np.arange(1, top + 1)
    cdf = mark.cdf(b / n)
    probs = np.diff(np.concatenate([[0.0], cdf]))
    probs[-1] += 1.0 - cdf[-1]
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    keep = probs > 0
    return BatchLaw.table(dict(zip(b[keep].tolist(), probs[keep].tolist())), mark=mark)


def scaled_model(model: ModelSpec, n: int) -> ModelSpec:
    """The model with batch sizes ``ceil(n B_s)``."""
    return model.replace(batch=scaled_batch(model.batch.mark, n))


def _mark(model):
    if model.batch.mark is None:
        raise UnsupportedAnalyticError("the shot-noise limit needs a continuous mark law on the batch")
    return model.batch.mark


def limit_fidi_lst(model: ModelSpec, query: TransformQuery, tol: float = DEFAULT_TOL) -> float:
    """Joint transform of the limiting (queue, departure) shot noise on a time grid."""
    mark = _mark(model)
    mean_measure(model, query.times[-1])
    times = query.times
    alpha = np.asarray(query.alpha)
    beta = np.asarray(query.beta)
    edges = (0.0,) + times
    svc = model.service
    total = 0.0
    for k in range(len(times)):
        def f(s, k=k):
            theta = np.zeros(s.shape)
            for x in range(k, len(times)):
                tail = svc.tail(s, times[x] - s)
                theta = theta + alpha[x] * tail + beta[x] * (1.0 - tail)
            return mark.laplace_exponent(theta) * model.rate(s)
        a, b = edges[k], edges[k + 1]
        total += integrate(f, a, b, tol=tol, points=_split_points(model, a, b, times[k:]))
    return float(np.exp(-total))


def limit_wqd_lst(model: ModelSpec, t: float, alpha: float, beta: float = 0.0, gamma: float = 0.0,
                  tol: float = DEFAULT_TOL) -> float:
    """Transform of the limiting (workload, queue, departure) shot noise at ``t``.

    The workload kernel is ``E_s[(S - u)^+] = E_s[S] * Fbar^e_s(u)``.
    """
    mark = _mark(model)
    if min(alpha, beta, gamma) < 0:
        raise DomainError("transform arguments must be nonnegative")
    if t < 0:
        raise DomainError("t must be >= 0")
    mean_measure(model, t)
    svc = model.service
    if t == 0:
        return 1.0
    if not np.all(np.isfinite(svc.mean(np.linspace(0.0, t, 65)))):
        raise DomainError("workload limit needs a finite service mean")

    def f(s):
        u = t - s
        tail = svc.tail(s, u)
        theta = alpha * svc.partial_expectation(s, u) + beta * tail + gamma * (1.0 - tail)
        return mark.laplace_exponent(theta) * model.rate(s)

    return float(np.exp(-integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, [t]))))


@dataclass(frozen=True)
class ConvergenceReport:
    ns: Tuple[int, ...]
    values: Tuple[float, ...]
    limit: float
    kind: str = "qd"

    @property
    def errors(self) -> Tuple[float, ...]:
        return tuple(abs(v - self.limit) for v in self.values)

    @property
    def decreasing(self) -> bool:
        e = self.errors
        return all(b <= a for a, b in zip(e[:-1], e[1:]))

    def rows(self):
        for n, v, e in zip(self.ns, self.values, self.errors):
            yield n, v, self.limit, e
        yield "inf", self.limit, self.limit, 0.0

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "value", "limit", "abs_error"])
        for n, v, lim, e in self.rows():
            w.writerow([n, repr(float(v)), repr(float(lim)), repr(float(e))])


def finite_lst(model: ModelSpec, n: int, query: TransformQuery, tol: float = DEFAULT_TOL) -> float:
    """Transform of the rescaled processes (divided by ``n``) of ``scaled_model(n)``."""
    scaled = scaled_model(model, n)
    q = query.scaled(n)
    if query.is_wqd:
        return joint_lst_wqd(scaled, q.times[0], q.workload or 0.0, q.alpha[0], q.gamma or 0.0, tol=tol)
    return joint_lst_qd(scaled, q, method="gamma", tol=tol)


def limit_lst(model: ModelSpec, query: TransformQuery, tol: float = DEFAULT_TOL) -> float:
    if query.is_wqd:
        return limit_wqd_lst(model, query.times[0], query.workload or 0.0, query.alpha[0],
                             query.gamma or 0.0, tol=tol)
    return limit_fidi_lst(model, query, tol=tol)


def convergence_report(model: ModelSpec, ns, query: TransformQuery, tol: float = DEFAULT_TOL,
                       threads: Optional[int] = None) -> ConvergenceReport:
    """Finite-``n`` rescaled transforms next to their limit.

    For (W, Q, D) queries (``query.workload``/``query.gamma`` set), ``alpha[0]``
    is the queue argument.
    """
    ns = tuple(int(n) for n in ns)
    if not ns or any(b <= a for a, b in zip(ns[:-1], ns[1:])) or ns[0] < 1:
        raise DomainError("n list must be increasing positive integers")
    work = lambda n: finite_lst(model, n, query, tol)  # noqa: E731
    nthreads = worker_count(threads)
    if nthreads > 1 and len(ns) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            values = tuple(pool.map(work, ns))
    else:
        values = tuple(work(n) for n in ns)
    return ConvergenceReport(ns, values, limit_lst(model, query, tol), "wqd" if query.is_wqd else "qd")
