"""Exact samplers that draw Poisson class counts instead of simulating paths.

The thinning sampler draws one Poisson count per label (or label chain) with
the mean from the analytic decomposition, so queue and departures built from
the same counts have the exact joint law. The splitting sampler views a fixed
batch size ``n`` as ``n`` coupled single-arrival queues, one per order
statistic, and exists to cross-check the thinning sampler.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy import special

from .analytics import _label_means, _truncation, batch_sizes, MAX_CHAIN_BATCH, MAX_CHAIN_LENGTH, MAX_CHAINS
from .des import generate_nhpp_many
from .errors import DomainError, ResourceError, UnsupportedAnalyticError
from .model import ModelSpec, mean_measure
from .orderstat import _split_points, chain_probs, label_chains, require_iid
from .quadrature import DEFAULT_EPS, DEFAULT_TOL, integrate
from .rng import as_generator


def _draw_counts(gen, means, size):
    means = np.asarray(means, dtype=float)
    return gen.poisson(means[None, :], size=(size, means.size))


def sample_marginal(model: ModelSpec, t: float, rng, size: int = 1, eps: float = DEFAULT_EPS):
    """``size`` exact draws of ``(Q(t), D(t))`` as two integer arrays."""
    require_iid(model, "sample_marginal")
    if t < 0:
        raise DomainError("t must be >= 0")
    mean_measure(model, t)
    gen = as_generator(rng)
    means, _ = _label_means(model, float(t), eps, DEFAULT_TOL)
    if not means:
        zero = np.zeros(size, dtype=np.int64)
        return zero, zero.copy()
    flat, wq, wd = [], [], []
    for n, row in means.items():
        j = np.arange(1, n + 2)
        flat.extend(row)
        wq.extend(n - j + 1)
        wd.extend(j - 1)
    counts = _draw_counts(gen, flat, size)
    return counts @ np.array(wq), counts @ np.array(wd)


def fidi_means(model: ModelSpec, grid, eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL):
    """Per arrival window ``(t_{k-1}, t_k]``: list of ``(n, chains, means)``."""
    require_iid(model, "sample_fidi")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be positive and strictly increasing")
    if grid.size > MAX_CHAIN_LENGTH:
        raise ResourceError(f"at most {MAX_CHAIN_LENGTH} time points")
    mean_measure(model, grid[-1])
    nmax, _ = _truncation(model, grid[-1], eps)
    if nmax > MAX_CHAIN_BATCH:
        raise ResourceError(f"batch support {nmax} exceeds the cap of {MAX_CHAIN_BATCH}")
    sizes = batch_sizes(model, nmax)
    edges = np.concatenate([[0.0], grid])
    windows = []
    for k in range(grid.size):
        sub = grid[k:]
        chains = {n: label_chains(n, sub.size) for n in sizes}
        if sum(len(c) for c in chains.values()) > MAX_CHAINS:
            raise ResourceError("too many label chains")

        def f(s, chains=chains, sub=sub):
            pm = model.batch.pmf_matrix(s, nmax)
            lam = model.rate(s)
            return np.vstack([chain_probs(model.service, s, sub, n, c) * (pm[n - 1] * lam)[None, :]
                              for n, c in chains.items()])

        a, b = edges[k], edges[k + 1]
        vals = integrate(f, a, b, tol=tol, points=_split_points(model, a, b, sub))
        out, pos = [], 0
        for n, c in chains.items():
            out.append((n, c, np.maximum(vals[pos:pos + len(c)], 0.0)))
            pos += len(c)
        windows.append(out)
    return windows


def sample_fidi(model: ModelSpec, grid, rng, size: int = 1, eps: float = DEFAULT_EPS):
    """Exact joint draws of ``(Q(t_1..t_m), D(t_1..t_m))``, each of shape ``(size, m)``."""
    gen = as_generator(rng)
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    Q = np.zeros((size, m), dtype=np.int64)
    D = np.zeros((size, m), dtype=np.int64)
    for k, window in enumerate(fidi_means(model, grid, eps)):
        for n, chains, means in window:
            counts = _draw_counts(gen, means, size)
            Q[:, k:] += counts @ (n - chains + 1)
            D[:, k:] += counts @ (chains - 1)
    return Q, D


def _order_stat_tail(model: ModelSpec, s, u, j: int, n: int):
    """``P(S_{j:n} > u)`` via the regularized incomplete beta function."""
    cdf = model.service.cdf(s, u)
    return 1.0 - special.betainc(j, n - j + 1, np.clip(cdf, 0.0, 1.0))


def splitting_means(model: ModelSpec, t: float, tol: float = DEFAULT_TOL):
    """Mean number of batches whose ``j``-th shortest customer is still present
    at ``t``, for ``j = 1..n``."""
    n = model.batch.fixed_size()
    if n is None:
        raise UnsupportedAnalyticError("the splitting construction needs a fixed batch size")
    require_iid(model, "splitting sampler")

    def f(s):
        lam = model.rate(s)
        return np.vstack([_order_stat_tail(model, s, t - s, j, n) * lam for j in range(1, n + 1)])

    return n, np.maximum(integrate(f, 0.0, t, tol=tol, points=_split_points(model, 0.0, t, [t])), 0.0)


def sample_splitting(model: ModelSpec, t: float, rng, size: int = 1):
    """``Q(t)`` as the sum of ``n`` sub-queues, one per order statistic of the batch.

    Sub-queue ``j`` counts batches whose ``j``-th shortest service is still
    running. The sub-queues are nested (``Q_1 <= ... <= Q_n`` holds pathwise
    since a longer order statistic outlives a shorter one), so they are built
    from independent Poisson increments ``Q_j - Q_{j-1}``.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    gen = as_generator(rng)
    if t == 0:
        return np.zeros(size, dtype=np.int64)
    n, tails = splitting_means(model, t)
    incr = np.maximum(np.diff(np.concatenate([[0.0], tails])), 0.0)
    y = _draw_counts(gen, incr, size)
    sub = np.cumsum(y, axis=1)
    return sub.sum(axis=1)


KERNELS = ("queue", "departure", "workload")


def sample_shot_noise(model: ModelSpec, t: float, rng, size: int = 1, kernel: str = "queue"):
    """Draws of ``Z(t) = sum_{s <= t} B_s * k_s(t - s)`` over NHPP epochs ``s``.

    Kernels: ``queue`` uses ``Fbar_s``, ``departure`` uses ``F_s`` and
    ``workload`` uses ``E_s[(S - u)^+] = E_s[S] * Fbar^e_s(u)``.
    """
    mark = model.batch.mark
    if mark is None:
        raise UnsupportedAnalyticError("shot noise needs a continuous mark law on the batch")
    if kernel not in KERNELS:
        raise DomainError(f"kernel must be one of {KERNELS}")
    if t < 0:
        raise DomainError("t must be >= 0")
    gen = as_generator(rng)
    if t == 0:
        return np.zeros(size)
    mean_measure(model, t)
    epochs, rep = generate_nhpp_many(model.rate, t, size, gen)
    marks = mark.sample(epochs.size, gen)
    u = t - epochs
    svc = model.service
    if kernel == "queue":
        decay = svc.tail(epochs, u)
    elif kernel == "departure":
        decay = svc.cdf(epochs, u)
    else:
        decay = svc.partial_expectation(epochs, u)
    return np.bincount(rep, weights=marks * decay, minlength=size)


def write_draws(fh, columns: dict):
    """CSV with one row per draw and one column per observable."""
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["draw"] + names)
    for i in range(len(data[0]) if data else 0):
        w.writerow([i] + [repr(v[i].item()) if v.dtype.kind == "f" else int(v[i]) for v in data])
