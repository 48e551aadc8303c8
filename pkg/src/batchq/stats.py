"""Monte Carlo estimates and goodness-of-fit helpers."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import stats


class Estimate(NamedTuple):
    """A Monte Carlo estimate with its standard error."""

    value: float
    se: float

    def within(self, target: float, k: float = 4.0, floor: float = 0.0) -> bool:
        return abs(self.value - target) <= max(k * self.se, floor)


def mean_estimate(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two replications")
    return Estimate(float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size)))


def variance_estimate(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    c = x - x.mean()
    var = float(c @ c / (n - 1))
    m4 = float(np.mean(c ** 4))
    return Estimate(var, float(np.sqrt(max(m4 - var ** 2, 0.0) / n)))


def covariance_estimate(x, y) -> Estimate:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    prod = (x - x.mean()) * (y - y.mean())
    cov = float(prod.sum() / (n - 1))
    return Estimate(cov, float(prod.std(ddof=1) / np.sqrt(n)))


def pmf_estimate(x, k_max=None):
    """Empirical masses of an integer sample, each with binomial SE."""
    x = np.asarray(x, dtype=np.int64)
    k_max = int(x.max()) if k_max is None else k_max
    counts = np.bincount(np.clip(x, 0, k_max), minlength=k_max + 1)[: k_max + 1]
    p = counts / x.size
    return [Estimate(float(pi), float(np.sqrt(pi * (1 - pi) / x.size))) for pi in p]


def _pool(expected, observed, min_expected=5.0):
    """Merge adjacent bins (from the right) until each expects >= min_expected."""
    exp_out, obs_out = [], []
    e_acc = o_acc = 0.0
    for e, o in zip(expected[::-1], observed[::-1]):
        e_acc += e
        o_acc += o
        if e_acc >= min_expected:
            exp_out.append(e_acc)
            obs_out.append(o_acc)
            e_acc = o_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            exp_out[-1] += e_acc
            obs_out[-1] += o_acc
        else:
            exp_out.append(e_acc)
            obs_out.append(o_acc)
    return np.array(exp_out[::-1]), np.array(obs_out[::-1])


def chisquare_gof(sample, masses):
    """Chi-square goodness of fit of an integer sample against lattice masses.

    Mass beyond the stored support is lumped into the last bin. Returns
    ``(statistic, p_value, dof)``.
    """
    sample = np.asarray(sample, dtype=np.int64)
    masses = np.asarray(masses, dtype=float)
    k_max = max(len(masses) - 1, int(sample.max()) if sample.size else 0)
    probs = np.zeros(k_max + 1)
    probs[: len(masses)] = masses
    probs[-1] += max(0.0, 1.0 - probs.sum())
    observed = np.bincount(sample, minlength=k_max + 1).astype(float)
    expected, observed = _pool(probs * sample.size, observed)
    if expected.size < 2:
        return 0.0, 1.0, 0
    stat = float(((observed - expected) ** 2 / expected).sum())
    dof = expected.size - 1
    return stat, float(stats.chi2.sf(stat, dof)), dof


def chisquare_two_sample(x, y):
    """Two-sample chi-square homogeneity test for integer samples."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    k_max = int(max(x.max(), y.max()))
    cx = np.bincount(x, minlength=k_max + 1).astype(float)
    cy = np.bincount(y, minlength=k_max + 1).astype(float)
    tot = cx + cy
    # pool sparse bins on the pooled expected count of the smaller sample
    share = min(x.size, y.size) / (x.size + y.size)
    keep_x, keep_y, acc_x, acc_y = [], [], 0.0, 0.0
    for a, b, t in zip(cx[::-1], cy[::-1], tot[::-1]):
        acc_x += a
        acc_y += b
        if (acc_x + acc_y) * share >= 5.0:
            keep_x.append(acc_x)
            keep_y.append(acc_y)
            acc_x = acc_y = 0.0
    if keep_x:
        keep_x[-1] += acc_x
        keep_y[-1] += acc_y
    table = np.array([keep_x[::-1], keep_y[::-1]])
    if table.shape[1] < 2:
        return 0.0, 1.0, 0
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), float(p), int(dof)
