"""Analytic-versus-oracle cross-validation suite for a single model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analytics as an
from .des import monte_carlo, simulate_observables
from .errors import UnsupportedAnalyticError
from .stats import chisquare_gof

P_MIN = 1e-3
K_SE = 4.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    reference: float
    tolerance: float
    passed: bool
    kind: str = "se"        # how ``tolerance`` was obtained: "se" (k * SE), "abs", "p"


def _tag(args):
    return ",".join(map(str, args))


def _close(name, value, ref, tol, kind="abs"):
    return CheckResult(name, float(value), float(ref), float(tol), bool(abs(value - ref) <= tol), kind)


def _mc(name, est, ref):
    tol = max(K_SE * est.se, 1e-12)
    return CheckResult(name, est.value, float(ref), tol, bool(abs(est.value - ref) <= tol), "se")


def run_checks(model, t: float, reps: int = 100_000, seed: int = 0, threads=None):
    """Compare analytic quantities at time ``t`` with the simulation oracle.

    Closed-form checks run only for i.i.d. within-batch models; dependent
    models are checked through the Monte Carlo transform route.
    """
    obs = simulate_observables(model, [t], reps, seed, threads=threads)
    out = []
    mc = lambda est, o, **kw: monte_carlo(model, est, [t], reps, data=obs, observables=o, **kw)  # noqa: E731

    if not model.is_iid:
        for args in ((1.0, 0.0), (0.5, 0.5)):
            q = an.TransformQuery((t,), (args[0],), (args[1],))
            est = an.joint_lst_qd(model, q, method="mc", reps=reps, rng=seed + 1)
            emp = mc("lst", ("Q", "D"), args=args)
            tol = K_SE * np.hypot(est.se, emp.se)
            out.append(_close(f"lst_qd_mc[{_tag(args)}]", est.value, emp.value, tol, "se"))
        wqd = an.joint_lst_wqd(model, t, 0.5, 0.5, 0.5, method="mc", reps=reps, rng=seed + 2)
        emp = mc("lst", ("W", "Q", "D"), args=(0.5, 0.5, 0.5))
        out.append(_close("lst_wqd_mc", wqd.value, emp.value, K_SE * np.hypot(wqd.se, emp.se), "se"))
        return out

    for target, name in (("queue", "Q"), ("departure", "D")):
        pmf = an.decompose(model, t, target).pmf()
        out.append(_close(f"{name}_pmf_normalized", pmf.masses.sum() + pmf.truncation_error, 1.0, 1e-9))
        _, p, _ = chisquare_gof(obs.get(name), pmf.masses)
        out.append(CheckResult(f"{name}_pmf_vs_oracle", p, P_MIN, P_MIN, bool(p > P_MIN), "p"))
    eq, vq, ed, vd = an.moments(model, t)
    out.append(_mc("mean_Q_vs_oracle", mc("mean", ("Q",)), eq))
    out.append(_mc("var_Q_vs_oracle", mc("variance", ("Q",)), vq))
    out.append(_mc("mean_D_vs_oracle", mc("mean", ("D",)), ed))
    cqd = an.cov_qd(model, t)
    out.append(_mc("cov_qd_vs_oracle", mc("covariance", ("Q", "D")), cqd))
    if model.batch.fixed_size() == 1:
        out.append(CheckResult("cov_qd_zero", cqd, 0.0, 0.0, cqd == 0.0, "abs"))
    pmf_q = an.queue_pmf(model, t)
    for a in (0.1, 1.0, 5.0):
        lst = an.joint_lst_qd(model, an.TransformQuery((t,), (a,), (0.0,)))
        out.append(_close(f"lst_duality[alpha={a}]", lst, pmf_q.lst(a), 1e-8 + pmf_q.truncation_error))
    for args in ((1.0, 0.0, 0.0), (0.5, 0.5, 0.5)):
        val = an.joint_lst_wqd(model, t, *args)
        out.append(_mc(f"lst_wqd_vs_oracle[{_tag(args)}]", mc("lst", ("W", "Q", "D"), args=args), val))
    for x in (0.0, 1.0):
        try:
            val = an.last_departure_cdf(model, t, x)
        except UnsupportedAnalyticError:
            continue
        out.append(_mc(f"last_departure_vs_oracle[x={x}]", mc("cdf", ("last",), x=x), val))
    return out
