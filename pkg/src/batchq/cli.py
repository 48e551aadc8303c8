"""Command-line front end: ``batchq --model m.json --command pmf --t 0.7``."""

from __future__ import annotations

import argparse
import io
import sys

from . import analytics as an
from . import config
from .checks import run_checks
from .des import monte_carlo, simulate, simulate_observables
from .errors import BatchQError, ConvergenceError, DomainError, ModelError, ResourceError, UnsupportedAnalyticError
from .quadrature import DEFAULT_EPS, DEFAULT_TOL
from .records import Record, canonical_params, write_records
from .rng import RngStream
from .sampler import sample_fidi, sample_marginal, write_draws
from .scaling import convergence_report
from .stats import Estimate, covariance_estimate, mean_estimate

COMMANDS = ("pmf", "moments", "cov", "autocov", "lst", "last-departure", "sample", "simulate", "scaling", "check")

EXIT_USAGE = 2
EXIT_UNSUPPORTED = 3
EXIT_CHECK_FAILED = 4


def _ns(text):
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser():
    p = argparse.ArgumentParser(prog="batchq", description="Batch-arrival infinite-server queue analytics.")
    p.add_argument("--model", required=True, help="model config (JSON)")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--t", type=float, action="append", default=[], help="time point (repeatable)")
    p.add_argument("--alpha", type=float, action="append", default=[], help="queue / workload argument (repeatable)")
    p.add_argument("--beta", type=float, action="append", default=[], help="departure / queue argument (repeatable)")
    p.add_argument("--gamma", type=float, default=None, help="departure argument of (W,Q,D) transforms")
    p.add_argument("--x", type=float, action="append", default=[], help="last-departure offset (repeatable)")
    p.add_argument("--target", choices=an.TARGETS, default="queue")
    p.add_argument("--kind", choices=("qd", "wqd"), default="qd", help="transform kind for lst/scaling")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=_ns, action="extend", default=[], help="scaling indices, e.g. 1,4,16")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--draws", default=None, help="sample: also write per-draw CSV here")
    p.add_argument("--dump", default=None, help="simulate: write one path's event trajectory CSV here")
    p.add_argument("--report", default=None, help="scaling: write the n/value/limit/abs_error CSV here")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: BATCHQ_THREADS or 1)")
    return p


class _Ctx:
    def __init__(self, args, model):
        self.args = args
        self.model = model
        self.hash = config.model_hash(model)
        self.rows = []

    def add(self, op, params, key, value, error, error_type, status="ok"):
        self.rows.append(Record(op, self.hash, self.args.seed, canonical_params(params), key,
                                float(value), float(error), error_type, status))

    def add_value(self, op, params, key, value):
        """Analytic value or Monte Carlo Estimate."""
        if isinstance(value, Estimate):
            self.add(op, params, key, value.value, value.se, "se")
        else:
            self.add(op, params, key, value, DEFAULT_TOL * max(1.0, abs(value)), "quad")


def _times(args, need=1, exact=None):
    ts = args.t
    if len(ts) < need or (exact is not None and len(ts) != exact):
        want = exact if exact is not None else f"at least {need}"
        raise DomainError(f"--t: expected {want} time point(s), got {len(ts)}")
    return ts


def cmd_pmf(ctx):
    a = ctx.args
    for t in _times(a):
        pmf = an.decompose(ctx.model, t, a.target, a.eps).pmf(a.eps)
        params = {"t": t, "target": a.target, "eps": a.eps}
        for k, m in zip(pmf.support, pmf.masses):
            ctx.add("pmf", params, f"k={k}", m, pmf.truncation_error, "bound")


def cmd_moments(ctx):
    a = ctx.args
    for t in _times(a):
        d_q = an.decompose(ctx.model, t, "queue", a.eps)
        d_d = an.decompose(ctx.model, t, "departure", a.eps)
        params = {"t": t, "eps": a.eps}
        for key, v, tail in (("E[Q]", d_q.mean(), d_q.tail_bound), ("Var[Q]", d_q.variance(), d_q.tail_bound),
                             ("E[D]", d_d.mean(), d_d.tail_bound), ("Var[D]", d_d.variance(), d_d.tail_bound)):
            ctx.add("moments", params, key, v, DEFAULT_TOL * max(1.0, abs(v)) + tail, "quad")


def cmd_cov(ctx):
    for t in _times(ctx.args):
        ctx.add_value("cov", {"t": t, "eps": ctx.args.eps}, "cov_qd", an.cov_qd(ctx.model, t, ctx.args.eps))


def cmd_autocov(ctx):
    a = ctx.args
    t1, t2 = _times(a, exact=2)
    params = {"t1": t1, "t2": t2, "target": a.target, "eps": a.eps}
    ctx.add_value("autocov", params, "general", an.autocov(ctx.model, a.target, t1, t2, a.eps))
    if a.target == "queue":
        for key, fn in (("exponential", an.autocov_exponential), ("deterministic", an.autocov_deterministic)):
            try:
                ctx.add_value("autocov", params, key, fn(ctx.model, t1, t2 - t1))
            except UnsupportedAnalyticError:
                pass


def _vec(values, m, name):
    if not values:
        return (0.0,) * m
    if len(values) != m:
        raise DomainError(f"--{name}: expected {m} value(s), got {len(values)}")
    return tuple(values)


def cmd_lst(ctx):
    a = ctx.args
    rng = RngStream(a.seed, 1)
    if a.kind == "qd":
        ts = _times(a)
        alpha, beta = _vec(a.alpha, len(ts), "alpha"), _vec(a.beta, len(ts), "beta")
        q = an.TransformQuery(tuple(ts), alpha, beta)
        val = an.joint_lst_qd(ctx.model, q, reps=a.reps, rng=rng)
        params = {"t": ts, "alpha": list(alpha), "beta": list(beta), "kind": "qd"}
    else:
        (t,) = _times(a, exact=1)
        alpha, beta = _vec(a.alpha, 1, "alpha")[0], _vec(a.beta, 1, "beta")[0]
        gamma = a.gamma or 0.0
        val = an.joint_lst_wqd(ctx.model, t, alpha, beta, gamma, reps=a.reps, rng=rng)
        params = {"t": t, "alpha": alpha, "beta": beta, "gamma": gamma, "kind": "wqd"}
    if isinstance(val, Estimate):
        params["reps"] = a.reps
    ctx.add_value("lst", params, "lst", val)


def cmd_last_departure(ctx):
    a = ctx.args
    (t,) = _times(a, exact=1)
    for x in a.x or [0.0]:
        ctx.add_value("last-departure", {"t": t}, f"x={x!r}", an.last_departure_cdf(ctx.model, t, x))


def cmd_sample(ctx):
    a = ctx.args
    ts = _times(a)
    rng = RngStream(a.seed, 2).generator()
    if len(ts) == 1:
        q, d = sample_marginal(ctx.model, ts[0], rng, size=a.reps, eps=a.eps)
        Q, D = q[:, None], d[:, None]
    else:
        Q, D = sample_fidi(ctx.model, ts, rng, size=a.reps, eps=a.eps)
    params = {"t": ts, "reps": a.reps, "eps": a.eps}
    for i, t in enumerate(ts):
        for name, col in (("Q", Q[:, i]), ("D", D[:, i])):
            est = mean_estimate(col)
            ctx.add("sample", params, f"mean {name}({t!r})", est.value, est.se, "se")
        est = covariance_estimate(Q[:, i], D[:, i])
        ctx.add("sample", params, f"cov Q,D({t!r})", est.value, est.se, "se")
    if a.draws:
        cols = {}
        for i, t in enumerate(ts):
            cols[f"Q({t!r})"] = Q[:, i]
            cols[f"D({t!r})"] = D[:, i]
        with open(a.draws, "w", encoding="utf-8") as fh:
            write_draws(fh, cols)


def cmd_simulate(ctx):
    a = ctx.args
    ts = _times(a)
    obs = simulate_observables(ctx.model, ts, a.reps, a.seed, stream=3, threads=a.threads)
    params = {"t": ts, "reps": a.reps}

    def est(kind, names, **kw):
        return monte_carlo(ctx.model, kind, ts, a.reps, data=obs, observables=names, **kw)

    for i, t in enumerate(ts):
        for name in ("Q", "D", "W"):
            e = est("mean", (f"{name}[{i}]",))
            ctx.add("simulate", params, f"mean {name}({t!r})", e.value, e.se, "se")
        e = est("variance", (f"Q[{i}]",))
        ctx.add("simulate", params, f"var Q({t!r})", e.value, e.se, "se")
        e = est("covariance", (f"Q[{i}]", f"D[{i}]"))
        ctx.add("simulate", params, f"cov Q,D({t!r})", e.value, e.se, "se")
        for x in a.x:
            e = est("cdf", (f"last[{i}]",), x=x)
            ctx.add("simulate", params, f"P(T({t!r})<={x!r})", e.value, e.se, "se")
    if a.alpha or a.beta or a.gamma is not None:
        if len(ts) == 1 and (a.kind == "wqd" or a.gamma is not None):
            args = (_vec(a.alpha, 1, "alpha")[0], _vec(a.beta, 1, "beta")[0], a.gamma or 0.0)
            e = est("lst", ("W", "Q", "D"), args=args)
        else:
            m = len(ts)
            args = _vec(a.alpha, m, "alpha") + _vec(a.beta, m, "beta")
            e = est("lst", tuple(f"Q[{i}]" for i in range(m)) + tuple(f"D[{i}]" for i in range(m)), args=args)
        ctx.add("simulate", dict(params, args=list(args)), "lst", e.value, e.se, "se")
    if a.dump:
        path = simulate(ctx.model, ts, RngStream(a.seed, 4).generator())
        with open(a.dump, "w", encoding="utf-8") as fh:
            path.write_events(fh)


def cmd_scaling(ctx):
    a = ctx.args
    if not a.n:
        raise DomainError("--n: give at least one scaling index")
    if a.kind == "qd":
        ts = _times(a)
        q = an.TransformQuery(tuple(ts), _vec(a.alpha, len(ts), "alpha"), _vec(a.beta, len(ts), "beta"))
        params = {"t": ts, "alpha": list(q.alpha), "beta": list(q.beta), "kind": "qd"}
    else:
        (t,) = _times(a, exact=1)
        w = _vec(a.alpha, 1, "alpha")[0]
        b = _vec(a.beta, 1, "beta")[0]
        q = an.TransformQuery((t,), (b,), (0.0,), workload=w, gamma=a.gamma or 0.0)
        params = {"t": t, "alpha": w, "beta": b, "gamma": a.gamma or 0.0, "kind": "wqd"}
    rpt = convergence_report(ctx.model, a.n, q, threads=a.threads)
    for n, v, lim, err in rpt.rows():
        ctx.add("scaling", params, f"n={n}", v, DEFAULT_TOL, "quad")
        ctx.add("scaling", params, f"abs_error[n={n}]", err, 2 * DEFAULT_TOL, "quad")
    if a.report:
        with open(a.report, "w", encoding="utf-8") as fh:
            rpt.write_csv(fh)


def cmd_check(ctx):
    a = ctx.args
    (t,) = _times(a, exact=1)
    results = run_checks(ctx.model, t, a.reps, a.seed, threads=a.threads)
    params = {"t": t, "reps": a.reps}
    for r in results:
        ctx.add("check", dict(params, reference=r.reference), r.name, r.value, r.tolerance,
                "p" if r.kind == "p" else "tol", "pass" if r.passed else "fail")


HANDLERS = {
    "pmf": cmd_pmf, "moments": cmd_moments, "cov": cmd_cov, "autocov": cmd_autocov, "lst": cmd_lst,
    "last-departure": cmd_last_departure, "sample": cmd_sample, "simulate": cmd_simulate,
    "scaling": cmd_scaling, "check": cmd_check,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        model = config.load(args.model)
    except FileNotFoundError:
        print(f"error: model file not found: {args.model}", file=stderr)
        return EXIT_USAGE
    except ModelError as exc:
        where = f"field '{exc.field}': " if exc.field else ""
        print(f"error: invalid model config: {where}{exc.reason}", file=stderr)
        return EXIT_USAGE
    ctx = _Ctx(args, model)
    try:
        HANDLERS[args.command](ctx)
    except UnsupportedAnalyticError as exc:
        print(f"error: {exc}\nhint: this model/command pair has no analytic route; "
              f"try --command simulate", file=stderr)
        return EXIT_UNSUPPORTED
    except (DomainError, ResourceError, ConvergenceError, BatchQError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    buf = io.StringIO()
    write_records(buf, ctx.rows, args.format)
    if args.out == "-":
        stdout.write(buf.getvalue())
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    if args.command == "check" and any(r.status == "fail" for r in ctx.rows):
        return EXIT_CHECK_FAILED
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
