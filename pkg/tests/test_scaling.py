import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate as spi

from batchq.analytics import TransformQuery
from batchq.curves import Curve
from batchq.des import simulate_observables
from batchq.errors import DomainError, UnsupportedAnalyticError
from batchq.model import MarkLaw
from batchq.scaling import (
    convergence_report, finite_lst, limit_fidi_lst, limit_wqd_lst, scaled_batch, scaled_model,
)

from conftest import LN2, marked

UNIFORM = MarkLaw("uniform", (0.0, 1.0))
POINT = MarkLaw("point", (1.0,))


def _pmf(batch):
    probs = batch.pmf_matrix([0.0], batch.support_max())[:, 0]
    return {k + 1: p for k, p in enumerate(probs.tolist()) if p > 0}


@pytest.mark.parametrize("n", [1, 3, 17])
def test_point_mark_gives_fixed_batch(n):
    assert _pmf(scaled_batch(POINT, n)) == {n: 1.0}


def test_uniform_mark_examples():
    assert_allclose(list(_pmf(scaled_batch(UNIFORM, 2)).values()), [0.5, 0.5], rtol=1e-14)
    assert _pmf(scaled_batch(UNIFORM, 1)) == {1: 1.0}


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 300), st.sampled_from([UNIFORM, MarkLaw("exponential", (2.0,)),
                                             MarkLaw("quantile", ((0.0, 0.3, 1.0), (0.0, 0.2, 3.0)))]))
def test_scaled_pmf_normalized(n, mark):
    p = _pmf(scaled_batch(mark, n))
    assert abs(sum(p.values()) - 1) < 1e-10
    assert min(p) >= 1


def test_scaled_pmf_matches_cdf_increments():
    mark = MarkLaw("exponential", (1.5,))
    p = _pmf(scaled_batch(mark, 10))
    for b in (1, 5, 20):
        assert_allclose(p[b], mark.cdf(b / 10) - mark.cdf((b - 1) / 10), rtol=1e-12)


def test_scaling_needs_mark(single):
    with pytest.raises(UnsupportedAnalyticError):
        scaled_model(single, 4)


def test_limits_at_zero_arguments(uniform_mark):
    assert limit_fidi_lst(uniform_mark, TransformQuery((0.5, 1.0), (0.0, 0.0), (0.0, 0.0))) == 1.0
    assert limit_wqd_lst(uniform_mark, 1.0, 0.0, 0.0, 0.0) == 1.0


def test_limit_decreasing_in_departure_argument(uniform_mark):
    vals = [limit_fidi_lst(uniform_mark, TransformQuery((1.0,), (0.0,), (b,))) for b in (0.1, 0.5, 1, 4)]
    assert np.all(np.diff(vals) < 0)


def test_limit_fidi_single_jump_quadrature():
    model = marked(POINT)
    ref = math.exp(-spi.quad(lambda s: 1 - math.exp(-math.exp(-(LN2 - s))), 0, LN2, epsabs=1e-14)[0])
    assert_allclose(limit_fidi_lst(model, TransformQuery((LN2,), (1.0,))), ref, rtol=1e-11)


@pytest.mark.parametrize("mu,alpha,t", [(1.0, 1.0, LN2), (2.5, 0.7, 1.3), (0.4, 3.0, 2.0)])
def test_workload_and_queue_limits_coincide(mu, alpha, t):
    model = marked(UNIFORM, mu=mu)
    w = limit_wqd_lst(model, t, mu * alpha, 0.0, 0.0)
    q = limit_fidi_lst(model, TransformQuery((t,), (alpha,)))
    assert abs(w - q) < 1e-10


def test_limit_wqd_against_rescaled_simulation():
    model = marked(POINT)
    ref = limit_wqd_lst(model, LN2, 1.0)
    quad = math.exp(-spi.quad(lambda s: 1 - math.exp(-math.exp(-(LN2 - s))), 0, LN2, epsabs=1e-14)[0])
    assert_allclose(ref, quad, rtol=1e-11)
    obs = simulate_observables(scaled_model(model, 512), [LN2], 20_000, seed=3)
    x = np.exp(-obs.W[:, 0] / 512)
    assert abs(x.mean() - ref) < 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_limit_wqd_domain(uniform_mark):
    with pytest.raises(DomainError):
        limit_wqd_lst(uniform_mark, 1.0, -1.0)
    with pytest.raises(DomainError):
        limit_wqd_lst(uniform_mark, -1.0, 1.0)


def test_report_zero_arguments(uniform_mark):
    rpt = convergence_report(uniform_mark, [1, 4, 16], TransformQuery((1.0,), (0.0,), (0.0,)))
    assert rpt.errors == (0.0, 0.0, 0.0)


def test_report_point_mark_decays():
    ns = [2 ** k for k in range(11)]
    rpt = convergence_report(marked(POINT), ns, TransformQuery((LN2,), (1.0,), (0.5,)))
    assert rpt.decreasing
    assert rpt.errors[-1] < 1e-2
    assert all(0 < v <= 1 for v in rpt.values)


def test_report_workload_query(uniform_mark):
    q = TransformQuery((1.0,), (0.5,), (0.0,), workload=1.0, gamma=0.25)
    rpt = convergence_report(uniform_mark, [1, 1024], q)
    assert rpt.kind == "wqd"
    assert rpt.errors[-1] < min(1e-2, rpt.errors[0])


def test_report_thread_independent():
    model = marked(UNIFORM).replace(rate=Curve.sinusoidal(1.0, 0.5, 2.0))
    q = TransformQuery((0.5, 1.5), (1.0, 0.5), (0.2, 0.0))
    a = convergence_report(model, [1, 8, 64], q, threads=1)
    b = convergence_report(model, [1, 8, 64], q, threads=4)
    assert a == b


def test_report_csv(uniform_mark):
    rpt = convergence_report(uniform_mark, [1, 2], TransformQuery((1.0,), (1.0,)))
    buf = io.StringIO()
    rpt.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,value,limit,abs_error"
    assert lines[-1].startswith("inf,") and lines[-1].endswith(",0.0")
    assert len(lines) == 4


def test_report_requires_increasing_n(uniform_mark):
    with pytest.raises(DomainError):
        convergence_report(uniform_mark, [4, 2], TransformQuery((1.0,), (1.0,)))


def test_finite_value_in_unit_interval(uniform_mark):
    v = finite_lst(uniform_mark, 7, TransformQuery((0.5, 1.0), (1.0, 2.0), (0.5, 0.5)))
    assert 0 < v <= 1
