import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate as spi
from scipy import stats

from batchq import analytics as an
from batchq.curves import Curve
from batchq.errors import DomainError, ResourceError, UnsupportedAnalyticError
from batchq.model import BatchLaw, ServiceFamily

from conftest import LN2, load_model, mm1


def _quad(f, t, points=()):
    return spi.quad(f, 0.0, t, points=[p for p in points if 0 < p < t] or None, limit=400,
                    epsabs=1e-13, epsrel=1e-12)[0]


def _batch_moments(model, s, nmax=200):
    pm = model.batch.pmf_matrix(np.array([s]), nmax)[:, 0]
    return np.arange(1, nmax + 1), pm


def test_decompose_single_arrivals():
    d = an.decompose(mm1(), LN2)
    assert len(d.terms) == 1
    term = d.terms[0]
    assert (term.n, term.j, term.scale) == (1, 1, 1)
    assert_allclose(term.mean, 0.5, rtol=1e-12)


def test_decompose_pairs():
    d = an.decompose(mm1(BatchLaw.deterministic(2)), LN2)
    got = {(t.j, t.scale): t.mean for t in d.terms}
    assert set(got) == {(1, 2), (2, 1)}
    assert_allclose(got[(1, 2)], 0.375, rtol=1e-12)
    assert_allclose(got[(2, 1)], 2 * (1 - 0.5) - (1 - 0.25), rtol=1e-12)
    dep = an.decompose(mm1(BatchLaw.deterministic(2)), LN2, "departure")
    assert {(t.j, t.scale) for t in dep.terms} == {(2, 1), (3, 2)}


def test_decompose_small_t():
    d = an.decompose(mm1(BatchLaw.geometric(0.5)), 1e-9)
    assert max(t.mean for t in d.terms) < 1e-8
    assert an.decompose(mm1(), 0.0).terms == ()


def test_queue_pmf_single_is_poisson():
    p = an.queue_pmf(mm1(), LN2)
    assert_allclose(p.pmf(0), math.exp(-0.5), rtol=1e-13)
    assert_allclose(p.masses, stats.poisson.pmf(p.support, 0.5), atol=1e-15)


def test_queue_pmf_at_zero():
    p = an.queue_pmf(load_model("geometric"), 0.0)
    assert list(p.masses) == [1.0]


def test_queue_pmf_pairs_enumeration():
    # Q = 2 Y1 + Y2 with Y1 ~ Poisson(0.375), Y2 ~ Poisson(0.25)
    p = an.queue_pmf(mm1(BatchLaw.deterministic(2)), LN2)
    ref = np.zeros(12)
    for y1, y2 in itertools.product(range(30), range(30)):
        k = 2 * y1 + y2
        if k < ref.size:
            ref[k] += stats.poisson.pmf(y1, 0.375) * stats.poisson.pmf(y2, 0.25)
    assert_allclose(p.masses[:12], ref, atol=1e-14)
    assert_allclose(p.pmf(1), math.exp(-0.375) * 0.25 * math.exp(-0.25), rtol=1e-12)
    assert p.pmf(1) == pytest.approx(0.1339, abs=1e-4)  # printed to four digits


def test_pmf_invariants(canonical):
    _, model = canonical
    for t in (0.5, 2.0):
        for target in an.TARGETS:
            p = an.decompose(model, t, target).pmf()
            assert np.all(p.masses >= 0)
            assert abs(p.masses.sum() + p.truncation_error - 1) < 1e-9
            assert p.truncation_error <= 1e-11


def test_moments_pairs():
    eq, vq, ed, vd = an.moments(mm1(BatchLaw.deterministic(2)), LN2)
    assert_allclose([eq, vq], [1.0, 1.75], rtol=1e-12)
    assert_allclose(eq + ed, 2 * LN2, rtol=1e-12)
    assert an.moments(mm1(), 0.0) == (0.0, 0.0, 0.0, 0.0)


def test_single_arrivals_poisson_variance():
    eq, vq, _, _ = an.moments(load_model("single"), 1.3)
    assert_allclose(vq, eq, rtol=1e-14)


@pytest.mark.parametrize("t", [0.5, LN2, 2.0])
def test_moments_and_cov_against_binomial_thinning(canonical, t):
    """Present customers of a batch are Binomial(B, Fbar): integrate its moments directly."""
    _, model = canonical
    sizes, _ = _batch_moments(model, 0.0)

    def moments_at(s):
        pm = model.batch.pmf_matrix(np.array([s]), 200)[:, 0]
        fbar = float(model.service.tail(s, t - s))
        eb, eb2 = pm @ sizes, pm @ sizes ** 2
        ek2 = eb * fbar * (1 - fbar) + eb2 * fbar ** 2
        ed2 = eb * fbar * (1 - fbar) + eb2 * (1 - fbar) ** 2
        cross = (eb2 - eb) * fbar * (1 - fbar)
        lam = float(model.rate(s))
        return np.array([eb * fbar, ek2, eb * (1 - fbar), ed2, cross]) * lam

    pts = [t - 1.0, t - 0.5, t - 1.5, 0.6, 1.0]
    ref = np.array([_quad(lambda s, i=i: moments_at(s)[i], t, pts) for i in range(5)])
    eq, vq, ed, vd = an.moments(model, t)
    assert_allclose([eq, vq, ed, vd, an.cov_qd(model, t)], ref, rtol=1e-8, atol=1e-11)


def test_cov_qd_examples():
    assert an.cov_qd(mm1(), 1.7) == 0.0
    assert_allclose(an.cov_qd(mm1(BatchLaw.deterministic(2)), LN2), 0.25, rtol=1e-12)
    assert an.cov_qd(mm1(BatchLaw.deterministic(2)), 0.0) == 0.0


@pytest.mark.parametrize("batch", [BatchLaw.deterministic(2), BatchLaw.geometric(0.5),
                                   BatchLaw.table({1: 0.9, 3: 0.1}), BatchLaw.zeta(2.5, 30)])
def test_cov_qd_positive_for_real_batches(batch):
    for svc in (ServiceFamily.exponential(1.0), ServiceFamily.uniform(0.2, 2.0)):
        assert an.cov_qd(mm1(batch).replace(service=svc), 1.0) > 0


def test_autocov_pairs_example():
    model = mm1(BatchLaw.deterministic(2))
    assert_allclose(an.autocov(model, "queue", LN2, 2 * LN2), 0.875, rtol=1e-10)
    assert_allclose(an.autocov_exponential(model, LN2, LN2), 0.875, rtol=1e-12)


@pytest.mark.parametrize("batch", [BatchLaw.deterministic(1), BatchLaw.geometric(0.5),
                                   BatchLaw.table({1: 0.5, 2: 0.3, 4: 0.2})])
@pytest.mark.parametrize("delta", [0.0, 0.5, 2.0])
def test_autocov_general_matches_exponential_closed_form(batch, delta):
    model = mm1(batch, mu=1.4).replace(rate=Curve.sinusoidal(1.5, 1.0, 2.0))
    t = 1.1
    assert abs(an.autocov(model, "queue", t, t + delta) - an.autocov_exponential(model, t, delta)) < 1e-8


def test_autocov_tends_to_variance():
    model = load_model("table_sine")
    var = an.moments(model, 1.2)[1]
    assert_allclose(an.autocov(model, "queue", 1.2, 1.2 + 1e-9), var, rtol=1e-7)
    assert an.autocov(model, "queue", 1.2, 1.2) == an.decompose(model, 1.2).variance()


def test_autocov_departure_against_binomial_thinning():
    # compound Poisson: Cov = int E[D1 D2] lambda ds with E[D1 D2] = n F1 + n(n-1) F1 F2 per batch
    model = mm1(BatchLaw.deterministic(3), mu=0.7)
    t1, t2 = 0.8, 1.9
    f = lambda s: (3 * (1 - np.exp(-0.7 * (t1 - s))) * np.exp(-0.7 * (t2 - s))  # noqa: E731
                   + 9 * (1 - np.exp(-0.7 * (t1 - s))) * (1 - np.exp(-0.7 * (t2 - s))))
    assert_allclose(an.autocov(model, "departure", t1, t2), _quad(f, t1), rtol=1e-9)


def test_autocov_domain():
    with pytest.raises(DomainError):
        an.autocov(mm1(), "queue", 2.0, 1.0)
    with pytest.raises(DomainError):
        an.autocov(mm1(), "work", 1.0, 2.0)


def test_autocov_deterministic_examples():
    model = mm1(BatchLaw.deterministic(2)).replace(service=ServiceFamily.deterministic(1.0))
    assert_allclose(an.autocov_deterministic(model, 2.0, 0.0), 4.0, rtol=1e-14)
    assert_allclose(an.autocov_deterministic(model, 2.0, 0.0), an.moments(model, 2.0)[1], rtol=1e-10)
    assert_allclose(an.autocov_deterministic(model, 2.0, 0.5), 2.0, rtol=1e-14)
    assert an.autocov_deterministic(model, 2.0, 1.0) == 0.0
    assert an.autocov_deterministic(model, 2.0, 1.5) == 0.0


@pytest.mark.parametrize("t,delta", [(2.0, 0.5), (0.7, 0.2), (3.0, 0.9)])
def test_autocov_deterministic_matches_general(t, delta):
    model = mm1(BatchLaw.deterministic(2)).replace(service=ServiceFamily.deterministic(1.0),
                                                   rate=Curve.piecewise_linear([0.0, 4.0], [0.5, 2.0]))
    assert_allclose(an.autocov(model, "queue", t, t + delta), an.autocov_deterministic(model, t, delta),
                    rtol=1e-9, atol=1e-12)


def test_closed_forms_reject_other_models():
    with pytest.raises(UnsupportedAnalyticError):
        an.autocov_exponential(mm1().replace(service=ServiceFamily.deterministic(1.0)), 1.0, 0.5)
    with pytest.raises(UnsupportedAnalyticError):
        an.autocov_deterministic(mm1(), 1.0, 0.5)
    with pytest.raises(UnsupportedAnalyticError):
        an.autocov_deterministic(mm1(BatchLaw.geometric(0.5)).replace(service=ServiceFamily.deterministic(1.0)),
                                 1.0, 0.5)


def _query(times, alpha, beta=None):
    return an.TransformQuery(tuple(times), tuple(alpha), tuple(beta) if beta else ())


def test_lst_at_zero_is_one(canonical):
    _, model = canonical
    assert an.joint_lst_qd(model, _query([0.5, 1.0], [0, 0], [0, 0])) == 1.0
    assert an.joint_lst_wqd(model, 1.0, 0.0, 0.0, 0.0) == 1.0


def test_lst_single_arrivals_is_poisson_transform():
    model = mm1().replace(rate=Curve.sinusoidal(1.0, 0.5, 3.0))
    t, a = 1.3, 0.8
    nu = _quad(lambda s: math.exp(-(t - s)) * float(model.rate(s)), t)
    assert_allclose(an.joint_lst_qd(model, _query([t], [a])), math.exp(-(1 - math.exp(-a)) * nu), rtol=1e-10)


def test_lst_pairs_formula():
    model = mm1(BatchLaw.deterministic(2))
    f = lambda s: 1 - (1 - (1 - math.exp(-1)) * math.exp(-(LN2 - s))) ** 2  # noqa: E731
    ref = math.exp(-_quad(f, LN2))
    assert_allclose(an.joint_lst_qd(model, _query([LN2], [1.0])), ref, rtol=1e-11)
    assert_allclose(ref, an.queue_pmf(model, LN2).lst(1.0), atol=1e-8)


@pytest.mark.parametrize("alpha", [0.1, 1.0, 5.0])
def test_lst_pmf_duality(canonical, alpha):
    _, model = canonical
    for t in (0.5, 2.0):
        p = an.queue_pmf(model, t)
        assert abs(an.joint_lst_qd(model, _query([t], [alpha])) - p.lst(alpha)) < p.truncation_error + 1e-9
        d = an.departure_pmf(model, t)
        assert abs(an.joint_lst_qd(model, _query([t], [0.0], [alpha])) - d.lst(alpha)) < d.truncation_error + 1e-9


@pytest.mark.parametrize("name", ["single", "pairs", "table_sine", "time_varying"])
def test_lst_chain_product_matches_gamma(name):
    model = load_model(name)
    for q in (_query([0.4, 1.1], [0.3, 1.0], [0.5, 0.2]), _query([0.3, 0.9, 2.0], [0.2, 0.0, 0.7], [0.1, 0.6, 0.3])):
        assert_allclose(an.joint_lst_qd(model, q, method="chains"), an.joint_lst_qd(model, q, method="gamma"),
                        rtol=1e-10)


def test_lst_chain_product_cap():
    with pytest.raises(ResourceError):
        an.joint_lst_qd(mm1(), _query([0.1, 0.2, 0.3, 0.4, 0.5], [1] * 5), method="chains")


def test_lst_monte_carlo_route_matches(pairs):
    q = _query([0.5, 1.5], [0.4, 0.3], [0.2, 0.1])
    est = an.joint_lst_qd(pairs, q, method="mc", reps=50_000, rng=3)
    assert est.within(an.joint_lst_qd(pairs, q))


def test_lst_dependent_model_uses_monte_carlo():
    # identical services in a pair: Q(t) = 2 * Poisson(nu)
    dep = mm1(BatchLaw.deterministic(2)).replace(within_batch="identical")
    est = an.joint_lst_qd(dep, _query([1.0], [0.5]), reps=50_000, rng=4)
    nu = 1 - math.exp(-1)
    assert est.within(math.exp(-nu * (1 - math.exp(-1.0))))
    with pytest.raises(UnsupportedAnalyticError):
        an.joint_lst_qd(dep, _query([1.0], [0.5]), method="gamma")


def test_query_validation():
    with pytest.raises(DomainError):
        _query([1.0, 0.5], [1, 1])
    with pytest.raises(DomainError):
        _query([1.0], [-1.0])
    with pytest.raises(DomainError):
        _query([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        an.TransformQuery((1.0, 2.0), (1.0, 1.0), workload=1.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=4, max_size=4), st.integers(0, 3), st.floats(0.01, 2.0))
def test_lst_monotone_in_each_argument(args, which, bump):
    model = load_model("table_sine")
    q = _query([0.6, 1.4], args[:2], args[2:])
    bumped = list(args)
    bumped[which] += bump
    q2 = _query([0.6, 1.4], bumped[:2], bumped[2:])
    assert an.joint_lst_qd(model, q2) <= an.joint_lst_qd(model, q) + 1e-14


@pytest.mark.parametrize("svc", [ServiceFamily.exponential(1.0), ServiceFamily.uniform(0.3, 1.4),
                                 ServiceFamily.deterministic(0.8)], ids=lambda s: s.kind)
@pytest.mark.parametrize("alpha", [0.3, 1.0, 4.0])
def test_workload_two_routes_agree(svc, alpha):
    model = mm1().replace(service=svc, rate=Curve.sinusoidal(1.0, 0.4, 2.0))
    for t in (LN2, 1.5):
        a = an.workload_lst(model, t, alpha, method="residual")
        b = an.workload_lst(model, t, alpha, method="joint")
        assert abs(a - b) < 1e-10


def test_workload_exponential_memoryless_form():
    # single arrivals, exponential: W(t) is a Poisson(nu) sum of Exp(mu) residuals
    mu, t, alpha = 1.7, 1.2, 0.9
    model = mm1(mu=mu)
    nu = (1 - math.exp(-mu * t)) / mu
    assert_allclose(an.workload_lst(model, t, alpha), math.exp(-nu * alpha / (mu + alpha)), rtol=1e-11)


@pytest.mark.parametrize("name", ["pairs", "geometric", "table_sine", "time_varying"])
def test_wqd_without_workload_is_qd(name):
    model = load_model(name)
    for b, g in ((0.4, 0.0), (0.0, 0.7), (1.1, 0.3)):
        assert_allclose(an.joint_lst_wqd(model, 1.3, 0.0, b, g), an.joint_lst_qd(model, _query([1.3], [b], [g])),
                        rtol=1e-11)


def test_wqd_against_campbell_quadrature():
    # pairs, exponential: per customer present at t the residual is Exp(1)
    model = mm1(BatchLaw.deterministic(2))
    t, a, b, g = 1.0, 0.7, 0.2, 0.3
    phi = 1 / (1 + a)

    def f(s):
        fbar = math.exp(-(t - s))
        return 1 - ((1 - fbar) * math.exp(-g) + fbar * phi * math.exp(-b)) ** 2

    assert_allclose(an.joint_lst_wqd(model, t, a, b, g), math.exp(-_quad(f, t)), rtol=1e-11)


def test_wqd_monte_carlo_route(pairs):
    est = an.joint_lst_wqd(pairs, 1.0, 0.7, 0.2, 0.3, method="mc", reps=50_000, rng=9)
    assert est.within(an.joint_lst_wqd(pairs, 1.0, 0.7, 0.2, 0.3))


def test_wqd_monotone():
    model = load_model("time_varying")
    base = an.joint_lst_wqd(model, 1.5, 0.5, 0.5, 0.5)
    for bumped in ((0.9, 0.5, 0.5), (0.5, 0.9, 0.5), (0.5, 0.5, 0.9)):
        assert an.joint_lst_wqd(model, 1.5, *bumped) <= base


def test_last_departure_examples():
    model = mm1()
    assert_allclose(an.last_departure_cdf(model, LN2, 0.0), math.exp(-0.5), rtol=1e-12)
    assert_allclose(an.last_departure_cdf(model, LN2, LN2), math.exp(-0.25), rtol=1e-12)
    assert an.last_departure_cdf(model, LN2, math.inf) == 1.0
    with pytest.raises(DomainError):
        an.last_departure_cdf(model, LN2, -0.1)


def test_last_departure_batches_and_monotone(canonical):
    _, model = canonical
    x = np.linspace(0.0, 6.0, 25)
    vals = [an.last_departure_cdf(model, 1.5, xi) for xi in x]
    assert np.all(np.diff(vals) >= -1e-15)
    assert 0 < vals[0] and vals[-1] <= 1.0


def test_last_departure_pairs_formula():
    # both customers of a pair must be gone: 1 - (1 - e^{-(t+x-s)})^2
    t, x = 1.0, 0.4
    f = lambda s: 1 - (1 - math.exp(-(t + x - s))) ** 2  # noqa: E731
    assert_allclose(an.last_departure_cdf(mm1(BatchLaw.deterministic(2)), t, x), math.exp(-_quad(f, t)),
                    rtol=1e-11)
