import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate as spi

from batchq import config
from batchq.curves import Curve
from batchq.errors import DomainError, ModelError
from batchq.model import BatchLaw, MarkLaw, ModelSpec, ServiceFamily, mean_measure, validate

from conftest import mm1

SERVICES = [
    ServiceFamily.exponential(1.3),
    ServiceFamily.deterministic(0.8),
    ServiceFamily.uniform(0.2, 1.7),
    ServiceFamily.hyperexponential([0.3, 0.7], [0.5, 3.0]),
    ServiceFamily.empirical([0.1, 0.4, 0.4, 1.0, 2.5]),
    ServiceFamily.exponential(Curve.piecewise_linear([0.0, 5.0], [0.5, 2.0])),
]


def test_mean_measure_constant():
    model = mm1(lam=2.0)
    assert mean_measure(model, 3.0) == 6.0
    assert mean_measure(model, 0.0) == 0.0


def test_mean_measure_full_sine_period():
    model = mm1().replace(rate=Curve.sinusoidal(1.0, 1.0, 2 * math.pi, 0.0))
    assert_allclose(mean_measure(model, 1.0), 1.0, atol=1e-14)


def test_mean_measure_outside_horizon():
    with pytest.raises(DomainError):
        mean_measure(mm1(), 11.0)
    with pytest.raises(DomainError):
        mean_measure(mm1(), -0.1)


@pytest.mark.parametrize("rate", [
    Curve.piecewise_constant([0.0, 1.0, 2.5], [1.0, 3.0, 0.5]),
    Curve.piecewise_linear([0.0, 1.0, 4.0], [0.0, 2.0, 1.0]),
    Curve.sinusoidal(2.0, 1.5, 1.3, 0.4),
])
def test_mean_measure_matches_quadrature(rate):
    model = mm1().replace(rate=rate)
    for t in (0.3, 1.7, 6.0):
        ref, _ = spi.quad(lambda s: float(rate(s)), 0.0, t, points=[1.0, 2.5], epsabs=1e-13)
        assert_allclose(mean_measure(model, t), ref, rtol=1e-11)


@given(st.floats(0.0, 9.0), st.floats(0.0, 1.0))
def test_mean_measure_nondecreasing(t, dt):
    model = mm1().replace(rate=Curve.sinusoidal(1.0, 0.9, 3.0, 1.0))
    assert mean_measure(model, t + dt) >= mean_measure(model, t) - 1e-15


def test_validate_reports():
    assert validate(mm1()) == []
    bad = validate(mm1(BatchLaw.table({1: 0.6, 2: 0.5})))
    assert any("batch" in p and "sum" in p for p in bad)
    sine = validate(mm1().replace(rate=Curve.sinusoidal(1.0, 2.0, 1.0)))
    assert any(p.startswith("rate") for p in sine)


@pytest.mark.parametrize("svc", SERVICES, ids=lambda s: s.kind)
def test_tail_is_a_valid_survival_function(svc):
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 5, 200)
    x = np.sort(rng.uniform(-1, 6, 200))
    tails = np.array([svc.tail(si, x) for si in s[:20]])
    assert np.all((tails >= 0) & (tails <= 1))
    assert np.all(np.diff(tails, axis=1) <= 0)
    assert_allclose(svc.cdf(s, x), 1.0 - svc.tail(s, x), atol=0)
    assert np.all(svc.tail(s, -1e-9) == 1.0)


@pytest.mark.parametrize("svc", SERVICES, ids=lambda s: s.kind)
def test_service_mean_and_partial_expectation(svc):
    s = 1.0
    tail = lambda u: float(svc.tail(s, u))  # noqa: E731
    kinks = [0.8, 0.2, 1.7, 0.1, 0.4, 1.0, 2.5]
    ref, _ = spi.quad(tail, 0, 60, points=kinks, limit=200)
    assert_allclose(svc.mean(s), ref, rtol=1e-7)
    for u in (0.0, 0.3, 1.2):
        ref_u, _ = spi.quad(tail, u, 60, points=[k for k in kinks if k > u], limit=200)
        assert_allclose(svc.partial_expectation(s, u), ref_u, rtol=1e-7, atol=1e-12)


@pytest.mark.parametrize("svc", SERVICES, ids=lambda s: s.kind)
def test_one_minus_phi_against_sampling(svc):
    rng = np.random.default_rng(3)
    s, u, alpha = 1.0, 0.35, 0.9
    x = svc.sample(np.full(400_000, s), rng)
    x = x[x > u]
    emp = np.mean(1.0 - np.exp(-alpha * (x - u)))
    se = np.std(np.exp(-alpha * (x - u))) / math.sqrt(x.size)
    assert abs(svc.one_minus_phi(s, u, alpha) - emp) < 5 * se + 1e-12


@pytest.mark.parametrize("law", [
    BatchLaw.geometric(0.5), BatchLaw.geometric(0.1), BatchLaw.zeta(2.5, 500),
    BatchLaw.table({1: 0.2, 3: 0.5, 7: 0.3}),
])
def test_support_max_tail(law):
    for eps in (1e-6, 1e-12):
        n = law.support_max(eps)
        masses = law.pmf_matrix(np.array([0.0]), n)[:, 0]
        assert 1.0 - masses.sum() <= eps + 1e-15
        if n > 1:
            prev = law.pmf_matrix(np.array([0.0]), n - 1)[:, 0]
            assert 1.0 - prev.sum() > eps


def test_batch_pgf_against_pmf():
    h = np.linspace(0, 1, 11)
    for law in (BatchLaw.geometric(0.3), BatchLaw.deterministic(4), BatchLaw.zeta(3.0, 40),
                BatchLaw.table({2: 0.5, 5: 0.5})):
        n = law.support_max(1e-15)
        pm = law.pmf_matrix(np.zeros(1), n)[:, 0]
        ref = np.array([pm @ (1 - (1 - hi) ** np.arange(1, n + 1)) for hi in h])
        assert_allclose(law.one_minus_pgf(np.zeros_like(h), h), ref, atol=1e-13)


def test_batch_sampling_frequencies():
    rng = np.random.default_rng(0)
    law = BatchLaw.geometric(0.4)
    x = law.sample(np.zeros(200_000), rng)
    assert_allclose(x.mean(), 1 / 0.4, rtol=0.01)
    assert x.min() >= 1


def test_mark_laplace_exponent():
    rng = np.random.default_rng(2)
    for mark in (MarkLaw("uniform", (0.0, 1.0)), MarkLaw("exponential", (2.0,)),
                 MarkLaw("quantile", ((0.0, 0.5, 1.0), (0.0, 1.0, 3.0))), MarkLaw("point", (1.5,))):
        y = mark.sample(400_000, rng)
        for th in (0.3, 2.0):
            emp = np.mean(1 - np.exp(-th * y))
            assert abs(mark.laplace_exponent(th) - emp) < 5 * np.std(np.exp(-th * y)) / 632 + 1e-12
        assert_allclose(np.mean(y), mark.mean(), rtol=0.01)


def test_config_round_trip_is_a_fixed_point(canonical):
    _, model = canonical
    text = config.dumps(model)
    assert config.dumps(config.loads(text)) == text
    assert config.loads(text) == model


def test_config_errors_name_the_field():
    base = json.loads(config.dumps(mm1()))
    base["service"] = {"kind": "gamma"}
    with pytest.raises(ModelError) as exc:
        config.loads(json.dumps(base))
    assert exc.value.field == "service.kind"
    base = json.loads(config.dumps(mm1()))
    base["batch"] = {"kind": "table", "pmf": {"1": 0.6, "2": 0.5}}
    with pytest.raises(ModelError) as exc:
        config.loads(json.dumps(base))
    assert exc.value.field.startswith("batch")
    with pytest.raises(ModelError) as exc:
        config.loads('{"rate": 1.0}')
    assert exc.value.field == "model.service"


def test_custom_batch_sampler_is_not_iid():
    def sampler(s, n, rng):
        x = rng.exponential()
        return np.full(n, x)
    model = mm1(BatchLaw.deterministic(3)).replace(within_batch=sampler)
    assert not model.is_iid
    sizes, owner, services = model.sample_customers(np.array([0.1, 0.2]), np.random.default_rng(0))
    assert list(sizes) == [3, 3]
    assert services[0] == services[2] and services[3] == services[5]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.0, 3.0))
def test_excess_tail_of_exponential_is_its_tail(mu, x):
    svc = ServiceFamily.exponential(mu)
    assert_allclose(svc.excess_tail(0.0, x), svc.tail(0.0, x), rtol=1e-12)


def test_modelspec_is_hashable_and_frozen():
    m = mm1()
    assert hash(m) == hash(mm1())
    with pytest.raises(Exception):
        m.horizon = 3.0
    assert isinstance(ModelSpec(rate=Curve.constant(0.0), service=ServiceFamily.exponential(1.0)), ModelSpec)
