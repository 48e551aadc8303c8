import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate as spi

from batchq.curves import Curve
from batchq.errors import DomainError, UnsupportedAnalyticError
from batchq.model import BatchLaw, ServiceFamily
from batchq.orderstat import (
    excess_tail, joint_label_prob, joint_label_prob_mc, label_chains, label_prob, label_probs,
    residual_service,
)

from conftest import LN2, mm1

EXP1 = ServiceFamily.exponential(1.0)


def test_label_prob_examples():
    assert_allclose([label_prob(EXP1, 0.0, LN2, j, 2) for j in (1, 2, 3)], [0.25, 0.5, 0.25], rtol=1e-14)


def test_label_prob_against_sampled_pairs():
    rng = np.random.default_rng(11)
    x = rng.exponential(size=(2_000_000, 2))
    departed = (x <= LN2).sum(axis=1)
    for j in (1, 2, 3):
        p = np.mean(departed == j - 1)
        assert abs(p - label_prob(EXP1, 0.0, LN2, j, 2)) < 4 * math.sqrt(p * (1 - p) / x.shape[0])


def test_label_prob_no_time_to_depart():
    svc = ServiceFamily.uniform(0.5, 1.0)
    assert label_prob(svc, 1.0, 1.0, 1, 5) == 1.0
    assert all(label_prob(svc, 1.0, 1.0, j, 5) == 0.0 for j in range(2, 7))


def test_label_prob_domain():
    with pytest.raises(DomainError):
        label_prob(EXP1, 0.0, 1.0, 0, 2)
    with pytest.raises(DomainError):
        label_prob(EXP1, 0.0, 1.0, 4, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.floats(0.0, 4.0), st.floats(0.05, 3.0),
       st.sampled_from(["exponential", "deterministic", "uniform", "hyper"]))
def test_label_probs_normalized(n, u, par, kind):
    svc = {"exponential": ServiceFamily.exponential(par), "deterministic": ServiceFamily.deterministic(par),
           "uniform": ServiceFamily.uniform(par / 2, par * 2),
           "hyper": ServiceFamily.hyperexponential([0.4, 0.6], [par, 2 * par])}[kind]
    p = label_probs(svc, np.array([0.0]), u, n)
    assert abs(p.sum() - 1.0) < 1e-10
    assert_allclose(p[:, 0], [label_prob(svc, 0.0, u, j, n) for j in range(1, n + 2)], rtol=1e-12, atol=1e-300)


def test_label_probs_large_batch_stable():
    p = label_probs(EXP1, np.array([0.0]), 0.7, 400)
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-10


def test_joint_label_examples():
    grid = (LN2, 2 * LN2)
    assert_allclose(joint_label_prob(EXP1, 0.0, grid, (1, 1), 1), 0.25, rtol=1e-14)
    for j in range(1, 4):
        assert_allclose(joint_label_prob(EXP1, 0.0, [LN2], [j], 2), label_prob(EXP1, 0.0, LN2, j, 2), rtol=1e-14)
    chains = label_chains(2, 2)
    assert len(chains) == 6
    assert_allclose(sum(joint_label_prob(EXP1, 0.0, grid, c, 2) for c in chains), 1.0, rtol=1e-14)


def test_joint_label_against_sampled_pairs():
    rng = np.random.default_rng(5)
    x = rng.exponential(size=(2_000_000, 2))
    lab1 = 1 + (x <= LN2).sum(axis=1)
    lab2 = 1 + (x <= 2 * LN2).sum(axis=1)
    for c in label_chains(2, 2):
        p = np.mean((lab1 == c[0]) & (lab2 == c[1]))
        ref = joint_label_prob(EXP1, 0.0, (LN2, 2 * LN2), c, 2)
        assert abs(p - ref) < 4 * math.sqrt(ref * (1 - ref) / x.shape[0]) + 1e-12


def test_joint_label_domain():
    with pytest.raises(DomainError):
        joint_label_prob(EXP1, 0.0, (1.0, 2.0), (2, 1), 2)
    with pytest.raises(DomainError):
        joint_label_prob(EXP1, 0.0, (2.0, 1.0), (1, 1), 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.floats(0.1, 2.0), st.floats(0.0, 1.0))
def test_chain_normalization_and_marginals(n, m, mu, s):
    svc = ServiceFamily.exponential(mu)
    grid = s + np.cumsum(np.full(m, 0.4))
    chains = label_chains(n, m)
    probs = np.array([joint_label_prob(svc, s, grid, c, n) for c in chains])
    assert abs(probs.sum() - 1) < 1e-9
    for j in range(1, n + 2):
        assert_allclose(probs[chains[:, 0] == j].sum(), label_prob(svc, s, grid[0], j, n), atol=1e-12)


def test_excess_tail_examples():
    assert_allclose(excess_tail(ServiceFamily.exponential(2.0), 0.0, 1.0), math.exp(-2), rtol=1e-14)
    for svc in (EXP1, ServiceFamily.uniform(0.1, 0.4), ServiceFamily.empirical([0.3, 1.0])):
        assert excess_tail(svc, 0.0, 0.0) == 1.0
    assert_allclose(excess_tail(ServiceFamily.deterministic(2.0), 0.0, 1.0), 0.5)
    with pytest.raises(DomainError):
        excess_tail(EXP1, 0.0, -1.0)


def test_excess_tail_nonincreasing():
    svc = ServiceFamily.hyperexponential([0.5, 0.5], [0.3, 4.0])
    x = np.linspace(0, 10, 200)
    assert np.all(np.diff(excess_tail(svc, 0.0, x)) <= 0)


def test_residual_service_exponential():
    nu, hbar = residual_service(mm1(), LN2, np.array([0.0, 1.0]))
    assert_allclose(nu, 0.5, rtol=1e-12)
    assert_allclose(hbar, [1.0, math.exp(-1)], rtol=1e-12)


def test_residual_service_deterministic():
    model = mm1().replace(service=ServiceFamily.deterministic(1.0))
    nu, hbar = residual_service(model, 2.0, 0.5)
    assert_allclose(nu, 1.0, rtol=1e-12)
    assert_allclose(hbar, 0.5, rtol=1e-12)


def test_residual_service_time_varying_against_quadrature():
    model = mm1().replace(rate=Curve.sinusoidal(1.0, 0.5, 2.0),
                          service=ServiceFamily.uniform(Curve.piecewise_linear([0.0, 3.0], [0.2, 0.8]), 1.5))
    t, x = 1.7, 0.4
    f = lambda s, y: float(model.service.tail(s, t + y - s) * model.rate(s))  # noqa: E731
    nu_ref = spi.quad(f, 0, t, args=(0.0,), limit=200, epsabs=1e-13)[0]
    h_ref = spi.quad(f, 0, t, args=(x,), limit=200, epsabs=1e-13)[0] / nu_ref
    nu, hbar = residual_service(model, t, x)
    assert_allclose([nu, hbar], [nu_ref, h_ref], rtol=1e-9)


def test_residual_service_requires_customers():
    model = mm1().replace(rate=Curve.piecewise_constant([0.0, 1.0], [0.0, 1.0]))
    with pytest.raises(DomainError):
        residual_service(model, 0.5, 0.0)


def test_dependent_labels_by_monte_carlo():
    dep = mm1(BatchLaw.deterministic(2)).replace(within_batch="identical")
    est = joint_label_prob_mc(dep, 0.0, [LN2], [3], 2, 40_000, np.random.default_rng(0))
    # identical services: both leave together with probability 1/2
    assert est.within(0.5)
    est = joint_label_prob_mc(dep, 0.0, [LN2], [2], 2, 2000, np.random.default_rng(0))
    assert est.value == 0.0


def test_iid_monte_carlo_matches_closed_form():
    est = joint_label_prob_mc(mm1(BatchLaw.deterministic(2)), 0.0, [LN2, 2 * LN2], [1, 2], 2, 40_000,
                              np.random.default_rng(1))
    assert est.within(joint_label_prob(EXP1, 0.0, [LN2, 2 * LN2], [1, 2], 2))


def test_require_iid_message():
    from batchq.analytics import decompose
    with pytest.raises(UnsupportedAnalyticError, match="simulation"):
        decompose(mm1(BatchLaw.deterministic(2)).replace(within_batch="identical"), 1.0)
