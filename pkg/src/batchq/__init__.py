"""Exact analytics, samplers and a simulation oracle for the M_t^{B_t}/G_t/inf queue."""

from .analytics import (
    ScaledPoissonDecomposition, Term, TransformQuery, autocov, autocov_deterministic, autocov_exponential,
    cov_qd, decompose, departure_pmf, joint_lst_qd, joint_lst_wqd, last_departure_cdf, moments, queue_pmf,
    residual_lst, workload_lst,
)
from .config import dumps, load, loads, model_hash
from .curves import Curve
from .des import PathSample, generate_nhpp, monte_carlo, simulate, simulate_observables
from .errors import (
    BatchQError, ConvergenceError, DomainError, ModelError, ResourceError, UnsupportedAnalyticError,
)
from .model import BatchLaw, MarkLaw, ModelSpec, ServiceFamily, mean_measure, validate
from .orderstat import excess_tail, joint_label_prob, label_prob, residual_service
from .quadrature import LatticePmf, convolve_scaled, integrate, poisson_pmf
from .rng import RngStream
from .sampler import sample_fidi, sample_marginal, sample_shot_noise, sample_splitting
from .scaling import ConvergenceReport, convergence_report, limit_fidi_lst, limit_wqd_lst, scaled_model
from .stats import Estimate

RateFunction = Curve

__all__ = [name for name in dir() if not name.startswith("_")]
