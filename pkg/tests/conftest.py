import math
from pathlib import Path

import pytest

from batchq import config
from batchq.curves import Curve
from batchq.model import BatchLaw, MarkLaw, ModelSpec, ServiceFamily

MODELS = Path(__file__).resolve().parent.parent / "models"
LN2 = math.log(2.0)

CANONICAL = {
    "single": "m1_single_exp.json",
    "pairs": "m2_pairs_exp.json",
    "geometric": "m3_geometric_det.json",
    "table_sine": "m4_table_uniform_sine.json",
    "time_varying": "m5_time_varying.json",
}


def load_model(name):
    return config.load(MODELS / CANONICAL.get(name, name))


def mm1(batch=None, mu=1.0, lam=1.0):
    """Constant-rate model with exponential service."""
    return ModelSpec(rate=Curve.constant(lam), service=ServiceFamily.exponential(mu),
                     batch=batch or BatchLaw.deterministic(1), horizon=10.0)


def marked(mark, **kw):
    return mm1(batch=BatchLaw.deterministic(1).with_mark(mark), **kw)


@pytest.fixture(params=sorted(CANONICAL))
def canonical(request):
    return request.param, load_model(request.param)


@pytest.fixture
def single():
    return mm1()


@pytest.fixture
def pairs():
    return mm1(BatchLaw.deterministic(2))


@pytest.fixture
def uniform_mark():
    return marked(MarkLaw("uniform", (0.0, 1.0)))
