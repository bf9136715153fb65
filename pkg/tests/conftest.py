import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from boise.dpmm import Clustering, Hyperparams, PosteriorEnsemble
from boise.matrix import from_array
from boise.oracle import exact_posterior


@pytest.fixture
def small_x0():
    return from_array(
        [
            [1, 1, 0, 0, 1],
            [1, 1, 0, 0, 0],
            [0, 0, 1, 1, 0],
            [0, 1, 1, 1, 1],
        ]
    )


@pytest.fixture
def hyper():
    return Hyperparams(m0=1.5, alpha0=0.4, beta0=0.7)


def exact_ensemble(x0, hyper):
    """Weighted ensemble carrying the exact posterior over all partitions."""
    post = exact_posterior(x0, hyper)
    samples = [Clustering.from_labels(lab, x0, hyper) for lab in post]
    return PosteriorEnsemble(samples, hyper, weights=list(post.values()))


@st.composite
def binary_matrices(draw, min_m=1, max_m=4, min_n=2, max_n=5, missing=False):
    m = draw(st.integers(min_m, max_m))
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 2, (m, n))
    observed = rng.random((m, n)) > 0.25 if missing else None
    return from_array(values, observed)


hyperparams = st.builds(
    Hyperparams,
    m0=st.floats(0.2, 5.0),
    alpha0=st.floats(0.1, 3.0),
    beta0=st.floats(0.1, 3.0),
)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(report):
        ok, title, detail = report[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
