import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given
from hypothesis import strategies as st

from shorttopics.errors import DomainError
from shorttopics.special import digamma


def test_digamma_at_one():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-12)


@pytest.mark.parametrize("x", [0.5, 2.0, 10.0])
def test_digamma_recurrence(x):
    assert digamma(x + 1) - digamma(x) == pytest.approx(1 / x, abs=1e-12)


def test_digamma_large_argument():
    assert digamma(1000.0) == pytest.approx(np.log(1000) - 1 / 2000, abs=1e-6)


@given(st.floats(1e-6, 1e6))
def test_digamma_matches_reference(x):
    assert abs(digamma(x) - sp.digamma(x)) <= 1e-10 * max(1.0, abs(sp.digamma(x)))


def test_digamma_vectorized_and_scalar():
    x = np.array([[0.1, 1.0], [7.5, 300.0]])
    assert np.allclose(digamma(x), sp.digamma(x), atol=1e-12, rtol=0)
    assert isinstance(digamma(2.0), float)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.array([1.0, -0.5])])
def test_digamma_domain(bad):
    with pytest.raises(DomainError):
        digamma(bad)


def test_compiled_digamma_matches():
    kernels = pytest.importorskip("shorttopics._kernels")
    for x in (1e-3, 0.7, 3.0, 55.0, 1e5):
        assert kernels.digamma_scalar(x) == pytest.approx(sp.digamma(x), abs=1e-10)
