import logging

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _quiet_jitter_warnings():
    # rank-deficient Gram matrices are expected at large N; the retry is logged
    logging.getLogger("randfeat.lsq").setLevel(logging.ERROR)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_difference(fun, u, l, h):
    """Derivative of ``fun`` along coordinate ``l`` at points ``u`` (rows)."""
    step = np.zeros(u.shape[1])
    step[l] = h
    return (fun(u + step) - fun(u - step)) / (2 * h)
