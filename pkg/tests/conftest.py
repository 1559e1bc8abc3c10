"""Shared test setup.

NUMBA_NUM_THREADS is raised before numba loads so worker-count determinism
tests exercise real multi-threaded reductions even on boxes with few cores
(oversubscribed threads change scheduling, which is exactly what the
bit-reproducibility contract must survive).
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from coulombwalk import ModelParams, SeedSpec, sample_path


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def make_path(T=1.0, n=64, seed=1, stream=0, mu=0.0, beta=0.0):
    params = ModelParams(beta=beta, horizon_T=T, n_steps=n, drift_mu=mu)
    return sample_path(params, SeedSpec(seed, stream))
