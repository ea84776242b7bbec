"""Sparse kernel tests: every backend must agree with dense numpy, and the
environment flag must pick the backend deterministically."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import sparse

from credloop import kernels


def _random_csr(rng, rows, cols, density=0.05):
    return sparse.random(rows, cols, density=density, format="csr",
                         random_state=rng, dtype=np.float64)


@pytest.mark.parametrize("name", sorted(kernels.backends()))
def test_matmul_matches_dense(name):
    matmul, _ = kernels.backends()[name]
    rng = np.random.default_rng(3)
    for rows, cols, width in [(7, 11, 3), (40, 60, 9), (1, 5, 1), (30, 30, 30)]:
        X = _random_csr(rng, rows, cols, density=0.2)
        W = rng.normal(size=(cols, width))
        got = matmul(X, W)
        np.testing.assert_allclose(got, X.toarray() @ W, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(kernels.backends()))
def test_rmatmul_matches_dense(name):
    _, rmatmul = kernels.backends()[name]
    rng = np.random.default_rng(4)
    for rows, cols, width in [(7, 11, 3), (40, 60, 9), (5, 1, 2)]:
        X = _random_csr(rng, rows, cols, density=0.2)
        R = rng.normal(size=(rows, width))
        got = rmatmul(X, R)
        np.testing.assert_allclose(got, X.toarray().T @ R, rtol=1e-12, atol=1e-12)


def test_backends_agree_with_each_other():
    backs = kernels.backends()
    if len(backs) < 2:
        pytest.skip("only one backend available")
    rng = np.random.default_rng(5)
    X = _random_csr(rng, 50, 80, density=0.1)
    W = rng.normal(size=(80, 6))
    results = [mm(X, W) for mm, _ in backs.values()]
    for other in results[1:]:
        np.testing.assert_allclose(results[0], other, rtol=1e-12, atol=1e-12)


def test_empty_rows_give_zero_output():
    X = sparse.csr_matrix((3, 4))
    W = np.ones((4, 2))
    for matmul, rmatmul in kernels.backends().values():
        assert not matmul(X, W).any()
        assert not rmatmul(X, np.ones((3, 2))).any()


def test_dispatch_uses_selected_backend():
    assert kernels.backend_name() in kernels.backends()
    rng = np.random.default_rng(6)
    X = _random_csr(rng, 10, 12, density=0.3)
    W = rng.normal(size=(12, 4))
    np.testing.assert_allclose(kernels.matmul(X, W), X.toarray() @ W, rtol=1e-12)
    R = rng.normal(size=(10, 4))
    np.testing.assert_allclose(kernels.rmatmul(X, R), X.toarray().T @ R, rtol=1e-12)


@pytest.mark.parametrize("flag,expected", [("0", "numpy"), ("false", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, CREDLOOP_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from credloop import kernels; print(kernels.backend_name())"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == expected
