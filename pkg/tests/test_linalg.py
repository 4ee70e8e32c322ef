import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_pd
from scfa.errors import DecompositionError, NumericError
from scfa.linalg import (
    cholesky_factor,
    diagonal_loading,
    hermitian_eig,
    hermitian_sqrt,
    hermitize,
    is_positive_definite,
    logdet_and_inverse_apply,
    psd_factor,
)


def test_cholesky_identity_and_diagonal():
    assert np.allclose(cholesky_factor(np.eye(3)), np.eye(3))
    assert np.allclose(cholesky_factor(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_cholesky_random_reconstruction(rng):
    for _ in range(20):
        P = random_pd(rng, 4, 1e3)
        L = cholesky_factor(P)
        assert np.allclose(np.triu(L, 1), 0)
        assert np.linalg.norm(L @ L.conj().T - P) <= 1e-10 * np.linalg.norm(P)


def test_cholesky_names_failing_pivot():
    P = np.diag([1.0, 2.0, -1.0, 3.0]).astype(complex)
    with pytest.raises(DecompositionError) as exc:
        cholesky_factor(P)
    assert exc.value.pivot == 2
    assert "pivot 2" in str(exc.value)


def test_cholesky_threshold_rejects_near_singular():
    P = np.diag([1.0, 1e-14]).astype(complex)
    with pytest.raises(DecompositionError) as exc:
        cholesky_factor(P)
    assert exc.value.pivot == 1
    assert not is_positive_definite(P)
    assert is_positive_definite(np.eye(2))


def test_non_finite_raises():
    with pytest.raises(NumericError):
        hermitian_eig(np.array([[np.nan, 0], [0, 1]]))


def test_eig_examples():
    w, V = hermitian_eig(np.eye(3))
    assert np.allclose(w, 1)
    w, V = hermitian_eig(np.diag([1.0, 5.0, 3.0]))
    assert np.allclose(w, [5, 3, 1])
    assert np.allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]])


def test_eig_rank_one_update(rng):
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    p, g = 2.5, 0.3
    w, _ = hermitian_eig(p * np.outer(a, a.conj()) + g * np.eye(4))
    assert w[0] == pytest.approx(p * np.linalg.norm(a) ** 2 + g, rel=1e-12)
    assert np.allclose(w[1:], g, rtol=1e-10)


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_eig_properties(m, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    P = hermitize(X)
    w, V = hermitian_eig(P)
    nrm = np.linalg.norm(P)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm(P @ V - V * w) <= 1e-9 * max(nrm, 1e-300)
    assert np.allclose(V.conj().T @ V, np.eye(m), atol=1e-10)
    assert abs(np.sum(w) - np.trace(P).real) <= 1e-10 * max(np.abs(w).sum(), 1.0)
    assert np.isrealobj(w)


def test_logdet_examples():
    ld, Y = logdet_and_inverse_apply(np.eye(3), np.eye(3))
    assert ld == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(Y, np.eye(3))
    ld, Y = logdet_and_inverse_apply(np.e * np.eye(2), np.eye(2))
    assert ld == pytest.approx(2.0)
    assert np.allclose(Y, np.eye(2) / np.e)


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_logdet_matches_eigenvalues(m, seed):
    rng = np.random.default_rng(seed)
    P = random_pd(rng, m, 1e4)
    X = rng.normal(size=(m, 3)) + 1j * rng.normal(size=(m, 3))
    ld, Y = logdet_and_inverse_apply(P, X)
    assert np.linalg.norm(P @ Y - X) <= 1e-9 * np.linalg.norm(X)
    w = np.linalg.eigvalsh(P)
    assert ld == pytest.approx(np.sum(np.log(w)), rel=1e-8, abs=1e-10)


def test_logdet_rejects_non_pd():
    with pytest.raises(DecompositionError):
        logdet_and_inverse_apply(-np.eye(2), np.eye(2))


def test_sqrt_and_factor(rng):
    P = random_pd(rng, 4, 100.0)
    S = hermitian_sqrt(P)
    assert np.allclose(S @ S, P)
    Si = hermitian_sqrt(P, inverse=True)
    assert np.allclose(Si @ P @ Si, np.eye(4), atol=1e-10)
    ones = np.ones((4, 4), dtype=complex)
    F = psd_factor(ones)
    assert np.allclose(F @ F.conj().T, ones)
    with pytest.raises(DecompositionError):
        hermitian_sqrt(ones, inverse=True)


def test_diagonal_loading_level():
    assert diagonal_loading(np.diag([2.0, 4.0])) == pytest.approx(3e-10)
