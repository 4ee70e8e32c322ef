import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_pd, random_problem, random_ratf
from scfa.errors import ConfigurationError, NumericError
from scfa.model import SegmentParameters
from scfa.solver import Objective, ProblemVariant, VariablePacking, get_variant


def fd_gradient(fun, x, rel=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * h)
    return g


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("kind", ["ml", "ls", "gls"])
@pytest.mark.parametrize("method", ["scfa-rev1", "scfa-no-rev", "parra"])
def test_gradient_matches_finite_differences(kind, method):
    rng = np.random.default_rng(7)
    variant = get_variant(method, kind)
    for r, B in ((1, 1), (3, 4)):
        pk, P_hat, phi, _, x = random_problem(rng, variant, r=r, B=B)
        fun = Objective(kind, P_hat, phi, pk)
        assert rel_error(fun(x)[1], fd_gradient(fun, x)) <= 1e-6


def test_gradient_with_per_mic_self_noise():
    rng = np.random.default_rng(8)
    variant = ProblemVariant(shared_self_noise=False)
    pk, P_hat, phi, _, x = random_problem(rng, variant, r=2, B=3)
    assert pk.n_q == 4
    for kind in ("ml", "ls", "gls"):
        fun = Objective(kind, P_hat, phi, pk)
        assert rel_error(fun(x)[1], fd_gradient(fun, x)) <= 1e-6


def test_ml_value_at_exact_fit(rng):
    # F(P, P) = log det P + M per frame
    m, B = 4, 3
    pk = VariablePacking(m, 2, B)
    phi = random_pd(rng, m, 5.0)
    params = SegmentParameters(random_ratf(rng, m, 2), rng.uniform(0.5, 2, (B, 2)),
                               rng.uniform(0.1, 1, B), [0.1])
    P = params.cpsdms(phi)
    x = pk.pack(params)
    f, g = Objective("ml", P, phi, pk)(x)
    expected = sum(np.linalg.slogdet(P[t])[1] + m for t in range(B))
    assert f == pytest.approx(expected, rel=1e-12)
    assert np.linalg.norm(g) <= 1e-9 * (1 + abs(f))


@pytest.mark.parametrize("kind", ["ls", "gls"])
def test_fit_objectives_vanish_at_exact_fit(kind, rng):
    pk = VariablePacking(4, 1, 2)
    phi = random_pd(rng, 4)
    params = SegmentParameters(random_ratf(rng, 4, 1), [[1.0], [2.0]], [0.3, 0.5], [0.2])
    f, g = Objective(kind, params.cpsdms(phi), phi, pk)(pk.pack(params))
    assert f == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(g, 0.0, atol=1e-12)


def test_ls_gamma_gradient_with_identity_coherence(rng):
    # with Phi = I the LS gradient in gamma(t) is tr(P_y(t) - P_hat(t))
    m, B = 4, 3
    pk = VariablePacking(m, 1, B)
    phi = np.eye(m, dtype=complex)
    P_hat = np.stack([random_pd(rng, m) for _ in range(B)])
    params = SegmentParameters(random_ratf(rng, m, 1), rng.uniform(0.1, 1, (B, 1)),
                               rng.uniform(0.1, 1, B), [0.1])
    fun = Objective("ls", P_hat, phi, pk)
    _, g = fun(pk.pack(params))
    P_y = params.cpsdms(phi)
    expected = np.real(np.trace(P_y - P_hat, axis1=1, axis2=2))
    assert np.allclose(g[pk.gamma], expected, rtol=1e-12)


def test_singular_data_is_loaded_for_ml_only(rng):
    a = random_ratf(rng, 4, 1)
    P_hat = (a @ a.conj().T)[None]
    pk = VariablePacking(4, 1, 1)
    phi = np.eye(4, dtype=complex)
    assert Objective("ml", P_hat, phi, pk).data_loaded
    assert Objective("gls", P_hat, phi, pk).data_loaded
    assert not Objective("ls", P_hat, phi, pk).data_loaded
    assert not Objective("ml", P_hat + np.eye(4), phi, pk).data_loaded


def test_bad_inputs_raise(rng):
    pk = VariablePacking(4, 1, 2)
    phi = np.eye(4, dtype=complex)
    P = np.stack([random_pd(rng, 4)] * 2)
    with pytest.raises(ConfigurationError):
        Objective("kl", P, phi, pk)
    with pytest.raises(ConfigurationError):
        Objective("ml", P[:1], phi, pk)
    bad = P.copy()
    bad[0, 1, 1] = np.nan
    with pytest.raises(NumericError):
        Objective("ml", bad, phi, pk)


def test_model_derivatives_match_finite_differences(rng):
    variant = get_variant("scfa-rev1")
    pk, P_hat, phi, _, x = random_problem(rng, variant, r=2, B=2)
    fun = Objective("ml", P_hat, phi, pk)
    D = fun.model_derivatives(x)
    for i in range(pk.size):
        e = np.zeros_like(x)
        e[i] = 1e-6
        fd = (fun.model(x + e) - fun.model(x - e)) / 2e-6
        assert np.allclose(D[i], fd, atol=1e-7)


@pytest.mark.parametrize("kind", ["ml", "ls", "gls"])
def test_fisher_equals_hessian_at_exact_fit(kind, rng):
    # with zero residual the Gauss-Newton matrix is the exact Hessian
    m, B = 4, 2
    pk = VariablePacking(m, 1, B)
    phi = random_pd(rng, m, 3.0)
    params = SegmentParameters(random_ratf(rng, m, 1), [[1.0], [0.7]], [0.4, 0.6], [0.3])
    x = pk.pack(params)
    fun = Objective(kind, params.cpsdms(phi), phi, pk)
    H = np.empty((pk.size, pk.size))
    for i in range(pk.size):
        e = np.zeros_like(x)
        e[i] = 1e-5
        H[i] = (fun(x + e)[1] - fun(x - e)[1]) / 2e-5
    F = fun.fisher(x)
    assert np.allclose(F, F.T)
    assert np.allclose(F, H, rtol=1e-5, atol=1e-6 * np.abs(H).max())


@given(st.integers(0, 2**31 - 1), st.sampled_from(["ml", "ls", "gls"]))
def test_fisher_is_positive_semidefinite(seed, kind):
    rng = np.random.default_rng(seed)
    pk, P_hat, phi, _, x = random_problem(rng, get_variant("scfa-rev2"), r=1, B=2)
    F = Objective(kind, P_hat, phi, pk).fisher(x)
    w = np.linalg.eigvalsh(F)
    assert w.min() >= -1e-9 * w.max()
