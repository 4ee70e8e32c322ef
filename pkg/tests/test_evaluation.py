import numpy as np
import pytest
from hypothesis import given, strategies as st

from scfa.cpsdm import FramePlan
from scfa.errors import ConfigurationError, DegenerateVectorError, InsufficientActivityError
from scfa.evaluation import (
    hermitian_angle_error,
    hermitian_angles,
    negligible_mask,
    psd_log_errors,
    segmental_snr,
    segmental_snr_subframes,
)


def scalar_oracle(true, est):
    total = over = under = 0.0
    for t, e in zip(np.ravel(true), np.ravel(est)):
        c = 10.0 * np.log10(e / t)
        total += abs(c)
        if c > 0:
            over += c
        else:
            under -= c
    n = np.size(true)
    return total / n, over / n, under / n


def test_log_error_examples():
    p = np.ones((2, 3))
    assert psd_log_errors(p, p).total == 0.0
    single = psd_log_errors(np.array([[1.0]]), np.array([[10.0]]))
    assert single.total == pytest.approx(10.0)
    assert single.over == pytest.approx(10.0) and single.under == 0.0
    halved = psd_log_errors(p, p, divisor=2.0)
    assert halved.total == 0.0
    assert psd_log_errors(np.array([[1.0]]), np.array([[10.0]]), divisor=2.0).total == \
        pytest.approx(5.0)


@given(st.integers(0, 2**31 - 1))
def test_log_error_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    true = rng.uniform(0.1, 10.0, (4, 3, 2))
    est = true * 10 ** rng.normal(0, 0.5, true.shape)
    res = psd_log_errors(true, est)
    total, over, under = scalar_oracle(true, est)
    assert res.total == pytest.approx(total, rel=1e-12)
    assert res.over == pytest.approx(over, rel=1e-12)
    assert res.under == pytest.approx(under, rel=1e-12)
    assert abs(res.total - res.over - res.under) <= 1e-10


@given(st.integers(0, 2**31 - 1))
def test_log_error_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 10.0, (5, 4))
    b = rng.uniform(0.1, 10.0, (5, 4))
    ab, ba = psd_log_errors(a, b), psd_log_errors(b, a)
    assert ab.total == pytest.approx(ba.total, rel=1e-12)
    assert ab.over == pytest.approx(ba.under, rel=1e-12)


def test_skip_rule():
    true = np.ones((4, 2, 2))
    true[:, 1, 1] = 1e-9
    mask = negligible_mask(true)
    assert mask[:, 1, 1].all() and mask.sum() == 4
    # a segment where the source is audible in one frame keeps all its frames
    true[2, 1, 1] = 1.0
    spans = [(0, 2), (0, 2), (1, 3), (2, 4)]
    mask = negligible_mask(true, spans=spans)
    assert list(mask[:, 1, 1]) == [True, True, False, False]
    res = psd_log_errors(true, np.ones_like(true), spans=spans)
    assert res.n_skipped == 2


@given(st.integers(0, 2**31 - 1), st.floats(1e-8, 1e-1))
def test_zero_threshold_never_includes_fewer(seed, thr):
    rng = np.random.default_rng(seed)
    true = 10 ** rng.uniform(-10, 0, (6, 3))
    est = rng.uniform(0.1, 1.0, true.shape)
    assert psd_log_errors(true, est, 0.0).n_included >= psd_log_errors(true, est, thr).n_included


def test_log_error_floors_nonpositive_estimates():
    res = psd_log_errors(np.array([[1.0, 1.0]]), np.array([[0.0, -1.0]]))
    assert res.n_floored == 2
    assert res.total == pytest.approx(120.0)
    with pytest.raises(ConfigurationError):
        psd_log_errors(np.ones((2, 2)), np.ones((2, 3)))


def test_hermitian_angle_examples(rng):
    a = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    assert hermitian_angle_error(a, a) == pytest.approx(0.0, abs=1e-7)
    scaled = a * (np.array([2.0, 0.3]) * np.exp(1j * np.array([0.5, -2.0])))
    assert hermitian_angle_error(a, scaled) == pytest.approx(0.0, abs=1e-7)
    e = np.eye(4, dtype=complex)
    assert hermitian_angle_error(e[:, :1], e[:, 1:2]) == pytest.approx(np.pi / 2)
    with pytest.raises(DegenerateVectorError):
        hermitian_angles(np.zeros((4, 1)), a[:, :1])
    assert hermitian_angle_error(e[:, :2], e[:, [0, 3]], include=np.array([True, False])) == 0.0


@given(st.integers(0, 2**31 - 1))
def test_hermitian_angle_range_and_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4, 2)) + 1j * rng.normal(size=(3, 4, 2))
    b = rng.normal(size=(3, 4, 2)) + 1j * rng.normal(size=(3, 4, 2))
    ang = hermitian_angles(a, b)
    assert np.all((ang >= 0) & (ang <= np.pi / 2))
    c = rng.normal(size=(1, 1, 2)) + 1j * rng.normal(size=(1, 1, 2))
    assert np.allclose(hermitian_angles(a * c, b), ang, atol=1e-7)
    assert np.allclose(hermitian_angles(a, b * c), ang, atol=1e-7)


def test_segmental_snr_examples(rng):
    plan = FramePlan()
    clean = rng.normal(size=8000)
    assert segmental_snr(clean, clean, plan) == pytest.approx(35.0)
    assert segmental_snr(clean, np.zeros_like(clean), plan) == pytest.approx(0.0, abs=1e-12)


def test_segmental_snr_at_constructed_level(rng):
    # noise scaled per sub-frame so every sub-frame sits at exactly 10 dB
    plan = FramePlan(subframe_overlap=0.0)
    n = plan.subframe_len
    clean = rng.normal(size=40 * n)
    noise = rng.normal(size=clean.size)
    for i in range(40):
        s = slice(i * n, (i + 1) * n)
        noise[s] *= np.sqrt(np.sum(clean[s] ** 2) / np.sum(noise[s] ** 2) / 10.0)
    assert segmental_snr(clean, clean + noise, plan) == pytest.approx(10.0, abs=0.1)


def test_segmental_snr_needs_activity():
    with pytest.raises(InsufficientActivityError):
        segmental_snr(np.zeros(4000), np.zeros(4000), FramePlan())


def test_subframe_ssnr_matches_constructed_level(rng):
    S = rng.normal(size=(2, 10, 5, 1)) + 1j * rng.normal(size=(2, 10, 5, 1))
    N = rng.normal(size=S.shape) + 1j * rng.normal(size=S.shape)
    es = np.sum(np.abs(S) ** 2, axis=2, keepdims=True)
    en = np.sum(np.abs(N) ** 2, axis=2, keepdims=True)
    N = N * np.sqrt(es / en / 100.0)
    assert segmental_snr_subframes(S, S + N) == pytest.approx(20.0, abs=1e-9)
    assert segmental_snr_subframes(S, S) == pytest.approx(35.0)
