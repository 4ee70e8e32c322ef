import cmath
import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_ratf
from scfa.errors import InvalidGeometryError, InvalidParameterError
from scfa.model import (
    FrequencyGrid,
    Geometry,
    SegmentParameters,
    assemble_cpsdm,
    circular_array,
    coherence_stack,
    distance_matrix,
    model_cpsdm,
    ratf_matrix,
    relative_green,
    spherical_coherence,
)

GRID = FrequencyGrid(256, 16000.0, 343.0)


def test_grid_validation():
    assert GRID.n_bins == 129
    assert GRID.frequency(64) == 4000.0
    for bad in ({"fft_len": 255}, {"fft_len": 0}, {"sampling_rate": 0}, {"speed_of_sound": -1}):
        with pytest.raises(InvalidParameterError):
            FrequencyGrid(**bad)


def test_relative_green_examples():
    assert relative_green(1.0, 1.0, 17, GRID) == pytest.approx(1 + 0j)
    assert relative_green(2.0, 1.0, 0, GRID) == pytest.approx(2 + 0j)
    h = relative_green(1.0, 2.0, 64, GRID)
    assert abs(h) == pytest.approx(0.5)
    expected = (2 * math.pi * 4000.0 / 343.0) % (2 * math.pi)
    assert cmath.phase(h) % (2 * math.pi) == pytest.approx(expected)


def test_relative_green_rejects_nonpositive():
    with pytest.raises(InvalidGeometryError):
        relative_green(0.0, 1.0, 3, GRID)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.integers(0, 128))
def test_relative_green_magnitude_and_conjugation(d_ref, d_mic, k):
    h = relative_green(d_ref, d_mic, k, GRID)
    assert abs(h) == pytest.approx(d_ref / d_mic, rel=1e-12)
    # conjugation flips the sign of the path difference
    flipped = (d_ref / d_mic) * np.exp(-1j * 2 * np.pi * GRID.frequency(k) * (d_mic - d_ref) / 343.0)
    assert np.conj(h) == pytest.approx(flipped, rel=1e-9, abs=1e-12)


def test_coherence_examples():
    D = distance_matrix(circular_array(4, 0.02))
    assert np.allclose(spherical_coherence(D, 0, GRID), np.ones((4, 4)))
    assert np.allclose(spherical_coherence(np.zeros((3, 3)), 40, GRID), np.ones((3, 3)))
    D2 = np.array([[0.0, 0.02], [0.02, 0.0]])
    x = 2 * np.pi * 4000.0 * 0.02 / 343.0
    phi = spherical_coherence(D2, 64, GRID)
    assert phi[0, 1].real == pytest.approx(math.sin(x) / x, rel=1e-12)
    assert np.allclose(np.diag(phi), 1.0)


def test_coherence_rejects_asymmetric():
    with pytest.raises(InvalidGeometryError):
        spherical_coherence(np.array([[0.0, 0.1], [0.2, 0.0]]), 3, GRID)


def test_coherence_stack_properties():
    D = distance_matrix(circular_array(6, 0.05))
    stack, _ = coherence_stack(D, GRID)
    assert stack.shape == (129, 6, 6)
    assert np.allclose(stack[0], 1.0)
    for phi in stack:
        assert np.allclose(phi, phi.conj().T)
        assert np.allclose(np.diag(phi), 1.0)
        assert np.all(np.abs(phi) <= 1 + 1e-12)
        assert np.linalg.eigvalsh(phi).min() >= -1e-10


def test_distance_matrix_examples():
    assert distance_matrix(np.zeros((1, 3))).shape == (1, 1)
    D = distance_matrix(np.array([[0, 0, 0], [0.02, 0, 0]]))
    assert D[0, 1] == pytest.approx(0.02)
    # chord formula on the 4-mic circle with neighbour spacing 0.02
    D = distance_matrix(circular_array(4, 0.02))
    R = 0.02 / (2 * math.sin(math.pi / 4))
    for i in range(4):
        for j in range(4):
            chord = 2 * R * math.sin(math.pi * abs(i - j) / 4)
            assert D[i, j] == pytest.approx(chord, abs=1e-15)
    assert np.allclose(D, D.T) and np.allclose(np.diag(D), 0)


def test_geometry_checks():
    mics = circular_array(4, 0.02)
    with pytest.raises(InvalidGeometryError):
        Geometry(mics, [[0.005, 0.0, 0.0]], 0, 0.01)
    with pytest.raises(InvalidGeometryError):
        Geometry(mics, [[1.0, 0, 0]], 4)
    geo = Geometry(mics, [[1.0, 0.5, 0.2], [-1.0, 0.3, 0.0]])
    A = ratf_matrix(geo, 50, GRID)
    assert np.allclose(A[0], 1.0)
    d = geo.source_distances()
    for i in range(4):
        for j in range(2):
            assert A[i, j] == pytest.approx(relative_green(d[0, j], d[i, j], 50, GRID))


def test_equidistant_source_has_equal_magnitudes():
    mics = circular_array(4, 0.02)
    geo = Geometry(mics, [[0.0, 0.0, 1.5]])
    A = ratf_matrix(geo, 77, GRID)
    assert np.allclose(np.abs(A), 1.0)


def test_assemble_examples(rng):
    phi = spherical_coherence(distance_matrix(circular_array(4, 0.02)), 30, GRID)
    P = assemble_cpsdm(np.ones((4, 1)), [1.0], 0.0, [0.0], phi)
    assert np.allclose(P, np.ones((4, 4)))
    P = assemble_cpsdm(np.ones((4, 2)), [0.0, 0.0], 1.0, [0.0], phi)
    assert np.allclose(P, phi)
    A = random_ratf(rng, 4, 2)
    p, g, q = np.array([0.7, 1.9]), 0.4, np.array([0.1, 0.2, 0.3, 0.4])
    oracle = g * phi + np.diag(q)
    for j in range(2):
        oracle = oracle + p[j] * np.outer(A[:, j], A[:, j].conj())
    assert np.allclose(assemble_cpsdm(A, p, g, q, phi), oracle)


def test_assemble_rejects_negative():
    with pytest.raises(InvalidParameterError):
        assemble_cpsdm(np.ones((2, 1)), [-1.0], 0.0, [0.0], np.eye(2))
    with pytest.raises(InvalidParameterError):
        assemble_cpsdm(np.ones((2, 1)), [1.0], 0.0, [0.0, 0.0, 0.0], np.eye(2))


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_assemble_psd_and_permutation_invariant(r, seed):
    rng = np.random.default_rng(seed)
    phi = spherical_coherence(distance_matrix(circular_array(4, 0.02)), int(rng.integers(129)), GRID)
    A = random_ratf(rng, 4, r)
    p = rng.exponential(size=r)
    g, q = rng.exponential(), rng.exponential(size=4) * 1e-3
    P = assemble_cpsdm(A, p, g, q, phi)
    assert np.allclose(P, P.conj().T)
    assert np.linalg.eigvalsh(P).min() >= -1e-10 * np.trace(P).real
    for perm in permutations(range(r)):
        perm = list(perm)
        assert np.allclose(assemble_cpsdm(A[:, perm], p[perm], g, q, phi), P, atol=1e-12)


def test_model_cpsdm_batches(rng):
    A = random_ratf(rng, 3, 2)
    P = rng.exponential(size=(5, 2))
    gam = rng.exponential(size=5)
    phi = np.eye(3)
    out = model_cpsdm(A, P, gam, [0.1], phi)
    for t in range(5):
        assert np.allclose(out[t], assemble_cpsdm(A, P[t], gam[t], [0.1], phi))
    sp = SegmentParameters(A, P, gam, [0.1])
    assert np.allclose(sp.cpsdms(phi), out)
    assert np.allclose(sp.noise_q(), 0.1)
    c = sp.copy()
    c.p[0, 0] = -5
    assert sp.p[0, 0] != -5
