"""Signal-model types and model CPSDM assembly.

The noisy CPSDM of one time-frequency tile is modeled as

    P_y = A diag(p) A^H + gamma * Phi + diag(q)

with ``A`` the early RATF (mixing) matrix whose reference row is all ones,
``p`` the source PSDs, ``gamma`` the late-reverberation PSD, ``Phi`` the
diffuse-field coherence and ``q`` the microphone self-noise PSDs.

Microphone and source indices are 0-based throughout the package.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGeometryError, InvalidParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrequencyGrid:
    """One-sided DFT grid: bins ``0 .. fft_len // 2``."""

    fft_len: int = 256
    sampling_rate: float = 16000.0
    speed_of_sound: float = 343.0

    def __post_init__(self):
        if self.fft_len <= 0 or self.fft_len % 2:
            raise InvalidParameterError("fft_len must be even and positive")
        if self.sampling_rate <= 0 or self.speed_of_sound <= 0:
            raise InvalidParameterError("sampling_rate and speed_of_sound must be positive")

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1

    @property
    def bins(self):
        return np.arange(self.n_bins)

    def frequency(self, k):
        """Center frequency in Hz of bin ``k``."""
        return self.sampling_rate * np.asarray(k) / self.fft_len


@dataclass
class Geometry:
    mic_positions: np.ndarray
    source_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    reference_index: int = 0
    min_distance: float = 0.01

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        src = np.asarray(self.source_positions, dtype=float)
        self.source_positions = src.reshape(-1, self.mic_positions.shape[1])
        if not 0 <= self.reference_index < self.n_mics:
            raise InvalidGeometryError(
                f"reference index {self.reference_index} outside 0..{self.n_mics - 1}")
        if self.min_distance <= 0:
            raise InvalidGeometryError("min_distance must be positive")
        d = self.source_distances()
        if d.size and d.min() < self.min_distance:
            raise InvalidGeometryError(
                f"source closer than {self.min_distance} m to a microphone")

    @property
    def n_mics(self):
        return self.mic_positions.shape[0]

    @property
    def n_sources(self):
        return self.source_positions.shape[0]

    def source_distances(self):
        """(M, r) matrix of microphone-to-source distances."""
        diff = self.mic_positions[:, None, :] - self.source_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


def circular_array(n_mics=4, spacing=0.02, center=(0.0, 0.0, 0.0)):
    """Uniform circular array with the given distance between neighbours."""
    if n_mics == 1:
        return np.asarray([center], dtype=float)
    radius = spacing / (2.0 * np.sin(np.pi / n_mics))
    ang = 2.0 * np.pi * np.arange(n_mics) / n_mics
    pos = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_mics)], axis=1)
    return pos + np.asarray(center, dtype=float)


def distance_matrix(geometry):
    """Symmetric microphone distance matrix (accepts a Geometry or an (M, 3) array)."""
    pos = geometry.mic_positions if isinstance(geometry, Geometry) else np.atleast_2d(geometry)
    diff = pos[:, None, :] - pos[None, :, :]
    D = np.linalg.norm(diff, axis=-1)
    return 0.5 * (D + D.T)


def relative_green(d_ref, d_mic, k, grid):
    """Anechoic relative transfer function between a microphone and the reference.

    ``(d_ref / d_mic) * exp(j 2 pi f_k (d_mic - d_ref) / c)``; broadcasts over
    array arguments.
    """
    d_ref = np.asarray(d_ref, dtype=float)
    d_mic = np.asarray(d_mic, dtype=float)
    if np.any(d_ref <= 0) or np.any(d_mic <= 0):
        raise InvalidGeometryError("distances must be positive")
    phase = 2.0 * np.pi * grid.frequency(k) * (d_mic - d_ref) / grid.speed_of_sound
    out = (d_ref / d_mic) * np.exp(1j * phase)
    return complex(out) if out.ndim == 0 else out


def ratf_matrix(geometry, k, grid):
    """(M, r) anechoic RATF matrix of all sources at bin ``k``."""
    d = geometry.source_distances()
    d_ref = d[geometry.reference_index][None, :]
    return relative_green(d_ref, d, k, grid)


def _check_distances(distances):
    D = np.asarray(distances, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidGeometryError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0.0, atol=1e-12):
        raise InvalidGeometryError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > 1e-12):
        raise InvalidGeometryError("distance matrix has a nonzero diagonal")
    return D


def _floor_coherence(phi):
    w, V = np.linalg.eigh(phi)
    if w.min() >= 0.0:
        return phi, False
    phi = (V * np.maximum(w, 0.0)) @ V.conj().T
    s = 1.0 / np.sqrt(np.real(np.diag(phi)))
    phi = s[:, None] * phi * s[None, :]
    return 0.5 * (phi + phi.conj().T), True


def spherical_coherence(distances, k, grid):
    """Spherically isotropic (sinc) coherence matrix with unit diagonal.

    Numerically indefinite matrices are floored at eigenvalue 0 and
    re-normalized to unit diagonal; flooring is logged.
    """
    D = _check_distances(distances)
    x = 2.0 * np.pi * grid.frequency(k) * D / grid.speed_of_sound
    phi = np.sinc(x / np.pi).astype(complex)
    np.fill_diagonal(phi, 1.0)
    phi, floored = _floor_coherence(phi)
    if floored:
        log.info("coherence matrix at bin %s floored to PSD", k)
    return phi


def coherence_stack(distances, grid):
    """Coherence for every bin: (n_bins, M, M) array and a per-bin floored mask."""
    D = _check_distances(distances)
    f = grid.frequency(grid.bins)
    x = 2.0 * np.pi * f[:, None, None] * D[None] / grid.speed_of_sound
    stack = np.sinc(x / np.pi).astype(complex)
    floored = np.zeros(grid.n_bins, dtype=bool)
    for k in range(grid.n_bins):
        np.fill_diagonal(stack[k], 1.0)
        stack[k], floored[k] = _floor_coherence(stack[k])
    if floored.any():
        log.info("coherence floored to PSD at %d bins", int(floored.sum()))
    return stack, floored


def model_cpsdm(A, P, gamma, q, phi):
    """Vectorized model CPSDMs over frames without validation.

    ``A`` (M, r), ``P`` (T, r), ``gamma`` (T,) or None, ``q`` (M,) or (1,).
    Returns a (T, M, M) array.
    """
    A = np.asarray(A, dtype=complex)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    m = A.shape[0]
    out = np.einsum("ij,tj,kj->tik", A, P, A.conj())
    if gamma is not None:
        out = out + np.asarray(gamma, dtype=float)[:, None, None] * phi[None]
    q = np.broadcast_to(np.asarray(q, dtype=float), (m,))
    idx = np.arange(m)
    out[:, idx, idx] += q
    return out


def assemble_cpsdm(A, p, gamma, q, phi):
    """Model CPSDM ``A diag(p) A^H + gamma Phi + diag(q)`` of one frame."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    phi = np.asarray(phi, dtype=complex)
    m, r = A.shape
    if p.shape != (r,):
        raise InvalidParameterError(f"expected {r} source PSDs, got {p.shape}")
    if q.shape not in ((1,), (m,)):
        raise InvalidParameterError(f"self-noise must have length 1 or {m}")
    if phi.shape != (m, m):
        raise InvalidParameterError("coherence matrix has wrong shape")
    if np.any(p < 0) or gamma < 0 or np.any(q < 0):
        raise InvalidParameterError("PSDs must be nonnegative")
    return model_cpsdm(A, p[None], np.asarray([gamma]), q, phi)[0]


@dataclass
class SegmentParameters:
    """Parameters of one (segment, bin) problem.

    ``A`` (M, r) has the reference row fixed to one; ``p`` is (frames, r);
    ``gamma`` is (frames,) or None when late reverberation is not modeled;
    ``q`` holds one shared or M distinct self-noise PSDs.
    """

    A: np.ndarray
    p: np.ndarray
    gamma: np.ndarray | None
    q: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.gamma is not None:
            self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))

    @property
    def n_mics(self):
        return self.A.shape[0]

    @property
    def n_sources(self):
        return self.A.shape[1]

    @property
    def n_frames(self):
        return self.p.shape[0]

    def cpsdms(self, phi):
        """(frames, M, M) model CPSDMs."""
        return model_cpsdm(self.A, self.p, self.gamma, self.q, phi)

    def noise_q(self):
        """Self-noise PSD vector of length M."""
        return np.broadcast_to(self.q, (self.n_mics,)).copy()

    def copy(self):
        return SegmentParameters(
            self.A.copy(), self.p.copy(),
            None if self.gamma is None else self.gamma.copy(),
            self.q.copy(), self.reference_index)
