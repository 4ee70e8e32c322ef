"""MVDR / MWF weights and their application to STFT data."""

import numpy as np
from scipy.linalg import cho_solve

from .cpsdm import istft
from .errors import CoverageError, DecompositionError, InvalidParameterError
from .linalg import cholesky_factor, diagonal_loading


def mvdr_weights(P_n, a):
    """``P_n^{-1} a / (a^H P_n^{-1} a)``."""
    a = np.asarray(a, dtype=complex)
    if not np.any(a):
        raise InvalidParameterError("steering vector is zero")
    L = cholesky_factor(P_n)
    x = cho_solve((L, True), a)
    return x / np.vdot(a, x)


def mwf_weights(p, a, P_n):
    """MVDR followed by the single-channel Wiener gain ``p / (p + residual noise)``."""
    if p < 0:
        raise InvalidParameterError("source PSD must be nonnegative")
    w = mvdr_weights(P_n, a)
    residual = float(np.real(np.vdot(w, np.asarray(P_n) @ w)))
    return (p / (p + residual)) * w


def interference_cpsdm(j, A, p, gamma, q, phi):
    """Noise CPSDM seen by source ``j``: other sources, late reverberation and self-noise."""
    A = np.asarray(A, dtype=complex)
    p = np.asarray(p, dtype=float)
    others = [i for i in range(A.shape[1]) if i != j]
    P_n = (A[:, others] * p[others]) @ A[:, others].conj().T
    if gamma is not None and np.isfinite(gamma):
        P_n = P_n + gamma * np.asarray(phi)
    q = np.broadcast_to(np.asarray(q, dtype=float), (A.shape[0],))
    return P_n + np.diag(q)


def _loaded(P):
    """Add diagonal loading until Cholesky succeeds."""
    m = P.shape[0]
    level = max(diagonal_loading(P), 1e-300)
    for _ in range(40):
        try:
            cholesky_factor(P)
            return P
        except DecompositionError:
            P = P + level * np.eye(m)
            level *= 10.0
    return P


def mwf_bank(A, p, gamma, q, phi):
    """(r, M) MWF weights of every source for one tile.

    Negative PSD estimates are treated as zero and numerically singular
    noise CPSDMs are diagonally loaded.
    """
    A = np.asarray(A, dtype=complex)
    p = np.maximum(np.nan_to_num(np.asarray(p, dtype=float)), 0.0)
    W = np.zeros((A.shape[1], A.shape[0]), dtype=complex)
    for j in range(A.shape[1]):
        P_n = _loaded(interference_cpsdm(j, A, p, gamma, q, phi))
        W[j] = mwf_weights(p[j], A[:, j], P_n)
    return W


def apply_weights(weights, subframes):
    """``w^H y`` per sub-frame: weights (T, K, r, M), sub-frames (T, S, K, M) -> (T, S, K, r)."""
    return np.einsum("tkjm,tskm->tskj", np.conj(weights), subframes)


def apply_and_reconstruct(weights, spec, starts, plan, grid, length):
    """Filter a continuous STFT and resynthesize one signal per source.

    ``weights`` is (n_frames, n_bins, r, M); ``spec`` the (n_cols, n_bins, M)
    STFT whose columns start at ``starts``. Each column uses the weights of
    the frame containing its first sample. Returns (r, length).
    """
    weights = np.asarray(weights)
    frame_of_col = np.asarray(starts) // plan.frame_len
    if frame_of_col.size and frame_of_col.max() >= weights.shape[0]:
        raise CoverageError("STFT columns extend beyond the frames that have weights")
    W = weights[frame_of_col]
    if not np.all(np.isfinite(W)):
        raise CoverageError("weights missing for some tiles")
    out_spec = np.einsum("ckjm,ckm->ckj", np.conj(W), spec)
    return istft(out_spec, starts, plan, grid, length)
