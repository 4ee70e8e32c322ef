"""Reference estimators: whitened-eigenvalue late-reverberation PSD, whitened
dominant-eigenvector RATF and MVDR-projected target PSD."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .beamforming import mvdr_weights
from .cpsdm import segment_spans
from .errors import DecompositionError, DegenerateReferenceError, InvalidParameterError
from .linalg import cholesky_factor, diagonal_loading, hermitian_eig


@dataclass
class RatfEstimate:
    ratf: np.ndarray
    dominant_eigenvalue: float
    low_confidence: bool


@dataclass
class PsdEstimate:
    value: float
    raw: float

    @property
    def floored(self):
        return self.raw < 0.0


def _whiten(P, L):
    X = solve_triangular(L, np.asarray(P, dtype=complex), lower=True)
    return solve_triangular(L, X.conj().T, lower=True).conj().T


def late_psd_eig(P_hat, phi):
    """Mean of the ``M - 1`` smallest eigenvalues of the Phi-whitened CPSDM."""
    P_hat = np.asarray(P_hat, dtype=complex)
    if P_hat.shape[0] < 2:
        raise InvalidParameterError("need at least two microphones")
    L = cholesky_factor(phi)
    w, _ = hermitian_eig(_whiten(P_hat, L))
    return float(np.mean(w[1:]))


def ratf_gevd(P_hat, P_n, reference_index=0):
    """RATF from the dominant eigenvector of the noise-whitened CPSDM."""
    L = cholesky_factor(P_n)
    w, V = hermitian_eig(_whiten(P_hat, L))
    v = V[:, 0]
    tied = w >= w[0] - 1e-9 * max(abs(w[0]), 1.0)
    if tied.sum() > 1:
        # any vector of a repeated dominant eigenspace will do; take the one
        # with the largest reference entry so the normalization is stable
        Vd = V[:, tied]
        row = L[reference_index] @ Vd
        if np.linalg.norm(row) > 0:
            v = Vd @ row.conj() / np.linalg.norm(row)
    u = L @ v
    if abs(u[reference_index]) < 1e-12:
        raise DegenerateReferenceError("dominant direction vanishes at the reference microphone")
    ratf = u / u[reference_index]
    ratf[reference_index] = 1.0
    return RatfEstimate(ratf, float(w[0]), bool(w[0] <= 1.0 + 1e-6))


def ratf_gevd_segment(P_hats, P_ns, reference_index=0):
    """Average of the per-frame RATF estimates over a segment."""
    ests = [ratf_gevd(P, N, reference_index).ratf for P, N in zip(P_hats, P_ns)]
    return np.mean(ests, axis=0)


def target_psd_mvdr(P_hat, P_n, a):
    """``w^H (P_hat - P_n) w`` with MVDR weights; negative values are floored at 0."""
    w = mvdr_weights(P_n, a)
    raw = float(np.real(np.vdot(w, (np.asarray(P_hat) - np.asarray(P_n)) @ w)))
    return PsdEstimate(max(raw, 0.0), raw)


def _factorable(P):
    try:
        cholesky_factor(P)
        return P
    except DecompositionError:
        return P + max(diagonal_loading(P), 1e-300) * np.eye(P.shape[0])


def reference_dereverberation(series, phi, q, frames_per_segment, hop=1, reference_index=0,
                              bins=None):
    """Late-reverberation PSD, RATF and target PSD tracks for a single source.

    ``q`` is the known self-noise PSD per bin (scalar or (n_bins,)). RATFs are
    averaged over each sliding segment; frames are owned by segments as in
    the online SCFA loop. Singular coherence matrices (low bins) are loaded.
    Returns a dict of arrays shaped like the SCFA tracks with r = 1.
    """
    T, K, M = series.n_frames, series.n_bins, series.n_mics
    bins = range(K) if bins is None else bins
    q = np.broadcast_to(np.asarray(q, dtype=float), (K,))
    spans = segment_spans(T, frames_per_segment, hop)
    A = np.full((T, K, M, 1), np.nan + 0j)
    p = np.full((T, K, 1), np.nan)
    raw = np.full((T, K), np.nan)
    gamma = np.full((T, K), np.nan)
    for kk, k in enumerate(bins):
        phi_k = _factorable(np.asarray(phi[k], dtype=complex))
        P = series.bin(k)
        g = np.array([late_psd_eig(P[t], phi_k) for t in range(T)])
        P_n = np.array([_factorable(g[t] * phi_k + q[k] * np.eye(M)) for t in range(T)])
        prev_stop = 0
        for s, (start, stop) in enumerate(spans):
            a = ratf_gevd_segment(P[start:stop], P_n[start:stop], reference_index)
            first = start if s == 0 else max(prev_stop, start)
            for t in range(first, stop):
                est = target_psd_mvdr(P[t], P_n[t], a)
                A[t, kk, :, 0] = a
                p[t, kk, 0] = est.value
                raw[t, kk] = est.raw
                gamma[t, kk] = g[t]
            prev_stop = stop
    qt = np.broadcast_to(q[list(bins)][None, :, None], (T, len(list(bins)), 1)).copy()
    return {"A": A, "p": p, "gamma": gamma, "q": qt, "p_raw": raw}
