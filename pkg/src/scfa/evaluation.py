"""Parameter-error and signal metrics.

PSD errors are mean absolute log-ratios in dB (base-10 logarithm), split into
overestimation (estimate above truth) and underestimation parts that add up
to the total.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateVectorError,
    InsufficientActivityError,
)

SSNR_FLOOR_DB = -10.0
SSNR_CEIL_DB = 35.0


@dataclass
class LogError:
    total: float
    over: float
    under: float
    n_included: int
    n_skipped: int
    n_floored: int


@dataclass
class MetricReport:
    E_s: LogError | None = None
    E_l: LogError | None = None
    E_v: LogError | None = None
    E_A: float = float("nan")
    ssnr: float = float("nan")
    skipped_ratf: int = 0


def negligible_mask(true, skip_threshold=1e-6, spans=None):
    """Tiles excluded from the averages.

    A tile (frame t, bin k, index j) is skipped when the true PSD of index j
    stays below ``skip_threshold`` times the largest true PSD of bin k for
    every frame of the segment that owns frame t. ``spans`` gives
    ``(start, stop)`` per frame; by default each frame is its own segment.
    """
    true = np.asarray(true, dtype=float)
    C = true.shape[0]
    ref = np.max(true.reshape(C, true.shape[1], -1), axis=(0, 2))
    ref = ref.reshape((1, -1) + (1,) * (true.ndim - 2))
    small = true < skip_threshold * ref
    if spans is None:
        return small
    out = np.empty_like(small)
    for t, (start, stop) in enumerate(spans):
        out[t] = np.all(small[start:stop], axis=0)
    return out


def psd_log_errors(true, est, skip_threshold=1e-6, spans=None, divisor=1.0):
    """Mean ``10 |log10(true / est)|`` over included tiles, with its ov/un split.

    Arrays are (frames, bins, ...). Estimates (and truths) below
    ``1e-12 * max(true)`` are floored there so the log stays finite; the
    number of floored entries is reported. ``divisor`` multiplies the tile
    count in the normalizer.
    """
    true = np.asarray(true, dtype=float)
    est = np.asarray(est, dtype=float)
    if true.shape != est.shape:
        raise ConfigurationError(f"shape mismatch: true {true.shape} vs estimate {est.shape}")
    if true.ndim < 2:
        raise ConfigurationError("PSD tracks must be at least (frames, bins)")
    include = ~negligible_mask(true, skip_threshold, spans) if skip_threshold > 0 else \
        np.ones(true.shape, dtype=bool)
    n = int(include.sum())
    if n == 0:
        return LogError(0.0, 0.0, 0.0, 0, int(true.size), 0)
    floor = 1e-12 * float(true.max()) if true.max() > 0 else 1e-300
    t = true[include]
    e = est[include]
    n_floored = int(np.sum(~(e >= floor)) + np.sum(t < floor))
    t = np.maximum(t, floor)
    e = np.where(e >= floor, e, floor)
    contrib = 10.0 * (np.log10(e) - np.log10(t))
    norm = n * divisor
    over = float(np.sum(contrib[contrib > 0])) / norm
    under = float(-np.sum(contrib[contrib < 0])) / norm
    return LogError(over + under, over, under, n, int(true.size) - n, n_floored)


def hermitian_angles(true_A, est_A):
    """Per-column Hermitian angles, shape (..., r)."""
    a = np.asarray(true_A, dtype=complex)
    b = np.asarray(est_A, dtype=complex)
    if a.shape != b.shape:
        raise ConfigurationError("mixing matrices differ in shape")
    na = np.linalg.norm(a, axis=-2)
    nb = np.linalg.norm(b, axis=-2)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateVectorError("zero RATF column")
    c = np.abs(np.sum(a.conj() * b, axis=-2)) / (na * nb)
    return np.arccos(np.clip(c, 0.0, 1.0))


def hermitian_angle_error(true_A, est_A, include=None):
    """Mean Hermitian angle (radians) over segments, bins and sources.

    ``true_A``/``est_A`` are (..., M, r) with permutation-aligned columns;
    ``include`` optionally masks (..., r) entries into the average.
    """
    ang = hermitian_angles(true_A, est_A)
    if include is None:
        return float(np.mean(ang))
    include = np.broadcast_to(include, ang.shape)
    if not include.any():
        return 0.0
    return float(np.mean(ang[include]))


def _ssnr(sig_energy, err_energy, activity_threshold):
    """Average clamped SNR over active sub-frames; energies are (n_sub, r)."""
    sig = np.asarray(sig_energy, dtype=float)
    err = np.asarray(err_energy, dtype=float)
    per_source = []
    for j in range(sig.shape[1]):
        active = sig[:, j] > activity_threshold * sig[:, j].mean()
        if not active.any():
            raise InsufficientActivityError(f"source {j} has no active sub-frames")
        with np.errstate(divide="ignore"):
            snr = 10.0 * np.log10(sig[active, j]) - 10.0 * np.log10(err[active, j])
        snr = np.clip(np.nan_to_num(snr, nan=SSNR_CEIL_DB, posinf=SSNR_CEIL_DB),
                      SSNR_FLOOR_DB, SSNR_CEIL_DB)
        per_source.append(np.mean(snr))
    return float(np.mean(per_source))


def segmental_snr(clean, enhanced, plan, activity_threshold=1e-2):
    """Segmental SNR (dB) over the sub-frames where each source is active.

    ``clean`` and ``enhanced`` are (r, samples) or (samples,). Per sub-frame
    SNRs are clamped to [-10, 35] dB, averaged over active sub-frames, then
    over sources. A sub-frame is active when its clean energy exceeds
    ``activity_threshold`` times the mean sub-frame energy of that source.
    """
    s = np.atleast_2d(np.asarray(clean, dtype=float))
    e = np.atleast_2d(np.asarray(enhanced, dtype=float))
    if s.shape != e.shape:
        raise ConfigurationError("clean and enhanced signals differ in shape")
    n, hop = plan.subframe_len, plan.subframe_hop
    starts = np.arange(0, s.shape[1] - n + 1, hop)
    idx = starts[:, None] + np.arange(n)
    sig = np.sum(s[:, idx] ** 2, axis=-1).T
    err = np.sum((s - e)[:, idx] ** 2, axis=-1).T
    return _ssnr(sig, err, activity_threshold)


def segmental_snr_subframes(clean, enhanced, activity_threshold=1e-2):
    """Segmental SNR on sub-frame spectra (frames, sub-frames, bins, r).

    Per sub-frame energies are summed over bins, which equals the windowed
    time-domain energy up to the one-sided spectrum weighting.
    """
    s = np.asarray(clean)
    e = np.asarray(enhanced)
    if s.shape != e.shape:
        raise ConfigurationError("clean and enhanced spectra differ in shape")
    r = s.shape[-1]
    sig = np.sum(np.abs(s) ** 2, axis=2).reshape(-1, r)
    err = np.sum(np.abs(s - e) ** 2, axis=2).reshape(-1, r)
    return _ssnr(sig, err, activity_threshold)
